"""Slotted random access with successive interference cancellation.

Analysis of service rates and resolve-procedure durations, the online
backlog estimator and transmission controller, a stochastic resolver, and
a slot-level closed-loop simulator.
"""

from .analysis import (PolicyTable, binom_pmf, build_policy_table,
                       collision_offset, expected_resolve_slots,
                       expected_resolve_slots_with_failure,
                       expected_split_delay, optimal_mean_transmissions,
                       optimal_retx_probs, optimal_tx_prob_known_backlog,
                       poisson_pmf, service_rate_known_backlog,
                       service_rate_poisson, split_size_pmf)
from .estimator import (COLLISION, IDLE, SUCCESS, EstimatorState, EventKind,
                        FeedbackEvent, current_broadcast, init_state, on_event,
                        srp_complete)
from .resolver import SignalLedger, SrpOutcome, mc_duration_mean, run_srp
from .simulator import (SimConfig, SimMetrics, draw_arrivals, run,
                        run_trace_experiment, slot_rates, sweep)

__version__ = "0.1.0"

__all__ = [
    "PolicyTable", "binom_pmf", "build_policy_table", "collision_offset",
    "expected_resolve_slots", "expected_resolve_slots_with_failure",
    "expected_split_delay", "optimal_mean_transmissions", "optimal_retx_probs",
    "optimal_tx_prob_known_backlog", "poisson_pmf",
    "service_rate_known_backlog", "service_rate_poisson", "split_size_pmf",
    "COLLISION", "IDLE", "SUCCESS", "EstimatorState", "EventKind",
    "FeedbackEvent", "current_broadcast", "init_state", "on_event",
    "srp_complete",
    "SignalLedger", "SrpOutcome", "mc_duration_mean", "run_srp",
    "SimConfig", "SimMetrics", "draw_arrivals", "run", "run_trace_experiment",
    "slot_rates", "sweep",
    "__version__",
]
