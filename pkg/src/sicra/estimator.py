"""Online backlog estimation and transmission control at the access point.

The AP keeps a Poisson-mean belief ``nu`` of the backlog size and an
exponentially weighted arrival-rate estimate ``lambda_e``.  Both are revised
once per embedded point (the end of every normal idle/success/collision slot
and the last slot of every resolve procedure), after which the broadcast
probability is recomputed as min(1, x_star / nu).

State transitions are pure: :func:`on_event` returns a new state, so
identical event sequences always produce bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .analysis import PolicyTable

# Lower bound keeping the Poisson belief valid after long idle streaks; the
# broadcast probability saturates at 1 well before nu gets this small.
NU_FLOOR = 1e-2

TRACE_COLUMNS = ("slot", "event", "nu", "lambda_e", "p_star")


class EventKind(Enum):
    IDLE = "idle"
    SUCCESS = "success"
    SRP_COMPLETE = "srp"
    COLLISION = "collision"


@dataclass(frozen=True)
class FeedbackEvent:
    """One embedded-point observation.

    ``group_size`` and ``srp_slots`` are meaningful only for SRP_COMPLETE:
    the number of users that initiated the resolve procedure and the number
    of slots it took.
    """

    kind: EventKind
    group_size: int = 0
    srp_slots: int = 0


IDLE = FeedbackEvent(EventKind.IDLE)
SUCCESS = FeedbackEvent(EventKind.SUCCESS)
COLLISION = FeedbackEvent(EventKind.COLLISION)


def srp_complete(group_size: int, srp_slots: int) -> FeedbackEvent:
    if group_size < 2:
        raise ValueError(f"an SRP involves at least 2 users, got {group_size}")
    if srp_slots < 1:
        raise ValueError(f"an SRP lasts at least 1 slot, got {srp_slots}")
    return FeedbackEvent(EventKind.SRP_COMPLETE, group_size, srp_slots)


@dataclass(frozen=True)
class EstimatorState:
    policy: PolicyTable
    nu: float
    lambda_e: float
    theta: float
    p_star: float


def init_state(policy: PolicyTable, theta: float = 0.99) -> EstimatorState:
    """Initial belief before any feedback: nu = 10, lambda_e = 0.5, and a
    first broadcast probability of x_star / M."""
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    return EstimatorState(
        policy=policy,
        nu=10.0,
        lambda_e=0.5,
        theta=theta,
        p_star=policy.x_star / policy.M,
    )


def on_event(state: EstimatorState, event: FeedbackEvent) -> EstimatorState:
    """Apply one embedded-point update and recompute the broadcast probability.

    Idle/success/collision observations revise the belief by the Bayes
    posterior mean of a Poisson backlog thinned by the broadcast probability;
    an unresolvable collision adds the policy's collision offset instead,
    since the exact posterior is no longer Poisson.  A completed SRP covers
    1 + srp_slots slots, so the arrival estimate is re-normalized over that
    whole interval and arrivals accrue over it.
    """
    pol = state.policy
    x_star = pol.x_star
    theta = state.theta
    lam = state.lambda_e
    nu = state.nu

    kind = event.kind
    if kind is EventKind.IDLE:
        lam = theta * lam
        nu = nu - x_star + lam
    elif kind is EventKind.SUCCESS:
        lam = theta * lam + (1.0 - theta)
        nu = nu - x_star + lam
    elif kind is EventKind.SRP_COMPLETE:
        m = event.group_size
        if not 2 <= m <= pol.M:
            raise ValueError(
                f"SRP group size {m} outside [2, {pol.M}] for this policy"
            )
        if event.srp_slots < 1:
            raise ValueError(f"SRP duration must be >= 1, got {event.srp_slots}")
        span = 1.0 + event.srp_slots
        lam = (theta * lam + (1.0 - theta) * m) / (theta + (1.0 - theta) * span)
        nu = nu - x_star + lam * span
    elif kind is EventKind.COLLISION:
        lam = theta * lam
        nu = nu + pol.c_m + lam
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown event kind {kind!r}")

    nu = max(nu, NU_FLOOR)
    return replace(state, nu=nu, lambda_e=lam, p_star=min(1.0, x_star / nu))


def current_broadcast(state: EstimatorState) -> float:
    """Probability the AP broadcasts for the next normal slot."""
    return state.p_star
