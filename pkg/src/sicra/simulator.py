"""Slot-level closed-loop simulation of the SIC random access system.

Each normal slot draws arrivals, lets every backlogged user transmit with
the broadcast probability (or the genie's optimum for the true backlog),
classifies the slot, and feeds the resulting embedded-point observation to
the online estimator.  A 2..M-user transmission hands control to the resolve
procedure, which occupies the following slots; more than M transmitters is
an unresolvable collision and the signal is discarded.

All randomness derives from the config seed through fixed named streams
(arrivals, on-off phases, slot draws, resolve internals), so identical
configs produce identical metrics, and sweeps can run points in parallel.
"""

from __future__ import annotations

import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import estimator
from .analysis import PolicyTable, build_policy_table, optimal_tx_prob_known_backlog
from .resolver import run_srp

ARRIVAL_MODELS = ("poisson", "onoff")
CONTROLLERS = ("adaptive", "genie")

# Stream ids of the named substreams derived from the config seed.
_STREAMS = {"arrivals": 0, "phases": 1, "slots": 2, "srp": 3}

SWEEP_COLUMNS = ("lambda", "throughput", "mean_delay", "collision_rate",
                 "idle_rate", "srp_fraction")
TRACE_COLUMNS = ("slot", "true_backlog", "estimated_nu")


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, _STREAMS[stream])))


@dataclass(frozen=True)
class SimConfig:
    M: int
    lam: float
    p_e: float = 0.0
    arrival_model: str = "poisson"
    period: int = 100
    horizon: int = 100_000
    warmup: int = 10_000
    seed: int = 1
    controller: str = "adaptive"
    theta: float = 0.99
    collect_backlog_trace: bool = False
    collect_estimator_trace: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.lam < 0:
            raise ValueError(f"arrival rate must be nonnegative, got {self.lam}")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError(
                f"need horizon > warmup >= 0, got horizon={self.horizon}, warmup={self.warmup}"
            )
        if self.arrival_model not in ARRIVAL_MODELS:
            raise ValueError(f"arrival_model must be one of {ARRIVAL_MODELS}")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")


@dataclass
class SimMetrics:
    """Measured outputs of one run.

    Rates and fractions are computed over slots in [warmup, horizon); the
    conservation counters (arrivals, decoded, final_backlog) cover the whole
    run, including packets decoded by a resolve procedure that finishes past
    the horizon.  The slot of a 2..M-user transmission is accounted to
    srp_time_fraction together with the resolve slots it triggers.
    """

    throughput: float
    mean_delay: float
    delay_histogram: dict
    idle_rate: float
    success_rate: float
    collision_rate: float
    srp_time_fraction: float
    arrivals: int
    decoded: int
    final_backlog: int
    backlog_trace: np.ndarray | None = None
    estimator_trace: list | None = None


def slot_rates(config: SimConfig) -> np.ndarray:
    """Per-slot mean arrival rates over the horizon.

    The on-off model redraws its phase every ``period`` slots (at slot
    indices that are multiples of the period): the rate is 2*lam or 0 with
    equal probability, so the long-run mean is lam.
    """
    if config.arrival_model == "poisson":
        return np.full(config.horizon, config.lam)
    blocks = -(-config.horizon // config.period)
    on = _rng(config.seed, "phases").integers(0, 2, size=blocks)
    rates = np.repeat(on * (2.0 * config.lam), config.period)
    return rates[: config.horizon]


def draw_arrivals(config: SimConfig) -> np.ndarray:
    """Arrival counts per slot, drawn from the config's arrivals stream."""
    return _rng(config.seed, "arrivals").poisson(slot_rates(config))


class _Backlog:
    """Arrival slots of backlogged packets; O(1) append, O(k) random removal."""

    __slots__ = ("_slots", "n")

    def __init__(self):
        self._slots = np.empty(1024, dtype=np.int64)
        self.n = 0

    def add_batch(self, slot: int, count: int) -> None:
        need = self.n + count
        if need > self._slots.size:
            grown = np.empty(max(need, 2 * self._slots.size), dtype=np.int64)
            grown[: self.n] = self._slots[: self.n]
            self._slots = grown
        self._slots[self.n: need] = slot
        self.n = need

    def take_random(self, k: int, rng: np.random.Generator) -> list:
        if k == 1:
            idx = [int(rng.integers(self.n))]
        else:
            idx = sorted((int(i) for i in rng.choice(self.n, size=k, replace=False)),
                         reverse=True)
        slots = self._slots
        taken = [int(slots[i]) for i in idx]
        for i in idx:  # descending, so swap-with-tail stays valid
            self.n -= 1
            slots[i] = slots[self.n]
        return taken


class _GeniePolicy:
    """Known-backlog controller: the maximizing transmission probability per
    backlog size, memoized.  Beyond the exact-search cap the optimum is
    indistinguishable from x_star / n."""

    EXACT_N_MAX = 4096

    def __init__(self, policy: PolicyTable):
        self._policy = policy
        self._memo: dict[int, float] = {}

    def p_for(self, n: int) -> float:
        pol = self._policy
        if n > self.EXACT_N_MAX:
            return min(1.0, pol.x_star / n)
        p = self._memo.get(n)
        if p is None:
            p = optimal_tx_prob_known_backlog(n, pol.M, pol.srp_mean)
            self._memo[n] = p
        return p


def run(config: SimConfig) -> SimMetrics:
    """Simulate one configuration over its full horizon."""
    return _simulate(config, draw_arrivals(config))


def _simulate(config: SimConfig, arrivals: np.ndarray) -> SimMetrics:
    policy = build_policy_table(config.M, config.p_e)
    slots_rng = _rng(config.seed, "slots")
    srp_rand = random.Random(int(_rng(config.seed, "srp").integers(2 ** 63)))
    adaptive = config.controller == "adaptive"
    est = estimator.init_state(policy, config.theta) if adaptive else None
    genie = None if adaptive else _GeniePolicy(policy)
    retx = policy.retx_probs
    M = config.M
    horizon, warmup = config.horizon, config.warmup
    window = horizon - warmup

    pool = _Backlog()
    idle = succ = coll = srp_slots = 0      # in-window slot counts
    decoded_total = 0
    decoded_window = 0
    delay_sum = 0
    hist: Counter = Counter()
    trace = np.zeros((horizon, 2)) if config.collect_backlog_trace else None
    est_rows = [] if (adaptive and config.collect_estimator_trace) else None

    def note_decode(decode_slot: int, arrival_slot: int) -> None:
        nonlocal decoded_total, decoded_window, delay_sum
        decoded_total += 1
        if warmup <= decode_slot < horizon:
            decoded_window += 1
            delay = decode_slot - arrival_slot + 1
            delay_sum += delay
            hist[delay] += 1

    def feed(event, slot: int) -> None:
        nonlocal est
        est = estimator.on_event(est, event)
        if est_rows is not None:
            est_rows.append((slot, event.kind.value, est.nu, est.lambda_e, est.p_star))

    t = 0
    while t < horizon:
        a = int(arrivals[t])
        if a:
            pool.add_batch(t, a)
        n = pool.n
        p = est.p_star if adaptive else (genie.p_for(n) if n else 0.0)
        k = int(slots_rng.binomial(n, p)) if n else 0

        if k == 1:
            arrival_slot = pool.take_random(1, slots_rng)[0]
            note_decode(t, arrival_slot)
            if t >= warmup:
                succ += 1
            if adaptive:
                feed(estimator.SUCCESS, t)
            if trace is not None:
                trace[t, 0] = pool.n
                trace[t, 1] = est.nu if adaptive else np.nan
            t += 1
        elif k == 0 or k > M:
            if t >= warmup:
                if k == 0:
                    idle += 1
                else:
                    coll += 1
            if adaptive:
                feed(estimator.IDLE if k == 0 else estimator.COLLISION, t)
            if trace is not None:
                trace[t, 0] = n
                trace[t, 1] = est.nu if adaptive else np.nan
            t += 1
        else:
            # 2..M transmitters: the resolve procedure occupies the next
            # duration slots; arrivals over them queue but do not transmit.
            arrival_slots = pool.take_random(k, slots_rng)
            outcome = run_srp(range(k), retx, config.p_e, srp_rand)
            duration = outcome.duration
            for uid, arrival_slot in enumerate(arrival_slots):
                note_decode(t + outcome.decode_slot[uid], arrival_slot)
            if trace is not None:
                prevailing = est.nu if adaptive else np.nan
                decodes_at = Counter(outcome.decode_slot.values())
                in_srp = k
                trace[t, 0] = pool.n + in_srp
                trace[t, 1] = prevailing
                for off in range(1, duration + 1):
                    s = t + off
                    if s >= horizon:
                        break
                    if arrivals[s]:
                        pool.add_batch(s, int(arrivals[s]))
                    in_srp -= decodes_at.get(off, 0)
                    trace[s, 0] = pool.n + in_srp
                    trace[s, 1] = prevailing
            else:
                for s in range(t + 1, min(t + duration + 1, horizon)):
                    if arrivals[s]:
                        pool.add_batch(s, int(arrivals[s]))
            lo = max(t, warmup)
            hi = min(t + duration + 1, horizon)
            if hi > lo:
                srp_slots += hi - lo
            if adaptive:
                feed(estimator.srp_complete(k, duration), t + duration)
                if trace is not None and t + duration < horizon:
                    trace[t + duration, 1] = est.nu
            t += 1 + duration

    mean_delay = delay_sum / decoded_window if decoded_window else float("nan")
    return SimMetrics(
        throughput=decoded_window / window,
        mean_delay=mean_delay,
        delay_histogram=dict(hist),
        idle_rate=idle / window,
        success_rate=succ / window,
        collision_rate=coll / window,
        srp_time_fraction=srp_slots / window,
        arrivals=int(arrivals.sum()),
        decoded=decoded_total,
        final_backlog=pool.n,
        backlog_trace=trace,
        estimator_trace=est_rows,
    )


def sweep(base: SimConfig, lams: Sequence[float], jobs: int = 1):
    """Independent runs over an arrival-rate grid; point i uses seed + i.

    Returns a list of (lam, SimMetrics) in grid order.
    """
    configs = [replace(base, lam=float(lam), seed=base.seed + i)
               for i, lam in enumerate(lams)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, configs))
    else:
        results = [run(c) for c in configs]
    return list(zip([c.lam for c in configs], results))


def step_schedule_rates(horizon: int, lam_low: float, lam_high: float,
                        low_until: float = 0.3, high_until: float = 0.7) -> np.ndarray:
    """Piecewise-constant rates: low, then high, then low again."""
    rates = np.full(horizon, lam_low)
    rates[int(low_until * horizon): int(high_until * horizon)] = lam_high
    return rates


def _trace_episode(args) -> np.ndarray:
    config, rates = args
    arrivals = _rng(config.seed, "arrivals").poisson(rates)
    return _simulate(config, arrivals).backlog_trace


def run_trace_experiment(M: int = 2, horizon: int = 100_000, episodes: int = 100,
                         lam_low: float = 0.4, lam_high: float = 0.5,
                         p_e: float = 0.0, theta: float = 0.99, seed: int = 1,
                         jobs: int = 1) -> np.ndarray:
    """Episode-averaged (true backlog, estimated belief) per slot under a
    step arrival schedule: lam_low, then lam_high over the middle 40% of the
    horizon, then lam_low again.  Episode e uses seed + e.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    rates = step_schedule_rates(horizon, lam_low, lam_high)
    tasks = [
        (SimConfig(M=M, lam=lam_low, p_e=p_e, horizon=horizon, warmup=0,
                   seed=seed + e, theta=theta, collect_backlog_trace=True),
         rates)
        for e in range(episodes)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_trace_episode, tasks))
    else:
        traces = [_trace_episode(task) for task in tasks]
    return np.mean(traces, axis=0)
