"""Closed-form and recursive performance analysis for SIC random access.

Service-rate expressions for a capability-M receiver, the recursions for
expected resolve-procedure durations (with and without cancellation
failures), and the numerical optimizers that produce the control constants
consumed by the online estimator and the simulator.

All functions are pure; a fully populated :class:`PolicyTable` is immutable
and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# Grid spacing used to bracket a unimodal optimum before refinement.
GRID_STEP = 1e-2
# Refinement stops when the bracket is narrower than this.
REFINE_TOL = 1e-4


def binom_pmf(n: int, k: int, p: float) -> float:
    """P(K = k) for K ~ Binomial(n, p), evaluated in log space.

    Stable for n up to at least 1e4.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if k < 0 or n < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    log_comb = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(log_comb + k * math.log(p) + (n - k) * math.log1p(-p))


def poisson_pmf(k: int, mu: float) -> float:
    """P(K = k) for K ~ Poisson(mu), evaluated in log space."""
    if mu < 0.0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    if mu == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1))


def _check_srp_means(capability: int, srp_means: Sequence[float]) -> None:
    if capability >= 2 and len(srp_means) < capability - 1:
        raise ValueError(
            f"srp_means must cover group sizes 2..{capability} "
            f"({capability - 1} entries), got {len(srp_means)}"
        )


def service_rate_known_backlog(
    n: int, capability: int, p: float, srp_means: Sequence[float] = ()
) -> float:
    """Expected decoded packets per slot when the true backlog n is known.

    Renewal ratio: packets decoded between consecutive embedded points over
    the expected length of that interval.  ``srp_means[k-2]`` is the expected
    resolve duration for a group of k transmitters.
    """
    if n < 0:
        raise ValueError(f"backlog must be nonnegative, got {n}")
    _check_srp_means(capability, srp_means)
    if n == 0:
        return 0.0
    top = capability if capability < n else n
    served = sum(k * binom_pmf(n, k, p) for k in range(1, top + 1))
    cycle = 1.0 + sum(
        binom_pmf(n, k, p) * srp_means[k - 2] for k in range(2, top + 1)
    )
    return served / cycle


def service_rate_poisson(
    x: float, capability: int, srp_means: Sequence[float] = ()
) -> float:
    """Average service rate when the backlog is Poisson and x packets are
    transmitted per slot on average.

    For capability 1 this reduces to the classical x * exp(-x).
    """
    if x < 0.0:
        raise ValueError(f"x must be nonnegative, got {x}")
    _check_srp_means(capability, srp_means)
    if x == 0.0:
        return 0.0
    served = sum(k * poisson_pmf(k, x) for k in range(1, capability + 1))
    cycle = 1.0 + sum(
        poisson_pmf(k, x) * srp_means[k - 2] for k in range(2, capability + 1)
    )
    return served / cycle


def _golden_max(f: Callable[[float], float], lo: float, hi: float,
                tol: float = REFINE_TOL) -> tuple[float, float]:
    """Golden-section maximization of a unimodal f on [lo, hi]."""
    a, b = lo, hi
    c = b - (b - a) * INV_GOLDEN
    d = a + (b - a) * INV_GOLDEN
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * INV_GOLDEN
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * INV_GOLDEN
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def _grid_then_golden(f: Callable[[float], float], lo: float, hi: float,
                      step: float = GRID_STEP) -> tuple[float, float]:
    """Bracket the maximum on a coarse grid, then refine by golden section.

    Raises if the grid maximum sits on the boundary, which would mean the
    assumed bracket does not contain the optimum.
    """
    npts = int(round((hi - lo) / step)) + 1
    xs = [lo + i * step for i in range(npts)]
    vals = [f(x) for x in xs]
    i = max(range(npts), key=vals.__getitem__)
    if i == 0 or i == npts - 1:
        raise ArithmeticError(
            f"grid maximum at bracket edge x={xs[i]:.4g}; widen [{lo}, {hi}]"
        )
    return _golden_max(f, xs[i - 1], xs[i + 1])


def optimal_mean_transmissions(
    capability: int, srp_means: Sequence[float] = ()
) -> tuple[float, float]:
    """Maximize the Poisson-backlog service rate over the mean number of
    transmissions per slot.  Returns (x_star, s_star).

    The optimum lies well inside (0, 2*capability]; the bracket is verified.
    """
    if capability < 1:
        raise ValueError(f"capability must be >= 1, got {capability}")
    _check_srp_means(capability, srp_means)
    return _grid_then_golden(
        lambda x: service_rate_poisson(x, capability, srp_means),
        GRID_STEP, 2.0 * capability,
    )


def collision_offset(x_star: float, capability: int) -> float:
    """Additive backlog-belief correction after an unresolvable collision.

    Equals the conditional excess of a Poisson(x_star) transmission count
    over its mean, given that it exceeded the capability.
    """
    if x_star <= 0.0:
        raise ValueError(f"x_star must be positive, got {x_star}")
    terms = [poisson_pmf(m, x_star) for m in range(capability + 1)]
    tail = 1.0 - sum(terms)
    if tail <= 0.0:
        raise ArithmeticError("collision probability underflowed to <= 0")
    excess = sum((x_star - m) * phi for m, phi in enumerate(terms))
    return excess / tail


def expected_split_delay(m: int, p: float) -> float:
    """Expected slots until a group of m users produces a proper split.

    A slot splits the group when the transmitting subset is neither empty
    nor the whole group; the count is geometric.
    """
    if m < 2:
        raise ValueError(f"group size must be >= 2, got {m}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"retransmission probability must be in (0, 1), got {p}")
    return 1.0 / (1.0 - binom_pmf(m, 0, p) - binom_pmf(m, m, p))


def split_size_pmf(m: int, size: int, p: float) -> float:
    """Pmf of the transmitting-subset size at the split, over [1, m-1]."""
    if not 1 <= size <= m - 1:
        raise ValueError(f"split size must be in [1, {m - 1}], got {size}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"retransmission probability must be in (0, 1), got {p}")
    return binom_pmf(m, size, p) / (1.0 - binom_pmf(m, 0, p) - binom_pmf(m, m, p))


def expected_resolve_slots_with_failure(
    m: int, probs: Sequence[float], failure_prob: float
) -> tuple[float, float]:
    """Expected resolve durations for a group of m, with per-signal
    cancellation failures at rate failure_prob.

    Returns (pre_repair, total): the expectation assuming the initiating
    signal itself needs no repair, and the expectation including it.  Each
    stored multi-user signal independently needs a geometric number of
    repair slots with mean failure_prob / (1 - failure_prob).

    ``probs[j]`` is the retransmission probability for group size j + 2.
    """
    if m < 2:
        raise ValueError(f"group size must be >= 2, got {m}")
    if not 0.0 <= failure_prob < 1.0:
        raise ValueError(f"failure probability must be in [0, 1), got {failure_prob}")
    if len(probs) < m - 1:
        raise ValueError(f"need probabilities for sizes 2..{m}, got {len(probs)}")
    repair_mean = failure_prob / (1.0 - failure_prob)

    # pre_repair[s]: expected slots to resolve s users given a usable
    # initiating signal; sub-splits of size >= 2 store fresh signals whose
    # own repair cost (repair_mean each) is charged inside the sum.
    pre: list[float] = [0.0, 0.0]
    for s in range(2, m + 1):
        p_s = probs[s - 2]
        delay = expected_split_delay(s, p_s)
        total = delay
        for size in range(2, s):
            pr = split_size_pmf(s, size, p_s)
            total += (pr + split_size_pmf(s, s - size, p_s)) * pre[size]
            total += pr * repair_mean
        pre.append(total)
    return pre[m], pre[m] + repair_mean


def expected_resolve_slots(m: int, probs: Sequence[float]) -> float:
    """Expected resolve duration for a group of m with perfect cancellation."""
    return expected_resolve_slots_with_failure(m, probs, 0.0)[0]


def optimal_retx_probs(
    capability: int, failure_prob: float = 0.0
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Minimize the expected resolve duration for every group size up to
    the capability.  Returns (probs, durations) for sizes 2..capability.

    The duration for size m is monotone in every lower-order duration, so
    the probabilities can be optimized one group size at a time.  With
    failure_prob > 0 the returned durations include the initiating signal's
    repair cost.
    """
    if capability < 2:
        return (), ()
    if not 0.0 <= failure_prob < 1.0:
        raise ValueError(f"failure probability must be in [0, 1), got {failure_prob}")
    probs: list[float] = []
    durations: list[float] = []
    for m in range(2, capability + 1):
        def neg_duration(p: float, m: int = m) -> float:
            return -expected_resolve_slots_with_failure(
                m, probs + [p], failure_prob
            )[1]

        best_p, best = _grid_then_golden(neg_duration, GRID_STEP, 1.0 - GRID_STEP)
        # The objective is symmetric about 1/2; when the refined optimum is a
        # numerical neighbor of 1/2, prefer the exact symmetry point.  (For
        # larger groups the symmetric point is a local maximum between two
        # equal minima, in which case this keeps the refined value.)
        if neg_duration(0.5) >= best:
            best_p, best = 0.5, neg_duration(0.5)
        probs.append(best_p)
        durations.append(-best)
    return tuple(probs), tuple(durations)


def optimal_tx_prob_known_backlog(
    n: int, capability: int, srp_means: Sequence[float] = ()
) -> float:
    """Transmission probability maximizing the known-backlog service rate.

    Searched through x = n*p so the bracket stays sharp for large n.
    """
    if n < 1:
        raise ValueError("no transmission decision exists for an empty backlog")
    _check_srp_means(capability, srp_means)
    if n == 1:
        return 1.0
    hi = float(min(n, 2 * capability))

    def rate_at(x: float) -> float:
        return service_rate_known_backlog(n, capability, x / n, srp_means)

    # The rate is increasing up to the interior optimum; when p = 1 is still
    # on the rising branch (small n), the grid maximum lands on the edge.
    try:
        x_best, _ = _grid_then_golden(rate_at, GRID_STEP, hi)
    except ArithmeticError:
        return 1.0
    return x_best / n


@dataclass(frozen=True)
class PolicyTable:
    """Precomputed per-capability control constants.

    ``srp_mean[k-2]`` and ``retx_probs[k-2]`` hold the expected resolve
    duration and the retransmission probability for group size k; both are
    empty for capability 1, where no resolve procedure exists.
    """

    M: int
    p_e: float
    x_star: float
    s_star: float
    c_m: float
    srp_mean: tuple[float, ...]
    retx_probs: tuple[float, ...]

    def srp_mean_for(self, group_size: int) -> float:
        return self.srp_mean[group_size - 2]

    def retx_prob_for(self, group_size: int) -> float:
        return self.retx_probs[group_size - 2]

    def to_text(self) -> str:
        """Flat ``key = value`` serialization; vectors comma-separated."""
        lines = [
            f"M = {self.M}",
            f"p_e = {self.p_e!r}",
            f"x_star = {self.x_star!r}",
            f"s_star = {self.s_star!r}",
            f"c_m = {self.c_m!r}",
            "srp_mean = " + ",".join(repr(v) for v in self.srp_mean),
            "retx_probs = " + ",".join(repr(v) for v in self.retx_probs),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PolicyTable":
        fields: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        missing = {"M", "p_e", "x_star", "s_star", "c_m", "srp_mean",
                   "retx_probs"} - fields.keys()
        if missing:
            raise ValueError(f"policy table text missing keys: {sorted(missing)}")

        def vector(raw: str) -> tuple[float, ...]:
            return tuple(float(v) for v in raw.split(",")) if raw else ()

        return cls(
            M=int(fields["M"]),
            p_e=float(fields["p_e"]),
            x_star=float(fields["x_star"]),
            s_star=float(fields["s_star"]),
            c_m=float(fields["c_m"]),
            srp_mean=vector(fields["srp_mean"]),
            retx_probs=vector(fields["retx_probs"]),
        )


@lru_cache(maxsize=None)
def build_policy_table(capability: int, failure_prob: float = 0.0) -> PolicyTable:
    """Compute the full set of control constants for one capability.

    For capability 1 the resolve machinery is bypassed entirely: the system
    is classical slotted ALOHA with x* = 1 and peak rate 1/e.
    """
    if capability < 1:
        raise ValueError(f"capability must be >= 1, got {capability}")
    probs, durations = optimal_retx_probs(capability, failure_prob)
    x_star, s_star = optimal_mean_transmissions(capability, durations)
    return PolicyTable(
        M=capability,
        p_e=failure_prob,
        x_star=x_star,
        s_star=s_star,
        c_m=collision_offset(x_star, capability),
        srp_mean=durations,
        retx_probs=probs,
    )
