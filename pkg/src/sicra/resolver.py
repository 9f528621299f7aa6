"""Stochastic execution of the SIC resolve procedure.

A group of 2..M users that collided in a normal slot retransmits under a
per-group-size probability until the transmitting subset is a proper split:
a lone transmitter is decoded directly, a multi-user subset is stored and
resolved recursively.  Every decoded packet is cancelled out of all stored
superposed signals, and any signal thereby reduced to a single undecoded
packet decodes it at no slot cost; this cascade is what terminates the
procedure.

Cancellation failures are modeled per stored signal: with probability
``failure_prob`` a stored signal is unusable, and the first time it is
needed for cancellation its undecoded constituents spend retransmission
slots (each again failing independently) until a usable copy exists.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np


class _Signal:
    __slots__ = ("members", "usable")

    def __init__(self, members: set, usable: bool):
        self.members = members
        self.usable = usable


class SignalLedger:
    """Undecoded superposed receptions awaiting cancellation.

    Stored signals always hold >= 2 undecoded packets; reductions to one
    packet decode it immediately and drop the signal.
    """

    def __init__(self, failure_prob: float = 0.0, rng: random.Random | None = None):
        if not 0.0 <= failure_prob < 1.0:
            raise ValueError(f"failure probability must be in [0, 1), got {failure_prob}")
        self.failure_prob = failure_prob
        self._rng = rng if rng is not None else random.Random()
        self._signals: list[_Signal] = []
        self._decoded: set = set()

    def __len__(self) -> int:
        return len(self._signals)

    def pending(self) -> list[frozenset]:
        """Snapshot of the stored signal sets (undecoded members only)."""
        return [frozenset(sig.members) for sig in self._signals]

    def store(self, packet_ids) -> None:
        members = set(packet_ids)
        if len(members) < 2:
            raise ValueError("a stored signal needs at least 2 packets")
        if members & self._decoded:
            raise ValueError("signal contains already-decoded packets")
        usable = self.failure_prob == 0.0 or self._rng.random() >= self.failure_prob
        self._signals.append(_Signal(members, usable))

    def _repair_slots(self) -> int:
        # Retransmissions until one copy survives; each fails independently.
        n = 1
        while self._rng.random() < self.failure_prob:
            n += 1
        return n

    def decode(self, packet_id):
        """Cancel a freshly decoded packet out of every stored signal.

        Returns (cascade, repairs): ``cascade`` lists (packet_id, offset)
        pairs for packets decoded transitively, where ``offset`` counts the
        repair slots consumed before that packet came free, and ``repairs``
        is the total number of repair slots spent in this call.
        """
        self._decoded.add(packet_id)
        cascade: list[tuple] = []
        repairs = 0
        queue = [packet_id]
        while queue:
            pid = queue.pop()
            kept: list[_Signal] = []
            for sig in self._signals:
                members = sig.members
                if pid not in members:
                    kept.append(sig)
                    continue
                if not sig.usable:
                    repairs += self._repair_slots()
                    sig.usable = True
                members.discard(pid)
                if len(members) >= 2:
                    kept.append(sig)
                    continue
                leftover = members.pop()
                if leftover not in self._decoded:
                    self._decoded.add(leftover)
                    cascade.append((leftover, repairs))
                    queue.append(leftover)
                # A duplicate reception of an already-decoded packet carries
                # no new information; the signal is simply dropped.
            self._signals = kept
        return cascade, repairs


@dataclass
class SrpOutcome:
    """Result of one resolve procedure.

    ``duration`` is the total number of slots consumed, repairs included;
    ``decode_slot`` maps every packet id of the initiating group to the slot
    offset within the procedure (1-based) at which it was decoded.
    """

    duration: int
    decode_slot: dict


def run_srp(group, retx_probs, failure_prob: float = 0.0,
            rng: random.Random | None = None,
            trace: list | None = None) -> SrpOutcome:
    """Resolve a collided group of packets; terminates with probability 1.

    ``retx_probs[k - 2]`` is the retransmission probability used while k
    users remain active.  The initiating collision signal enters the ledger
    before the first slot, failed with probability ``failure_prob`` like any
    other reception.  If ``trace`` is a list, one
    (slot, transmitters, decoded, repair_slots) row is appended per
    transmission slot.
    """
    ids = sorted(group)
    m = len(ids)
    if m < 2:
        raise ValueError(f"a resolve procedure needs at least 2 packets, got {m}")
    if len(retx_probs) < m - 1:
        raise ValueError(
            f"retx_probs must cover group sizes 2..{m}, got {len(retx_probs)} entries"
        )
    for q in retx_probs[: m - 1]:
        if not 0.0 < q < 1.0:
            raise ValueError(f"retransmission probabilities must be in (0, 1), got {q}")
    if rng is None:
        rng = random.Random()
    rand = rng.random

    ledger = SignalLedger(failure_prob, rng)
    ledger.store(ids)
    decode_slot: dict = {}
    clock = 0

    def settle(pid, at):
        # Direct decode plus the SIC cascade it triggers; repairs cost slots.
        nonlocal clock
        decode_slot[pid] = at
        cascade, repairs = ledger.decode(pid)
        clock += repairs
        for q, off in cascade:
            decode_slot[q] = at + off
        return (pid, *(q for q, _ in cascade)), repairs

    def resolve(active):
        nonlocal clock
        k = len(active)
        p = retx_probs[k - 2]
        while True:
            clock += 1
            senders = [u for u in active if rand() < p]
            ns = len(senders)
            if 0 < ns < k:
                break
            # All-transmit slots duplicate the group's signal and are
            # discarded; idle slots carry nothing.
            if trace is not None:
                trace.append((clock, tuple(senders), (), 0))
        at = clock
        if ns == 1:
            newly, repairs = settle(senders[0], at)
            if trace is not None:
                trace.append((at, tuple(senders), newly, repairs))
        else:
            if trace is not None:
                trace.append((at, tuple(senders), (), 0))
            ledger.store(senders)
            resolve(senders)
        rest = [u for u in active if u not in decode_slot]
        if len(rest) >= 2:
            resolve(rest)

    resolve(ids)
    return SrpOutcome(duration=clock, decode_slot=decode_slot)


def sample_durations(group_size: int, retx_probs, failure_prob: float,
                     trials: int, seed: int) -> np.ndarray:
    """Durations of ``trials`` independent resolve procedures, one rng stream."""
    rng = random.Random(seed)
    group = tuple(range(group_size))
    out = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        out[i] = run_srp(group, retx_probs, failure_prob, rng).duration
    return out


def _duration_moments(args) -> tuple[int, float, float]:
    group_size, retx_probs, failure_prob, trials, seed = args
    d = sample_durations(group_size, retx_probs, failure_prob, trials, seed)
    return trials, float(d.sum()), float((d.astype(np.float64) ** 2).sum())


def mc_duration_means(cases, trials: int, seed: int,
                      jobs: int = 1) -> list[tuple[float, float]]:
    """Monte-Carlo mean resolve duration and standard error per case.

    ``cases`` is a sequence of (group_size, retx_probs, failure_prob)
    triples, each sampled ``trials`` times.  With ``jobs`` > 1 every case is
    sharded across one shared process pool; case i shard j uses seed
    + 1000*i + j, so results are reproducible for fixed (seed, jobs).
    """
    jobs = max(1, min(jobs, trials))
    share = trials // jobs
    tasks = []
    for i, (group_size, retx_probs, failure_prob) in enumerate(cases):
        for j in range(jobs):
            tasks.append((group_size, tuple(retx_probs), failure_prob,
                          share + (1 if j < trials % jobs else 0),
                          seed + 1000 * i + j))
    if jobs == 1:
        moments = [_duration_moments(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            moments = list(pool.map(_duration_moments, tasks))
    out = []
    for i in range(len(cases)):
        per_case = moments[i * jobs: (i + 1) * jobs]
        n = sum(c for c, _, _ in per_case)
        s1 = sum(s for _, s, _ in per_case)
        s2 = sum(q for _, _, q in per_case)
        mean = s1 / n
        var = max(s2 / n - mean * mean, 0.0)
        out.append((mean, (var / n) ** 0.5))
    return out


def mc_duration_mean(group_size: int, retx_probs, failure_prob: float,
                     trials: int, seed: int, jobs: int = 1) -> tuple[float, float]:
    """Monte-Carlo mean resolve duration and its standard error.

    Shard i uses seed + i; see :func:`mc_duration_means` for batches.
    """
    return mc_duration_means([(group_size, retx_probs, failure_prob)],
                             trials, seed, jobs)[0]
