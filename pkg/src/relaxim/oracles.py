"""Reference answers: exhaustive search, greedy baselines and cascade simulation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from relaxim.cascade import CascadeProblem
from relaxim.graph import BipartiteGraph, DimensionError
from relaxim.rng import make_rng

DEFAULT_CAP = 10**7
MAX_TIES = 1000


class OracleCapError(ValueError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} subsets exceed the enumeration cap {cap}")
        self.count = count
        self.cap = cap


@dataclass
class OracleResult:
    best_set: tuple[int, ...]
    best_value: float
    num_evaluated: int
    ties: list[tuple[int, ...]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_set": list(self.best_set), "best_value": self.best_value,
            "num_evaluated": self.num_evaluated, "ties": [list(t) for t in self.ties],
        }


@dataclass
class GreedyResult:
    selected: tuple[int, ...]  # in order of selection
    value: float
    gains: tuple[float, ...]


def _enumerate(m: int, k: int, gain_rows, add, remove, value_tol: float, cap: int) -> OracleResult:
    """Depth-first search over k-subsets in lexicographic order.

    ``add(i)``/``remove(i)`` update the running state for the first ``k-1``
    members; the last member is scored for all candidates at once by
    ``gain_rows(lo)``, which returns ``value(prefix + {i})`` for ``i >= lo``.
    """
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    count = math.comb(m, k)
    if count > cap:
        raise OracleCapError(count, cap)
    best = -math.inf
    ties: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def visit(start: int) -> None:
        nonlocal best, ties
        if len(prefix) == k - 1:
            vals = gain_rows(start)
            top = float(vals.max())
            if top > best + value_tol:
                best, ties = top, []
            if top >= best - value_tol:
                for off in np.flatnonzero(vals >= best - value_tol):
                    if len(ties) < MAX_TIES:
                        ties.append(tuple(prefix) + (start + int(off),))
            return
        for i in range(start, m - (k - len(prefix)) + 1):
            prefix.append(i)
            add(i)
            visit(i + 1)
            remove(i)
            prefix.pop()

    visit(0)
    # enumeration is lexicographic, so the first tie is the lexicographically smallest set
    return OracleResult(ties[0], best, count, ties)


def brute_force_deterministic(g: BipartiteGraph, k: int, cap: int = DEFAULT_CAP) -> OracleResult:
    """Best coverage ``|N(S)|`` over all k-subsets of senders."""
    A = g.incidence
    cover = np.zeros(g.num_receivers, dtype=np.int64)
    covered = [0]

    def add(i):
        nb = g.receivers_of(i)
        covered[0] += int(np.count_nonzero(cover[nb] == 0))
        cover[nb] += 1

    def remove(i):
        nb = g.receivers_of(i)
        cover[nb] -= 1
        covered[0] -= int(np.count_nonzero(cover[nb] == 0))

    def gain_rows(lo):
        return covered[0] + A[lo:] @ (cover == 0).astype(float)

    res = _enumerate(g.num_senders, k, gain_rows, add, remove, 0.5, cap)
    res.best_value = float(round(res.best_value))
    return res


def brute_force_cascade(prob: CascadeProblem, k: int | None = None, cap: int = DEFAULT_CAP) -> OracleResult:
    """Largest expected spread over all k-subsets, from the closed-form expectation."""
    k = prob.k if k is None else k
    logs = np.zeros(prob.n)  # log-probability that each receiver is still unreached
    W, P = prob.W, prob.P

    def add(i):
        lo, hi = W.indptr[i], W.indptr[i + 1]
        logs[W.indices[lo:hi]] += W.data[lo:hi]

    def remove(i):
        lo, hi = W.indptr[i], W.indptr[i + 1]
        logs[W.indices[lo:hi]] -= W.data[lo:hi]

    def gain_rows(start):
        # spread(S + i) = spread(S) + sum_j p_ij * prod_j(S)
        unreached = np.exp(logs)
        return float(np.sum(-np.expm1(logs))) + P[start:] @ unreached

    return _enumerate(prob.m, k, gain_rows, add, remove, 1e-9, cap)


def _lazy_greedy(m: int, k: int, gain, commit) -> GreedyResult:
    """Greedy with stale upper bounds in a heap; ties go to the lowest index.

    Heap keys are ``(-gain, index)``, so a freshly evaluated entry that
    reaches the top beats every other sender, including equal-gain senders
    with a larger index.  Valid because marginal gains never increase.
    """
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    heap = [(-gain(i), i, 0) for i in range(m)]
    heapq.heapify(heap)
    chosen: list[int] = []
    gains: list[float] = []
    total = 0.0
    for rnd in range(k):
        while True:
            neg, i, stamp = heapq.heappop(heap)
            if stamp == rnd:
                break
            heapq.heappush(heap, (-gain(i), i, rnd))
        chosen.append(i)
        gains.append(-neg)
        total += -neg
        commit(i)
    return GreedyResult(tuple(chosen), total, tuple(gains))


def greedy_deterministic(g: BipartiteGraph, k: int) -> GreedyResult:
    hit = np.zeros(g.num_receivers, dtype=bool)

    def gain(i):
        return float(np.count_nonzero(~hit[g.receivers_of(i)]))

    def commit(i):
        hit[g.receivers_of(i)] = True

    return _lazy_greedy(g.num_senders, k, gain, commit)


def greedy_cascade(prob: CascadeProblem, k: int | None = None) -> GreedyResult:
    k = prob.k if k is None else k
    W, P = prob.W, prob.P
    logs = np.zeros(prob.n)

    def gain(i):
        lo, hi = P.indptr[i], P.indptr[i + 1]
        return float(P.data[lo:hi] @ np.exp(logs[P.indices[lo:hi]]))

    def commit(i):
        lo, hi = W.indptr[i], W.indptr[i + 1]
        logs[W.indices[lo:hi]] += W.data[lo:hi]

    res = _lazy_greedy(prob.m, k, gain, commit)
    res.value = float(np.sum(-np.expm1(logs)))
    return res


@dataclass(frozen=True)
class SpreadEstimate:
    mean: float
    stderr: float
    trials: int


def monte_carlo_spread(
    prob: CascadeProblem, senders: Iterable[int], trials: int, seed: int, batch: int = 4096
) -> SpreadEstimate:
    """Simulate one cascade step from ``senders`` and count reached receivers."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    S = np.unique(np.fromiter((int(i) for i in senders), dtype=np.int64))
    if S.size and (S[0] < 0 or S[-1] >= prob.m):
        raise DimensionError(f"sender index out of range [0, {prob.m})")
    P = prob.P
    recv = np.concatenate([P.indices[P.indptr[i] : P.indptr[i + 1]] for i in S]) if S.size else np.empty(0, np.int64)
    probs = np.concatenate([P.data[P.indptr[i] : P.indptr[i + 1]] for i in S]) if S.size else np.empty(0)
    if recv.size == 0:
        return SpreadEstimate(0.0, 0.0, trials)
    order = np.argsort(recv, kind="stable")
    recv, probs = recv[order], probs[order]
    starts = np.flatnonzero(np.r_[True, recv[1:] != recv[:-1]])
    rng = make_rng(seed)
    counts = np.empty(trials)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        live = rng.random((b, probs.size)) < probs
        reached = np.logical_or.reduceat(live, starts, axis=1)
        counts[done : done + b] = reached.sum(axis=1)
        done += b
    se = float(counts.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return SpreadEstimate(float(counts.mean()), se, trials)
