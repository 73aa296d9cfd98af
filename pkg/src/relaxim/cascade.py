"""Smooth convex relaxation for the bipartite independent cascade model.

With ``W[i, j] = ln(1 - p_ij)`` on every arc, a receiver stays unreached with
probability ``exp(sum_i x_i W[i, j])`` when sender ``i`` is seeded with weight
``x_i``.  The relaxation minimizes

    g(x) = sum_j exp((W^T x)_j)    over  {0 <= x <= 1, sum x = k}

which is convex (a sum of exponentials of linear forms).  Everything is kept
in log space so large seed sets never underflow a product.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from relaxim.graph import BipartiteGraph, DimensionError

log = logging.getLogger(__name__)

CERTIFIED = "CertifiedOptimal"
NOT_CERTIFIED = "NotCertified"


class AmbiguousRoundingError(ValueError):
    """The k largest entries of a fractional point are not uniquely determined."""

    def __init__(self, value: float, k: int):
        super().__init__(f"tie at the k-th largest entry (k={k}, value={value!r}); top-k rounding is ambiguous")
        self.value = value
        self.k = k


class CascadeProblem:
    """Graph plus arc probabilities (one shared ``p`` or one per arc) and the budget ``k``."""

    def __init__(self, graph: BipartiteGraph, k: int, p: float | None = None, arc_probs=None):
        if (p is None) == (arc_probs is None):
            raise ValueError("give exactly one of a uniform p or per-arc probabilities")
        m = graph.num_senders
        if not 1 <= k <= m:
            raise ValueError(f"k must lie in [1, {m}], got {k}")
        if p is not None:
            p = float(p)
            if not 0.0 < p < 1.0:
                raise ValueError(f"arc probability must lie in (0, 1), got {p}")
            probs = np.full(graph.num_arcs, p)
        else:
            probs = np.asarray(arc_probs, dtype=float)
            if probs.shape != (graph.num_arcs,):
                raise DimensionError(f"expected {graph.num_arcs} arc probabilities, got shape {probs.shape}")
            if np.any(probs <= 0.0) or np.any(probs >= 1.0):
                raise ValueError("arc probabilities must lie strictly inside (0, 1)")
        self.graph = graph
        self.k = int(k)
        self.p = p
        # probabilities follow graph.arcs() order, i.e. the sender-major CSR layout
        A = graph.incidence
        self.P = sp.csr_matrix((probs, A.indices, A.indptr), shape=A.shape)
        self.W = sp.csr_matrix((np.log1p(-probs), A.indices, A.indptr), shape=A.shape)
        self.WT = self.W.T.tocsr()

    @property
    def m(self) -> int:
        return self.graph.num_senders

    @property
    def n(self) -> int:
        return self.graph.num_receivers

    @property
    def uniform(self) -> bool:
        return self.p is not None

    def _vec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise DimensionError(f"expected vector of length {self.m}, got shape {x.shape}")
        return x

    def products(self, x) -> np.ndarray:
        """Per-receiver probability of staying unreached, ``exp((W^T x)_j)``."""
        return np.exp(self.WT @ self._vec(x))


def objective(prob: CascadeProblem, x) -> float:
    return float(prob.products(x).sum())


def gradient(prob: CascadeProblem, x) -> np.ndarray:
    return prob.W @ prob.products(x)


def expected_spread(prob: CascadeProblem, x) -> float:
    """Expected number of reached receivers, ``sum_j (1 - prod_i (1 - p_ij)^{x_i})``."""
    return float(np.sum(-np.expm1(prob.WT @ prob._vec(x))))


def project_capped_simplex(y, k: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= x <= 1, sum x = k}``.

    The projection is ``clip(y - tau, 0, 1)`` for the shift ``tau`` solving
    ``sum = k``.  The sum is piecewise linear and nonincreasing in ``tau`` with
    breakpoints at ``y_i`` and ``y_i - 1``; bisecting over the sorted
    breakpoints isolates the linear piece, on which ``tau`` is solved exactly.
    """
    y = np.asarray(y, dtype=float)
    m = y.size
    if not 0 <= k <= m:
        raise ValueError(f"k must lie in [0, {m}], got {k}")
    if k == m:
        return np.ones(m)
    if k == 0:
        return np.zeros(m)
    ys = np.sort(y)
    csum = np.concatenate([[0.0], np.cumsum(ys)])

    def total(tau: float) -> float:
        # entries with y > tau + 1 give 1, entries in (tau, tau + 1] give y - tau
        a = np.searchsorted(ys, tau, side="right")
        b = np.searchsorted(ys, tau + 1.0, side="right")
        return float((m - b) + (csum[b] - csum[a]) - (b - a) * tau)

    bps = np.unique(np.concatenate([ys, ys - 1.0]))
    lo, hi = 0, bps.size - 1  # total(bps[0]) = m > k, total(bps[-1]) = 0 < k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if total(bps[mid]) >= k:
            lo = mid
        else:
            hi = mid
    t0, t1 = bps[lo], bps[hi]
    s0, s1 = total(t0), total(t1)
    tau = t0 if s0 == s1 else t0 + (s0 - k) * (t1 - t0) / (s0 - s1)
    return np.clip(y - tau, 0.0, 1.0)


@dataclass
class CascadeSolution:
    x: np.ndarray
    objective: float
    gradient: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": "cascade",
            "status": "Optimal" if self.converged else "IterationLimit",
            "objective": self.objective,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "x": self.x.tolist(),
            "gradient": self.gradient.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CascadeSolution":
        return cls(
            x=np.array(d["x"], dtype=float), objective=float(d["objective"]),
            gradient=np.array(d["gradient"], dtype=float), residual=float(d["residual"]),
            iterations=int(d["iterations"]), converged=bool(d["converged"]),
        )


def stationarity_residual(prob: CascadeProblem, x, grad=None) -> float:
    """``||x - P(x - grad g(x))||_inf``, zero exactly at minimizers."""
    x = prob._vec(x)
    grad = gradient(prob, x) if grad is None else grad
    return float(np.max(np.abs(x - project_capped_simplex(x - grad, prob.k)), initial=0.0))


def solve_cascade(
    prob: CascadeProblem,
    *,
    tol: float = 1e-9,
    max_iter: int = 50_000,
    step0: float = 1.0,
    sigma: float = 1e-4,
    shrink: float = 0.5,
    max_backtracks: int = 60,
    x0=None,
) -> CascadeSolution:
    """Projected gradient with Armijo backtracking along the projection arc."""
    m, k = prob.m, prob.k
    x = np.full(m, k / m) if x0 is None else project_capped_simplex(x0, k)
    if k == m:
        x = np.ones(m)
    prod = prob.products(x)
    g = float(prod.sum())
    grad = prob.W @ prod
    history = [g]
    it = 0
    res = stationarity_residual(prob, x, grad)
    while res > tol and it < max_iter:
        step = step0
        for _ in range(max_backtracks + 1):
            cand = project_capped_simplex(x - step * grad, k)
            d = cand - x
            # g(cand) - g(x) without cancellation, so descent stays visible near the optimum
            change = float(prod @ np.expm1(prob.WT @ d))
            # Armijo on g - mu (sum x - k), which equals g on the feasible set; this keeps
            # rounding drift in sum(x) from swamping the tiny decreases near the optimum
            free = (cand > 0.0) & (cand < 1.0)
            mu = float(grad[free].mean()) if free.any() else 0.0
            if change - mu * float(d.sum()) <= sigma * float((grad - mu) @ d):
                break
            step *= shrink
        else:
            log.debug("line search failed at iteration %d (residual %.3g)", it, res)
            break
        it += 1
        if np.array_equal(cand, x):
            break
        x = cand
        prod = prob.products(x)
        g = float(prod.sum())
        grad = prob.W @ prod
        history.append(g)
        res = stationarity_residual(prob, x, grad)
    return CascadeSolution(
        x=x, objective=g, gradient=grad, residual=res, iterations=it, converged=res <= tol, history=history,
    )


def round_threshold(x, xi_round: float = 0.0, k: int | None = None) -> np.ndarray:
    """``1`` where ``x_i >= 0.5 - xi/2``; the result may hold more or fewer than ``k`` ones."""
    upper = 1.0 / (2 * k + 1) if k is not None else 1.0
    if not 0.0 <= xi_round < upper:
        raise ValueError(f"xi_round must lie in [0, {upper:.6g}), got {xi_round}")
    return (np.asarray(x, dtype=float) >= 0.5 - xi_round / 2).astype(float)


def round_topk(x, k: int, tie_tol: float = 1e-12) -> np.ndarray:
    """Indicator of the ``k`` largest entries; refuses when the boundary is tied."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    order = np.argsort(-x, kind="stable")
    if k < m and x[order[k - 1]] - x[order[k]] <= tie_tol:
        raise AmbiguousRoundingError(float(x[order[k - 1]]), k)
    y = np.zeros(m)
    y[order[:k]] = 1.0
    return y


@dataclass(frozen=True)
class CascadeKktReport:
    residuals: dict[str, float]
    lam: float
    u: np.ndarray
    v: np.ndarray
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def kkt_check_cascade(prob: CascadeProblem, x, tol: float = 1e-7, tol_act: float = 1e-8) -> CascadeKktReport:
    """Multipliers for ``grad g + lam e - u + v = 0`` built from the gradient.

    Coordinates with ``x_i > 0`` need ``grad_i <= -lam`` and those with
    ``x_i < 1`` need ``grad_i >= -lam``; ``-lam`` is put at the midpoint of the
    admissible interval, and ``u``, ``v`` are the parts of the gradient on
    either side of it.
    """
    x = prob._vec(x)
    grad = gradient(prob, x)
    pos = x > tol_act
    below = x < 1.0 - tol_act
    hi = float(grad[pos].max()) if pos.any() else float(grad.min())
    lo = float(grad[below].min()) if below.any() else float(grad.max())
    if not pos.any() and not below.any():
        hi = lo = 0.0
    lam = -(hi + lo) / 2.0
    u = np.maximum(0.0, grad + lam)
    v = np.maximum(0.0, -grad - lam)
    neg = lambda a: float(np.max(np.maximum(0.0, -a), initial=0.0))
    res = {
        "primal_bounds": max(neg(x), neg(1.0 - x)),
        "primal_budget": abs(float(x.sum()) - prob.k),
        "stationarity": float(np.max(np.abs(grad + lam - u + v), initial=0.0)),
        "comp_lower": float(np.max(u * x, initial=0.0)),
        "comp_upper": float(np.max(v * (1.0 - x), initial=0.0)),
    }
    return CascadeKktReport(res, lam, u, v, tol)


@dataclass
class CutCertificate:
    verdict: str
    rounded: np.ndarray
    g_rounded: float
    g_cut: float  # best objective found on the cut polytope
    lower_bound: float  # proven lower bound on the cut polytope's optimum
    gap: float
    iterations: int
    reason: str = ""

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict, "reason": self.reason, "rounded": self.rounded.tolist(),
            "g_rounded": self.g_rounded, "g_cut": self.g_cut, "lower_bound": self.lower_bound,
            "gap": self.gap, "iterations": self.iterations,
        }


def _cut_lmo(c: np.ndarray, inside: np.ndarray, k: int) -> np.ndarray:
    """Minimize ``c^T s`` over the 0-1 points with ``k`` ones, at most ``k-1`` of them in ``inside``.

    The constraints form a laminar matroid, so the greedy pass in order of
    increasing cost is exact and the polytope's vertices are these points.
    """
    s = np.zeros(c.size)
    taken = taken_in = 0
    for i in np.argsort(c, kind="stable"):
        if taken == k:
            break
        if inside[i]:
            if taken_in == k - 1:
                continue
            taken_in += 1
        s[i] = 1.0
        taken += 1
    return s


def _line_search(prob: CascadeProblem, x: np.ndarray, d: np.ndarray, tol: float = 1e-12) -> float:
    """Minimize the convex ``g(x + gamma d)`` over ``[0, 1]`` by bisection on its derivative."""
    deriv = lambda gam: float(gradient(prob, x + gam * d) @ d)
    if deriv(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def certify_by_cut(
    prob: CascadeProblem,
    x_solution,
    *,
    margin: float = 1e-9,
    gap_tol: float = 1e-8,
    max_iter: int = 100_000,
) -> CutCertificate:
    """Certify the top-k rounding of ``x_solution`` as an optimal seed set.

    Cutting off the rounded vertex ``y`` with ``y^T x <= k-1`` leaves every
    other 0-1 feasible point in the polytope.  If the relaxation's minimum
    over what remains is larger than ``g(y)``, no other seed set can match
    ``y``.  Frank-Wolfe supplies both an upper bound (its iterate) and a
    lower bound (iterate value minus duality gap); only the lower bound is
    used to certify.
    """
    k, m = prob.k, prob.m
    y = round_topk(x_solution, k)
    gy = objective(prob, y)
    if k == m:
        return CutCertificate(CERTIFIED, y, gy, math.inf, math.inf, 0.0, 0, "cut infeasible: y = e is the only feasible point")
    inside = y > 0.5
    x = _cut_lmo(gradient(prob, y), inside, k)
    g = objective(prob, x)
    lower = -math.inf
    gap = math.inf
    for it in range(1, max_iter + 1):
        grad = gradient(prob, x)
        s = _cut_lmo(grad, inside, k)
        gap = float(grad @ (x - s))
        lower = max(lower, g - gap)
        if lower > gy + margin:
            return CutCertificate(CERTIFIED, y, gy, g, lower, gap, it)
        if g <= gy + margin:
            return CutCertificate(NOT_CERTIFIED, y, gy, g, lower, gap, it, "cut polytope reaches the rounded value")
        if gap <= gap_tol:
            return CutCertificate(NOT_CERTIFIED, y, gy, g, lower, gap, it, "converged without separation")
        d = s - x
        x = x + _line_search(prob, x, d) * d
        g = objective(prob, x)
    return CutCertificate(NOT_CERTIFIED, y, gy, g, lower, gap, max_iter, "Frank-Wolfe did not converge")
