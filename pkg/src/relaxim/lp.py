"""LP relaxation of deterministic influence maximization.

    max  e^T t
    s.t. t <= A^T x,  0 <= t <= e,  e^T x = k,  0 <= x <= e

Solved as a bounded-variable LP with one slack per coupling row.  Dual
multipliers follow the sign conventions of the optimality system

    lam^T (t - A^T x) = 0      x^T (-A lam + nu + xi e) = 0
    mu^T (e - t) = 0           lam + mu >= e
    nu^T (e - x) = 0           -A lam + nu + xi e >= 0
    t^T (lam + mu - e) = 0     lam, mu, nu >= 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from relaxim.conditions import clean_cores, satisfies_noiseless_assumptions
from relaxim.generators import PlantedInstance
from relaxim.graph import BipartiteGraph
from relaxim.oracles import greedy_deterministic
from relaxim.simplex import BoundedSimplex, Status

RECOVERY_TOL = 1e-8


class CertificateError(RuntimeError):
    """The explicit dual certificate cannot be built for this instance."""


@dataclass(frozen=True)
class LpProblem:
    graph: BipartiteGraph
    k: int
    M: sp.csc_matrix = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.graph.num_senders

    @property
    def n(self) -> int:
        return self.graph.num_receivers


@dataclass
class LpSolution:
    x: np.ndarray
    t: np.ndarray
    objective: float
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    xi_dual: float
    status: Status = Status.OPTIMAL
    iterations: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": "lp",
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "x": self.x.tolist(),
            "t": self.t.tolist(),
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "nu": self.nu.tolist(),
            "xi_dual": self.xi_dual,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LpSolution":
        return cls(
            x=np.array(d["x"], dtype=float), t=np.array(d["t"], dtype=float),
            objective=float(d["objective"]), lam=np.array(d["lambda"], dtype=float),
            mu=np.array(d["mu"], dtype=float), nu=np.array(d["nu"], dtype=float),
            xi_dual=float(d["xi_dual"]), status=Status(d["status"]), iterations=int(d.get("iterations", 0)),
        )


def build_lp(g: BipartiteGraph, k: int) -> LpProblem:
    """Variables are ordered ``(x, t, s)``; rows are ``-A^T x + t + s = 0`` then ``e^T x = k``."""
    m, n = g.num_senders, g.num_receivers
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    At = g.incidence.T.tocsc()
    eye = sp.identity(n, format="csc")
    coupling = sp.hstack([-At, eye, eye])
    budget = sp.hstack([sp.csr_matrix(np.ones((1, m))), sp.csr_matrix((1, 2 * n))])
    M = sp.vstack([coupling, budget], format="csc")
    b = np.zeros(n + 1)
    b[n] = k
    c = np.concatenate([np.zeros(m), -np.ones(n), np.zeros(n)])
    lower = np.zeros(m + 2 * n)
    upper = np.concatenate([np.ones(m + n), np.full(n, np.inf)])
    return LpProblem(g, int(k), M, b, c, lower, upper)


def _crash_start(p: LpProblem, chosen) -> tuple[np.ndarray, np.ndarray]:
    """Feasible basis for ``x`` = indicator of ``chosen`` and ``t = min(e, A^T x)``.

    Covered rows keep their slack basic (``t_j`` at its upper bound), uncovered
    rows keep ``t_j`` basic at zero; one selected sender is basic on the budget
    row (at its upper bound).
    """
    m, n = p.m, p.n
    chosen = np.asarray(chosen, dtype=np.int64)
    x = np.zeros(m)
    x[chosen] = 1.0
    cover = p.graph.incidence.T @ x
    at_upper = np.zeros(m + 2 * n, dtype=bool)
    at_upper[chosen] = True
    covered = cover >= 1.0
    at_upper[m + np.flatnonzero(covered)] = True
    basic_x = int(chosen[-1])
    at_upper[basic_x] = False
    row_basic = np.where(covered, m + n + np.arange(n), m + np.arange(n))
    basis = np.concatenate([row_basic, [basic_x]])
    return basis, at_upper


def crash_senders(p: LpProblem, rule: str) -> np.ndarray:
    """``k`` senders for the crash start: a greedy cover or the largest outdegrees."""
    if rule == "greedy":
        return np.array(greedy_deterministic(p.graph, p.k).selected, dtype=np.int64)
    if rule == "degree":
        return np.argsort(-p.graph.out_degrees(), kind="stable")[: p.k]
    raise ValueError(f"unknown crash rule {rule!r}")


def solve_lp(p: LpProblem, *, start: str = "greedy", max_iter: int | None = None, **solver_opts) -> LpSolution:
    """Vertex solution of the LP relaxation with duals read off the final basis.

    ``start`` picks the initial basis: ``"greedy"`` (greedy-cover crash),
    ``"degree"`` (largest-outdegree crash) or ``"artificial"`` (phase 1 from
    an all-artificial basis).  Extra keywords go to ``BoundedSimplex``.
    """
    m, n = p.m, p.n
    solver = BoundedSimplex(p.M, p.b, p.c, p.lower, p.upper, max_iter=max_iter, **solver_opts)
    if start == "artificial":
        res = solver.solve()
    else:
        res = solver.solve(*_crash_start(p, crash_senders(p, start)))
    z, y, d = res.z, res.y, res.d
    x, t = z[:m].copy(), z[m : m + n].copy()
    lam = -y[:n]
    xi_dual = float(-y[n])
    mu = np.maximum(0.0, -d[m : m + n])
    nu = np.maximum(0.0, -d[:m])
    return LpSolution(
        x=x, t=t, objective=float(t.sum()), lam=lam, mu=mu, nu=nu, xi_dual=xi_dual,
        status=res.status, iterations=res.iterations,
    )


def recovery_error(x: np.ndarray, influencers) -> float:
    """Euclidean distance of ``x`` from 1 on the influencer coordinates."""
    idx = np.asarray(influencers, dtype=np.int64)
    return float(np.sqrt(np.sum((np.asarray(x)[idx] - 1.0) ** 2)))


@dataclass(frozen=True)
class KktReport:
    residuals: dict[str, float]
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def kkt_check(p: LpProblem, sol: LpSolution, tol: float = 1e-7) -> KktReport:
    """Largest violation of each primal, dual and complementarity condition."""
    x, t, lam, mu, nu, xi = sol.x, sol.t, sol.lam, sol.mu, sol.nu, sol.xi_dual
    if x.shape != (p.m,) or t.shape != (p.n,) or lam.shape != (p.n,) or mu.shape != (p.n,) or nu.shape != (p.m,):
        raise ValueError("solution dimensions do not match the problem")
    A = p.graph.incidence
    cover = A.T @ x
    reduced = -(A @ lam) + nu + xi
    neg = lambda v: float(np.max(np.maximum(0.0, -v), initial=0.0)) + 0.0
    absmax = lambda v: float(np.max(np.abs(v), initial=0.0))
    res = {
        "primal_coupling": neg(cover - t),
        "primal_bounds": max(neg(x), neg(1 - x), neg(t), neg(1 - t)),
        "primal_budget": abs(float(x.sum()) - p.k),
        "dual_cover": neg(lam + mu - 1.0),
        "dual_senders": neg(reduced),
        "dual_sign": max(neg(lam), neg(mu), neg(nu)),
        "comp_coupling": absmax(lam * (t - cover)),
        "comp_t_upper": absmax(mu * (1 - t)),
        "comp_x_upper": absmax(nu * (1 - x)),
        "comp_t": absmax(t * (lam + mu - 1.0)),
        "comp_x": absmax(x * reduced),
    }
    return KktReport(res, tol)


def is_integral(x: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.all(np.minimum(np.abs(x), np.abs(1 - x)) <= tol))


def noiseless_certificate(inst: PlantedInstance) -> LpSolution:
    """Explicit optimal dual pair for ``(x*, e)`` on a noiseless planted instance.

    ``lam = 1/n_l`` on group ``l``, ``mu = e - lam``, ``nu = delta x*`` and
    ``xi = 1 - delta`` with ``delta = 1 / max_l n_l``.
    """
    if not satisfies_noiseless_assumptions(inst):
        raise CertificateError("instance violates the noiseless planted assumptions")
    n = inst.group_sizes()
    nr = inst.graph.num_receivers
    lam = np.zeros(nr)
    for l in range(1, inst.k + 1):
        lam[inst.receiver_groups[l]] = 1.0 / n[l - 1]
    delta = 1.0 / n.max()
    x = inst.x_star
    return LpSolution(
        x=x, t=np.ones(nr), objective=float(nr), lam=lam, mu=1.0 - lam, nu=delta * x, xi_dual=1.0 - delta,
    )


def noisy_certificate(inst: PlantedInstance) -> LpSolution:
    """Explicit optimal dual pair for the planted solution of a noisy instance.

    ``lam`` is ``n_min/n_l`` on the clean core of group ``l``, 0 on the rest of
    the group and 1 on ``G_0``.  The budget multiplier ``xi`` is the midpoint
    between the largest subordinate score and the smallest influencer score
    (score = ``A(i,:) lam``) and ``nu`` lifts the influencers onto it.
    """
    g = inst.graph
    nr = g.num_receivers
    n = inst.group_sizes()
    n_min = n.min()
    cores = clean_cores(inst)
    lam = np.zeros(nr)
    mu = np.ones(nr)
    t = np.ones(nr)
    for l, H in enumerate(cores, start=1):
        lam[H] = n_min / n[l - 1]
        mu[H] = 1.0 - n_min / n[l - 1]
    G0 = np.asarray(inst.receiver_groups[0], dtype=np.int64)
    lam[G0] = 1.0
    mu[G0] = 0.0
    t[G0] = 0.0
    score = g.incidence @ lam
    infl = inst.influencers
    subs = np.setdiff1d(np.arange(g.num_senders), infl)
    lo = float(score[infl].min())
    hi = float(score[subs].max()) if subs.size else None
    if hi is None:
        omega = lo / 2.0
    elif lo <= hi:
        raise CertificateError(
            f"smallest influencer score {lo:g} does not exceed largest subordinate score {hi:g}"
        )
    else:
        omega = (lo + hi) / 2.0
    nu = np.zeros(g.num_senders)
    nu[infl] = score[infl] - omega
    x = inst.x_star
    return LpSolution(x=x, t=t, objective=float(t.sum()), lam=lam, mu=mu, nu=nu, xi_dual=omega)
