"""Bounded-variable revised primal simplex.

Solves ``min c^T z  s.t.  M z = b,  lower <= z <= upper`` with finite lower
bounds.  Nonbasic variables sit at one of their bounds; the basis is held as a
sparse LU factorization of the basis matrix plus an eta file of column
replacements, rebuilt from scratch every ``refactor_every`` pivots.

Pricing is Dantzig's rule (lowest index on ties); after a budget of degenerate
pivots the solver switches permanently to Bland's rule, which cannot cycle.

Highly degenerate problems (covering LPs are) stall primal simplex.  With
``perturb > 0`` phase 2 first runs on slightly widened bounds, then snaps back
to the true bounds and repairs the few resulting infeasibilities with dual
simplex pivots before a final primal pass.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class SimplexResult:
    status: Status
    z: np.ndarray
    y: np.ndarray  # row multipliers, B^{-T} c_B
    d: np.ndarray  # reduced costs c - M^T y
    basis: np.ndarray
    at_upper: np.ndarray
    iterations: int
    objective: float
    bland: bool = False


class _Basis:
    def __init__(self, M: sp.csc_matrix, cols: np.ndarray):
        self.lu = splu(M[:, cols].tocsc())
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for r, w in self.etas:
            vr = v[r] / w[r]
            v -= vr * w
            v[r] = vr
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        u = np.array(c, dtype=float)
        for r, w in reversed(self.etas):
            u[r] = (u[r] - (w @ u - w[r] * u[r])) / w[r]
        return self.lu.solve(u, trans="T")

    def replace(self, r: int, w: np.ndarray) -> None:
        self.etas.append((r, w))


class BoundedSimplex:
    def __init__(
        self,
        M,
        b,
        c,
        lower,
        upper,
        *,
        refactor_every: int = 100,
        pivot_tol: float = 1e-10,
        dual_tol: float = 1e-9,
        primal_tol: float = 1e-9,
        max_iter: int | None = None,
        bland_after: int | None = None,
        perturb: float = 1e-6,
        pricing: str = "devex",
    ):
        self.M = sp.csc_matrix(M, dtype=float)
        self.MT = self.M.T.tocsr()
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        R, N = self.M.shape
        if self.b.shape != (R,) or self.c.shape != (N,) or self.lower.shape != (N,) or self.upper.shape != (N,):
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.upper < self.lower):
            raise ValueError("upper bound below lower bound")
        self.refactor_every = refactor_every
        self.pivot_tol = pivot_tol
        self.dual_tol = dual_tol
        self.primal_tol = primal_tol
        self.max_iter = max_iter if max_iter is not None else 20 * (R + N)
        # degenerate-pivot budget before Bland's rule takes over
        self.bland_after = bland_after if bland_after is not None else 5 * N
        self.perturb = perturb
        if pricing not in ("dantzig", "devex"):
            raise ValueError(f"unknown pricing rule {pricing!r}")
        self.pricing = pricing

    def _column(self, M: sp.csc_matrix, q: int) -> np.ndarray:
        a = np.zeros(M.shape[0])
        lo, hi = M.indptr[q], M.indptr[q + 1]
        a[M.indices[lo:hi]] = M.data[lo:hi]
        return a

    def _nonbasic_values(self, basis, at_upper, lower, upper) -> np.ndarray:
        z = np.where(at_upper, upper, lower)
        z[basis] = 0.0
        return z

    def solve(self, basis=None, at_upper=None) -> SimplexResult:
        """Run phase 1 (if the start is not primal feasible) then phase 2.

        ``basis`` lists one column per row; ``at_upper`` marks nonbasic
        variables resting at their upper bound.  With no basis given, one
        artificial variable per row forms the starting basis.
        """
        R, N = self.M.shape
        if basis is None:
            at_upper = np.zeros(N, dtype=bool)
            basis = None
        else:
            basis = np.asarray(basis, dtype=np.int64)
            at_upper = np.zeros(N, dtype=bool) if at_upper is None else np.asarray(at_upper, dtype=bool).copy()
            zN = self._nonbasic_values(basis, at_upper, self.lower, self.upper)
            try:
                xB = _Basis(self.M, basis).ftran(self.b - self.M @ zN)
            except RuntimeError:
                xB = None
            lo, hi = self.lower[basis], self.upper[basis]
            if xB is not None and np.all(xB >= lo - self.primal_tol) and np.all(xB <= hi + self.primal_tol):
                return self._phase2(basis, at_upper)
            log.debug("starting basis infeasible; falling back to artificial phase 1")
            at_upper[:] = False

        return self._phase1(at_upper, 0)

    def _phase1(self, at_upper, it0) -> SimplexResult:
        """Artificial column per row, signed so each artificial starts nonnegative."""
        R, N = self.M.shape
        zN = np.where(at_upper, self.upper, self.lower)
        resid = self.b - self.M @ zN
        sign = np.where(resid >= 0, 1.0, -1.0)
        Ma = sp.hstack([self.M, sp.diags(sign)], format="csc")
        lo = np.concatenate([self.lower, np.zeros(R)])
        hi = np.concatenate([self.upper, np.full(R, np.inf)])
        c1 = np.concatenate([np.zeros(N), np.ones(R)])
        basis1 = np.arange(N, N + R)
        ph1 = self._run(Ma, c1, lo, hi, basis1, np.concatenate([at_upper, np.zeros(R, dtype=bool)]), it0)
        if ph1.status is Status.ITERATION_LIMIT:
            return self._strip(ph1, N)
        if ph1.objective > max(self.primal_tol, 1e-9 * np.abs(self.b).max(initial=1.0)):
            res = self._strip(ph1, N)
            res.status = Status.INFEASIBLE
            return res
        hi[N:] = 0.0
        c2 = np.concatenate([self.c, np.zeros(R)])
        ph2 = self._run(Ma, c2, lo, hi, ph1.basis, ph1.at_upper, ph1.iterations)
        return self._strip(ph2, N)

    def _phase2(self, basis, at_upper) -> SimplexResult:
        if self.perturb <= 0:
            return self._run(self.M, self.c, self.lower, self.upper, basis, at_upper, 0)
        lower, upper = self._perturbed_bounds(basis, at_upper)
        res = self._run(self.M, self.c, lower, upper, basis, at_upper, 0)
        if res.status is not Status.OPTIMAL:
            return res
        basis, at_upper, it = res.basis, res.at_upper, res.iterations
        # back to the true bounds; nonbasic values move by at most the perturbation
        fixed = self._dual_cleanup(basis, at_upper)
        if fixed is None:
            log.debug("dual cleanup failed; falling back to artificial phase 1")
            return self._phase1(np.zeros(self.M.shape[1], dtype=bool), it)
        basis, at_upper, extra = fixed
        return self._run(self.M, self.c, self.lower, self.upper, basis, at_upper, it + extra)

    def _perturbed_bounds(self, basis, at_upper):
        """Widen every finite bound by a random relative amount, keeping the start feasible."""
        N = self.M.shape[1]
        rng = np.random.default_rng(0x5EED)
        scale = self.perturb * (1.0 + rng.random((2, N)))
        lower = self.lower - scale[0] * (1.0 + np.abs(self.lower))
        upper = np.where(np.isfinite(self.upper), self.upper + scale[1] * (1.0 + np.abs(self.upper)), np.inf)
        fixed = self.upper == self.lower
        lower[fixed], upper[fixed] = self.lower[fixed], self.upper[fixed]
        xB = _Basis(self.M, basis).ftran(self.b - self.M @ self._nonbasic_values(basis, at_upper, lower, upper))
        pad = self.perturb * (1.0 + rng.random(len(basis)))
        lower[basis] = np.minimum(lower[basis], xB - pad)
        upper[basis] = np.maximum(upper[basis], xB + pad)
        return lower, upper

    def _dual_cleanup(self, basis, at_upper, max_pivots: int | None = None):
        """Restore primal feasibility of a dual feasible basis by bounded dual simplex pivots.

        Returns ``(basis, at_upper, pivots)`` or ``None`` when a leaving row has no
        admissible entering column (which would mean the true bounds are infeasible).
        """
        M, MT, c, lower, upper = self.M, self.MT, self.c, self.lower, self.upper
        R, N = M.shape
        basis = np.array(basis, dtype=np.int64)
        at_upper = np.array(at_upper, dtype=bool)
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basis] = True
        at_upper[is_basic] = False
        movable = upper > lower
        cap = max_pivots if max_pivots is not None else 10 * R
        fact = _Basis(M, basis)
        pivots = 0
        while True:
            if fact.etas and len(fact.etas) >= self.refactor_every:
                fact = _Basis(M, basis)
            xB = fact.ftran(self.b - M @ self._nonbasic_values(basis, at_upper, lower, upper))
            lB, uB = lower[basis], upper[basis]
            infeas = np.maximum(lB - xB, 0.0) + np.maximum(xB - uB, 0.0)
            r = int(np.argmax(infeas)) if R else 0
            if not R or infeas[r] <= self.primal_tol:
                return basis, at_upper, pivots
            if pivots >= cap:
                return None
            up = xB[r] < lB[r]  # basic variable must increase
            y = fact.btran(c[basis])
            d = c - MT @ y
            e = np.zeros(R)
            e[r] = 1.0
            alpha = MT @ fact.btran(e)
            # x_B[r] moves by -alpha_j * (change of z_j)
            if up:
                cand = ~is_basic & movable & ((~at_upper & (alpha < -self.pivot_tol)) | (at_upper & (alpha > self.pivot_tol)))
            else:
                cand = ~is_basic & movable & ((~at_upper & (alpha > self.pivot_tol)) | (at_upper & (alpha < -self.pivot_tol)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return None
            ratios = np.abs(d[idx]) / np.abs(alpha[idx])
            best = ratios.min()
            near = idx[ratios <= best + self.dual_tol]
            q = int(near[np.argmax(np.abs(alpha[near]))])
            w = fact.ftran(self._column(M, q))
            leaving = basis[r]
            at_upper[leaving] = not up
            is_basic[leaving] = False
            basis[r] = q
            is_basic[q] = True
            at_upper[q] = False
            fact.replace(r, w)
            pivots += 1

    def _strip(self, res: SimplexResult, N: int) -> SimplexResult:
        res.z = res.z[:N]
        res.d = res.d[:N]
        res.at_upper = res.at_upper[:N]
        res.objective = float(self.c @ res.z)
        return res

    def _run(self, M, c, lower, upper, basis, at_upper, it0) -> SimplexResult:
        R, N = M.shape
        MT = M.T.tocsr()
        basis = np.array(basis, dtype=np.int64)
        at_upper = np.array(at_upper, dtype=bool)
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basis] = True
        at_upper[is_basic] = False
        movable = upper > lower
        fact = _Basis(M, basis)
        xB = fact.ftran(self.b - M @ self._nonbasic_values(basis, at_upper, lower, upper))
        it = it0
        degenerate = 0
        bland = False
        since_refactor = 0
        status = Status.OPTIMAL
        verified = False
        devex = self.pricing == "devex"
        weights = np.ones(N)
        while True:
            y = fact.btran(c[basis])
            d = c - MT @ y
            d[is_basic] = 0.0
            enter_up = ~is_basic & ~at_upper & movable & (d < -self.dual_tol)
            enter_down = ~is_basic & at_upper & (d > self.dual_tol)
            eligible = enter_up | enter_down
            if not eligible.any():
                if fact.etas and not verified:
                    # confirm optimality on a fresh factorization
                    fact = _Basis(M, basis)
                    xB = fact.ftran(self.b - M @ self._nonbasic_values(basis, at_upper, lower, upper))
                    since_refactor = 0
                    verified = True
                    continue
                status = Status.OPTIMAL
                break
            verified = False
            if it >= self.max_iter:
                status = Status.ITERATION_LIMIT
                break
            if bland:
                q = int(np.flatnonzero(eligible)[0])
            elif devex:
                q = int(np.argmax(np.where(eligible, d * d / weights, -1.0)))
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            sigma = 1.0 if enter_up[q] else -1.0
            w = fact.ftran(self._column(M, q))
            delta = sigma * w  # x_B(theta) = x_B - theta * delta
            lB, uB = lower[basis], upper[basis]
            dec = delta > self.pivot_tol
            inc = (delta < -self.pivot_tol) & np.isfinite(uB)
            ratio = np.full(R, np.inf)
            ratio[dec] = np.maximum(xB[dec] - lB[dec], 0.0) / delta[dec]
            ratio[inc] = np.maximum(uB[inc] - xB[inc], 0.0) / -delta[inc]
            flip = upper[q] - lower[q]
            # Harris: bound the step with relaxed bounds, then pick among rows blocking under it
            relaxed = np.full(R, np.inf)
            relaxed[dec] = (np.maximum(xB[dec] - lB[dec], 0.0) + self.primal_tol) / delta[dec]
            relaxed[inc] = (np.maximum(uB[inc] - xB[inc], 0.0) + self.primal_tol) / -delta[inc]
            bound = float(relaxed.min()) if R else np.inf
            ties = np.flatnonzero(ratio <= bound) if np.isfinite(bound) else np.empty(0, dtype=np.int64)
            if ties.size == 0:
                r, theta = -1, np.inf
            elif bland:
                # smallest basic index, skipping pivots far smaller than the best available
                size = np.abs(delta[ties])
                ties = ties[size >= 1e-3 * size.max()]
                r = int(ties[np.argmin(basis[ties])])
                theta = float(ratio[r])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
                theta = float(ratio[r])
            if not np.isfinite(theta) and not np.isfinite(flip):
                status = Status.UNBOUNDED
                break
            it += 1
            if flip <= theta:
                theta = flip
                xB -= theta * delta
                at_upper[q] = not at_upper[q]
                if theta <= 1e-12:
                    degenerate += 1
            else:
                leaving = basis[r]
                if devex and not bland:
                    # reference-framework weight update from the pivot row
                    e = np.zeros(R)
                    e[r] = 1.0
                    row = MT @ fact.btran(e)
                    ratio_sq = (row / w[r]) ** 2
                    nb = ~is_basic
                    weights[nb] = np.maximum(weights[nb], ratio_sq[nb] * weights[q])
                    weights[leaving] = max(weights[q] / w[r] ** 2, 1.0)
                xB -= theta * delta
                entering_value = lower[q] + theta if sigma > 0 else upper[q] - theta
                at_upper[leaving] = delta[r] < 0
                is_basic[leaving] = False
                basis[r] = q
                is_basic[q] = True
                at_upper[q] = False
                xB[r] = entering_value
                fact.replace(r, w)
                since_refactor += 1
                if theta <= 1e-12:
                    degenerate += 1
                if since_refactor >= self.refactor_every:
                    fact = _Basis(M, basis)
                    xB = fact.ftran(self.b - M @ self._nonbasic_values(basis, at_upper, lower, upper))
                    since_refactor = 0
            if not bland and degenerate > self.bland_after:
                log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                bland = True
        z = self._nonbasic_values(basis, at_upper, lower, upper)
        z[basis] = xB
        return SimplexResult(
            status=status, z=z, y=y, d=d, basis=basis, at_upper=at_upper,
            iterations=it, objective=float(c @ z), bland=bland,
        )
