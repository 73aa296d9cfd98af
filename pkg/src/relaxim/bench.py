"""Forest-fire recovery campaigns (LP and cascade relaxations)."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from relaxim.cascade import AmbiguousRoundingError, CascadeProblem, round_topk, solve_cascade
from relaxim.generators import ForestFireSpec, gen_forest_fire
from relaxim.lp import RECOVERY_TOL, build_lp, recovery_error, solve_lp
from relaxim.rng import derive_seed
from relaxim.simplex import Status

CSV_COLUMNS = ["model", "k", "p1", "p2", "sigma", "seed", "E_orig", "E_noise", "err", "recovered", "wall_ms"]
WORKERS_ENV = "RELAXIM_WORKERS"
MODEL_IDS = {"lp": 1, "cascade": 2}


@dataclass(frozen=True)
class ExperimentRecord:
    model: str
    k: int
    p1: float
    p2: float
    sigma: float
    seed: int
    E_orig: int
    E_noise: int
    err: float
    recovered: bool
    wall_ms: float | None = None
    note: str = ""

    def row(self) -> list[str]:
        return [
            self.model, str(self.k), f"{self.p1:g}", f"{self.p2:g}", f"{self.sigma:g}", str(self.seed),
            str(self.E_orig), str(self.E_noise), f"{self.err:.6e}", "1" if self.recovered else "0",
            "" if self.wall_ms is None else f"{self.wall_ms:.1f}",
        ]


@dataclass(frozen=True)
class Trial:
    model: str
    k: int
    p1: float
    p2: float
    sigma: float
    seed: int
    p: float = 0.9
    timing: bool = False


def trial_seed(master: int, model: str, k: int, p1: float, p2: float, sigma: float, index: int) -> int:
    """Seed keyed by the row's parameters and the trial index, never by row position."""
    key = (MODEL_IDS[model], k, round(p1 * 1e6), round(p2 * 1e6), round(sigma * 1e6), index)
    return derive_seed(master, *key)


def run_trial(t: Trial) -> ExperimentRecord:
    inst = gen_forest_fire(ForestFireSpec(t.k, 10 * t.k, 100 * t.k, t.p1, t.p2, t.sigma, t.seed))
    start = time.perf_counter()
    note = ""
    if t.model == "lp":
        sol = solve_lp(build_lp(inst.graph, t.k))
        x = sol.x
        if sol.status is not Status.OPTIMAL:
            note = sol.status.value
    elif t.model == "cascade":
        sol = solve_cascade(CascadeProblem(inst.graph, t.k, p=t.p))
        if not sol.converged:
            note = "not converged"
        try:
            x = round_topk(sol.x, t.k)
        except AmbiguousRoundingError as exc:
            x, note = None, str(exc)
    else:
        raise ValueError(f"unknown model {t.model!r}")
    wall = (time.perf_counter() - start) * 1e3
    err = recovery_error(x, inst.influencers) if x is not None else math.nan
    return ExperimentRecord(
        t.model, t.k, t.p1, t.p2, t.sigma, t.seed, int(inst.params["E_orig"]), int(inst.params["E_noise"]),
        err, bool(err < RECOVERY_TOL), wall if t.timing else None, note,
    )


def plan(
    model: str, ks: Sequence[int], p1s: Sequence[float], sigmas: Sequence[float], trials: int,
    master_seed: int, p2: float = 0.9, p: float = 0.9, timing: bool = False,
) -> list[Trial]:
    """Trials ordered by (k, p1, sigma, trial index)."""
    out = []
    for k in sorted(ks):
        for p1 in sorted(p1s):
            for sigma in sorted(sigmas):
                for idx in range(trials):
                    seed = trial_seed(master_seed, model, k, p1, p2, sigma, idx)
                    out.append(Trial(model, k, p1, p2, sigma, seed, p, timing))
    return out


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def run_campaign(trials: Iterable[Trial], workers: int | None = None) -> list[ExperimentRecord]:
    trials = list(trials)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(trials) <= 1:
        return [run_trial(t) for t in trials]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps submission order, so output never depends on completion order
        return list(pool.map(run_trial, trials))


def to_csv(records: Iterable[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


@dataclass(frozen=True)
class CellSummary:
    model: str
    k: int
    p1: float
    sigma: float
    E_orig: float
    E_noise: float
    err: float
    n_rec: int
    trials: int


def summarize(records: Sequence[ExperimentRecord]) -> list[CellSummary]:
    cells: dict[tuple, list[ExperimentRecord]] = {}
    for r in records:
        cells.setdefault((r.model, r.k, r.p1, r.sigma), []).append(r)
    out = []
    for (model, k, p1, sigma), rs in cells.items():
        out.append(CellSummary(
            model, k, p1, sigma,
            float(np.mean([r.E_orig for r in rs])), float(np.mean([r.E_noise for r in rs])),
            float(np.mean([r.err for r in rs])), sum(r.recovered for r in rs), len(rs),
        ))
    return out


def format_summary(cells: Sequence[CellSummary]) -> str:
    lines = [f"{'model':8s} {'k':>4s} {'p1':>5s} {'sigma':>6s} {'E_orig':>9s} {'E_noise':>9s} {'err':>9s} {'N_rec':>7s}"]
    for c in cells:
        lines.append(
            f"{c.model:8s} {c.k:4d} {c.p1:5g} {c.sigma:6g} {c.E_orig:9.1f} {c.E_noise:9.1f} {c.err:9.1e} {c.n_rec:>3d}/{c.trials:<3d}"
        )
    return "\n".join(lines) + "\n"
