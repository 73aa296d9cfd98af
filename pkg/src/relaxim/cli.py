"""Command-line harness: ``relaxim gen | solve | certify | oracle | bench``.

Exit codes: 0 success, 2 invalid flags or input, 3 solver did not reach an
optimum, 4 rounding ambiguity.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from relaxim import bench
from relaxim.bundle import BundleError, dump_solution, load_solution, read_bundle, write_bundle
from relaxim.cascade import (
    AmbiguousRoundingError, CascadeProblem, CascadeSolution, certify_by_cut, round_threshold, round_topk,
    solve_cascade,
)
from relaxim.generators import (
    ForestFireSpec, InvalidSpecError, RandomPlantedSpec, gen_deterministic_noisy, gen_forest_fire,
    gen_noiseless, gen_random_planted,
)
from relaxim.lp import LpSolution, RECOVERY_TOL, build_lp, is_integral, kkt_check, recovery_error, solve_lp
from relaxim.oracles import (
    OracleCapError, brute_force_cascade, brute_force_deterministic, greedy_cascade, greedy_deterministic,
    monte_carlo_spread,
)
from relaxim.simplex import Status

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_AMBIGUOUS = 0, 2, 3, 4
TABLE2_MAX_K = 60

log = logging.getLogger("relaxim")


class UsageError(Exception):
    pass


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _per_group(values: list, k: int, name: str) -> list:
    if len(values) == 1:
        return values * k
    if len(values) != k:
        raise UsageError(f"--{name} needs 1 or {k} values, got {len(values)}")
    return values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaxim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance bundle")
    gsub = gen.add_subparsers(dest="kind", required=True)
    for name in ("noiseless", "noisy", "random-planted"):
        g = gsub.add_parser(name)
        g.add_argument("--k", type=int, required=True)
        g.add_argument("--n", type=_ints, required=True, help="receiver group sizes (one value or k values)")
        g.add_argument("--r", type=_ints, required=True, help="subordinate counts (one value or k values)")
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--out", required=True)
        if name in ("noisy", "random-planted"):
            g.add_argument("--g0", type=int, default=0, help="size of the noise receiver block")
        if name == "noisy":
            g.add_argument("--theta", type=_floats, required=True)
            g.add_argument("--beta", type=_floats, required=True)
            g.add_argument("--z-cap", type=int, default=0)
            g.add_argument("--cross-density", type=float, default=0.5)
        if name == "random-planted":
            g.add_argument("--q", type=float, required=True)
            g.add_argument("--s", type=float, required=True)
    ff = gsub.add_parser("forest-fire")
    ff.add_argument("--k", type=int, required=True)
    ff.add_argument("--ui", type=int)
    ff.add_argument("--uf", type=int)
    ff.add_argument("--p1", type=float, required=True)
    ff.add_argument("--p2", type=float, default=0.9)
    ff.add_argument("--sigma", type=float, default=0.0, help="noise arcs, percent of the complement")
    ff.add_argument("--seed", type=int, default=0)
    ff.add_argument("--out", required=True)

    sv = sub.add_parser("solve", help="solve a bundle with the LP or cascade relaxation")
    sv.add_argument("bundle")
    sv.add_argument("--model", choices=["lp", "cascade"], default="lp")
    sv.add_argument("--p", type=float, default=0.9, help="arc probability for the cascade model")
    sv.add_argument("--xi", type=float, default=0.0, help="threshold-rounding parameter")
    sv.add_argument("--start", choices=["greedy", "degree", "artificial"], default="greedy")
    sv.add_argument("--out", help="write the solution dump here")

    ce = sub.add_parser("certify", help="check a solution dump against its bundle")
    ce.add_argument("bundle")
    ce.add_argument("solution")
    ce.add_argument("--model", choices=["lp", "cascade"])
    ce.add_argument("--p", type=float, help="arc probability (default: taken from the dump)")

    orc = sub.add_parser("oracle", help="brute force, greedy or Monte-Carlo reference")
    orc.add_argument("bundle")
    orc.add_argument("--model", choices=["lp", "cascade"], default="lp")
    orc.add_argument("--method", choices=["brute", "greedy", "mc"], default="brute")
    orc.add_argument("--k", type=int, help="budget (default: the bundle's k)")
    orc.add_argument("--p", type=float, default=0.9)
    orc.add_argument("--cap", type=int, default=10**7)
    orc.add_argument("--set", type=_ints, help="sender set for --method mc (default: the influencers)")
    orc.add_argument("--trials", type=int, default=100_000)
    orc.add_argument("--seed", type=int, default=0)

    be = sub.add_parser("bench", help="forest-fire recovery campaign, one CSV row per trial")
    be.add_argument("table", choices=["table1", "table2"])
    be.add_argument("--k", type=_ints, default=None, help="budgets (default: 20,40 for table1, 20 for table2)")
    be.add_argument("--p1", type=_floats, default=[0.3, 0.7])
    be.add_argument("--p2", type=float, default=0.9)
    be.add_argument("--sigma", type=_floats)
    be.add_argument("--p", type=float, default=0.9, help="arc probability for table2")
    be.add_argument("--trials", type=int, default=10)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--out", help="CSV path (default: stdout)")
    be.add_argument("--summary", help="aggregated table path (default: stderr)")
    be.add_argument("--timing", action="store_true", help="fill wall_ms (makes output run-dependent)")
    be.add_argument("--workers", type=int, help=f"parallel trials (default: ${bench.WORKERS_ENV} or 1)")
    be.add_argument("--force", action="store_true", help=f"allow table2 with k > {TABLE2_MAX_K}")
    return ap


def cmd_gen(a) -> int:
    if a.kind == "forest-fire":
        ui = a.ui if a.ui is not None else 10 * a.k
        uf = a.uf if a.uf is not None else 10 * ui
        inst = gen_forest_fire(ForestFireSpec(a.k, ui, uf, a.p1, a.p2, a.sigma, a.seed))
    else:
        n, r = _per_group(a.n, a.k, "n"), _per_group(a.r, a.k, "r")
        if a.kind == "noiseless":
            inst = gen_noiseless(a.k, n, r, a.seed)
        elif a.kind == "noisy":
            inst = gen_deterministic_noisy(
                a.k, n, r, a.g0, _per_group(a.theta, a.k, "theta"), _per_group(a.beta, a.k, "beta"),
                a.z_cap, a.seed, cross_density=a.cross_density,
            )
        else:
            inst = gen_random_planted(RandomPlantedSpec(a.k, tuple(n), tuple(r), a.g0, a.q, a.s, a.seed))
    write_bundle(inst, a.out)
    g = inst.graph
    extra = "".join(f" {key}={inst.params[key]}" for key in ("E_orig", "E_noise") if key in inst.params)
    print(f"{inst.kind}: senders={g.num_senders} receivers={g.num_receivers} arcs={g.num_arcs}{extra} -> {a.out}")
    return EXIT_OK


def _record_csv(model, inst, err, recovered) -> str:
    p = inst.params
    rec = bench.ExperimentRecord(
        model, inst.k, float(p.get("p1", float("nan"))), float(p.get("p2", float("nan"))),
        float(p.get("sigma_pct", 0.0)), int(inst.seed or 0), int(p.get("E_orig", inst.graph.num_arcs)),
        int(p.get("E_noise", 0)), err, recovered,
    )
    return bench.to_csv([rec])


def cmd_solve(a) -> int:
    inst = read_bundle(a.bundle)
    if a.model == "lp":
        sol = solve_lp(build_lp(inst.graph, inst.k), start=a.start)
        dump = sol.to_dict()
        err = recovery_error(sol.x, inst.influencers)
        code = EXIT_OK if sol.status is Status.OPTIMAL else EXIT_SOLVER
    else:
        prob = CascadeProblem(inst.graph, inst.k, p=a.p)
        csol = solve_cascade(prob)
        dump = csol.to_dict()
        dump.update(p=a.p, xi_round=a.xi, rounded=round_threshold(csol.x, a.xi, inst.k).tolist())
        code = EXIT_OK if csol.converged else EXIT_SOLVER
        try:
            top = round_topk(csol.x, inst.k)
        except AmbiguousRoundingError as exc:
            if a.out:
                dump_solution(dump, a.out)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_AMBIGUOUS
        dump["rounded_topk"] = top.tolist()
        err = recovery_error(top, inst.influencers)
    dump["err"] = err
    if a.out:
        dump_solution(dump, a.out)
    sys.stdout.write(_record_csv(a.model, inst, err, err < RECOVERY_TOL))
    if code == EXIT_SOLVER:
        print(f"error: solver stopped without an optimum ({dump['status']})", file=sys.stderr)
    return code


def cmd_certify(a) -> int:
    inst = read_bundle(a.bundle)
    data = load_solution(a.solution)
    model = data.get("model")
    if model not in ("lp", "cascade"):
        raise UsageError(f"solution dump has no recognised model (got {model!r})")
    if a.model and a.model != model:
        raise UsageError(f"model mismatch: --model {a.model} but the dump holds a {model} solution")
    if model == "lp":
        p = build_lp(inst.graph, inst.k)
        sol = LpSolution.from_dict(data)
        rep = kkt_check(p, sol)
        if not rep.passed:
            print(f"KKT check failed (max violation {rep.max_violation:.3e})")
            return EXIT_SOLVER
        if is_integral(sol.x):
            print(f"integer-optimal by LP: objective {sol.objective:g}, KKT violation {rep.max_violation:.1e}")
        else:
            print(f"LP-optimal but fractional: no integer certificate (KKT violation {rep.max_violation:.1e})")
        return EXIT_OK
    prob_p = a.p if a.p is not None else data.get("p")
    if prob_p is None:
        raise UsageError("cascade certification needs --p (the dump does not record it)")
    prob = CascadeProblem(inst.graph, inst.k, p=float(prob_p))
    x = CascadeSolution.from_dict(data).x
    try:
        cert = certify_by_cut(prob, x)
    except AmbiguousRoundingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    chosen = np.flatnonzero(cert.rounded).tolist()
    detail = f"g(rounded)={cert.g_rounded:.10g} cut lower bound={cert.lower_bound:.10g} cut value={cert.g_cut:.10g}"
    print(f"{cert.verdict}: set={chosen} {detail}" + (f" ({cert.reason})" if cert.reason else ""))
    return EXIT_OK


def cmd_oracle(a) -> int:
    inst = read_bundle(a.bundle)
    k = a.k if a.k is not None else inst.k
    if a.model == "lp":
        if a.method == "brute":
            out = brute_force_deterministic(inst.graph, k, cap=a.cap).to_dict()
        elif a.method == "greedy":
            r = greedy_deterministic(inst.graph, k)
            out = {"selected": list(r.selected), "value": r.value}
        else:
            raise UsageError("Monte-Carlo simulation applies to the cascade model only")
    else:
        prob = CascadeProblem(inst.graph, k, p=a.p)
        if a.method == "brute":
            out = brute_force_cascade(prob, k, cap=a.cap).to_dict()
        elif a.method == "greedy":
            r = greedy_cascade(prob, k)
            out = {"selected": list(r.selected), "value": r.value}
        else:
            s = a.set if a.set is not None else inst.influencers.tolist()
            est = monte_carlo_spread(prob, s, a.trials, a.seed)
            out = {"set": s, "mean": est.mean, "stderr": est.stderr, "trials": est.trials}
    out.update(model=a.model, method=a.method)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_bench(a) -> int:
    model = "lp" if a.table == "table1" else "cascade"
    sigmas = a.sigma if a.sigma is not None else ([0.5, 1.0] if a.table == "table1" else [0.0, 0.01])
    if a.k is None:
        a.k = [20, 40] if a.table == "table1" else [20]
    if a.trials < 1:
        raise UsageError("--trials must be at least 1")
    if model == "cascade" and max(a.k) > TABLE2_MAX_K and not a.force:
        raise UsageError(f"table2 with k > {TABLE2_MAX_K} is expensive; pass --force to run it anyway")
    trials = bench.plan(model, a.k, a.p1, sigmas, a.trials, a.seed, p2=a.p2, p=a.p, timing=a.timing)
    records = bench.run_campaign(trials, a.workers)
    text = bench.to_csv(records)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    summary = bench.format_summary(bench.summarize(records))
    if a.summary:
        Path(a.summary).write_text(summary, encoding="utf-8")
    else:
        sys.stderr.write(summary)
    failed = [r for r in records if r.note]
    for r in failed:
        log.warning("trial k=%d p1=%g sigma=%g seed=%d: %s", r.k, r.p1, r.sigma, r.seed, r.note)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "certify": cmd_certify, "oracle": cmd_oracle, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (UsageError, InvalidSpecError, BundleError, OracleCapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
