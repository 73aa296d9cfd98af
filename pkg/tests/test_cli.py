import csv
import io
import json

import numpy as np
import pytest

from relaxim import bench
from relaxim.bundle import BundleError, dump_solution, read_bundle, read_meta, write_bundle
from relaxim.cli import main
from relaxim.generators import ForestFireSpec, PlantedInstance, gen_forest_fire, gen_noiseless
from relaxim.graph import BipartiteGraph
from relaxim.lp import RECOVERY_TOL, LpSolution, recovery_error


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _two_group_bundle(path):
    arcs = [(0, j) for j in range(100)] + [(1, j) for j in range(99)]
    arcs += [(2, 100 + j) for j in range(20)] + [(3, 100 + j) for j in range(10)]
    inst = PlantedInstance(
        BipartiteGraph(4, 120, arcs), 2, (np.array([0, 1]), np.array([2, 3])),
        (np.array([], dtype=int), np.arange(100), np.arange(100, 120)), kind="hand",
    )
    write_bundle(inst, path)
    return path


# bundles


def test_bundle_round_trip(tmp_path):
    inst = gen_noiseless(2, [3, 4], [1, 1], seed=7)
    write_bundle(inst, tmp_path / "b")
    back = read_bundle(tmp_path / "b")
    assert back.graph == inst.graph and back.k == 2 and back.seed == 7
    assert np.array_equal(back.influencers, inst.influencers)
    assert read_meta(tmp_path / "b" / "meta.txt")["kind"] == "noiseless"


def test_bundle_errors(tmp_path):
    with pytest.raises(BundleError):
        read_bundle(tmp_path)
    (tmp_path / "graph.txt").write_text("senders 1\nreceivers 1\n")
    (tmp_path / "meta.txt").write_text("k=1\nsender_groups=[[0]]\n")
    with pytest.raises(BundleError, match="receiver_groups"):
        read_bundle(tmp_path)
    (tmp_path / "meta.txt").write_text("k 1\n")
    with pytest.raises(BundleError, match="key=value"):
        read_bundle(tmp_path)


# gen


def test_gen_noiseless(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "noiseless", "--k", 2, "--n", "3,4", "--r", "1,1", "--seed", 7, "--out", tmp_path / "b")
    assert code == 0 and "receivers=7" in out
    assert read_bundle(tmp_path / "b").graph == gen_noiseless(2, [3, 4], [1, 1], 7).graph


def test_gen_forest_fire_matches_library(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "forest-fire", "--k", 5, "--ui", 50, "--uf", 500, "--p1", 0.3,
                       "--sigma", 0.5, "--seed", 1, "--out", tmp_path / "ff")
    assert code == 0
    ref = gen_forest_fire(ForestFireSpec(5, 50, 500, 0.3, 0.9, 0.5, 1))
    assert read_bundle(tmp_path / "ff").graph == ref.graph
    assert f"E_orig={ref.params['E_orig']}" in out


def test_gen_noisy_and_random(tmp_path, capsys):
    assert run(capsys, "gen", "noisy", "--k", 2, "--n", 40, "--r", 3, "--g0", 10, "--theta", 0.5, "--beta", 0.2,
               "--z-cap", 4, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "gen", "random-planted", "--k", 2, "--n", 30, "--r", 4, "--g0", 5, "--q", 0.5, "--s", 0.2,
               "--out", tmp_path / "b")[0] == 0


def test_gen_invalid_probability(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "random-planted", "--k", 2, "--n", 10, "--r", "1,8", "--q", 0.5, "--s", 2.0,
                       "--out", tmp_path / "x")
    assert code == 2 and "exceeds 1" in err


def test_gen_bad_list_length(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "noiseless", "--k", 3, "--n", "5,5", "--r", 1, "--out", tmp_path / "x")
    assert code == 2 and "--n" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["gen", "noiseless", "--k", "2", "--n", "a,b", "--r", "1", "--out", "x"])
    assert exc.value.code == 2


# solve and certify


def test_solve_and_certify_lp(tmp_path, capsys):
    run(capsys, "gen", "noiseless", "--k", 3, "--n", "6,8,5", "--r", 2, "--seed", 2, "--out", tmp_path / "b")
    code, out, _ = run(capsys, "solve", tmp_path / "b", "--out", tmp_path / "s.json")
    assert code == 0
    (row,) = rows(out)
    assert row["model"] == "lp" and row["recovered"] == "1" and float(row["err"]) == 0.0
    assert row["wall_ms"] == ""
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "s.json")
    assert code == 0 and out.startswith("integer-optimal by LP")


def test_certify_lp_fractional(tmp_path, capsys):
    # one receiver per sender pair: half of every sender covers all six, any two senders cover five
    pairs = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    arcs = [(s, j) for j, pr in enumerate(pairs) for s in pr]
    inst = PlantedInstance(
        BipartiteGraph(4, 6, arcs), 2, (np.array([0, 1]), np.array([2, 3])),
        (np.arange(6), np.array([], dtype=int), np.array([], dtype=int)),
    )
    write_bundle(inst, tmp_path / "b")
    assert run(capsys, "solve", tmp_path / "b", "--out", tmp_path / "s.json")[0] == 0
    assert json.loads((tmp_path / "s.json").read_text())["objective"] == pytest.approx(6.0)
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "s.json")
    assert code == 0 and out.startswith("LP-optimal but fractional")


def test_certify_rejects_bad_lp_solution(tmp_path, capsys):
    run(capsys, "gen", "noiseless", "--k", 2, "--n", 5, "--r", 1, "--out", tmp_path / "b")
    run(capsys, "solve", tmp_path / "b", "--out", tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    data["nu"][0] += 1.0
    dump_solution(data, tmp_path / "bad.json")
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "bad.json")
    assert code == 3 and "KKT check failed" in out


def test_solve_cascade_and_certify_counterexample(tmp_path, capsys):
    _two_group_bundle(tmp_path / "b")
    code, out, _ = run(capsys, "solve", tmp_path / "b", "--model", "cascade", "--p", 0.5, "--out", tmp_path / "c.json")
    assert code == 0
    dump = json.loads((tmp_path / "c.json").read_text())
    assert dump["model"] == "cascade" and dump["p"] == 0.5 and len(dump["rounded_topk"]) == 4
    # the relaxation rounds to the true optimum {influencer 1, subordinate 1}, which the cut certifies
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "c.json")
    assert code == 0 and out.startswith("CertifiedOptimal: set=[0, 1]")
    # a point leaning towards the two influencers rounds to a worse set that the cut cannot certify
    dump["x"] = [0.9, 0.1, 0.8, 0.2]
    dump_solution(dump, tmp_path / "biased.json")
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "biased.json")
    assert code == 0 and out.startswith("NotCertified: set=[0, 2]")


def test_certify_cascade_recoverable_instance(tmp_path, capsys):
    run(capsys, "gen", "noiseless", "--k", 2, "--n", "12,14", "--r", 1, "--seed", 3, "--out", tmp_path / "b")
    assert run(capsys, "solve", tmp_path / "b", "--model", "cascade", "--out", tmp_path / "c.json")[0] == 0
    code, out, _ = run(capsys, "certify", tmp_path / "b", tmp_path / "c.json")
    assert code == 0 and out.startswith("CertifiedOptimal")


def test_certify_model_mismatch(tmp_path, capsys):
    _two_group_bundle(tmp_path / "b")
    run(capsys, "solve", tmp_path / "b", "--model", "cascade", "--p", 0.5, "--out", tmp_path / "c.json")
    code, _, err = run(capsys, "certify", tmp_path / "b", tmp_path / "c.json", "--model", "lp")
    assert code == 2 and "mismatch" in err


def test_solve_rounding_tie_exits_4(tmp_path, capsys):
    # two identical groups: the relaxation splits mass evenly, so top-k is tied
    arcs = [(0, 0), (1, 1)]
    inst = PlantedInstance(
        BipartiteGraph(2, 2, arcs), 1, (np.array([0, 1]),), (np.array([], dtype=int), np.array([0, 1])),
    )
    write_bundle(inst, tmp_path / "b")
    code, _, err = run(capsys, "solve", tmp_path / "b", "--model", "cascade", "--out", tmp_path / "c.json")
    assert code == 4 and "ambiguous" in err
    code, _, err = run(capsys, "certify", tmp_path / "b", tmp_path / "c.json")
    assert code == 4


def test_solve_unreadable_bundle(tmp_path, capsys):
    code, _, err = run(capsys, "solve", tmp_path / "missing")
    assert code == 2 and "not an instance bundle" in err


# oracle


def test_oracle_commands(tmp_path, capsys):
    _two_group_bundle(tmp_path / "b")
    code, out, _ = run(capsys, "oracle", tmp_path / "b", "--model", "cascade", "--p", 0.5)
    assert code == 0 and json.loads(out)["best_set"] == [0, 1]
    code, out, _ = run(capsys, "oracle", tmp_path / "b", "--method", "greedy")
    assert json.loads(out)["value"] == 120
    code, out, _ = run(capsys, "oracle", tmp_path / "b", "--model", "cascade", "--method", "mc", "--p", 0.5,
                       "--set", "0,1", "--trials", 20000)
    est = json.loads(out)
    assert abs(est["mean"] - 74.75) <= 3 * est["stderr"] + 1e-9
    code, _, err = run(capsys, "oracle", tmp_path / "b", "--method", "mc")
    assert code == 2
    code, _, err = run(capsys, "oracle", tmp_path / "b", "--cap", 2)
    assert code == 2 and "cap" in err


# bench


def test_bench_table2_guard(capsys):
    code, _, err = run(capsys, "bench", "table2", "--k", 61, "--trials", 1)
    assert code == 2 and "--force" in err


def test_bench_is_byte_identical(tmp_path, capsys):
    args = ["bench", "table1", "--k", 5, "--p1", 0.3, "--sigma", 0.5, "--trials", 1, "--seed", 4]
    code, first, summary = run(capsys, *args)
    assert code == 0
    assert run(capsys, *args)[1] == first
    assert first.splitlines()[0] == ",".join(bench.CSV_COLUMNS)
    assert "N_rec" in summary and "1/1" in summary


def test_bench_rows_ordered_and_stable(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "table1", "--k", "6,5", "--p1", "0.7,0.3", "--sigma", 0.5, "--trials", 2,
                       "--out", tmp_path / "t.csv", "--summary", tmp_path / "s.txt")
    assert code == 0 and out == ""
    got = rows((tmp_path / "t.csv").read_text())
    keys = [(int(r["k"]), float(r["p1"])) for r in got]
    assert keys == sorted(keys)
    # adding a row never changes the seeds of existing trials
    small = bench.plan("lp", [5], [0.3], [0.5], 2, 0)
    assert [t.seed for t in small] == [int(r["seed"]) for r in got if r["k"] == "5" and r["p1"] == "0.3"]


def test_bench_recovered_matches_dumped_solution(tmp_path, capsys):
    (t,) = bench.plan("lp", [5], [0.7], [1.0], 1, 3)
    rec = bench.run_trial(t)
    run(capsys, "gen", "forest-fire", "--k", 5, "--p1", 0.7, "--sigma", 1.0, "--seed", t.seed, "--out", tmp_path / "b")
    run(capsys, "solve", tmp_path / "b", "--out", tmp_path / "s.json")
    sol = LpSolution.from_dict(json.loads((tmp_path / "s.json").read_text()))
    err = recovery_error(sol.x, read_bundle(tmp_path / "b").influencers)
    assert rec.recovered == (err < RECOVERY_TOL)
    assert rec.err == pytest.approx(err, abs=1e-12)


def test_bench_parallel_matches_serial():
    trials = bench.plan("cascade", [5], [0.3], [0.0, 0.01], 2, 1)
    assert bench.run_campaign(trials, workers=2) == bench.run_campaign(trials, workers=1)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(bench.WORKERS_ENV, "3")
    assert bench.worker_count() == 3
    monkeypatch.setenv(bench.WORKERS_ENV, "many")
    assert bench.worker_count() == 1


def test_record_invariants():
    for t in bench.plan("lp", [5], [0.3], [0.0], 2, 0):
        rec = bench.run_trial(t)
        assert rec.E_noise == 0
        assert rec.recovered == (rec.err < RECOVERY_TOL)


def test_timing_fills_wall_ms():
    (t,) = bench.plan("lp", [5], [0.3], [0.5], 1, 0, timing=True)
    assert bench.run_trial(t).row()[-1] != ""
