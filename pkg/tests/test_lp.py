import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from builders import random_graph
from relaxim.conditions import check_noisy_conditions
from relaxim.generators import ForestFireSpec, gen_deterministic_noisy, gen_forest_fire, gen_noiseless
from relaxim.graph import BipartiteGraph
from relaxim.lp import (
    CertificateError, LpSolution, build_lp, crash_senders, is_integral, kkt_check, noiseless_certificate,
    noisy_certificate, recovery_error, solve_lp,
)
from relaxim.rng import make_rng
from relaxim.simplex import BoundedSimplex, Status


def _highs_value(g, k):
    """Optimum of the relaxation from an unrelated solver (HiGHS through scipy)."""
    m, n = g.num_senders, g.num_receivers
    A = g.incidence.toarray()
    c = np.concatenate([np.zeros(m), -np.ones(n)])
    A_ub = np.hstack([-A.T, np.eye(n)])
    A_eq = np.concatenate([np.ones(m), np.zeros(n)])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[k], bounds=[(0, 1)] * (m + n), method="highs")
    assert res.status == 0
    return -res.fun


# build


def test_build_single_arc():
    p = build_lp(BipartiteGraph(1, 1, [(0, 0)]), 1)
    assert p.M.shape == (2, 3)  # x, t and the coupling slack
    sol = solve_lp(p)
    assert sol.status is Status.OPTIMAL
    assert sol.x.tolist() == [1.0] and sol.t.tolist() == [1.0] and sol.objective == 1.0


def test_build_rejects_bad_k():
    g = BipartiteGraph(2, 2, [(0, 0)])
    for k in (0, 3):
        with pytest.raises(ValueError):
            build_lp(g, k)


def test_k_equals_m_selects_everyone():
    g = BipartiteGraph(3, 5, [(0, 0), (1, 0), (2, 3)])
    sol = solve_lp(build_lp(g, 3))
    assert np.allclose(sol.x, 1.0)
    assert sol.objective == pytest.approx(2.0)


# solve


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_recovery(seed):
    inst = gen_noiseless(4, [5, 9, 13, 7], [3, 2, 4, 1], seed)
    p = build_lp(inst.graph, inst.k)
    sol = solve_lp(p)
    assert sol.status is Status.OPTIMAL
    assert np.max(np.abs(sol.x - inst.x_star)) <= 1e-8
    assert sol.objective == pytest.approx(sum([5, 9, 13, 7]))
    assert np.allclose(sol.t, 1.0)
    assert kkt_check(p, sol).passed


def test_noisy_recovery_zeroes_noise_block():
    inst = gen_deterministic_noisy(2, [40, 40], [3, 3], 10, [0.5, 0.5], [0.2, 0.2], 4, seed=2)
    sol = solve_lp(build_lp(inst.graph, 2))
    assert recovery_error(sol.x, inst.influencers) < 1e-8
    assert np.allclose(sol.t[np.concatenate(inst.receiver_groups[1:])], 1.0)
    assert np.allclose(sol.t[inst.receiver_groups[0]], 0.0)


def test_forest_fire_recovery():
    inst = gen_forest_fire(ForestFireSpec(20, 200, 2000, 0.3, 0.9, 0.5, seed=1))
    p = build_lp(inst.graph, 20)
    sol = solve_lp(p)
    assert sol.status is Status.OPTIMAL
    assert recovery_error(sol.x, inst.influencers) < 1e-8
    assert kkt_check(p, sol).passed


@pytest.mark.parametrize("start", ["degree", "artificial"])
def test_other_starts_agree(start):
    """Different starting bases must reach the same optimum and pass the KKT check."""
    rng = make_rng(5)
    for _ in range(8):
        g = random_graph(rng, 9, 14, 0.25)
        p = build_lp(g, 3)
        a, b = solve_lp(p), solve_lp(p, start=start)
        assert b.status is Status.OPTIMAL
        assert a.objective == pytest.approx(b.objective, abs=1e-9)
        assert kkt_check(p, b).passed


def test_forest_fire_degree_start():
    inst = gen_forest_fire(ForestFireSpec(10, 100, 1000, 0.7, 0.9, 1.0, seed=3))
    p = build_lp(inst.graph, 10)
    sol = solve_lp(p, start="degree")
    assert sol.status is Status.OPTIMAL
    assert recovery_error(sol.x, inst.influencers) < 1e-8


def test_crash_rules():
    g = BipartiteGraph(4, 4, [(0, 0), (1, 0), (1, 1), (2, 2), (2, 3), (3, 3)])
    p = build_lp(g, 2)
    assert sorted(crash_senders(p, "degree").tolist()) == [1, 2]
    assert sorted(crash_senders(p, "greedy").tolist()) == [1, 2]
    with pytest.raises(ValueError):
        solve_lp(p, start="bogus")


def test_iteration_limit_reported():
    g = random_graph(make_rng(9), 12, 30, 0.2)
    sol = solve_lp(build_lp(g, 4), start="artificial", max_iter=1)
    assert sol.status is Status.ITERATION_LIMIT


def test_deterministic_iterates():
    g = random_graph(make_rng(3), 15, 40, 0.15)
    p = build_lp(g, 4)
    a, b = solve_lp(p, start="artificial"), solve_lp(p, start="artificial")
    assert a.iterations == b.iterations
    assert np.array_equal(a.x, b.x) and np.array_equal(a.lam, b.lam)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 10), st.integers(2, 20), st.floats(0.05, 0.6))
def test_matches_independent_solver(seed, m, n, density):
    g = random_graph(make_rng(seed), m, n, density)
    k = 1 + seed % m
    p = build_lp(g, k)
    sol = solve_lp(p)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(_highs_value(g, k), abs=1e-7)
    assert kkt_check(p, sol).passed
    # duals satisfy weak duality with equality
    dual = float(sol.mu.sum() + sol.nu.sum() + k * sol.xi_dual)
    assert dual == pytest.approx(sol.objective, abs=1e-7)


def test_solution_dump_round_trip():
    g = BipartiteGraph(3, 3, [(0, 0), (1, 1), (2, 2), (0, 1)])
    sol = solve_lp(build_lp(g, 2))
    back = LpSolution.from_dict(sol.to_dict())
    assert np.array_equal(back.x, sol.x) and back.status is sol.status and back.xi_dual == sol.xi_dual


# certificates


def test_noiseless_certificate_single_group():
    inst = gen_noiseless(1, [4], [2], seed=1)
    cert = noiseless_certificate(inst)
    assert np.allclose(cert.lam, 0.25)
    assert cert.xi_dual == 0.75
    assert np.allclose(cert.nu[inst.influencers], 0.25)
    assert kkt_check(build_lp(inst.graph, 1), cert, tol=1e-9).passed


def test_noiseless_certificate_two_groups():
    inst = gen_noiseless(2, [2, 5], [1, 2], seed=4)
    cert = noiseless_certificate(inst)
    expected = np.zeros(inst.graph.num_senders)
    expected[inst.influencers] = 0.2
    assert np.allclose(cert.nu, expected)
    assert np.allclose(cert.lam[inst.receiver_groups[1]], 0.5)
    assert np.allclose(cert.lam[inst.receiver_groups[2]], 0.2)


@pytest.mark.parametrize("seed", range(10))
def test_noiseless_certificate_passes_kkt(seed):
    rng = make_rng(seed)
    k = int(rng.integers(1, 6))
    inst = gen_noiseless(k, rng.integers(1, 30, size=k).tolist(), rng.integers(0, 5, size=k).tolist(), seed)
    p = build_lp(inst.graph, k)
    rep = kkt_check(p, noiseless_certificate(inst), tol=1e-9)
    assert rep.passed, rep.residuals


def test_broken_certificate_fails():
    inst = gen_noiseless(2, [6, 6], [2, 2], seed=3)
    p = build_lp(inst.graph, 2)
    cert = noiseless_certificate(inst)
    cert.nu[inst.subordinates(1)[0]] += 1.0
    rep = kkt_check(p, cert, tol=1e-9)
    assert not rep.passed and rep.residuals["comp_x_upper"] >= 1.0


def test_noiseless_certificate_refuses_noisy_instance():
    inst = gen_deterministic_noisy(2, [40, 40], [3, 3], 10, [0.5, 0.5], [0.2, 0.2], 4, seed=2)
    with pytest.raises(CertificateError):
        noiseless_certificate(inst)


def test_noisy_certificate_on_noiseless_instance():
    inst = gen_noiseless(3, [6, 8, 10], [1, 1, 1], seed=11)
    cert = noisy_certificate(inst)
    n = inst.group_sizes()
    for l in range(1, 4):
        assert np.allclose(cert.lam[inst.receiver_groups[l]], n.min() / n[l - 1])
    scores = inst.graph.incidence @ cert.lam
    assert np.allclose(scores[inst.influencers], n.min())


def test_noisy_certificate_pass_instance():
    inst = gen_deterministic_noisy(2, [40, 40], [3, 3], 10, [0.5, 0.5], [0.2, 0.2], 4, seed=2)
    assert check_noisy_conditions(inst).passed
    p = build_lp(inst.graph, 2)
    rep = kkt_check(p, noisy_certificate(inst), tol=1e-9)
    assert rep.passed, rep.residuals


def test_noisy_certificate_may_fail_when_conditions_fail():
    inst = gen_deterministic_noisy(2, [40, 40], [3, 3], 10, [0.5, 0.5], [0.9, 0.9], 10, seed=2)
    assert not check_noisy_conditions(inst).passed
    try:
        cert = noisy_certificate(inst)
    except CertificateError:
        return
    assert cert.x.sum() == 2


def test_kkt_check_dimension_mismatch():
    p = build_lp(BipartiteGraph(2, 2, [(0, 0), (1, 1)]), 1)
    sol = solve_lp(p)
    sol.x = sol.x[:1]
    with pytest.raises(ValueError):
        kkt_check(p, sol)


def test_is_integral():
    assert is_integral(np.array([0.0, 1.0, 1e-12]))
    assert not is_integral(np.array([0.5, 0.5]))


# the simplex engine on plain LPs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_simplex_matches_highs_on_random_boxed_lps(seed):
    rng = make_rng(seed)
    R, N = int(rng.integers(1, 5)), int(rng.integers(5, 10))
    M = rng.integers(-3, 4, size=(R, N)).astype(float)
    x0 = rng.random(N)
    b = M @ x0  # feasible by construction
    c = rng.normal(size=N)
    lo, hi = np.zeros(N), np.ones(N)
    res = BoundedSimplex(sp.csc_matrix(M), b, c, lo, hi).solve()
    ref = linprog(c, A_eq=M, b_eq=b, bounds=list(zip(lo, hi)), method="highs")
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(ref.fun, abs=1e-7)
    assert np.allclose(M @ res.z, b, atol=1e-8)
    assert np.all(res.z >= -1e-9) and np.all(res.z <= 1 + 1e-9)


def test_simplex_detects_infeasibility():
    M = sp.csc_matrix(np.array([[1.0, 1.0]]))
    res = BoundedSimplex(M, [3.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]).solve()
    assert res.status is Status.INFEASIBLE


def test_simplex_detects_unboundedness():
    M = sp.csc_matrix(np.array([[1.0, -1.0]]))
    res = BoundedSimplex(M, [0.0], [-1.0, 0.0], [0.0, 0.0], [np.inf, np.inf]).solve()
    assert res.status is Status.UNBOUNDED


@pytest.mark.parametrize("pricing", ["dantzig", "devex"])
def test_simplex_pricing_rules_agree(pricing):
    g = random_graph(make_rng(21), 10, 25, 0.2)
    p = build_lp(g, 3)
    sol = solve_lp(p, start="artificial", pricing=pricing)
    assert sol.objective == pytest.approx(_highs_value(g, 3), abs=1e-8)


def test_simplex_rejects_bad_input():
    M = sp.csc_matrix(np.eye(2))
    with pytest.raises(ValueError):
        BoundedSimplex(M, [1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        BoundedSimplex(M, [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], pricing="steepest")
