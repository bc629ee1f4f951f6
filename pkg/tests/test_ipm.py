import dataclasses
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from condkkt import IpmOptions, builtin_suite, get_problem, solve
from condkkt.ipm import (
    DIVERGED,
    LINE_SEARCH_FAILURE,
    OPTIMAL,
    TRACE_COLUMNS,
    centrality_check,
    duality_measure,
    fraction_to_boundary,
    initial_iterate,
    kkt_residual,
    line_search,
    merit,
    update_barrier,
)
from condkkt.kkt import Direction, Iterate
from condkkt.nlp import quadratic_problem
from condkkt.strategies import DirectK1

SUITE = {e.name: e for e in builtin_suite()}
OPTIMAL_NAMES = [n for n, e in SUITE.items() if e.expect_optimal]


def plain_iterate(x=(), s=(), u=(), v=(), mu=0.1):
    x, s = np.asarray(x, float), np.asarray(s, float)
    return Iterate(x, s, np.zeros(0), np.zeros(s.size), np.asarray(u, float), np.asarray(v, float), mu)


def test_duality_measure_examples():
    assert duality_measure(plain_iterate(s=np.ones(3), v=np.ones(3))) == 1.0
    assert duality_measure(plain_iterate(s=np.full(3, 1e-8), v=np.ones(3))) == pytest.approx(1e-8)
    x, s, mu = np.array([1.0, 4.0]), np.array([0.5]), 0.3
    it = plain_iterate(x, s, mu / x, mu / s, mu)
    assert duality_measure(it, np.ones(2, dtype=bool)) == pytest.approx(mu)
    assert duality_measure(plain_iterate(x=[1.0], u=[0.0]), np.zeros(1, dtype=bool)) == 0.0


def test_centrality_examples():
    s = np.ones(4)
    assert centrality_check(plain_iterate(s=s, v=s), 1e4, 1.0).satisfied
    v = np.array([1.0, 1.0, 1.0, 0.1])
    rep = centrality_check(plain_iterate(s=s, v=v), 1e4, 0.5)
    assert not rep.products_ok and rep.worst_index == 3
    assert rep.worst_product_ratio == pytest.approx(0.1 / np.mean(v))
    rep = centrality_check(plain_iterate(s=s, v=s), 1e300, 1e-4, grad_lagrangian=np.full(3, 1e100))
    assert rep.gradient_ok
    assert not centrality_check(plain_iterate(s=s, v=s), 1.0, 1e-4, grad_lagrangian=np.full(4, 10.0)).gradient_ok


def test_fraction_to_boundary_examples():
    it = plain_iterate(x=[1.0, 2.0], s=[1.0], u=[1.0, 1.0], v=[1.0])
    B = np.ones(2, dtype=bool)
    d = Direction(np.ones(2), np.ones(1), np.zeros(0), np.zeros(1), np.ones(2), np.ones(1))
    assert fraction_to_boundary(it, d, 0.99, B) == (1.0, 1.0)
    it = plain_iterate(x=[1.0], u=[1.0])
    d = Direction(np.array([-1.0]), np.zeros(0), np.zeros(0), np.zeros(0), np.array([0.5]), np.zeros(0))
    ap, ad = fraction_to_boundary(it, d, 0.99, np.ones(1, dtype=bool))
    assert ap == pytest.approx(0.99) and ad == 1.0


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(1e-3, 10), min_size=n, max_size=n),
    st.lists(st.floats(-10, 10, allow_subnormal=False), min_size=n, max_size=n),
    st.lists(st.floats(1e-3, 10), min_size=n, max_size=n),
    st.lists(st.floats(-10, 10, allow_subnormal=False), min_size=n, max_size=n),
)), st.floats(0.9, 0.999))
def test_fraction_to_boundary_matches_brute_force(data, tau):
    x, dx, u, du = (np.array(a) for a in data)
    n = x.size
    it = plain_iterate(x=x, u=u)
    d = Direction(dx, np.zeros(0), np.zeros(0), np.zeros(0), du, np.zeros(0))
    ap, ad = fraction_to_boundary(it, d, tau, np.ones(n, dtype=bool))

    def brute(v, dv):
        return min([1.0] + [-tau * v[i] / dv[i] for i in range(n) if dv[i] < 0])

    assert ap == pytest.approx(brute(x, dx), rel=1e-12)
    assert ad == pytest.approx(brute(u, du), rel=1e-12)
    assert np.all(x + ap * dx >= (1 - tau) * x - 1e-12)


def convex_qp():
    return quadratic_problem("q", sp.diags([1.0, 2.0]), [-1.0, 1.0], bounded=np.ones(2, dtype=bool), x0=[30.0, 20.0])


def test_line_search_full_newton_step():
    P = convex_qp()
    it = initial_iterate(P, 0.1)
    d = DirectK1().compute_step(P, it).direction
    ap, _ = fraction_to_boundary(it, d, 0.99, P.bounded)
    ls = line_search(P, it, d, ap)
    assert ls.accepted and ls.backtracks == 0 and ls.alpha == ap
    assert merit(P, it.x + ap * d.dx, it.s, it.mu, 0) < merit(P, it.x, it.s, it.mu, 0)


def test_line_search_ascent_fails():
    P = quadratic_problem("q", sp.identity(2), [1.0, -2.0], x0=[3.0, 3.0])
    it = initial_iterate(P, 0.1)
    g = P.grad(it.x)
    d = Direction(g, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(2), np.zeros(0))
    ls = line_search(P, it, d, 1.0)
    assert not ls.accepted and ls.backtracks == 30


def test_line_search_respects_alpha_max():
    P = convex_qp()
    it = initial_iterate(P, 0.1)
    d = DirectK1().compute_step(P, it).direction
    ls = line_search(P, it, d, 0.99)
    assert ls.accepted and ls.alpha <= 0.99


def test_merit_outside_domain():
    P = convex_qp()
    assert merit(P, np.array([-1.0, 1.0]), np.zeros(0), 0.1, 1.0) == math.inf


def test_update_barrier_examples():
    assert update_barrier(1e-2, 1e-8) == pytest.approx(1e-3)
    assert update_barrier(0.5, 1e-8) == pytest.approx(0.1)
    assert update_barrier(1e-9, 1e-8) == 1e-9
    mu, k = 0.1, 0
    while mu > 1e-9:
        mu = update_barrier(mu, 1e-8)
        k += 1
    assert mu == 1e-9 and k <= 20


def test_options_validation():
    with pytest.raises(ValueError):
        IpmOptions(tol=0)
    with pytest.raises(ValueError):
        IpmOptions(mu_init=-1)


def test_qp_eq_k1():
    res = solve(get_problem("qp_eq"), IpmOptions(tol=1e-8, strategy="k1"))
    assert res.status == OPTIMAL
    assert abs(res.objective - 0.25) <= 1e-7


def test_opf9_hykkt_vs_oracle():
    P = get_problem("opf9")
    res = solve(P, IpmOptions(tol=1e-6, strategy="hykkt", gamma=1e7))
    ref = solve(P, IpmOptions(tol=1e-6, strategy="oracle"))
    assert res.optimal and ref.optimal
    assert abs(res.objective - ref.objective) <= 1e-5 * abs(ref.objective)


def test_infeasible_lp():
    res = solve(get_problem("infeasible_lp"), IpmOptions(max_iters=100))
    assert not res.optimal and res.iterations <= 100
    assert "infeasibility" in res.message


def test_unbounded_reports_divergence():
    res = solve(get_problem("unbounded_nc"))
    assert res.status == DIVERGED and "unbounded" in res.message


def test_line_search_failure_is_a_status():
    # a wrong-signed gradient callback makes every Newton step an ascent direction
    P = quadratic_problem("bad", sp.identity(2), [1.0, 1.0], x0=[2.0, 2.0])
    P = dataclasses.replace(P, gradient=lambda x: -(x + 1.0))
    res = solve(P)
    assert res.status == LINE_SEARCH_FAILURE


@pytest.mark.parametrize("name", OPTIMAL_NAMES)
@pytest.mark.parametrize("strategy", ["k1", "hykkt"])
def test_run_invariants(name, strategy):
    P = get_problem(name)
    res = solve(P, IpmOptions(tol=1e-8, strategy=strategy, keep_iterates=True))
    assert res.optimal, res.message
    assert res.conv_error <= 1e-8
    # interiority after every accepted step
    assert all(r.min_interior > 0 for r in res.trace)
    for it in res.iterates:
        assert np.all(it.x[P.bounded] > 0) and np.all(it.s > 0) and np.all(it.v > 0)
    # monotone barrier parameter
    mus = [r.mu for r in res.trace]
    assert all(b <= a for a, b in zip(mus, mus[1:]))
    # trace completeness
    for r in res.trace:
        for col in ("mu", "xi", "alpha_primal", "alpha_dual", "residual_unreduced"):
            assert math.isfinite(getattr(r, col))
        assert r.inertia_corrections >= 0
        assert r.cg_iterations >= 0 and (strategy == "hykkt" or r.cg_iterations == 0)
    assert len(res.trace) == res.iterations
    assert kkt_residual(P, res.iterate) == res.kkt_residual
    if SUITE[name].reference_objective is not None:
        ref = SUITE[name].reference_objective
        assert abs(res.objective - ref) <= 1e-6 * max(1, abs(ref))


@pytest.mark.parametrize("name", OPTIMAL_NAMES)
def test_centrality_at_convergence(name):
    P = get_problem(name)
    if P.m_i + int(P.bounded.sum()) == 0:
        pytest.skip("no complementarity pairs: the duality measure is identically zero")
    res = solve(P, IpmOptions(strategy="k1", keep_iterates=True))
    # iterates[k] is the point the k-th step starts from; pair each accepted
    # iterate with the barrier value of the step that produced it
    accepted = list(zip([r.mu for r in res.trace], res.iterates[1:] + [res.iterate]))
    it = [i for mu, i in accepted if mu >= 1e-6][-1]
    grad = P.lagrangian_grad(it.x, it.y, it.z) - np.where(P.bounded, it.u, 0.0)
    assert centrality_check(it, 1e4, 1e-4, grad, P.bounded).satisfied


def test_trace_columns():
    assert TRACE_COLUMNS[:3] == ["iteration", "mu", "xi"]
    for col in ("alpha_primal", "alpha_dual", "residual_unreduced", "inertia_corrections", "cg_iterations"):
        assert col in TRACE_COLUMNS


def test_deterministic():
    P = get_problem("hs071")
    a = solve(P, IpmOptions(strategy="hykkt"))
    b = solve(P, IpmOptions(strategy="hykkt"))
    assert a.iterations == b.iterations and np.array_equal(a.x, b.x)


def test_max_iters_zero():
    res = solve(get_problem("qp_eq"), IpmOptions(max_iters=0))
    assert res.status == "MaxIter" and res.iterations == 0
