import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from condkkt.diagnostics import dense_inertia
from condkkt.ldlt import (
    SingularSolveError,
    ldlt_factorize,
    ldlt_solve,
    richardson_refine,
    symbolic_analyze,
)
from condkkt.ordering import amd_order
from condkkt.sparse import StructuralError, from_scipy

from helpers import random_quasidefinite, random_spd


def permuted(A, perm):
    D = A.to_dense()
    return D[np.ix_(perm, perm)]


def test_identity_plan():
    A = from_scipy(np.eye(4))
    plan = symbolic_analyze(A, np.arange(4))
    assert plan.nnz_l == 0
    assert np.all(plan.etree == -1)


def test_tridiagonal_plan_is_path():
    n = 4
    A = from_scipy(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))
    plan = symbolic_analyze(A, np.arange(n))
    assert plan.etree.tolist() == [1, 2, 3, -1]
    assert plan.nnz_l + n == 7


def test_dense_plan():
    A = from_scipy(np.ones((3, 3)) + 3 * np.eye(3))
    plan = symbolic_analyze(A, np.arange(3))
    assert plan.nnz_l + 3 == 6


def test_identity_factor():
    F = ldlt_factorize(from_scipy(np.eye(3)))
    assert np.allclose(F.D, 1) and F.inertia == (3, 0, 0)
    assert np.allclose(ldlt_solve(F, [1.0, 2.0, 3.0]), [1, 2, 3])


def test_diagonal_signs():
    # from_scipy drops explicit zeros, so build the pattern first
    A = from_scipy(np.diag([2.0, -3.0, 1.0])).with_values([2.0, -3.0, 0.0])
    F = ldlt_factorize(A, pivot_floor=1e-12)
    assert F.inertia == (1, 1, 1)
    assert F.zero_pivots == (2,)
    with pytest.raises(SingularSolveError):
        ldlt_solve(F, np.ones(3))


def test_diag_solve():
    F = ldlt_factorize(from_scipy(np.diag([2.0, 4.0])))
    assert np.allclose(ldlt_solve(F, [2.0, 8.0]), [1.0, 2.0])


def test_random_spd_reconstruction():
    M = random_spd(6, 0)
    A = from_scipy(M)
    F = ldlt_factorize(A)
    assert F.inertia == (6, 0, 0)
    err = np.max(np.abs(F.reconstruct() - permuted(A, F.perm)))
    assert err <= 1e-12 * A.norm_inf()
    L = F.L.toarray()
    assert np.allclose(np.diag(L), 1) and np.allclose(np.triu(L, 1), 0)


def test_random_spd_solve_residual(rng):
    M = random_spd(8, 1)
    A = from_scipy(M)
    b = rng.standard_normal(8)
    x = ldlt_solve(ldlt_factorize(A), b)
    tol = 1e-10 * (np.abs(M).sum(axis=1).max() * np.max(np.abs(x)) + np.max(np.abs(b)))
    assert np.max(np.abs(M @ x - b)) <= tol


def test_matrix_rhs(rng):
    M = random_spd(5, 2)
    B = rng.standard_normal((5, 3))
    X = ldlt_solve(ldlt_factorize(from_scipy(M)), B)
    assert np.allclose(M @ X, B)


def test_plan_mismatch():
    plan = symbolic_analyze(from_scipy(np.eye(3)))
    with pytest.raises(StructuralError):
        ldlt_factorize(from_scipy(np.ones((3, 3)) + np.eye(3)), plan)


def test_plan_reuse(rng):
    A = from_scipy(random_spd(6, 3))
    plan = symbolic_analyze(A, amd_order(A))
    B = A.with_values(A.values * 2)
    F = ldlt_factorize(B, plan)
    assert np.allclose(ldlt_solve(F, np.ones(6)), np.linalg.solve(B.to_dense(), np.ones(6)))


@given(st.integers(2, 50), st.integers(0, 10_000))
def test_reconstruction_quasidefinite(n, seed):
    A, n_pos, n_neg = random_quasidefinite(n, seed)
    F = ldlt_factorize(A)
    assert np.max(np.abs(F.reconstruct() - permuted(A, F.perm))) <= 1e-10 * A.norm_inf()
    assert F.inertia == (n_pos, n_neg, 0)


@given(st.integers(1, 30), st.integers(0, 10_000))
def test_inertia_matches_eigencounts(n, seed):
    rng = np.random.default_rng(seed)
    # congruence of a diagonal with a random unit lower factor keeps inertia known
    d = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2.0, n)
    L = np.tril(rng.uniform(-0.5, 0.5, (n, n)) * (rng.random((n, n)) < 0.3), -1) + np.eye(n)
    M = L @ np.diag(d) @ L.T
    A = from_scipy(M)
    F = ldlt_factorize(A, symbolic_analyze(A, np.arange(n)))
    assert F.inertia == dense_inertia(M)
    assert F.inertia == (int(np.sum(d > 0)), int(np.sum(d < 0)), 0)


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_solve_permutation_invariant(n, seed):
    A, _, _ = random_quasidefinite(n, seed)
    b = np.random.default_rng(seed).standard_normal(n)
    x1 = ldlt_solve(ldlt_factorize(A, symbolic_analyze(A, np.arange(n))), b)
    x2 = ldlt_solve(ldlt_factorize(A, symbolic_analyze(A, amd_order(A))), b)
    rev = np.arange(n)[::-1].copy()
    x3 = ldlt_solve(ldlt_factorize(A, symbolic_analyze(A, rev)), b)
    scale = np.max(np.abs(x1))
    assert np.max(np.abs(x1 - x2)) <= 1e-10 * scale
    assert np.max(np.abs(x1 - x3)) <= 1e-10 * scale


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_symbolic_superset(n, seed):
    A, _, _ = random_quasidefinite(n, seed, density=0.25)
    plan = symbolic_analyze(A, amd_order(A))
    F = ldlt_factorize(A, plan)
    L = F.L.toarray()
    sym = np.zeros((n, n), dtype=bool)
    for j in range(n):
        sym[plan.li[plan.lp[j]:plan.lp[j + 1]], j] = True
    numeric = np.tril(np.abs(L) > 0, -1)
    assert not np.any(numeric & ~sym)


def test_refine_exact_operator():
    M = random_spd(6, 4)
    F = ldlt_factorize(from_scipy(M))
    x, rep = richardson_refine(lambda v: M @ v, F, np.ones(6))
    assert rep.iterations <= 1 and rep.converged
    assert np.allclose(M @ x, 1)


def test_refine_contraction():
    n = 5
    E = 1e-8 * np.random.default_rng(5).standard_normal((n, n))
    A = np.eye(n) + (E + E.T) / 2
    F = ldlt_factorize(from_scipy(np.eye(n)))
    b = np.ones(n)
    x, rep = richardson_refine(lambda v: A @ v, F, b, tol_abs=1e-14, tol_rel=0)
    assert rep.converged and rep.iterations <= 3
    hist = rep.history
    assert all(b2 < b1 for b1, b2 in zip(hist, hist[1:]))


def test_refine_zero_rhs():
    F = ldlt_factorize(from_scipy(np.eye(3)))
    x, rep = richardson_refine(lambda v: v, F, np.zeros(3))
    assert rep.iterations == 0 and np.all(x == 0)


def test_refine_divergence_flag():
    A = np.diag([3.0, 3.0])
    x, rep = richardson_refine(lambda v: A @ v, lambda r: r, np.ones(2), max_iters=10)
    assert rep.diverged and not rep.converged
    # best iterate kept: the initial solve has the smallest residual
    assert np.isclose(rep.residual_norm, min(rep.history))
