"""Shared oracles and random generators for the test suite."""

import numpy as np
import scipy.sparse as sp

from condkkt.kkt import Direction, Iterate, KktPoint
from condkkt.sparse import from_scipy, values_on_pattern
from condkkt.strategies import DirectK1


def random_quasidefinite(n, seed, density=0.15, n_neg=None):
    """Sparse symmetric [[A, B^T], [B, -C]] with A, C positive definite."""
    rng = np.random.default_rng(seed)
    if n_neg is None:
        n_neg = int(rng.integers(0, n // 2 + 1))
    n_pos = n - n_neg
    M = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1, 1, k))
    M = sp.tril(M, k=-1).toarray()
    M = M + M.T
    # diagonal dominance within each definite block keeps the blocks definite
    A = M[:n_pos, :n_pos]
    C = -M[n_pos:, n_pos:]
    Q = M.copy()
    Q[:n_pos, :n_pos] = A + np.diag(np.abs(A).sum(axis=1) + rng.uniform(0.5, 2.0, n_pos))
    Q[n_pos:, n_pos:] = -(C + np.diag(np.abs(C).sum(axis=1) + rng.uniform(0.5, 2.0, n_neg)))
    return from_scipy(sp.csc_matrix(Q)), n_pos, n_neg


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return M.T @ M + np.eye(n)


def random_iterate(P, seed, mu=None, spread=1.0):
    """Strictly interior iterate near x0 with log-uniform slacks and duals."""
    rng = np.random.default_rng(seed)
    B = P.bounded

    def pos(k):
        return 10.0 ** rng.uniform(-spread, spread, k)

    x = P.x0 + 0.3 * rng.standard_normal(P.n)
    x[B] = pos(int(B.sum()))
    u = np.zeros(P.n)
    u[B] = pos(int(B.sum()))
    mu = 10.0 ** rng.uniform(-6, -1) if mu is None else mu
    return Iterate(x, pos(P.m_i), rng.standard_normal(P.m_e), pos(P.m_i), u, pos(P.m_i), mu)


def dense_K3(pt):
    """Unreduced Newton matrix, column by column through apply_K3."""
    n, me, mi = pt.dims
    N = 2 * n + me + 3 * mi
    cols = [pt.apply_K3(Direction.from_vector(e, n, me, mi)).to_vector() for e in np.eye(N)]
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def k3_direction(P, it):
    pt = KktPoint(P, it)
    d = np.linalg.solve(dense_K3(pt), -pt.residual_F().to_vector())
    return Direction.from_vector(d, P.n, P.m_e, P.m_i)


def k1_factor(P, it, with_matrix=False):
    """Sparse LDL^T of [[K, G^T], [G, -delta_c I]] exactly as DirectK1 builds it."""
    S = DirectK1()
    S._ensure_plan(P)
    pt = KktPoint(P, it)
    fac = S._factor(pt)
    if not with_matrix:
        return fac
    return fac, S._pattern.with_values(values_on_pattern(S._pattern, S._matrix(pt)))


def rel_diff(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-30)) if a.size else 0.0
