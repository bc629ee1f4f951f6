"""Builtin desk-scale test problems.

Every problem is authored directly in canonical form (only x >= 0 bounds;
general boxes are written as inequalities, possibly after a shift).
Reference objectives come from dense-oracle solves at tol 1e-10 and are
frozen here; analytic optima are noted where they exist.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .nlp import NlpProblem, dense_problem, quadratic_problem


class SuiteEntry(NamedTuple):
    name: str
    problem: NlpProblem
    reference_objective: Optional[float]
    reference_x: Optional[np.ndarray] = None
    expect_optimal: bool = True


def _sparse_problem(name, n, x0, f, grad, hess_trip, *, bounded=None, m_e=0, g=None, jac_g_trip=None,
                    m_i=0, h=None, jac_h_trip=None, description="", tags=()):
    """Build an NlpProblem from triplet callbacks with x-independent (row, col) lists.

    ``hess_trip(x, y, z)`` may return entries in either triangle; they are
    folded into the lower triangle.
    """
    x0 = np.asarray(x0, dtype=float)
    hr, hc, _ = hess_trip(x0, np.ones(m_e), np.ones(m_i))
    hr, hc = np.asarray(hr), np.asarray(hc)
    lo_r, lo_c = np.maximum(hr, hc), np.minimum(hr, hc)
    kw = {}
    if m_e:
        r, c, _ = jac_g_trip(x0)
        kw.update(eq=g, eq_jac_structure=(r, c), eq_jac_values=lambda x: jac_g_trip(x)[2])
    if m_i:
        r, c, _ = jac_h_trip(x0)
        kw.update(ineq=h, ineq_jac_structure=(r, c), ineq_jac_values=lambda x: jac_h_trip(x)[2])
    return NlpProblem(
        name=name, n=n, m_e=m_e, m_i=m_i,
        bounded=np.zeros(n, dtype=bool) if bounded is None else bounded,
        x0=x0, objective=f, gradient=grad,
        hess_structure=(lo_r, lo_c),
        hess_values=lambda x, y, z: np.asarray(hess_trip(x, y, z)[2], dtype=float),
        description=description, tags=frozenset(tags), **kw,
    )


# --- small quadratic and linear programs ------------------------------------


def qp_eq() -> NlpProblem:
    return quadratic_problem(
        "qp_eq", sp.identity(2), np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[-1.0],
        bounded=np.ones(2, dtype=bool), x0=[1.0, 1.0],
        description="min |x|^2/2 s.t. x1 + x2 = 1, x >= 0", tags=("equality", "convex"),
    )


def qp_ineq() -> NlpProblem:
    a = np.array([2.0, 1.5, -1.0])
    return quadratic_problem(
        "qp_ineq", sp.identity(3), -a, A_in=[[1.0, 1.0, 1.0]], b_in=[-1.0],
        bounded=np.ones(3, dtype=bool), x0=np.full(3, 0.2),
        description="projection of (2, 1.5, -1) onto the simplex (constant 0.5|a|^2 dropped)",
        tags=("inequality", "convex"),
    )


def lp_simple() -> NlpProblem:
    return quadratic_problem(
        "lp_simple", sp.csr_matrix((3, 3)), [-1.0, -2.0, 0.0],
        A_eq=[[1.0, 1.0, 1.0]], b_eq=[-4.0], A_in=[[1.0, 3.0, 0.0]], b_in=[-6.0],
        bounded=np.ones(3, dtype=bool), x0=np.ones(3),
        description="min -x1 - 2 x2 s.t. x1 + x2 + x3 = 4, x1 + 3 x2 <= 6, x >= 0",
        tags=("mixed", "linear"),
    )


def qp_mixed() -> NlpProblem:
    a = np.array([1.0, 2.0, 3.0, 4.0])
    r2 = 1.0 / np.sqrt(2.0)
    return quadratic_problem(
        "qp_mixed", sp.identity(4), -a,
        A_eq=[[0.5, 0.5, 0.5, 0.5]], b_eq=[-1.0],
        A_in=[[0.0, 0.0, -r2, r2], [r2, -r2, 0.0, 0.0]], b_in=[0.0, -3.0],
        x0=np.zeros(4),
        description="free QP with unit-norm rows: one equality, one active and one inactive inequality",
        tags=("mixed", "convex"),
    )


def qp_box() -> NlpProblem:
    n = 10
    Q = sp.diags([-np.ones(n - 1), 4.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    c = -np.arange(1.0, n + 1.0)
    return quadratic_problem(
        "qp_box", Q, c, A_in=[np.ones(n)], b_in=[-3.0], bounded=np.ones(n, dtype=bool),
        x0=np.full(n, 0.1), description="tridiagonal QP over a capped nonnegative orthant",
        tags=("inequality", "convex"),
    )


def infeasible_lp() -> NlpProblem:
    return quadratic_problem(
        "infeasible_lp", sp.csr_matrix((1, 1)), [1.0], A_eq=[[1.0]], b_eq=[1.0],
        bounded=np.ones(1, dtype=bool), x0=[1.0],
        description="x >= 0 and x + 1 = 0: infeasible", tags=("infeasible", "linear"),
    )


# --- small nonlinear programs -----------------------------------------------


def degen() -> NlpProblem:
    return dense_problem(
        "degen", 2,
        f=lambda x: (x[0] - 1) ** 2 + (x[1] - 1) ** 2,
        grad=lambda x: 2 * (x - 1),
        hess_f=lambda x: 2 * np.eye(2),
        x0=[0.5, 0.5], bounded=np.ones(2, dtype=bool),
        h=lambda x: np.array([x[0] + x[1] - 2, x[0] - 1]),
        jac_h=lambda x: np.array([[1.0, 1.0], [1.0, 0.0]]),
        m_i=2,
        description="two constraints active at (1, 1) with zero multipliers",
        tags=("inequality", "degenerate"),
    )


def scurve() -> NlpProblem:
    return dense_problem(
        "scurve", 2,
        f=lambda x: x[0] ** 4 / 4 - x[0] ** 2 + 0.5 * (x[1] + 1) ** 2,
        grad=lambda x: np.array([x[0] ** 3 - 2 * x[0], x[1] + 1]),
        hess_f=lambda x: np.diag([3 * x[0] ** 2 - 2, 1.0]),
        x0=[0.2, 0.5],
        h=lambda x: np.array([0.5 * np.sin(2 * x[0]) - x[1] - 0.5]),
        jac_h=lambda x: np.array([[np.cos(2 * x[0]), -1.0]]),
        hess_h=lambda x, z: np.array([[-2 * np.sin(2 * x[0]) * z[0], 0.0], [0.0, 0.0]]),
        m_i=1,
        description="double-well objective under a sinusoidal constraint",
        tags=("inequality", "nonconvex"),
    )


def hs006() -> NlpProblem:
    return dense_problem(
        "hs006", 2,
        f=lambda x: (1 - x[0]) ** 2,
        grad=lambda x: np.array([-2 * (1 - x[0]), 0.0]),
        hess_f=lambda x: np.diag([2.0, 0.0]),
        x0=[-1.2, 1.0],
        g=lambda x: np.array([10 * (x[1] - x[0] ** 2)]),
        jac_g=lambda x: np.array([[-20 * x[0], 10.0]]),
        hess_g=lambda x, y: np.array([[-20 * y[0], 0.0], [0.0, 0.0]]),
        m_e=1,
        description="Hock-Schittkowski 6", tags=("equality", "nonconvex"),
    )


def hs071() -> NlpProblem:
    # x = 1 + t with t >= 0 and t <= 4
    def X(t):
        return 1.0 + t

    def f(t):
        x = X(t)
        return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]

    def grad(t):
        x = X(t)
        s = x[0] + x[1] + x[2]
        return np.array([x[3] * (s + x[0]), x[0] * x[3], x[0] * x[3] + 1, x[0] * s])

    def hess_f(t):
        x = X(t)
        H = np.zeros((4, 4))
        H[0, 0] = 2 * x[3]
        H[0, 1] = H[1, 0] = x[3]
        H[0, 2] = H[2, 0] = x[3]
        H[0, 3] = H[3, 0] = 2 * x[0] + x[1] + x[2]
        H[1, 3] = H[3, 1] = x[0]
        H[2, 3] = H[3, 2] = x[0]
        return H

    def prod_grad(x):
        return np.array([x[1] * x[2] * x[3], x[0] * x[2] * x[3], x[0] * x[1] * x[3], x[0] * x[1] * x[2]])

    def prod_hess(x):
        H = np.zeros((4, 4))
        for i in range(4):
            for j in range(4):
                if i != j:
                    H[i, j] = np.prod([x[k] for k in range(4) if k not in (i, j)])
        return H

    def h(t):
        x = X(t)
        return np.concatenate([t - 4.0, [25.0 - np.prod(x)]])

    def jac_h(t):
        return np.vstack([np.eye(4), -prod_grad(X(t))])

    return dense_problem(
        "hs071", 4, f=f, grad=grad, hess_f=hess_f,
        x0=np.array([0.0, 4.0, 4.0, 0.0]), bounded=np.ones(4, dtype=bool),
        g=lambda t: np.array([np.sum(X(t) ** 2) - 40.0]),
        jac_g=lambda t: 2 * X(t)[None, :],
        hess_g=lambda t, y: 2 * y[0] * np.eye(4),
        m_e=1,
        h=h, jac_h=jac_h, hess_h=lambda t, z: -z[4] * prod_hess(X(t)), m_i=5,
        description="Hock-Schittkowski 71, shifted so that x = 1 + t, t >= 0",
        tags=("mixed", "nonconvex"),
    )


def unbounded_nc() -> NlpProblem:
    return dense_problem(
        "unbounded_nc", 2,
        f=lambda x: -0.5 * x @ x, grad=lambda x: -x, hess_f=lambda x: -np.eye(2),
        x0=[1.0, 0.5], description="concave objective, unbounded below",
        tags=("unbounded", "nonconvex"),
    )


# --- 9-bus optimal power flow (polar form) ----------------------------------

_CASE9_BRANCHES = [  # from, to, r, x, b (1-based buses)
    (1, 4, 0.0, 0.0576, 0.0),
    (4, 5, 0.017, 0.092, 0.158),
    (5, 6, 0.039, 0.17, 0.358),
    (3, 6, 0.0, 0.0586, 0.0),
    (6, 7, 0.0119, 0.1008, 0.209),
    (7, 8, 0.0085, 0.072, 0.149),
    (8, 2, 0.0, 0.0625, 0.0),
    (8, 9, 0.032, 0.161, 0.306),
    (9, 4, 0.01, 0.085, 0.176),
]
_CASE9_LOADS = {5: (90.0, 30.0), 7: (100.0, 35.0), 9: (125.0, 50.0)}
_CASE9_GENS = [  # bus, Pmin, Pmax, c2, c1, c0 (MW, $/MW^2h, $/MWh, $/h)
    (1, 10.0, 250.0, 0.11, 5.0, 150.0),
    (2, 10.0, 300.0, 0.085, 1.2, 600.0),
    (3, 10.0, 270.0, 0.1225, 1.0, 335.0),
]


def _ybus(nb, branches):
    Y = np.zeros((nb, nb), dtype=complex)
    for f, t, r, x, b in branches:
        f, t = f - 1, t - 1
        y = 1.0 / complex(r, x)
        Y[f, f] += y + 0.5j * b
        Y[t, t] += y + 0.5j * b
        Y[f, t] -= y
        Y[t, f] -= y
    return Y


def opf9(base_mva: float = 100.0, cost_scale: float = 1e-3) -> NlpProblem:
    """WSCC 9-bus AC OPF without line-flow limits.

    Variables (theta, V, p, Qg) with Pg = Pmin + p; V and p are bounded.
    Equalities: reference angle, then active and reactive balance per bus.
    Inequalities: voltage band [0.9, 1.1], Pg <= Pmax, |Qg| <= 300 MVAr.
    """
    nb, ng = 9, len(_CASE9_GENS)
    Y = _ybus(nb, _CASE9_BRANCHES)
    Gm, Bm = Y.real, Y.imag
    I, J = np.nonzero((np.abs(Y) > 0) & ~np.eye(nb, dtype=bool))
    Gij, Bij = Gm[I, J], Bm[I, J]
    Gii, Bii = np.diag(Gm), np.diag(Bm)
    Pd = np.zeros(nb)
    Qd = np.zeros(nb)
    for bus, (p, q) in _CASE9_LOADS.items():
        Pd[bus - 1], Qd[bus - 1] = p / base_mva, q / base_mva
    gbus = np.array([g[0] - 1 for g in _CASE9_GENS])
    pmin = np.array([g[1] for g in _CASE9_GENS]) / base_mva
    pmax = np.array([g[2] for g in _CASE9_GENS]) / base_mva
    c2 = np.array([g[3] for g in _CASE9_GENS]) * base_mva**2 * cost_scale
    c1 = np.array([g[4] for g in _CASE9_GENS]) * base_mva * cost_scale
    c0 = np.array([g[5] for g in _CASE9_GENS]) * cost_scale
    qmax = 300.0 / base_mva

    th = np.arange(nb)
    vv = nb + np.arange(nb)
    pp = 2 * nb + np.arange(ng)
    qq = 2 * nb + ng + np.arange(ng)
    n = 2 * nb + 2 * ng
    m_e = 1 + 2 * nb
    rowP, rowQ = 1 + np.arange(nb), 1 + nb + np.arange(nb)

    def split(x):
        return x[th], x[vv], x[pp], x[qq]

    def phis(x):
        t, V, _, _ = split(x)
        d = t[I] - t[J]
        cd, sd = np.cos(d), np.sin(d)
        phiP = Gij * cd + Bij * sd
        phiQ = Gij * sd - Bij * cd
        dphiP = -Gij * sd + Bij * cd
        return V, phiP, phiQ, dphiP

    def f(x):
        Pg = pmin + x[pp]
        return float(np.sum(c2 * Pg**2 + c1 * Pg + c0))

    def grad(x):
        out = np.zeros(n)
        out[pp] = 2 * c2 * (pmin + x[pp]) + c1
        return out

    def g(x):
        V, phiP, phiQ, _ = phis(x)
        P = Gii * V**2
        Q = -Bii * V**2
        np.add.at(P, I, V[I] * V[J] * phiP)
        np.add.at(Q, I, V[I] * V[J] * phiQ)
        P[gbus] -= pmin + x[pp]
        Q[gbus] -= x[qq]
        return np.concatenate([[x[th[0]]], P + Pd, Q + Qd])

    def jac_g(x):
        V, phiP, phiQ, dphiP = phis(x)
        VV = V[I] * V[J]
        r = [[0], rowP[I], rowP[I], rowP[I], rowP[I], rowQ[I], rowQ[I], rowQ[I], rowQ[I],
             rowP, rowQ, rowP[gbus], rowQ[gbus]]
        c = [[th[0]], th[I], th[J], vv[I], vv[J], th[I], th[J], vv[I], vv[J],
             vv, vv, pp, qq]
        v = [[1.0], VV * dphiP, -VV * dphiP, V[J] * phiP, V[I] * phiP,
             VV * phiP, -VV * phiP, V[J] * phiQ, V[I] * phiQ,
             2 * V * Gii, -2 * V * Bii, -np.ones(ng), -np.ones(ng)]
        return np.concatenate(r), np.concatenate(c), np.concatenate(v)

    def hess(x, y, z):
        V, phiP, phiQ, dphiP = phis(x)
        wP, wQ = y[rowP], y[rowQ]
        phi = wP[I] * phiP + wQ[I] * phiQ
        dphi = wP[I] * dphiP + wQ[I] * phiP
        VV = V[I] * V[J]
        r = [th[I], th[J], th[I], th[I], th[I], th[J], th[J], vv[I], vv, pp]
        c = [th[I], th[J], th[J], vv[I], vv[J], vv[I], vv[J], vv[J], vv, pp]
        v = [-VV * phi, -VV * phi, VV * phi, V[J] * dphi, V[I] * dphi, -V[J] * dphi, -V[I] * dphi, phi,
             2 * (wP * Gii - wQ * Bii), 2 * c2]
        return np.concatenate(r), np.concatenate(c), np.concatenate(v)

    m_i = 2 * nb + ng + 2 * ng

    def h(x):
        _, V, p, q = split(x)
        return np.concatenate([V - 1.1, 0.9 - V, p - (pmax - pmin), q - qmax, -q - qmax])

    hrows = np.arange(m_i)
    hcols = np.concatenate([vv, vv, pp, qq, qq])
    hvals = np.concatenate([np.ones(nb), -np.ones(nb), np.ones(ng), np.ones(ng), -np.ones(ng)])

    x0 = np.zeros(n)
    x0[vv] = 1.0
    x0[pp] = 0.95
    bounded = np.zeros(n, dtype=bool)
    bounded[vv] = True
    bounded[pp] = True
    return _sparse_problem(
        "opf9", n, x0, f, grad, hess, bounded=bounded,
        m_e=m_e, g=g, jac_g_trip=jac_g,
        m_i=m_i, h=h, jac_h_trip=lambda x: (hrows, hcols, hvals),
        description="WSCC 9-bus AC optimal power flow, polar voltages, cost scaled by 1e-3",
        tags=("mixed", "nonconvex", "opf"),
    )


# --- particle steering (discretized optimal control) ------------------------


def steering(N: int = 20, a: float = 100.0) -> NlpProblem:
    """Minimum-time steering of a particle, explicit Euler on N intervals.

    State y = (position x, position y, velocity x, velocity y), control u is
    the thrust angle with |u| <= pi/2. Variables (t_f, y_0..y_N, u_0..u_{N-1}).
    """
    ny = 4 * (N + 1)
    n = 1 + ny + N
    ycol = 1 + np.arange(ny).reshape(N + 1, 4)
    ucol = 1 + ny + np.arange(N)
    k = np.arange(N)
    m_e = 4 + 4 * N + 3
    dyn = 4 + 4 * k[:, None] + np.arange(4)[None, :]  # row of dynamics (k, l)
    term = 4 + 4 * N + np.arange(3)
    target = np.array([5.0, 45.0, 0.0])

    def f(x):
        return float(x[0])

    def grad(x):
        e = np.zeros(n)
        e[0] = 1.0
        return e

    def g(x):
        tf = x[0]
        Y = x[ycol]
        u = x[ucol]
        hstep = tf / N
        F = np.column_stack([Y[:-1, 2], Y[:-1, 3], a * np.cos(u), a * np.sin(u)])
        D = Y[1:] - Y[:-1] - hstep * F
        return np.concatenate([Y[0], D.ravel(), Y[N, 1:] - target])

    def jac_g(x):
        tf = x[0]
        Y = x[ycol]
        u = x[ucol]
        hs = tf / N
        r, c, v = [np.arange(4)], [ycol[0]], [np.ones(4)]
        r += [dyn.ravel(), dyn.ravel()]
        c += [ycol[1:].ravel(), ycol[:-1].ravel()]
        v += [np.ones(4 * N), -np.ones(4 * N)]
        r += [dyn[:, 0], dyn[:, 1], dyn[:, 2], dyn[:, 3]]
        c += [ycol[:-1, 2], ycol[:-1, 3], ucol, ucol]
        v += [np.full(N, -hs), np.full(N, -hs), hs * a * np.sin(u), -hs * a * np.cos(u)]
        r += [dyn[:, 0], dyn[:, 1], dyn[:, 2], dyn[:, 3]]
        c += [np.zeros(N, dtype=int)] * 4
        v += [-Y[:-1, 2] / N, -Y[:-1, 3] / N, -a * np.cos(u) / N, -a * np.sin(u) / N]
        r += [term]
        c += [ycol[N, 1:]]
        v += [np.ones(3)]
        return np.concatenate(r), np.concatenate(c), np.concatenate(v)

    def hess(x, y, z):
        tf = x[0]
        u = x[ucol]
        lam = y[dyn]
        hs = tf / N
        zero = np.zeros(N, dtype=int)
        r = [ycol[:-1, 2], ycol[:-1, 3], ucol, ucol]
        c = [zero, zero, zero, ucol]
        v = [
            -lam[:, 0] / N,
            -lam[:, 1] / N,
            a * (lam[:, 2] * np.sin(u) - lam[:, 3] * np.cos(u)) / N,
            hs * a * (lam[:, 2] * np.cos(u) + lam[:, 3] * np.sin(u)),
        ]
        return np.concatenate(r), np.concatenate(c), np.concatenate(v)

    m_i = 2 * N
    hrows = np.arange(m_i)
    hcols = np.concatenate([ucol, ucol])
    hvals = np.concatenate([np.ones(N), -np.ones(N)])

    tf0 = 1.0
    x0 = np.zeros(n)
    x0[0] = tf0
    s = np.linspace(0.0, 1.0, N + 1)
    x0[ycol[:, 1]] = 5.0 * s
    x0[ycol[:, 2]] = 45.0 * s
    bounded = np.zeros(n, dtype=bool)
    bounded[0] = True
    return _sparse_problem(
        "steering", n, x0, f, grad, hess, bounded=bounded,
        m_e=m_e, g=g, jac_g_trip=jac_g,
        m_i=m_i, h=lambda x: np.concatenate([x[ucol] - np.pi / 2, -x[ucol] - np.pi / 2]),
        jac_h_trip=lambda x: (hrows, hcols, hvals),
        description=f"minimum-time particle steering, Euler, N={N}, a={a:g}",
        tags=("mixed", "nonconvex", "control"),
    )


def poisson_ctrl(N: int = 40, alpha: float = 1e-3) -> NlpProblem:
    """Tracking control of -y'' = u on (0, 1), y(0) = y(1) = 0, with u >= 0.

    Finite differences on N interior nodes, constraint rows scaled by h^2
    so G = [A, -h^2 I] with A = tridiag(-1, 2, -1). The eigenvalues of A
    spread over three decades, which spreads the spectrum of the equality
    Schur complement. Objective omits the constant ||y_d||^2 / 2.
    """
    h = 1.0 / (N + 1)
    t = h * np.arange(1, N + 1)
    yd = np.sin(2 * np.pi * t)
    A = sp.diags([-np.ones(N - 1), 2 * np.ones(N), -np.ones(N - 1)], [-1, 0, 1])
    Q = sp.block_diag([sp.identity(N), alpha * sp.identity(N)])
    c = np.concatenate([-yd, np.zeros(N)])
    G = sp.hstack([A, -h * h * sp.identity(N)])
    bounded = np.concatenate([np.zeros(N, dtype=bool), np.ones(N, dtype=bool)])
    x0 = np.concatenate([np.zeros(N), np.ones(N)])
    return quadratic_problem(
        "poisson_ctrl", Q, c, A_eq=G, b_eq=np.zeros(N), bounded=bounded, x0=x0,
        description=f"1D Poisson tracking control, N={N}, alpha={alpha:g}",
        tags=("equality", "convex", "control"),
    )


# --- registry ---------------------------------------------------------------

_BUILDERS = {
    "qp_eq": qp_eq,
    "qp_ineq": qp_ineq,
    "lp_simple": lp_simple,
    "qp_mixed": qp_mixed,
    "qp_box": qp_box,
    "degen": degen,
    "scurve": scurve,
    "hs006": hs006,
    "hs071": hs071,
    "opf9": opf9,
    "steering": steering,
    "poisson_ctrl": poisson_ctrl,
    "infeasible_lp": infeasible_lp,
    "unbounded_nc": unbounded_nc,
}

# Frozen from DenseK2Oracle solves at tol 1e-10 (analytic values agree where known).
REFERENCE_OBJECTIVES = {
    "qp_eq": 0.25,
    "qp_ineq": 2.0625 - 0.5 * (4.0 + 2.25 + 1.0),
    "lp_simple": -5.0,
    "qp_mixed": 8.25 - 15.0,
    "qp_box": -23.4736842105,
    "degen": 0.0,
    "scurve": -0.951177609827,
    "hs006": 0.0,
    "hs071": 17.0140172892,
    "opf9": 5.29668620402,
    "steering": 0.554724696380,
    "poisson_ctrl": -0.848746710388,
    "infeasible_lp": None,
    "unbounded_nc": None,
}

_NOT_OPTIMAL = {"infeasible_lp", "unbounded_nc"}


def problem_names() -> list[str]:
    return list(_BUILDERS)


def get_problem(name: str) -> NlpProblem:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(_BUILDERS)}") from None


def builtin_suite() -> list[SuiteEntry]:
    return [
        SuiteEntry(name, build(), REFERENCE_OBJECTIVES[name], None, name not in _NOT_OPTIMAL)
        for name, build in _BUILDERS.items()
    ]
