"""KKT systems of the barrier subproblem: unreduced, augmented and condensed.

Block ordering of a full primal-dual vector is (x, s, y, z, u, v) with
sizes (n, m_i, m_e, m_i, n, m_i). The Newton system is K3 d = -F with

    F = (grad f + G^T y + H^T z - u,  z - v,  g,  h + s,  X u - mu e,  S v - mu e).

Regularization enters K3 exactly as in the augmented system: +delta_w on
the (x, x) and (s, s) blocks, -delta_c on the two dual blocks. Bound rows
for variables without an x >= 0 bound are trivial (du_i = -u_i = 0).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .nlp import NlpProblem
from .sparse import SparseSymCsc, pattern_from_scipy, values_on_pattern


class OracleTooLarge(ValueError):
    pass


@dataclass
class Iterate:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    v: np.ndarray
    mu: float
    delta_w: float = 0.0
    delta_c: float = 0.0

    def replace(self, **kw) -> "Iterate":
        return dataclasses.replace(self, **kw)

    def copy(self) -> "Iterate":
        return Iterate(
            self.x.copy(), self.s.copy(), self.y.copy(), self.z.copy(),
            self.u.copy(), self.v.copy(), self.mu, self.delta_w, self.delta_c,
        )


@dataclass
class Direction:
    dx: np.ndarray
    ds: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    du: np.ndarray
    dv: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.dx, self.ds, self.dy, self.dz, self.du, self.dv])

    @classmethod
    def from_vector(cls, vec, n, m_e, m_i) -> "Direction":
        sizes = [n, m_i, m_e, m_i, n, m_i]
        parts = np.split(np.asarray(vec, dtype=float), np.cumsum(sizes)[:-1])
        return cls(*parts)

    def norm_inf(self) -> float:
        v = self.to_vector()
        return float(np.max(np.abs(v))) if v.size else 0.0


@dataclass
class KktRhs:
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray
    rbar1: np.ndarray
    rbar2: np.ndarray


@dataclass
class CondensedBlocks:
    D_x: np.ndarray
    D_s: np.ndarray
    C: np.ndarray
    D_H: np.ndarray
    K: SparseSymCsc
    H: sp.csr_matrix
    delta_w: float


def kkt_dims(P: NlpProblem) -> int:
    return 3 * P.m_i + 2 * P.n + P.m_e


class KktPoint:
    """Derivatives and diagonal blocks evaluated once at an iterate."""

    def __init__(self, P: NlpProblem, it: Iterate, _shared=None):
        self.P = P
        self.it = it
        if _shared is None:
            x = it.x
            _shared = dict(
                grad=P.grad(x), g=P.g(x), h=P.h(x),
                G=P.jac_g(x), H=P.jac_h(x), W=P.hess(x, it.y, it.z),
            )
        self._shared = _shared
        self.grad = _shared["grad"]
        self.g = _shared["g"]
        self.h = _shared["h"]
        self.G = _shared["G"]
        self.H = _shared["H"]
        self.W = _shared["W"]
        B = P.bounded
        self.B = B
        self.Dx = np.zeros(P.n)
        self.Dx[B] = it.u[B] / it.x[B]
        self.Ds = it.v / it.s
        sigma = self.Ds + it.delta_w
        self.C = 1.0 / (1.0 + it.delta_c * sigma)
        self.DH = sigma * self.C

    def regularized(self, delta_w: float, delta_c: float) -> "KktPoint":
        return KktPoint(self.P, self.it.replace(delta_w=delta_w, delta_c=delta_c), self._shared)

    @property
    def dims(self):
        return self.P.n, self.P.m_e, self.P.m_i

    # --- residuals ------------------------------------------------------

    def residual_F(self) -> Direction:
        it, B = self.it, self.B
        F1 = self.grad - np.where(B, it.u, 0.0)
        if self.P.m_e:
            F1 = F1 + self.G.T @ it.y
        if self.P.m_i:
            F1 = F1 + self.H.T @ it.z
        F5 = np.where(B, it.x * it.u - it.mu, it.u)
        return Direction(F1, it.z - it.v, self.g.copy(), self.h + it.s, F5, it.s * it.v - it.mu)

    def apply_K3(self, d: Direction) -> Direction:
        it, B = self.it, self.B
        dw, dc = it.delta_w, it.delta_c
        r1 = self.W @ d.dx + dw * d.dx - np.where(B, d.du, 0.0)
        if self.P.m_e:
            r1 = r1 + self.G.T @ d.dy
        if self.P.m_i:
            r1 = r1 + self.H.T @ d.dz
        r2 = dw * d.ds + d.dz - d.dv
        r3 = (self.G @ d.dx if self.P.m_e else np.zeros(0)) - dc * d.dy
        r4 = (self.H @ d.dx if self.P.m_i else np.zeros(0)) + d.ds - dc * d.dz
        r5 = np.where(B, it.u * d.dx + it.x * d.du, d.du)
        r6 = it.v * d.ds + it.s * d.dv
        return Direction(r1, r2, r3, r4, r5, r6)

    # --- reduction and recovery -----------------------------------------

    def reduce(self, F: Direction) -> KktRhs:
        it, B = self.it, self.B
        r1 = F.dx + np.where(B, F.du / np.where(B, it.x, 1.0), 0.0)
        r2 = F.ds + F.dv / it.s
        r3 = F.dy
        r4 = F.dz
        rbar1 = -r1
        if self.P.m_i:
            rbar1 = rbar1 - self.H.T @ (self.DH * r4 - self.C * r2)
        return KktRhs(r1, r2, r3, r4, rbar1, -r3)

    def recover_inequality(self, rhs: KktRhs, dx) -> tuple:
        if not self.P.m_i:
            return np.zeros(0), np.zeros(0)
        dz = -self.C * rhs.r2 + self.DH * (self.H @ dx + rhs.r4)
        ds = -(rhs.r2 + dz) / (self.Ds + self.it.delta_w)
        return ds, dz

    def expand(self, F: Direction, rhs: KktRhs, dx, dy) -> Direction:
        """Full direction from (dx, dy) of the condensed system."""
        it, B = self.it, self.B
        ds, dz = self.recover_inequality(rhs, dx)
        du = np.where(B, -(it.u * dx + F.du) / np.where(B, it.x, 1.0), -F.du)
        dv = -(it.v * ds + F.dv) / it.s
        return Direction(np.asarray(dx, dtype=float), ds, np.asarray(dy, dtype=float), dz, du, dv)

    # --- matrices -------------------------------------------------------

    def condensed_scipy(self, gamma: float = 0.0) -> sp.csr_matrix:
        """K (+ gamma G^T G) as a full symmetric scipy matrix."""
        n = self.P.n
        K = self.W + sp.diags(self.Dx + self.it.delta_w)
        if self.P.m_i:
            K = K + self.H.T @ sp.diags(self.DH) @ self.H
        if gamma and self.P.m_e:
            K = K + gamma * (self.G.T @ self.G)
        return sp.csr_matrix(K, shape=(n, n))

    def augmented_dense(self) -> np.ndarray:
        n, me, mi = self.dims
        it = self.it
        N = n + 2 * mi + me
        M = np.zeros((N, N))
        xs, ss, ys, zs = slice(0, n), slice(n, n + mi), slice(n + mi, n + mi + me), slice(n + mi + me, N)
        M[xs, xs] = self.W.toarray() + np.diag(self.Dx + it.delta_w)
        M[ss, ss] = np.diag(self.Ds + it.delta_w)
        if me:
            Gd = self.G.toarray()
            M[ys, xs] = Gd
            M[xs, ys] = Gd.T
            M[ys, ys] = -it.delta_c * np.eye(me)
        if mi:
            Hd = self.H.toarray()
            M[zs, xs] = Hd
            M[xs, zs] = Hd.T
            M[zs, ss] = np.eye(mi)
            M[ss, zs] = np.eye(mi)
            M[zs, zs] = -it.delta_c * np.eye(mi)
        return M


# --- structural patterns ----------------------------------------------------


def _ones(structure, shape):
    r, c = structure
    return sp.coo_matrix((np.ones(r.size), (r, c)), shape=shape).tocsr()


def _condensed_ones(P: NlpProblem, with_equalities: bool) -> sp.csr_matrix:
    n = P.n
    Wl = _ones(P.hess_structure, (n, n))
    S = Wl + Wl.T + sp.identity(n, format="csr")
    if P.m_i:
        H = _ones(P.ineq_jac_structure, (P.m_i, n))
        S = S + H.T @ H
    if with_equalities and P.m_e:
        G = _ones(P.eq_jac_structure, (P.m_e, n))
        S = S + G.T @ G
    return S.tocsr()


def condensed_pattern(P: NlpProblem, with_equalities: bool = False) -> SparseSymCsc:
    """Pattern of W + diag + H^T H (+ G^T G), from structures only."""
    return pattern_from_scipy(_condensed_ones(P, with_equalities))


def saddle_pattern(P: NlpProblem) -> SparseSymCsc:
    """Pattern of [[K, G^T], [G, -delta_c I]]."""
    G = _ones(P.eq_jac_structure, (P.m_e, P.n))
    S = sp.bmat([[_condensed_ones(P, False), G.T], [G, sp.identity(P.m_e)]], format="csr")
    return pattern_from_scipy(S)


# --- module-level operations -----------------------------------------------


def build_rhs(P: NlpProblem, it: Iterate) -> KktRhs:
    pt = KktPoint(P, it)
    return pt.reduce(pt.residual_F())


def assemble_condensed(P: NlpProblem, it: Iterate, pattern: SparseSymCsc | None = None) -> CondensedBlocks:
    pt = KktPoint(P, it)
    if pattern is None:
        pattern = condensed_pattern(P)
    K = pattern.with_values(values_on_pattern(pattern, pt.condensed_scipy()))
    return CondensedBlocks(pt.Dx, pt.Ds, pt.C, pt.DH, K, pt.H, it.delta_w)


def assemble_augmented(P: NlpProblem, it: Iterate, cap: int = 400) -> np.ndarray:
    size = P.n + 2 * P.m_i + P.m_e
    if size > cap:
        raise OracleTooLarge(f"augmented system of size {size} exceeds the oracle cap {cap}")
    return KktPoint(P, it).augmented_dense()


def apply_unreduced(P: NlpProblem, it: Iterate, d: Direction) -> Direction:
    """K3 d + F(w): zero exactly when d is the Newton direction."""
    pt = KktPoint(P, it)
    Kd = pt.apply_K3(d).to_vector()
    F = pt.residual_F().to_vector()
    n, me, mi = P.n, P.m_e, P.m_i
    return Direction.from_vector(Kd + F, n, me, mi)


def recover_inequality_steps(blocks: CondensedBlocks, rhs: KktRhs, dx) -> tuple:
    if blocks.C.size == 0:
        return np.zeros(0), np.zeros(0)
    dz = -blocks.C * rhs.r2 + blocks.D_H * (blocks.H @ dx + rhs.r4)
    ds = -(rhs.r2 + dz) / (blocks.D_s + blocks.delta_w)
    return ds, dz


def recover_bound_steps(it: Iterate, dx, ds, bounded=None) -> tuple:
    bounded = np.ones(it.x.size, dtype=bool) if bounded is None else bounded
    xs = np.where(bounded, it.x, 1.0)
    du = np.where(bounded, -(it.u * dx - it.mu) / xs - it.u, 0.0)
    dv = -(it.v * ds - it.mu) / it.s - it.v
    return du, dv
