"""Dense spectral tooling for checking the conditioning of K_gamma at small scale.

Everything here densifies: inputs are capped at n <= 400. Inertia and
spectra of the sparse solver are cross-checked against dense eigenvalues,
and the HyKKT matrix K_gamma is split into a large cluster (equalities and
active constraints) and an O(1) cluster (their null space).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kkt import Iterate, KktPoint
from .ldlt import LdltFactor, default_pivot_floor, ldlt_factorize, ldlt_solve, symbolic_analyze
from .nlp import NlpProblem
from .ordering import amd_order
from .sparse import SparseSymCsc, pattern_from_scipy, values_on_pattern

DENSE_CAP = 400

SPECTRUM_COLUMNS = [
    "gamma", "xi", "ell", "lambda_1", "lambda_ell", "lambda_ell_plus_1", "lambda_n", "kappa2", "cg_iters",
]


class ContractError(ValueError):
    """Input violates a documented precondition (asymmetry, size, definiteness)."""


# --- dense eigenvalues ------------------------------------------------------


def _check_symmetric(A: np.ndarray, cap: int = DENSE_CAP) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > cap:
        raise ContractError(f"dimension {A.shape[0]} exceeds the dense cap {cap}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > 1e-12 * scale:
        raise ContractError(f"matrix is not symmetric (max asymmetry {asym:.2e})")
    return A


def jacobi_eigenvalues(A, tol: float = 1e-14, vectors: bool = False, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.

    Sweeps stop once the off-diagonal Frobenius norm is below tol * ||A||_F.
    With ``vectors=True`` returns (eigenvalues, V) with A V = V diag(eigenvalues).
    """
    A = _check_symmetric(A).copy()
    n = A.shape[0]
    V = np.eye(n)
    fro = float(np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, fro**2 - float(np.sum(np.diag(A) ** 2))))
        if off <= tol * fro or n < 2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    lam = np.diag(A).copy()
    order = np.argsort(-lam)
    if vectors:
        return lam[order], V[:, order]
    return lam[order]


def symmetric_eigenvalues(A, method: str = "lapack") -> np.ndarray:
    """Ascending eigenvalues; LAPACK by default, Jacobi on request."""
    A = _check_symmetric(A)
    if method == "jacobi":
        return np.sort(jacobi_eigenvalues(A))
    if method != "lapack":
        raise ValueError(f"unknown eigenvalue method {method!r}")
    return np.linalg.eigvalsh(A)


def dense_inertia(A, floor: Optional[float] = None, method: str = "lapack") -> tuple:
    """(n_pos, n_neg, n_zero) by eigenvalue signs; |lambda| <= floor counts as zero."""
    lam = symmetric_eigenvalues(A, method)
    if floor is None:
        floor = 1e-12 * max(1.0, float(np.max(np.abs(lam)))) if lam.size else 0.0
    return int(np.sum(lam > floor)), int(np.sum(lam < -floor)), int(np.sum(np.abs(lam) <= floor))


@dataclass
class InertiaAudit:
    sparse: tuple
    dense: tuple
    agree: bool
    eigenvalues: np.ndarray = field(repr=False)


def inertia_audit(A: SparseSymCsc, F: Optional[LdltFactor] = None, pivot_floor: Optional[float] = None) -> InertiaAudit:
    """Compare the LDL^T inertia of A with dense eigenvalue sign counts.

    Both sides use the same numerical-zero threshold.
    """
    floor = default_pivot_floor(A) if pivot_floor is None else pivot_floor
    if F is None:
        F = ldlt_factorize(A, symbolic_analyze(A, amd_order(A)), floor)
    lam = symmetric_eigenvalues(A.to_dense())
    dense = (int(np.sum(lam > floor)), int(np.sum(lam < -floor)), int(np.sum(np.abs(lam) <= floor)))
    return InertiaAudit(tuple(F.inertia), dense, tuple(F.inertia) == dense, lam)


# --- active set and spectra of K_gamma -----------------------------------------


@dataclass
class ActiveSetEstimate:
    active: np.ndarray  # indices into the inequality rows
    inactive: np.ndarray
    m_a: int
    active_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    xi: float = 0.0
    threshold: float = 0.0

    @property
    def size(self) -> int:
        """Active inequalities plus active bounds x_j = 0."""
        return self.m_a + int(self.active_bounds.size)


def _xi(P: NlpProblem, it: Iterate) -> float:
    B = P.bounded
    count = it.s.size + int(B.sum())
    return float(it.s @ it.v + it.x[B] @ it.u[B]) / count if count else 0.0


def estimate_active_set(P: NlpProblem, it: Iterate, theta: float = 1.0) -> ActiveSetEstimate:
    """Inequality i is active when s_i <= theta * sqrt(xi); same rule for bounded x_j."""
    xi = _xi(P, it)
    thr = theta * math.sqrt(xi)
    idx = np.arange(P.m_i)
    act = it.s <= thr
    bidx = np.flatnonzero(P.bounded)
    bact = bidx[it.x[bidx] <= thr]
    return ActiveSetEstimate(idx[act], idx[~act], int(act.sum()), bact, xi, thr)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # descending by magnitude
    ell: int
    sigma_lo: float
    sigma_hi: float
    kappa2: float
    gap_ratio: float
    gamma: float
    xi: float
    s_min: float
    s_max: float
    n: int
    m_e: int
    m_a: int
    small_cluster_band: tuple = (math.nan, math.nan)

    def lam(self, k: int) -> float:
        """1-based eigenvalue by magnitude rank; nan when out of range."""
        return float(self.eigenvalues[k - 1]) if 1 <= k <= self.n else math.nan

    def csv_row(self, cg_iters: int = 0) -> list:
        return [
            self.gamma, self.xi, self.ell, self.lam(1), self.lam(self.ell),
            self.lam(self.ell + 1), self.lam(self.n), self.kappa2, cg_iters,
        ]


def k_gamma_dense(P: NlpProblem, it: Iterate, gamma: float) -> np.ndarray:
    if P.n > DENSE_CAP:
        raise ContractError(f"n = {P.n} exceeds the dense cap {DENSE_CAP}")
    return KktPoint(P, it).condensed_scipy(gamma).toarray()


def spectrum_report(P: NlpProblem, it: Iterate, gamma: float, theta: float = 1.0) -> SpectrumReport:
    """Eigen-structure of K_gamma = K + gamma G^T G at an iterate."""
    Kg = k_gamma_dense(P, it, gamma)
    Kg = 0.5 * (Kg + Kg.T)
    lam = symmetric_eigenvalues(Kg)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    act = estimate_active_set(P, it, theta)
    ell = min(P.n, P.m_e + act.size)
    slacks = np.concatenate([it.s, it.x[P.bounded]])
    s_min = float(np.min(slacks)) if slacks.size else math.inf
    s_max = float(np.max(slacks)) if slacks.size else 0.0
    xi = act.xi
    g = gamma if P.m_e else 0.0
    inv_xi = 1.0 / xi if xi > 0 and act.size else 0.0
    lo_terms = [t for t in (inv_xi, g) if t > 0]
    sigma_lo = min(lo_terms) if lo_terms else math.nan
    sigma_hi = max(1.0 / s_min if s_min > 0 and math.isfinite(s_min) else 0.0, g)
    mags = np.abs(lam)
    kappa2 = float(mags[0] / mags[-1]) if lam.size and mags[-1] > 0 else math.inf
    if 0 < ell < P.n:
        gap = float(mags[ell - 1] / mags[ell]) if mags[ell] > 0 else math.inf
        small = mags[ell:]
        band = (float(np.min(small) / np.median(small)), float(np.max(small) / np.median(small)))
    else:
        gap, band = math.nan, (math.nan, math.nan)
    return SpectrumReport(lam, ell, sigma_lo, sigma_hi, kappa2, gap, float(gamma), xi, s_min, s_max,
                          P.n, P.m_e, act.size, band)


def _factor_k_gamma(P: NlpProblem, it: Iterate, gamma: float):
    A = KktPoint(P, it).condensed_scipy(gamma)
    pat = pattern_from_scipy(A)
    K = pat.with_values(values_on_pattern(pat, A))
    dmax = float(np.max(np.abs(K.diagonal()))) if K.n else 0.0
    F = ldlt_factorize(K, symbolic_analyze(K, amd_order(K)), 1e-15 * dmax if dmax > 0 else 1e-300)
    if F.inertia != (P.n, 0, 0):
        raise ContractError(f"K_gamma is not positive definite: inertia {F.inertia}")
    return F


def schur_matrix(P: NlpProblem, it: Iterate, gamma: float) -> np.ndarray:
    """Dense S_gamma = G K_gamma^{-1} G^T, one ldlt_solve per column."""
    if P.m_e > DENSE_CAP:
        raise ContractError(f"m_e = {P.m_e} exceeds the dense cap {DENSE_CAP}")
    if P.m_e == 0:
        return np.zeros((0, 0))
    F = _factor_k_gamma(P, it, gamma)
    G = P.jac_g(it.x)
    Gt = G.T.toarray()
    cols = [G @ ldlt_solve(F, Gt[:, j]) for j in range(P.m_e)]
    S = np.column_stack(cols)
    return 0.5 * (S + S.T)


def schur_spectrum(P: NlpProblem, it: Iterate, gamma: float) -> np.ndarray:
    """Ascending eigenvalues of S_gamma; empty without equalities."""
    S = schur_matrix(P, it, gamma)
    return symmetric_eigenvalues(S) if S.size else np.zeros(0)


def schur_clustering(eigs, gamma: float) -> float:
    """max_i |gamma lambda_i - 1|; 0 for an empty spectrum."""
    eigs = np.asarray(eigs, dtype=float)
    return float(np.max(np.abs(gamma * eigs - 1.0))) if eigs.size else 0.0


# --- perturbation experiments ----------------------------------------------------


@dataclass
class PerturbationReport:
    noise_scale: float
    target: str
    error: float  # ||dx~ - dx|| / ||dx||
    kappa2: float
    naive_bound: float  # kappa2 * noise_scale
    range_error: float  # component of the error in range(A^T), relative to ||dx||
    null_error: float  # component in null(A)
    active_rank: int


def _active_jacobian(P: NlpProblem, it: Iterate, theta: float) -> np.ndarray:
    act = estimate_active_set(P, it, theta)
    rows = []
    if P.m_e:
        rows.append(P.jac_g(it.x).toarray())
    if act.m_a:
        rows.append(P.jac_h(it.x).toarray()[act.active])
    if act.active_bounds.size:
        rows.append(np.eye(P.n)[act.active_bounds])
    return np.vstack(rows) if rows else np.zeros((0, P.n))


def _hykkt_dense(Kg, G, b, r2):
    """Exact HyKKT solve with a dense K_gamma: Schur system for dy, then dx."""
    if G.shape[0] == 0:
        return np.linalg.solve(Kg, b)
    KiGt = np.linalg.solve(Kg, G.T)
    S = G @ KiGt
    dy = np.linalg.solve(S, G @ np.linalg.solve(Kg, b) - r2)
    return np.linalg.solve(Kg, b - G.T @ dy)


def perturbation_probe(P: NlpProblem, it: Iterate, gamma: float, noise_scale: float,
                       seed: int = 0, target: str = "both", theta: float = 1.0) -> PerturbationReport:
    """Relative random noise on K_gamma values and/or the right-hand side.

    The step error is split along range(A^T) and null(A), A being the
    Jacobian of equalities plus estimated active constraints, from a dense SVD.
    """
    if target not in ("both", "matrix", "rhs"):
        raise ValueError("target must be 'both', 'matrix' or 'rhs'")
    rng = np.random.default_rng(seed)
    pt = KktPoint(P, it)
    Kg = pt.condensed_scipy(gamma).toarray()
    Kg = 0.5 * (Kg + Kg.T)
    rhs = pt.reduce(pt.residual_F())
    G = pt.G.toarray() if P.m_e else np.zeros((0, P.n))
    b = rhs.rbar1 + gamma * (G.T @ rhs.rbar2) if P.m_e else rhs.rbar1.copy()
    dx = _hykkt_dense(Kg, G, b, rhs.rbar2)

    Kt, bt = Kg, b
    if target in ("both", "matrix") and noise_scale:
        E = rng.uniform(-1.0, 1.0, Kg.shape)
        E = np.triu(E) + np.triu(E, 1).T
        Kt = Kg * (1.0 + noise_scale * E)
    if target in ("both", "rhs") and noise_scale:
        bt = b * (1.0 + noise_scale * rng.uniform(-1.0, 1.0, b.shape))
    dxt = _hykkt_dense(Kt, G, bt, rhs.rbar2) if noise_scale else dx

    err = dxt - dx
    scale = max(float(np.linalg.norm(dx)), 1e-300)
    A = _active_jacobian(P, it, theta)
    if A.size:
        _, sv, Vt = np.linalg.svd(A)
        rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0]))) if sv.size else 0
        Y = Vt[:rank].T
    else:
        rank, Y = 0, np.zeros((P.n, 0))
    e_range = Y @ (Y.T @ err)
    e_null = err - e_range
    lam = np.abs(symmetric_eigenvalues(Kg))
    kappa2 = float(lam.max() / lam.min()) if lam.size and lam.min() > 0 else math.inf
    return PerturbationReport(
        noise_scale, target, float(np.linalg.norm(err)) / scale, kappa2, kappa2 * noise_scale,
        float(np.linalg.norm(e_range)) / scale, float(np.linalg.norm(e_null)) / scale, rank,
    )


# --- late iterates --------------------------------------------------------------


def late_iterate(P: NlpProblem, strategy: str = "oracle", tol: float = 1e-10, max_iters: int = 200) -> Iterate:
    """Final iterate of a tight reference solve, regularization stripped.

    Its duality measure is about tol / 10 when the solve converges, far
    enough along for the cluster structure of K_gamma to be resolved.
    """
    from .ipm import IpmOptions, solve

    res = solve(P, IpmOptions(tol=tol, strategy=strategy, max_iters=max_iters))
    return res.iterate.replace(delta_w=0.0, delta_c=0.0)
