"""Step computation: DirectK1, HyKKT, LiftedKKT and a dense K2 oracle.

Each strategy factorizes its reduced matrix under inertia control, solves
the reduced system, expands to a full (dx, ds, dy, dz, du, dv) direction and
refines it by Richardson iterations on the unreduced system.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .kkt import (
    Direction,
    Iterate,
    KktPoint,
    KktRhs,
    condensed_pattern,
    saddle_pattern,
)
from .krylov import CgBreakdown, CgReport, LinearOperator, cg_solve
from .ldlt import (
    LdltFactor,
    RefinementReport,
    default_pivot_floor,
    ldlt_factorize,
    ldlt_solve,
    richardson_refine,
    symbolic_analyze,
)
from .nlp import NlpProblem, lift_problem
from .ordering import amd_order
from .sparse import values_on_pattern

DELTA_W_MAX = 1e40
DELTA_C_BAR = 1e-8
KAPPA_C = 0.25
REFINE_MAX_ITERS = 10


class StrategyFailure(RuntimeError):
    pass


def krylov_tolerance(mu: float) -> float:
    """Absolute precision asked of the linear solve at barrier mu."""
    return min(1e-8, 1e-2 * mu)


@dataclass
class StepResult:
    direction: Direction
    refinement: RefinementReport
    cg: Optional[CgReport]
    inertia_corrections: int
    residual_unreduced: float
    delta_w: float = 0.0
    delta_c: float = 0.0
    cg_iterations: int = 0
    degraded: bool = False
    gamma: Optional[float] = None
    inertia: tuple = ()


class _DenseFactor:
    """LU of a dense matrix with eigenvalue inertia (oracle only)."""

    def __init__(self, M: np.ndarray, delta_c: float = 0.0):
        self.M = M
        lam = np.linalg.eigvalsh(M)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(lam)))) if lam.size else 0.0
        if delta_c > 0:
            floor = min(floor, 0.5 * delta_c)
        self.inertia = (int(np.sum(lam > floor)), int(np.sum(lam < -floor)), int(np.sum(np.abs(lam) <= floor)))
        self.zero_pivots = ()
        self.lu = sla.lu_factor(M) if self.inertia[2] == 0 and M.size else None

    def solve(self, b):
        return sla.lu_solve(self.lu, b) if b.size else b.copy()


class KktStrategy:
    """Common inertia-control and refinement machinery."""

    kind = "base"
    positive_definite = True  # target inertia (n, 0, 0) on the factorized matrix
    uses_delta_c = False

    def __init__(self):
        self.timers = defaultdict(float)
        self._plan = None
        self._pattern = None
        self._problem = None
        self._in_cg = False

    # --- problem transformation (identity except for LiftedKKT) ----------

    def working_problem(self, P: NlpProblem) -> NlpProblem:
        return P

    def original_multipliers(self, P: NlpProblem, it: Iterate):
        """(y, z) of the original problem from a working-problem iterate."""
        return it.y, it.z

    # --- hooks ----------------------------------------------------------

    def target_inertia(self, P: NlpProblem) -> tuple:
        return (P.n, 0, 0)

    def _build_pattern(self, P):
        return condensed_pattern(P)

    def _ordering(self, P, pattern):
        return amd_order(pattern)

    def _matrix(self, pt: KktPoint):
        return pt.condensed_scipy()

    def _solve_reduced(self, pt: KktPoint, fac, rhs: KktRhs, stats):
        dx = self._backsolve(fac, rhs.rbar1)
        return dx, np.zeros(0)

    # --- factorization with inertia correction -----------------------------

    def _ensure_plan(self, P):
        if self._problem is not P:
            t0 = time.perf_counter()
            self._pattern = self._build_pattern(P)
            self._plan = symbolic_analyze(self._pattern, self._ordering(P, self._pattern))
            self._problem = P
            self.timers["analysis"] += time.perf_counter() - t0

    def _factor(self, pt: KktPoint):
        t0 = time.perf_counter()
        A = self._matrix(pt)
        if not np.all(np.isfinite(A.data)):
            raise StrategyFailure("non-finite entries in the KKT matrix")
        K = self._pattern.with_values(values_on_pattern(self._pattern, A))
        t1 = time.perf_counter()
        F = ldlt_factorize(K, self._plan, self._pivot_floor(K, pt))
        self.timers["assembly"] += t1 - t0
        self.timers["factorization"] += time.perf_counter() - t1
        return F

    def _pivot_floor(self, K, pt):
        if self.positive_definite:
            # K_gamma and K_tau carry entries of size gamma or 1/tau next to an
            # O(1) reduced Hessian; only the roundoff level of the largest
            # column makes a positive pivot untrustworthy.
            dmax = float(np.max(np.abs(K.diagonal()))) if K.n else 0.0
            return 1e-15 * dmax if dmax > 0 else 1e-300
        # a relative floor alone would hide pivots of size delta_c in the
        # dual block once the primal diagonal grows large
        floor = default_pivot_floor(K)
        dc = pt.it.delta_c
        return min(floor, 0.5 * dc) if dc > 0 else floor

    def _backsolve(self, fac, b):
        t0 = time.perf_counter()
        out = fac.solve(b) if isinstance(fac, _DenseFactor) else ldlt_solve(fac, b)
        if not self._in_cg:
            self.timers["backsolve"] += time.perf_counter() - t0
        return out

    def factorize_with_correction(self, pt0: KktPoint):
        """Return (regularized point, factor, number of corrections)."""
        P = pt0.P
        self._ensure_plan(P)
        target = self.target_inertia(P)
        mu = pt0.it.mu
        w_norm = float(abs(pt0.W).sum(axis=1).max()) if P.n else 0.0
        delta_bar = 1e-4 * max(1.0, w_norm)
        dw, dc = 0.0, 0.0
        corrections = 0
        while True:
            pt = pt0.regularized(dw, dc)
            fac = self._factor(pt)
            if fac.inertia == target:
                return pt, fac, corrections
            corrections += 1
            if self.uses_delta_c and fac.inertia[2] > 0 and dc == 0.0:
                dc = DELTA_C_BAR * mu**KAPPA_C
            if dw == 0.0:
                dw = delta_bar
            elif dw == delta_bar:
                dw *= 100.0
            else:
                dw *= 10.0
            if dw > DELTA_W_MAX:
                raise StrategyFailure(
                    f"{self.kind}: inertia {fac.inertia} != {target} after regularization up to {DELTA_W_MAX:g}"
                )

    # --- full step --------------------------------------------------------

    def _refined(self, pt: KktPoint, fac, stats):
        n, me, mi = pt.dims
        F = pt.residual_F()
        b = -F.to_vector()

        def approx(r):
            Fr = Direction.from_vector(-r, n, me, mi)
            rhs = pt.reduce(Fr)
            dx, dy = self._solve_reduced(pt, fac, rhs, stats)
            return pt.expand(Fr, rhs, dx, dy).to_vector()

        def apply(d):
            return pt.apply_K3(Direction.from_vector(d, n, me, mi)).to_vector()

        eps = krylov_tolerance(pt.it.mu)
        d, rep = richardson_refine(apply, approx, b, tol_abs=eps, tol_rel=1e-14, max_iters=REFINE_MAX_ITERS)
        return Direction.from_vector(d, n, me, mi), rep, eps

    def compute_step(self, P: NlpProblem, it: Iterate) -> StepResult:
        t_start = time.perf_counter()
        t0 = time.perf_counter()
        pt0 = KktPoint(P, it.replace(delta_w=0.0, delta_c=0.0))
        self.timers["assembly"] += time.perf_counter() - t0
        total_corr = 0
        attempt = 0
        while True:
            pt, fac, corr = self.factorize_with_correction(pt0)
            total_corr += corr
            stats = {"cg_iterations": 0, "cg_failed": False, "last": None}
            d, rep, _ = self._refined(pt, fac, stats)
            if stats["cg_failed"] and attempt == 0 and self._escalate():
                attempt += 1
                continue
            break
        if not np.all(np.isfinite(d.to_vector())):
            raise StrategyFailure(f"{self.kind}: non-finite direction")
        res = float(np.max(np.abs(pt.apply_K3(d).to_vector() + pt.residual_F().to_vector())))
        self.timers["linsol"] += time.perf_counter() - t_start
        return StepResult(
            direction=d,
            refinement=rep,
            cg=stats["last"],
            inertia_corrections=total_corr,
            residual_unreduced=res,
            delta_w=pt.it.delta_w,
            delta_c=pt.it.delta_c,
            cg_iterations=stats["cg_iterations"],
            degraded=bool(stats["cg_failed"] or not rep.converged),
            gamma=getattr(self, "gamma", None),
            inertia=fac.inertia,
        )

    def _escalate(self) -> bool:
        return False

    def describe(self) -> str:
        return self.kind


class DirectK1(KktStrategy):
    """Factorize [[K, G^T], [G, -delta_c I]] directly."""

    kind = "k1"
    positive_definite = False
    uses_delta_c = True

    def target_inertia(self, P):
        return (P.n, P.m_e, 0)

    def _build_pattern(self, P):
        return saddle_pattern(P) if P.m_e else condensed_pattern(P)

    def _ordering(self, P, pattern):
        return amd_order(pattern, last=range(P.n, P.n + P.m_e))

    def _matrix(self, pt):
        K = pt.condensed_scipy()
        me = pt.P.m_e
        if not me:
            return K
        return sp.bmat(
            [[K, pt.G.T], [pt.G, -pt.it.delta_c * sp.identity(me)]], format="csr"
        )

    def _solve_reduced(self, pt, fac, rhs, stats):
        n = pt.P.n
        sol = self._backsolve(fac, np.concatenate([rhs.rbar1, rhs.rbar2]))
        return sol[:n], sol[n:]


class HyKkt(KktStrategy):
    """K_gamma = K + gamma G^T G by LDL^T, equality duals by CG on the Schur complement."""

    kind = "hykkt"

    def __init__(self, gamma: float = 1e7, cg_max_iters: Optional[int] = None):
        super().__init__()
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)
        self.cg_max_iters = cg_max_iters

    def _build_pattern(self, P):
        return condensed_pattern(P, with_equalities=True)

    def _matrix(self, pt):
        return pt.condensed_scipy(self.gamma)

    def _solve_reduced(self, pt, fac, rhs, stats):
        G = pt.G
        me = pt.P.m_e
        g = self.gamma
        b = rhs.rbar1 + g * (G.T @ rhs.rbar2) if me else rhs.rbar1
        if not me:
            return self._backsolve(fac, b), np.zeros(0)
        Kb = self._backsolve(fac, b)
        t0 = time.perf_counter()
        self._in_cg = True
        try:
            S = LinearOperator(me, lambda w: G @ ldlt_solve(fac, G.T @ w))
            # Schur eigenvalues are O(1/gamma): the stopping test is posed on
            # gamma * residual, which is the residual it induces in K3.
            tol_abs = krylov_tolerance(pt.it.mu) / g
            max_it = self.cg_max_iters or max(100, 2 * me)
            dy, rep = cg_solve(S, G @ Kb - rhs.rbar2, tol_abs=tol_abs, tol_rel=1e-12, max_iters=max_it)
        except CgBreakdown as exc:
            dy, rep = np.zeros(me), CgReport(exc.iteration, float("inf"), False)
        finally:
            self._in_cg = False
            self.timers["cg"] += time.perf_counter() - t0
        stats["cg_iterations"] += rep.iterations
        stats["last"] = rep
        if not rep.converged:
            stats["cg_failed"] = True
        dx = self._backsolve(fac, b - G.T @ dy)
        return dx, dy

    def _escalate(self):
        self.gamma *= 10.0
        return True

    def describe(self):
        return f"hykkt(gamma={self.gamma:g})"


class LiftedKkt(KktStrategy):
    """Relax g = 0 to |g| <= tau and factorize the positive definite K_tau."""

    kind = "lifted"

    def __init__(self, tau: float = 1e-8):
        super().__init__()
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)
        self._lifted = {}

    def working_problem(self, P):
        key = id(P)
        if key not in self._lifted:
            self._lifted[key] = (P, lift_problem(P, self.tau))
        return self._lifted[key][1]

    def original_multipliers(self, P, it):
        me = P.m_e
        if not me:
            return it.y, it.z
        return it.z[:me] - it.z[me : 2 * me], it.z[2 * me :]

    def describe(self):
        return f"lifted(tau={self.tau:g})"


class DenseK2Oracle(KktStrategy):
    """Dense augmented system with eigenvalue inertia; a test reference."""

    kind = "oracle"
    positive_definite = False
    uses_delta_c = True
    cap = 400

    def target_inertia(self, P):
        return (P.n + P.m_i, P.m_e + P.m_i, 0)

    def _ensure_plan(self, P):
        size = P.n + 2 * P.m_i + P.m_e
        if size > self.cap:
            from .kkt import OracleTooLarge

            raise OracleTooLarge(f"augmented system of size {size} exceeds the oracle cap {self.cap}")

    def _factor(self, pt):
        t0 = time.perf_counter()
        M = pt.augmented_dense()
        if not np.all(np.isfinite(M)):
            raise StrategyFailure("non-finite entries in the KKT matrix")
        t1 = time.perf_counter()
        fac = _DenseFactor(M, pt.it.delta_c)
        self.timers["assembly"] += t1 - t0
        self.timers["factorization"] += time.perf_counter() - t1
        return fac

    def _solve_reduced(self, pt, fac, rhs, stats):
        n, me, mi = pt.dims
        sol = self._backsolve(fac, -np.concatenate([rhs.r1, rhs.r2, rhs.r3, rhs.r4]))
        return sol[:n], sol[n + mi : n + mi + me]


STRATEGIES = {"k1": DirectK1, "hykkt": HyKkt, "lifted": LiftedKkt, "oracle": DenseK2Oracle}


def make_strategy(kind: str, gamma: Optional[float] = None, tau: Optional[float] = None, tol: float = 1e-8):
    if kind not in STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}; choose from {', '.join(STRATEGIES)}")
    if gamma is not None and kind != "hykkt":
        raise ValueError("gamma only applies to the hykkt strategy")
    if tau is not None and kind != "lifted":
        raise ValueError("tau only applies to the lifted strategy")
    if kind == "hykkt":
        return HyKkt(1e7 if gamma is None else gamma)
    if kind == "lifted":
        return LiftedKkt(tol if tau is None else tau)
    return STRATEGIES[kind]()


# --- functional entry points ------------------------------------------------


def compute_step(S: KktStrategy, P: NlpProblem, it: Iterate) -> StepResult:
    return S.compute_step(P, it)


def hykkt_step(P: NlpProblem, it: Iterate, gamma: float = 1e7, cg_max_iters=None) -> StepResult:
    return HyKkt(gamma, cg_max_iters).compute_step(P, it)


def lifted_step(P_lifted: NlpProblem, it: Iterate, tau: float) -> StepResult:
    """One LiftedKKT step on an already lifted problem (see ``lift_problem``)."""
    if P_lifted.m_e:
        raise ValueError("lifted_step expects a problem without equalities; lift it first")
    return LiftedKkt(tau).compute_step(P_lifted, it)


def inertia_correction(S: KktStrategy, P: NlpProblem, it: Iterate):
    """Return (delta_w, delta_c, factor) accepted by the inertia test."""
    pt, fac, _ = S.factorize_with_correction(KktPoint(P, it.replace(delta_w=0.0, delta_c=0.0)))
    return pt.it.delta_w, pt.it.delta_c, fac
