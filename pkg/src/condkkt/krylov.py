"""Unpreconditioned conjugate gradient on an abstract operator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class CgBreakdown(ArithmeticError):
    def __init__(self, iteration: int, reason: str):
        super().__init__(f"CG breakdown at iteration {iteration}: {reason}")
        self.iteration = iteration


@dataclass(frozen=True)
class LinearOperator:
    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, M) -> "LinearOperator":
        return cls(M.shape[0], lambda v: M @ v)


@dataclass
class CgReport:
    iterations: int
    final_residual_norm: float
    converged: bool


def cg_solve(S: LinearOperator, b, tol_abs=1e-10, tol_rel=1e-12, max_iters=None):
    """Solve S y = b for symmetric positive definite S, starting from y = 0.

    Converged when ||b - S y||_2 <= tol_abs + tol_rel ||b||_2. The residual
    is the recursively updated one. A non-finite value or a non-positive
    curvature p^T S p raises CgBreakdown.
    """
    b = np.asarray(b, dtype=float)
    n = S.dim
    if max_iters is None:
        max_iters = max(2 * n, 10)
    y = np.zeros(n)
    r = b.copy()
    rr = float(r @ r)
    target = tol_abs + tol_rel * np.sqrt(rr)
    if not np.isfinite(rr):
        raise CgBreakdown(0, "non-finite right-hand side")
    if np.sqrt(rr) <= target:
        return y, CgReport(0, float(np.sqrt(rr)), True)
    p = r.copy()
    k = 0
    while k < max_iters:
        Sp = S.apply(p)
        curv = float(p @ Sp)
        k += 1
        if not np.isfinite(curv):
            raise CgBreakdown(k, "non-finite operator output")
        if curv <= 0.0:
            raise CgBreakdown(k, f"non-positive curvature {curv:.3e}")
        alpha = rr / curv
        y += alpha * p
        r -= alpha * Sp
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise CgBreakdown(k, "non-finite residual")
        if np.sqrt(rr_new) <= target:
            return y, CgReport(k, float(np.sqrt(rr_new)), True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return y, CgReport(k, float(np.sqrt(rr)), False)
