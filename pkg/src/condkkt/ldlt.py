"""Simplicial LDL^T factorization without numerical pivoting.

The numeric phase is the up-looking row algorithm: row k of L is obtained
by a sparse triangular solve whose pattern is the reach of row k of A in
the elimination tree. Pivots are taken in plan order; nothing is swapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .ordering import amd_order, inverse_permutation
from .sparse import SparseSymCsc, StructuralError


class SingularSolveError(ArithmeticError):
    """A solve was attempted with a factor that has an exactly zero pivot."""


@dataclass(frozen=True)
class SymbolicPlan:
    n: int
    perm: np.ndarray
    pinv: np.ndarray
    etree: np.ndarray
    col_counts: np.ndarray
    lp: np.ndarray  # column pointers of strict lower L
    li: np.ndarray  # row indices of strict lower L (permuted numbering)
    row_patterns: list  # row k -> ascending columns j < k with L[k, j] != 0
    cp: np.ndarray  # permuted matrix, upper triangle by column
    ci: np.ndarray
    src: np.ndarray  # A.values[src] gives the permuted upper values
    a_col_ptr: np.ndarray
    a_row_idx: np.ndarray

    @property
    def nnz_l(self) -> int:
        return int(self.lp[-1])

    def matches(self, A: SparseSymCsc) -> bool:
        return (
            A.n == self.n
            and np.array_equal(A.col_ptr, self.a_col_ptr)
            and np.array_equal(A.row_idx, self.a_row_idx)
        )


@dataclass(frozen=True)
class LdltFactor:
    perm: np.ndarray
    etree: np.ndarray
    lp: np.ndarray
    li: np.ndarray
    lx: np.ndarray
    D: np.ndarray
    inertia: tuple
    pivot_floor: float
    zero_pivots: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.D.size

    @property
    def L(self) -> sp.csc_matrix:
        """Unit lower-triangular factor (permuted numbering)."""
        strict = sp.csc_matrix((self.lx, self.li, self.lp), shape=(self.n, self.n))
        return (strict + sp.identity(self.n, format="csc")).tocsc()

    def reconstruct(self) -> np.ndarray:
        """Dense L D L^T, to be compared with P A P^T."""
        L = self.L.toarray()
        return (L * self.D) @ L.T


def symbolic_analyze(A: SparseSymCsc, perm=None) -> SymbolicPlan:
    """Elimination tree, column counts and the pattern of L for P A P^T."""
    n = A.n
    perm = np.arange(n) if perm is None else np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise StructuralError("perm is not a permutation of 0..n-1")
    pinv = inverse_permutation(perm)

    cols = A.columns()
    a = pinv[A.row_idx]
    b = pinv[cols]
    up_col = np.maximum(a, b)
    up_row = np.minimum(a, b)
    order = np.lexsort((up_row, up_col))
    ci = up_row[order]
    cp = np.zeros(n + 1, dtype=np.int64)
    np.add.at(cp, up_col + 1, 1)
    cp = np.cumsum(cp)

    parent = np.full(n, -1, dtype=np.int64)
    flag = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    row_patterns = []
    ci_list = ci.tolist()
    cp_list = cp.tolist()
    par = parent.tolist()
    flg = flag.tolist()
    for k in range(n):
        flg[k] = k
        pattern = []
        for p in range(cp_list[k], cp_list[k + 1]):
            i = ci_list[p]
            if i >= k:
                continue
            while flg[i] != k:
                if par[i] == -1:
                    par[i] = k
                pattern.append(i)
                counts[i] += 1
                flg[i] = k
                i = par[i]
        pattern.sort()
        row_patterns.append(pattern)
    parent = np.array(par, dtype=np.int64)

    lp = np.zeros(n + 1, dtype=np.int64)
    lp[1:] = np.cumsum(counts)
    li = np.empty(lp[-1], dtype=np.int64)
    nxt = lp[:-1].copy()
    for k, pattern in enumerate(row_patterns):
        for j in pattern:
            li[nxt[j]] = k
            nxt[j] += 1

    return SymbolicPlan(
        n=n,
        perm=perm,
        pinv=pinv,
        etree=parent,
        col_counts=counts + 1,
        lp=lp,
        li=li,
        row_patterns=row_patterns,
        cp=cp,
        ci=ci,
        src=order,
        a_col_ptr=A.col_ptr.copy(),
        a_row_idx=A.row_idx.copy(),
    )


def default_pivot_floor(A: SparseSymCsc) -> float:
    dmax = float(np.max(np.abs(A.diagonal()))) if A.n else 0.0
    return 1e-12 * dmax if dmax > 0 else 1e-300


def ldlt_factorize(A: SparseSymCsc, plan: SymbolicPlan | None = None, pivot_floor=None) -> LdltFactor:
    """Numeric factorization P A P^T = L D L^T in plan order.

    An exactly zero pivot does not abort: its column of L is left at zero,
    the column is reported in ``zero_pivots`` (original numbering) and the
    inertia counts it as zero. Callers regularize and refactorize.
    """
    if plan is None:
        plan = symbolic_analyze(A, amd_order(A))
    elif not plan.matches(A):
        raise StructuralError("symbolic plan was built for a different pattern")
    if pivot_floor is None:
        pivot_floor = default_pivot_floor(A)

    n = plan.n
    cx = A.values[plan.src]
    cp = plan.cp.tolist()
    ci = plan.ci
    lp = plan.lp
    li = plan.li
    lp_list = lp.tolist()
    lx = np.zeros(plan.nnz_l)
    D = np.zeros(n)
    Y = np.zeros(n)
    nxt = lp_list[:-1].copy()
    zero = []
    for k in range(n):
        lo, hi = cp[k], cp[k + 1]
        Y[ci[lo:hi]] += cx[lo:hi]
        d = Y[k]
        Y[k] = 0.0
        for i in plan.row_patterns[k]:
            yi = Y[i]
            Y[i] = 0.0
            p0 = lp_list[i]
            p2 = nxt[i]
            if p2 > p0 and yi != 0.0:
                Y[li[p0:p2]] -= lx[p0:p2] * yi
            di = D[i]
            lki = yi / di if di != 0.0 else 0.0
            d -= lki * yi
            lx[p2] = lki
            nxt[i] = p2 + 1
        D[k] = d
        if d == 0.0:
            zero.append(int(plan.perm[k]))

    n_pos = int(np.count_nonzero(D > pivot_floor))
    n_neg = int(np.count_nonzero(D < -pivot_floor))
    return LdltFactor(
        perm=plan.perm,
        etree=plan.etree,
        lp=lp,
        li=li,
        lx=lx,
        D=D,
        inertia=(n_pos, n_neg, n - n_pos - n_neg),
        pivot_floor=float(pivot_floor),
        zero_pivots=tuple(zero),
    )


def ldlt_solve(F: LdltFactor, b: np.ndarray) -> np.ndarray:
    """Solve A x = b with forward sweep, diagonal scaling and backward sweep."""
    if F.zero_pivots or np.any(F.D == 0.0):
        raise SingularSolveError(f"zero pivot in column(s) {list(F.zero_pivots)}")
    b = np.asarray(b, dtype=float)
    if b.ndim == 2:
        return np.column_stack([ldlt_solve(F, b[:, j]) for j in range(b.shape[1])])
    x = b[F.perm].copy()
    lp = F.lp.tolist()
    li, lx = F.li, F.lx
    n = F.n
    for j in range(n):
        p0, p1 = lp[j], lp[j + 1]
        xj = x[j]
        if p1 > p0 and xj != 0.0:
            x[li[p0:p1]] -= lx[p0:p1] * xj
    x /= F.D
    for j in range(n - 1, -1, -1):
        p0, p1 = lp[j], lp[j + 1]
        if p1 > p0:
            x[j] -= lx[p0:p1] @ x[li[p0:p1]]
    out = np.empty(n)
    out[F.perm] = x
    return out


@dataclass
class RefinementReport:
    iterations: int
    residual_norm: float
    converged: bool
    diverged: bool = False
    history: list = field(default_factory=list)


def richardson_refine(
    apply_A: Callable[[np.ndarray], np.ndarray],
    F: Union[LdltFactor, Callable[[np.ndarray], np.ndarray]],
    b: np.ndarray,
    tol_abs: float = 0.0,
    tol_rel: float = 1e-14,
    max_iters: int = 10,
):
    """Iterate x <- x + F^{-1}(b - A x) starting from x = F^{-1} b.

    ``apply_A`` is the exact operator and may differ from the one ``F``
    approximates. Stops on the residual test
    ||b - A x||_inf <= tol_abs + tol_rel ||b||_inf, after ``max_iters``
    corrections, or after two corrections in a row that fail to reduce the
    residual. The best iterate seen is returned.
    """
    solve = (lambda r: ldlt_solve(F, r)) if isinstance(F, LdltFactor) else F
    b = np.asarray(b, dtype=float)
    bnorm = float(np.max(np.abs(b))) if b.size else 0.0
    target = tol_abs + tol_rel * bnorm
    if bnorm == 0.0:
        return np.zeros_like(b), RefinementReport(0, 0.0, True)

    x = solve(b)
    r = b - apply_A(x)
    rn = float(np.max(np.abs(r)))
    history = [rn]
    best_x, best_rn = x, rn
    its = 0
    stall = 0
    grew = 0
    diverged = False
    while rn > target and its < max_iters and np.isfinite(rn):
        x_new = x + solve(r)
        r_new = b - apply_A(x_new)
        rn_new = float(np.max(np.abs(r_new)))
        its += 1
        history.append(rn_new)
        if not np.isfinite(rn_new):
            diverged = True
            break
        if rn_new < best_rn:
            best_x, best_rn = x_new, rn_new
        if rn_new >= rn:
            stall += 1
            grew = grew + 1 if rn_new > rn else 0
        else:
            stall = 0
            grew = 0
        x, r, rn = x_new, r_new, rn_new
        if grew >= 2:
            diverged = True
            break
        if stall >= 2:
            break
    return best_x, RefinementReport(its, best_rn, best_rn <= target, diverged, history)
