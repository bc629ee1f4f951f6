"""Lower-triangular CSC storage for symmetric matrices.

All indices are 0-based. Only the lower triangle (diagonal included) is
stored; the upper triangle is implied by symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp


class StructuralError(ValueError):
    """Raised when indices or dimensions are inconsistent."""


@dataclass(frozen=True)
class SparseSymCsc:
    n: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("col_ptr", "row_idx", "values"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])

    def columns(self) -> np.ndarray:
        """Column index of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.col_ptr))

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        cols = self.columns()
        on_diag = self.row_idx == cols
        d[cols[on_diag]] = self.values[on_diag]
        return d

    def with_values(self, values: np.ndarray) -> "SparseSymCsc":
        values = np.array(values, dtype=float)
        if values.shape != self.row_idx.shape:
            raise StructuralError("value array does not match the pattern")
        return SparseSymCsc(self.n, self.col_ptr, self.row_idx, values)

    def to_scipy(self) -> sp.csc_matrix:
        """Full symmetric matrix (both triangles) as scipy CSC."""
        lower = sp.csc_matrix((self.values, self.row_idx, self.col_ptr), shape=(self.n, self.n))
        strict = sp.tril(lower, k=-1)
        return (lower + strict.T).tocsc()

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        cols = self.columns()
        A[self.row_idx, cols] = self.values
        A[cols, self.row_idx] = self.values
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = self.columns()
        y = np.zeros(self.n)
        np.add.at(y, self.row_idx, self.values * x[cols])
        off = self.row_idx != cols
        np.add.at(y, cols[off], self.values[off] * x[self.row_idx[off]])
        return y

    def norm_inf(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.to_scipy()).sum(axis=1)))


def csc_from_triplets(n: int, rows, cols, vals) -> SparseSymCsc:
    """Build a symmetric matrix from (row, col, value) triplets.

    Duplicates are summed and entries given in the upper triangle are
    mirrored into the lower one, so (0, 1, a) and (1, 0, b) both land on
    position (1, 0) with value a + b.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise StructuralError("triplet arrays must have equal length")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise StructuralError(f"triplet index out of range for dimension {n}")
    lo = np.maximum(rows, cols)
    hi = np.minimum(rows, cols)
    # scipy sums duplicates on conversion; explicit zeros survive (pattern is kept)
    mat = sp.coo_matrix((vals, (lo, hi)), shape=(n, n)).tocsc()
    mat.sum_duplicates()
    mat.sort_indices()
    return SparseSymCsc(
        n,
        mat.indptr.astype(np.int64),
        mat.indices.astype(np.int64),
        mat.data.astype(float),
    )


def from_triplet_list(n: int, entries) -> SparseSymCsc:
    entries = list(entries)
    if not entries:
        return csc_from_triplets(n, [], [], [])
    r, c, v = zip(*entries)
    return csc_from_triplets(n, r, c, v)


def from_scipy(A) -> SparseSymCsc:
    """Take the lower triangle of a (symmetric) scipy or dense matrix."""
    A = sp.coo_matrix(A)
    keep = A.row >= A.col
    return csc_from_triplets(A.shape[0], A.row[keep], A.col[keep], A.data[keep])


def pattern_from_scipy(A) -> SparseSymCsc:
    """Structural lower pattern of a scipy matrix, values set to zero."""
    A = sp.coo_matrix(A)
    keep = A.row >= A.col
    n = A.shape[0]
    # union with the diagonal so every column has a pivot slot
    r = np.concatenate([A.row[keep], np.arange(n)])
    c = np.concatenate([A.col[keep], np.arange(n)])
    P = csc_from_triplets(n, r, c, np.ones(r.size))
    return P.with_values(np.zeros(P.nnz))


def locate(pattern: SparseSymCsc, rows, cols) -> np.ndarray:
    """Storage positions of lower-triangle entries (row >= col); -1 when absent."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keys = pattern.columns() * pattern.n + pattern.row_idx  # sorted by construction
    want = cols * pattern.n + rows
    pos = np.searchsorted(keys, want)
    pos = np.minimum(pos, max(keys.size - 1, 0))
    found = keys.size > 0
    hit = (keys[pos] == want) if found else np.zeros(want.shape, dtype=bool)
    return np.where(hit, pos, -1)


def values_on_pattern(pattern: SparseSymCsc, A) -> np.ndarray:
    """Scatter the lower triangle of scipy matrix ``A`` onto ``pattern``.

    Nonzero entries of ``A`` outside the pattern raise StructuralError;
    pattern slots that ``A`` does not touch read as 0.
    """
    lower = sp.tril(sp.coo_matrix(A)).tocoo()
    pos = locate(pattern, lower.row, lower.col)
    missing = pos < 0
    if np.any(lower.data[missing] != 0.0):
        raise StructuralError("matrix has entries outside the fixed pattern")
    vals = np.zeros(pattern.nnz)
    np.add.at(vals, pos[~missing], lower.data[~missing])
    return vals


def mm_write(path, A: SparseSymCsc, comment: str = "") -> None:
    """Write as MatrixMarket coordinate symmetric."""
    lower = sp.coo_matrix(
        (A.values, (A.row_idx, A.columns())), shape=(A.n, A.n)
    )
    scipy.io.mmwrite(str(path), lower, comment=comment, symmetry="symmetric")


def mm_read(path) -> SparseSymCsc:
    M = scipy.io.mmread(str(path))
    return from_scipy(M)
