import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from condkkt.sparse import (
    StructuralError,
    csc_from_triplets,
    from_scipy,
    from_triplet_list,
    locate,
    mm_read,
    mm_write,
    pattern_from_scipy,
    values_on_pattern,
)


def check_invariants(A):
    assert A.col_ptr[0] == 0 and A.col_ptr[-1] == A.nnz
    assert np.all(np.diff(A.col_ptr) >= 0)
    for j in range(A.n):
        r = A.row_idx[A.col_ptr[j]:A.col_ptr[j + 1]]
        assert np.all(r >= j)
        assert np.all(np.diff(r) > 0)


def test_singleton():
    A = from_triplet_list(1, [(0, 0, 2.0)])
    assert A.to_dense().tolist() == [[2.0]]


def test_mirror_and_sum():
    A = from_triplet_list(2, [(0, 0, 1), (1, 0, 3), (0, 1, 4)])
    assert A.nnz == 2
    assert A.row_idx.tolist() == [0, 1]
    assert A.values.tolist() == [1.0, 7.0]


def test_random_triplets_match_dense_accumulation(rng):
    n = 3
    entries = [(int(rng.integers(n)), int(rng.integers(n)), float(rng.standard_normal())) for _ in range(10)]
    A = from_triplet_list(n, entries)
    oracle = np.zeros((n, n))
    for i, j, v in entries:
        lo, hi = max(i, j), min(i, j)
        oracle[lo, hi] += v
    oracle = np.tril(oracle) + np.tril(oracle, -1).T
    check_invariants(A)
    assert np.allclose(A.to_dense(), oracle, atol=1e-15)


@pytest.mark.parametrize("entry", [(3, 0, 1.0), (0, -1, 1.0)])
def test_out_of_range(entry):
    with pytest.raises(StructuralError):
        from_triplet_list(3, [entry])


def test_mismatched_lengths():
    with pytest.raises(StructuralError):
        csc_from_triplets(2, [0, 1], [0], [1.0, 2.0])


@given(
    st.integers(1, 8).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                               st.floats(-10, 10, allow_nan=False)), max_size=30),
        )
    )
)
def test_triplet_invariants(args):
    n, entries = args
    A = from_triplet_list(n, entries)
    check_invariants(A)
    D = A.to_dense()
    assert np.array_equal(D, D.T)
    x = np.arange(1.0, n + 1)
    assert np.allclose(A.matvec(x), D @ x)
    assert np.allclose(A.to_scipy().toarray(), D)


def test_diagonal_and_norm(rng):
    M = rng.standard_normal((5, 5))
    M = M + M.T
    A = from_scipy(M)
    assert np.allclose(A.diagonal(), np.diag(M))
    assert np.isclose(A.norm_inf(), np.abs(M).sum(axis=1).max())


def test_pattern_and_scatter():
    M = sp.csr_matrix(np.array([[2.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 3.0]]))
    P = pattern_from_scipy(M)
    assert np.all(P.values == 0)
    assert locate(P, [1], [1])[0] >= 0  # diagonal slot always present
    assert locate(P, [2], [0])[0] == -1
    vals = values_on_pattern(P, M)
    assert np.allclose(P.with_values(vals).to_dense(), M.toarray())
    with pytest.raises(StructuralError):
        values_on_pattern(P, sp.csr_matrix(np.ones((3, 3))))


def test_with_values_shape():
    A = from_triplet_list(2, [(0, 0, 1.0)])
    with pytest.raises(StructuralError):
        A.with_values(np.ones(3))


def test_immutable():
    A = from_triplet_list(2, [(0, 0, 1.0)])
    with pytest.raises(ValueError):
        A.values[0] = 5.0


def test_matrix_market_roundtrip(tmp_path, rng):
    M = rng.standard_normal((6, 6))
    M[np.abs(M) < 0.8] = 0
    M = M + M.T
    A = from_scipy(M)
    path = tmp_path / "a.mtx"
    mm_write(path, A, comment="fixture")
    assert "symmetric" in path.read_text().splitlines()[0]
    B = mm_read(path)
    assert np.allclose(B.to_dense(), A.to_dense())
