import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from implicitdpc import linalg
from implicitdpc.errors import DimensionError, NumericalError, PreconditionError


def _random_rank(rng, rows, cols, r):
    return rng.standard_normal((rows, r)) @ rng.standard_normal((r, cols))


def test_pinv_identity_and_zero():
    assert np.array_equal(linalg.pinv(np.eye(3)), np.eye(3))
    assert np.array_equal(linalg.pinv(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pinv_penrose_full_row_rank(rng):
    M = rng.standard_normal((3, 5))
    P = linalg.pinv(M)
    assert np.abs(M @ P @ M - M).max() <= 1e-10
    assert np.abs(P @ M @ P - P).max() <= 1e-10
    assert np.abs((M @ P).T - M @ P).max() <= 1e-10
    assert np.abs((P @ M).T - P @ M).max() <= 1e-10


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_pinv_penrose_any_rank(rows, cols, seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, min(rows, cols) + 1))
    M = _random_rank(rng, rows, cols, r)
    P = linalg.pinv(M)
    s = max(1.0, np.linalg.norm(M, 2), np.linalg.norm(P, 2))
    tol = 1e-10 * s**3
    assert np.abs(M @ P @ M - M).max() <= tol
    assert np.abs(P @ M @ P - P).max() <= tol
    assert np.abs((M @ P).T - M @ P).max() <= tol
    assert np.abs((P @ M).T - P @ M).max() <= tol


def test_pinv_rejects_nonfinite():
    with pytest.raises(PreconditionError):
        linalg.pinv(np.array([[1.0, np.nan]]))


def test_kernel_projector_examples():
    assert np.abs(linalg.kernel_projector(np.array([[2.0, 1.0], [0.0, 3.0]]))).max() <= 1e-14
    assert np.array_equal(linalg.kernel_projector(np.array([[1.0, 0.0]])), np.diag([0.0, 1.0]))


def test_kernel_projector_axioms(rng):
    M = rng.standard_normal((3, 6))
    P = linalg.kernel_projector(M)
    assert np.abs(P @ P - P).max() <= 1e-10
    assert np.abs(P - P.T).max() <= 1e-10
    assert np.abs(M @ P).max() <= 1e-10
    assert abs(np.trace(P) - 3) <= 1e-10


@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 10_000))
def test_kernel_projector_trace(rows, extra, seed):
    M = np.random.default_rng(seed).standard_normal((rows, rows + extra))
    P = linalg.kernel_projector(M)
    assert abs(np.trace(P) - extra) <= 1e-10
    assert np.abs(M @ P).max() <= 1e-10 * max(1.0, np.linalg.norm(M))


def test_kernel_projector_rank_deficient_names_block():
    with pytest.raises(PreconditionError, match="Z_block"):
        linalg.kernel_projector(np.ones((2, 3)), name="Z_block")


def test_solve_spd_examples():
    b = np.array([3.0, -1.0])
    assert np.array_equal(linalg.solve_spd(np.eye(2), b), b)
    assert np.allclose(linalg.solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0], atol=0)


def test_solve_spd_matches_pinv(rng):
    A = rng.standard_normal((5, 5))
    H = A @ A.T + 0.5 * np.eye(5)
    b = rng.standard_normal(5)
    x = linalg.solve_spd(H, b)
    assert np.linalg.norm(H @ x - b) <= 1e-9 * np.linalg.norm(b)
    assert np.linalg.norm(x - linalg.pinv(H) @ b) <= 1e-9 * np.linalg.norm(x)


def test_solve_spd_errors():
    with pytest.raises(NumericalError, match="pivot 2"):
        linalg.solve_spd(np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(PreconditionError):
        linalg.solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(DimensionError):
        linalg.solve_spd(np.eye(2), np.ones(3))


def test_numerical_rank_examples(rng):
    assert linalg.numerical_rank(np.eye(4)) == 4
    assert linalg.numerical_rank(np.outer(rng.standard_normal(4), rng.standard_normal(3))) == 1


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_numerical_rank_invariances(rows, cols, seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, min(rows, cols) + 1))
    M = _random_rank(rng, rows, cols, r)
    assert linalg.numerical_rank(M) == r
    perm = M[rng.permutation(rows)][:, rng.permutation(cols)]
    assert linalg.numerical_rank(perm) == r
    Q1, _ = np.linalg.qr(rng.standard_normal((rows, rows)))
    Q2, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    assert linalg.numerical_rank(Q1 @ M @ Q2) == r


def test_null_space_is_orthonormal_kernel(rng):
    M = _random_rank(rng, 3, 6, 2)
    N = linalg.null_space(M)
    assert N.shape == (6, 4)
    assert np.abs(M @ N).max() <= 1e-12
    assert np.abs(N.T @ N - np.eye(4)).max() <= 1e-12
