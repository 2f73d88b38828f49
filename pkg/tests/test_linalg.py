import numpy as np
import pytest

from sketchbench.errors import BadDims, EmptySet, RankDeficient
from sketchbench.linalg import (
    hausdorff_distance,
    qr_factor,
    random_orthonormal,
    singular_values,
    spiked_orthonormal,
)


def lev(U):
    return (U ** 2).sum(axis=1)


def test_qr_identity():
    Q, T = qr_factor(np.eye(3))
    assert np.allclose(Q, np.eye(3)) and np.allclose(T, np.eye(3))


def test_qr_orthogonal_columns():
    A = np.array([[2.0, 0], [0, 3], [0, 0]])
    Q, T = qr_factor(A)
    assert np.allclose(np.abs(Q), [[1, 0], [0, 1], [0, 0]])
    assert np.allclose(T, np.diag([2.0, 3.0]))


def test_qr_reconstruction_and_sign_convention():
    A = np.random.default_rng(1).standard_normal((50, 8))
    Q, T = qr_factor(A)
    assert np.linalg.norm(A - Q @ T) <= 1e-10 * np.linalg.norm(A)
    assert np.abs(Q.T @ Q - np.eye(8)).max() <= 1e-10
    assert np.all(np.diag(T) >= 0)
    assert np.allclose(T, np.triu(T))


def test_qr_rank_deficient():
    A = np.ones((5, 2))
    with pytest.raises(RankDeficient):
        qr_factor(A)


def test_qr_needs_tall():
    with pytest.raises(BadDims):
        qr_factor(np.ones((2, 3)))


def test_singular_values_diag_and_zero():
    A = np.zeros((4, 2))
    A[0, 0], A[1, 1] = 3, 1
    assert np.allclose(singular_values(A), [1, 3])
    assert np.allclose(singular_values(np.zeros((3, 4))), 0)
    assert singular_values(np.zeros((3, 4))).size == 4


def test_singular_values_determinant_oracle():
    A = np.random.default_rng(2).standard_normal((30, 5))
    s = singular_values(A)
    det = np.linalg.det(A.T @ A)
    assert abs(np.prod(s ** 2) - det) <= 1e-8 * det
    ev = np.sort(np.linalg.eigvalsh(A.T @ A))
    assert np.allclose(s ** 2, ev, rtol=1e-8)


def test_orthonormal_spectrum_is_ones():
    U = random_orthonormal(40, 6, 3)
    assert np.abs(singular_values(U) - 1).max() <= 1e-8


@pytest.mark.parametrize("a,b,want", [([1, 2, 3], [1, 2, 3], 0.0), ([0], [1], 1.0), ([0, 2], [1], 1.0)])
def test_hausdorff_examples(a, b, want):
    assert hausdorff_distance(a, b) == want


def test_hausdorff_empty():
    with pytest.raises(EmptySet):
        hausdorff_distance([], [1.0])


def test_hausdorff_symmetric_and_triangle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b, c = (rng.standard_normal(rng.integers(1, 8)) for _ in range(3))
        assert hausdorff_distance(a, b) == hausdorff_distance(b, a)
        assert hausdorff_distance(a, c) <= hausdorff_distance(a, b) + hausdorff_distance(b, c) + 1e-12


def test_hausdorff_matches_bruteforce():
    rng = np.random.default_rng(6)
    for _ in range(30):
        a, b = rng.standard_normal(7), rng.standard_normal(4)
        D = np.abs(a[:, None] - b[None, :])
        assert np.isclose(hausdorff_distance(a, b), max(D.min(1).max(), D.min(0).max()))


def test_random_orthonormal_cases():
    U = random_orthonormal(4, 4, 0)
    assert np.abs(U.T @ U - np.eye(4)).max() <= 1e-10
    V = random_orthonormal(8, 2, 0)
    assert np.isclose(lev(V).sum(), 2)
    X, Y = random_orthonormal(64, 8, 1), random_orthonormal(64, 8, 2)
    assert not np.allclose(X, Y)
    for M in (X, Y):
        assert np.abs(M.T @ M - np.eye(8)).max() <= 1e-10


def test_random_orthonormal_bad_dims():
    with pytest.raises(BadDims):
        random_orthonormal(2, 3, 0)


def test_spiked_square_is_identity_like():
    U = spiked_orthonormal(5, 5, 5, 0)
    assert np.allclose(lev(U), 1)


def test_spiked_heavy_rows():
    U = spiked_orthonormal(100, 4, 2, 7)
    l = lev(U)
    assert np.abs(U.T @ U - np.eye(4)).max() <= 1e-10
    assert np.all(l[:2] >= 0.9)
    assert np.isclose(l.sum(), 4)
    assert l[2:].max() < 0.9


def test_spiked_bad_dims():
    with pytest.raises(BadDims):
        spiked_orthonormal(10, 3, 4, 0)


def test_qr_preserves_leverage_of_column_span():
    rng = np.random.default_rng(8)
    for _ in range(20):
        A = rng.standard_normal((40, 5)) @ rng.standard_normal((5, 5))
        Q, T = qr_factor(A)
        AR = A @ np.linalg.inv(T)
        assert np.allclose(lev(Q), lev(AR), atol=1e-8)
