import numpy as np
import pytest

from multihop_cran.channel import complex_gaussian
from multihop_cran.linalg import (LN2, ShapeError, SingularMatrixError, block_diag, conditional_covariance,
                                  eig_hermitian_desc, hermitian, logdet, phi)


def random_pd(rng, n):
    A = complex_gaussian(rng, (n, n))
    return A @ A.conj().T + 0.5 * np.eye(n)


def test_logdet_examples():
    assert logdet(np.eye(3)) == pytest.approx(0.0, abs=1e-15)
    assert logdet(np.diag([2.0, 4.0])) == pytest.approx(3.0, abs=1e-14)
    assert logdet(np.zeros((0, 0))) == 0.0


def test_logdet_matches_eigenvalues(rng):
    for n in (1, 2, 5, 8):
        M = random_pd(rng, n)
        ref = float(np.sum(np.log2(np.linalg.eigvalsh(M))))
        assert abs(logdet(M) - ref) < 1e-10


def test_logdet_rejects_singular():
    with pytest.raises(SingularMatrixError):
        logdet(np.diag([1.0, 0.0]))
    with pytest.raises(SingularMatrixError):
        logdet(np.diag([1.0, -1.0]))


def test_logdet_rejects_non_square():
    with pytest.raises(ShapeError):
        logdet(np.ones((2, 3)))


def test_phi_example():
    assert phi(2 * np.eye(2), np.eye(2)) == pytest.approx(2.0 / LN2, abs=1e-12)


def test_phi_is_tight_and_majorizes(rng):
    for _ in range(50):
        n = int(rng.integers(1, 5))
        X, Y = random_pd(rng, n), random_pd(rng, n)
        assert phi(Y, Y) == pytest.approx(logdet(Y), abs=1e-10)
        assert phi(X, Y) >= logdet(X) - 1e-10


def test_phi_shape_mismatch():
    with pytest.raises(ShapeError):
        phi(np.eye(2), np.eye(3))


def test_conditional_covariance_matches_joint_inverse(rng):
    # Cov(a | b) is the inverse of the (a, a) block of the joint precision
    for _ in range(20):
        na, nb = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        J = random_pd(rng, na + nb)
        P = np.linalg.inv(J)
        ref = np.linalg.inv(P[:na, :na])
        out = conditional_covariance(J[:na, :na], J[:na, na:], J[na:, na:])
        assert np.max(np.abs(out - ref)) < 1e-10


def test_conditional_covariance_empty_condition():
    S = np.diag([2.0, 3.0])
    assert np.allclose(conditional_covariance(S, np.zeros((2, 0)), np.zeros((0, 0))), S)


def test_conditional_covariance_singular_condition():
    with pytest.raises(SingularMatrixError):
        conditional_covariance(np.eye(1), np.zeros((1, 2)), np.diag([1.0, 0.0]))


def test_eig_order_and_reconstruction(rng):
    for _ in range(20):
        n = int(rng.integers(1, 6))
        M = hermitian(complex_gaussian(rng, (n, n)))
        w, V = eig_hermitian_desc(M)
        assert np.all(np.diff(w) <= 1e-12)
        assert np.allclose(V @ np.diag(w) @ V.conj().T, M, atol=1e-10)
        assert np.allclose(V.conj().T @ V, np.eye(n), atol=1e-10)


def test_eig_is_reproducible_with_ties():
    M = np.diag([1.0, 2.0, 2.0, 1.0]).astype(complex)
    w1, V1 = eig_hermitian_desc(M)
    w2, V2 = eig_hermitian_desc(M.copy())
    assert np.array_equal(w1, w2) and np.array_equal(V1, V2)
    assert np.allclose(w1, [2, 2, 1, 1])


def test_block_diag_with_empty_blocks():
    out = block_diag([np.eye(2), np.zeros((0, 0)), 3 * np.eye(1)])
    assert out.shape == (3, 3)
    assert np.allclose(np.diag(out), [1, 1, 3])
