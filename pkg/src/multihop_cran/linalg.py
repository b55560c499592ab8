"""Complex Hermitian helpers shared by every compression scheme.

All information quantities are returned in bits.
"""
from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)
PD_FLOOR = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix that must be positive definite is not."""


class ShapeError(ValueError):
    pass


def hermitian(m):
    """Return ``(M + M^H) / 2`` as a complex array."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.conj().T)


def _pd_tolerance(w):
    return PD_FLOOR * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)


def logdet(m):
    """log2 det of a Hermitian positive definite matrix.

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue is below ``1e-10 * max(1, ||M||)``.
    """
    m = hermitian(m)
    if m.shape[0] == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("matrix is not positive definite") from None
    d = np.real(np.diag(chol))
    if d.min() ** 2 <= _pd_tolerance(d**2):
        w = np.linalg.eigvalsh(m)
        if w.min() <= _pd_tolerance(w):
            raise SingularMatrixError(f"smallest eigenvalue {w.min():.3e} too small")
    return float(2.0 * np.sum(np.log(d)) / LN2)


def phi(x, y):
    """Tangent-plane majorizer of the concave log det at ``Y``.

    ``phi(X, Y) = log2 det Y + tr(Y^{-1} (X - Y)) / ln 2``; it upper-bounds
    ``logdet(X)`` and is tight at ``X = Y``.
    """
    x = hermitian(x)
    y = hermitian(y)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    base = logdet(y)
    k = np.linalg.solve(y, x - y)
    return base + float(np.real(np.trace(k))) / LN2


def conditional_covariance(sigma_a, sigma_ab, sigma_b):
    """Schur complement ``S_a - S_ab S_b^{-1} S_ab^H``."""
    sigma_a = hermitian(sigma_a)
    sigma_b = hermitian(sigma_b)
    sigma_ab = np.asarray(sigma_ab, dtype=complex).reshape(sigma_a.shape[0], sigma_b.shape[0])
    if sigma_b.shape[0] == 0:
        return sigma_a
    w = np.linalg.eigvalsh(sigma_b)
    if w.min() <= _pd_tolerance(w):
        raise SingularMatrixError("conditioning covariance is singular")
    return hermitian(sigma_a - sigma_ab @ np.linalg.solve(sigma_b, sigma_ab.conj().T))


def eig_hermitian_desc(m):
    """Eigen-decomposition with eigenvalues sorted in non-increasing order.

    Ties are broken by the lexicographic order of the (phase-normalised)
    eigenvectors so repeated calls are reproducible.

    Returns
    -------
    w : ndarray of shape (n,)
    v : ndarray of shape (n, n)
        Orthonormal columns, ``M = V diag(w) V^H``.
    """
    m = hermitian(m)
    w, v = np.linalg.eigh(m)
    # fix the phase: largest-magnitude entry real positive
    for j in range(v.shape[1]):
        col = v[:, j]
        k = int(np.argmax(np.abs(col).round(12)))
        if abs(col[k]) > 0:
            v[:, j] = col * (abs(col[k]) / col[k])
    scale = max(1.0, float(np.abs(w).max()) if w.size else 1.0)
    wq = np.round(w / (scale * 1e-9))
    keys = [tuple(-np.abs(v[:, j]).round(9)) for j in range(v.shape[1])]
    order = sorted(range(len(w)), key=lambda j: (-wq[j], keys[j]))
    return w[order], v[:, order]


def sqrtm_psd(m):
    """Hermitian square root of a PSD matrix (negative round-off clipped)."""
    w, v = np.linalg.eigh(hermitian(m))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def inv_sqrtm_pd(m):
    w, v = np.linalg.eigh(hermitian(m))
    if w.min() <= _pd_tolerance(w):
        raise SingularMatrixError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.conj().T


def min_eig_relative(m):
    """Smallest eigenvalue divided by ``max(1, largest |eigenvalue|)``."""
    w = np.linalg.eigvalsh(hermitian(m))
    return float(w.min() / max(1.0, np.abs(w).max()))


def block_diag(blocks):
    """Block-diagonal assembly that tolerates zero-sized blocks."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=complex)) if np.size(b) else
              np.zeros(np.shape(b) if np.ndim(b) == 2 else (0, 0), dtype=complex)
              for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
