"""Small dense linear algebra used by the distribution core.

Everything here is written for stacks of tiny matrices (the shape block
of an ESAG covariance is ``(d-1) x (d-1)``) and vectorizes over the
leading batch axis with plain NumPy.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateMeanError, DimensionTooSmallError

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100


def gamma_dim(d: int) -> int:
    """Number of free shape parameters for ambient dimension ``d``.

    >>> gamma_dim(3), gamma_dim(4), gamma_dim(5)
    (2, 5, 9)
    """
    d = int(d)
    if d < 3:
        raise DimensionTooSmallError(f"ESAG needs d >= 3, got d={d}")
    return (d - 2) * (d + 1) // 2


def dim_from_gamma(p: int) -> int:
    """Inverse of :func:`gamma_dim`."""
    for d in range(3, 4096):
        g = gamma_dim(d)
        if g == p:
            return d
        if g > p:
            break
    raise ValueError(f"{p} is not a valid shape-vector length")


def pack_shape(gamma: np.ndarray, d: int) -> np.ndarray:
    """Build the symmetric traceless shape matrix from ``gamma``.

    The first ``d-2`` entries fill the diagonal, the last diagonal entry
    is minus their sum, and the remaining entries fill the strict upper
    triangle in row-major order. Works on a single vector or a stack of
    shape ``(n, gamma_dim(d))``.
    """
    gamma = np.asarray(gamma, dtype=float)
    k = d - 1
    p = gamma_dim(d)
    if gamma.shape[-1] != p:
        raise ValueError(f"gamma must have {p} entries for d={d}, got {gamma.shape[-1]}")
    S = np.zeros(gamma.shape[:-1] + (k, k))
    idx = np.arange(k - 1)
    S[..., idx, idx] = gamma[..., : k - 1]
    S[..., k - 1, k - 1] = -gamma[..., : k - 1].sum(axis=-1)
    iu, ju = np.triu_indices(k, 1)
    S[..., iu, ju] = gamma[..., k - 1:]
    S[..., ju, iu] = gamma[..., k - 1:]
    return S


def unpack_shape(S: np.ndarray) -> np.ndarray:
    """Recover ``gamma`` from a symmetric traceless shape matrix."""
    S = np.asarray(S, dtype=float)
    k = S.shape[-1]
    iu, ju = np.triu_indices(k, 1)
    diag = np.diagonal(S, axis1=-2, axis2=-1)[..., : k - 1]
    return np.concatenate([diag, S[..., iu, ju]], axis=-1)


def jacobi_eigh(
    A: np.ndarray,
    tol: float = JACOBI_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of symmetric matrices.

    Parameters
    ----------
    A : ndarray, shape (..., k, k)
        Symmetric matrix or stack of symmetric matrices.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm drops below
        ``tol * max(1, ||A||_F)`` for every matrix in the stack.
    max_sweeps : int
        Hard cap on the number of cyclic sweeps.

    Returns
    -------
    w : ndarray, shape (..., k)
        Eigenvalues in ascending order.
    U : ndarray, shape (..., k, k)
        Orthonormal eigenvectors stored as columns, ``A = U diag(w) U^T``.
    """
    A = np.array(A, dtype=float, copy=True)
    batch_shape = A.shape[:-2]
    k = A.shape[-1]
    A = A.reshape((-1, k, k))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    nb = A.shape[0]
    U = np.broadcast_to(np.eye(k), (nb, k, k)).copy()
    scale = np.maximum(1.0, np.sqrt((A * A).sum(axis=(-1, -2))))
    rows = np.arange(nb)
    off_mask = ~np.eye(k, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt((A[:, off_mask] ** 2).sum(axis=-1))
        if np.all(off <= tol * scale):
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[rows, p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                tau = (A[rows, q, q] - A[rows, p, p]) / (2.0 * safe)
                sgn = np.where(tau >= 0.0, 1.0, -1.0)
                t = sgn / (np.abs(tau) + np.hypot(1.0, tau))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(active, t * c, 0.0)
                c_ = c[:, None]
                s_ = s[:, None]
                colp = A[:, :, p].copy()
                colq = A[:, :, q]
                A[:, :, p] = c_ * colp - s_ * colq
                A[:, :, q] = s_ * colp + c_ * colq
                rowp = A[:, p, :].copy()
                rowq = A[:, q, :]
                A[:, p, :] = c_ * rowp - s_ * rowq
                A[:, q, :] = s_ * rowp + c_ * rowq
                A[active, p, q] = 0.0
                A[active, q, p] = 0.0
                up = U[:, :, p].copy()
                uq = U[:, :, q]
                U[:, :, p] = c_ * up - s_ * uq
                U[:, :, q] = s_ * up + c_ * uq
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    U = np.take_along_axis(U, order[:, None, :], axis=-1)
    return w.reshape(batch_shape + (k,)), U.reshape(batch_shape + (k, k))


def sym_funm(w: np.ndarray, U: np.ndarray, f) -> np.ndarray:
    """Apply ``f`` to a symmetric matrix given its eigendecomposition."""
    return np.einsum("...ij,...j,...kj->...ik", U, f(w), U)


def householder_basis(mu: np.ndarray) -> np.ndarray:
    """Reflection matrices whose last column is parallel to ``mu``.

    Returns ``H = I - 2 u u^T / (u^T u)`` with ``u = xi + s e_d``,
    ``xi = mu / ||mu||`` and ``s = +1`` when ``xi_d >= 0`` else ``-1``.
    ``H`` maps ``xi`` to ``-s e_d``; its first ``d-1`` columns are an
    orthonormal basis of the complement of ``mu``. ``1 + s xi_d >= 1`` so
    the construction never cancels.
    """
    mu = np.asarray(mu, dtype=float)
    norm = np.linalg.norm(mu, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise DegenerateMeanError("mean vector has zero norm")
    xi = mu / norm
    d = mu.shape[-1]
    s = np.where(xi[..., -1] >= 0.0, 1.0, -1.0)
    u = xi.copy()
    u[..., -1] += s
    c = 2.0 * (1.0 + s * xi[..., -1])
    H = np.eye(d) - 2.0 * u[..., :, None] * u[..., None, :] / c[..., None, None]
    return H
