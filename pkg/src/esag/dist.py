"""Elliptically symmetric angular Gaussian (ESAG) distribution.

``Y = W / ||W||`` with ``W ~ N_d(mu, V)``, where ``V`` satisfies
``V mu = mu`` and ``det V = 1``. The covariance is generated from the
mean and an unconstrained shape vector ``gamma`` of length
``(d-2)(d+1)/2`` as

    V = xi xi^T + E expm(S(gamma)) E^T,

with ``xi = mu / ||mu||``, ``E`` an orthonormal basis of the complement
of ``xi`` (see :func:`complement_basis`) and ``S(gamma)`` the symmetric
traceless matrix packed by :func:`esag.linalg.pack_shape`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateMeanError
from .kernels import vpower
from .linalg import (
    JACOBI_MAX_SWEEPS,
    JACOBI_TOL,
    gamma_dim,
    householder_basis,
    jacobi_eigh,
    pack_shape,
)

__all__ = [
    "CovarianceFactorization",
    "EsagParams",
    "complement_basis",
    "covariance_from",
    "gamma_dim",
    "log_density",
    "log_mnorm_moment",
    "mnorm_moment",
    "sample",
    "sample_rows",
    "uniform_log_density",
]

#: Below this argument the moment recursion is evaluated relative to the
#: normal density with a continued fraction instead of from ``Phi(alpha)``.
MILLS_THRESHOLD = -2.0
#: Depth at which the backward continued fraction is started.
MILLS_CF_DEPTH = 200
#: Redraw threshold for the pre-normalization Gaussian vector.
W_NORM_FLOOR = 1e-300

_LOG_2PI = math.log(2.0 * math.pi)


def complement_basis(mu: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``mu``.

    Parameters
    ----------
    mu : array_like, shape (d,)
        Nonzero mean vector.

    Returns
    -------
    E : ndarray, shape (d, d-1)
        Columns are orthonormal and orthogonal to ``mu``. ``E`` depends on
        ``mu`` only through its direction; ``mu = e_d`` gives the first
        ``d-1`` identity columns.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ValueError("mu must be a vector")
    gamma_dim(mu.shape[0])
    if not np.all(np.isfinite(mu)) or np.linalg.norm(mu) == 0.0:
        raise DegenerateMeanError("mean vector has zero norm")
    return householder_basis(mu)[:, :-1]


@dataclass(frozen=True)
class CovarianceFactorization:
    """Constrained covariance together with the factors the model needs.

    Attributes
    ----------
    V, Vinv, Vhalf : ndarray, shape (d, d)
        Covariance, its inverse and its symmetric square root.
    eigenvalues : ndarray, shape (d,)
        ``lambda_1 <= ... <= lambda_{d-1}`` from the complement block,
        followed by ``lambda_d = 1`` (the eigenvalue along ``mu``).
    """

    V: np.ndarray
    Vinv: np.ndarray
    Vhalf: np.ndarray
    eigenvalues: np.ndarray


def covariance_from(
    mu: np.ndarray,
    gamma: np.ndarray,
    *,
    tol: float = JACOBI_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> CovarianceFactorization:
    """Build the ESAG covariance for mean ``mu`` and shape ``gamma``."""
    mu = np.asarray(mu, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    d = mu.shape[0]
    p = gamma_dim(d)
    if gamma.shape != (p,):
        raise ValueError(f"gamma must have length {p} for d={d}, got {gamma.shape}")
    E = complement_basis(mu)
    xi = mu / np.linalg.norm(mu)
    outer = np.outer(xi, xi)
    if not np.any(gamma):
        eye = np.eye(d)
        return CovarianceFactorization(eye, eye.copy(), eye.copy(), np.ones(d))
    s, U = jacobi_eigh(pack_shape(gamma, d), tol=tol, max_sweeps=max_sweeps)
    EU = E @ U

    def lift(f):
        M = outer + (EU * f(s)) @ EU.T
        return 0.5 * (M + M.T)

    return CovarianceFactorization(
        V=lift(np.exp),
        Vinv=lift(lambda x: np.exp(-x)),
        Vhalf=lift(lambda x: np.exp(0.5 * x)),
        eigenvalues=np.append(np.exp(s), 1.0),
    )


@dataclass(frozen=True)
class EsagParams:
    """Parameters of one ESAG distribution.

    The covariance factorization is derived once at construction; the
    object is immutable afterwards.
    """

    mu: np.ndarray
    gamma: np.ndarray
    cov: CovarianceFactorization = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        gamma = np.array(self.gamma, dtype=float).reshape(-1)
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        mu.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "cov", covariance_from(mu, gamma))

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def concentration(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def direction(self) -> np.ndarray:
        return self.mu / np.linalg.norm(self.mu)

    @classmethod
    def isotropic(cls, mu) -> "EsagParams":
        mu = np.asarray(mu, dtype=float)
        return cls(mu, np.zeros(gamma_dim(mu.shape[0])))


# --------------------------------------------------------------------------
# Radial moments of the truncated normal
# --------------------------------------------------------------------------


def _cf_ratios(k: int, b: np.ndarray, depth: int = MILLS_CF_DEPTH) -> tuple[np.ndarray, np.ndarray]:
    """Log of ``I_0(b)`` and ratios ``I_j/I_{j-1}`` for ``j = 1..k``.

    ``I_j(b) = int_0^inf t^j exp(-b t - t^2/2) dt`` for ``b > 0``. The
    ratios satisfy ``h_j = j / (b + h_{j+1})`` and are obtained by running
    that continued fraction backward from ``depth``; every quantity is
    positive so no cancellation occurs.
    """
    h_next = np.zeros_like(b)
    top = max(depth, k + depth // 2)
    ratios = np.empty((k + 1,) + b.shape)
    for j in range(top, 0, -1):
        h_next = j / (b + h_next)
        if j <= k:
            ratios[j] = h_next
    log_i0 = -np.log(b + h_next)
    return log_i0, ratios[1:]


def log_mnorm_moment(k: int, alpha) -> np.ndarray:
    """Logarithm of :func:`mnorm_moment`, stable for very negative ``alpha``."""
    k = int(k)
    if k < 0:
        raise ValueError("k must be >= 0")
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    lo = alpha < MILLS_THRESHOLD
    hi = ~lo
    if np.any(hi):
        a = alpha[hi]
        phi = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
        m_prev = ndtr(a)
        if k == 0:
            m = m_prev
        else:
            m = a * m_prev + phi
            for j in range(1, k):
                m, m_prev = a * m + j * m_prev, m
        out[hi] = np.log(m)
    if np.any(lo):
        a = alpha[lo]
        log_i0, ratios = _cf_ratios(k, -a)
        log_ik = log_i0 + np.log(ratios[:k]).sum(axis=0)
        out[lo] = -0.5 * a * a - 0.5 * _LOG_2PI + log_ik
    return out if out.ndim else out[()]


def mnorm_moment(k: int, alpha) -> np.ndarray:
    """Radial moment ``M_k(alpha) = int_0^inf t^k phi(t - alpha) dt``.

    Uses ``M_0 = Phi(alpha)``, ``M_1 = alpha Phi(alpha) + phi(alpha)`` and
    ``M_{k+1} = alpha M_k + k M_{k-1}``; below ``alpha = -2`` the value is
    formed as ``phi(alpha)`` times a continued-fraction evaluation of the
    scaled integral.
    """
    return np.exp(log_mnorm_moment(k, alpha))


# --------------------------------------------------------------------------
# Density and sampling
# --------------------------------------------------------------------------


def uniform_log_density(d: int) -> float:
    """Log density of the uniform distribution on the sphere in ``R^d``."""
    return math.lgamma(d / 2.0) - math.log(2.0) - (d / 2.0) * math.log(math.pi)


def log_density(y: np.ndarray, params: EsagParams) -> np.ndarray:
    """ESAG log density at one point or at the rows of ``y``.

    Parameters
    ----------
    y : array_like, shape (d,) or (m, d)
        Unit vectors.
    params : EsagParams

    Returns
    -------
    float or ndarray of shape (m,)
    """
    y = np.asarray(y, dtype=float)
    d = params.d
    if y.shape[-1] != d:
        raise ValueError(f"points have dimension {y.shape[-1]}, params have {d}")
    Vinv = params.cov.Vinv
    q = np.einsum("...i,ij,...j->...", y, Vinv, y)
    mu = params.mu
    alpha = (y @ mu) / np.sqrt(q)
    r2 = float(mu @ mu)
    out = (
        -0.5 * (d - 1) * _LOG_2PI
        - 0.5 * d * np.log(q)
        + 0.5 * (alpha * alpha - r2)
        + log_mnorm_moment(d - 1, alpha)
    )
    return out if np.ndim(out) else float(out)


def _normalize_draws(W: np.ndarray, redraw) -> np.ndarray:
    norms = np.linalg.norm(W, axis=-1)
    bad = norms < W_NORM_FLOOR
    while np.any(bad):
        W[bad] = redraw(int(bad.sum()))
        norms = np.linalg.norm(W, axis=-1)
        bad = norms < W_NORM_FLOOR
    return W / norms[..., None]


def sample(params: EsagParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` unit vectors from ``params``.

    Each draw is ``W / ||W||`` with ``W = mu + Vhalf Z`` and ``Z`` a vector
    of ``d`` standard normals from ``rng``.

    Returns
    -------
    ndarray, shape (n, d)
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    mu = params.mu
    Vh = params.cov.Vhalf
    d = params.d

    def draw(m):
        return mu + rng.standard_normal((m, d)) @ Vh.T

    return _normalize_draws(draw(n), draw)


def sample_rows(MU: np.ndarray, G: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """One draw per parameter row, or ``size`` draws per row.

    Parameters
    ----------
    MU : ndarray, shape (n, d)
    G : ndarray, shape (n, gamma_dim(d))
    rng : numpy.random.Generator
    size : int, optional

    Returns
    -------
    ndarray, shape (n, d) or (n, size, d)
    """
    MU = np.ascontiguousarray(MU, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    n, d = MU.shape
    m = 1 if size is None else int(size)
    iso = not np.any(G)
    Vh = None if iso else vpower(MU, G, 0.5)

    def draw(rows):
        Z = rng.standard_normal((rows.size, m, d))
        if Vh is not None:
            Z = np.matmul(Z, np.swapaxes(Vh[rows], 1, 2))
        return MU[rows, None, :] + Z

    W = draw(np.arange(n))
    norms = np.linalg.norm(W, axis=-1)
    bad = np.argwhere(norms < W_NORM_FLOOR)
    for i, j in bad:
        while True:
            w = draw(np.array([i]))[0, 0]
            if np.linalg.norm(w) >= W_NORM_FLOOR:
                W[i, j] = w
                break
    Y = W / np.linalg.norm(W, axis=-1, keepdims=True)
    return Y[:, 0, :] if size is None else Y
