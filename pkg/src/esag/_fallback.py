"""Pure NumPy implementation of the kernels in ``esag._core``.

Selected automatically when the compiled extension is unavailable (or
when ``ESAG_PURE_PYTHON=1``). Vectorizes over observations; the BFGS
driver is a line-for-line port of the compiled one.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .linalg import jacobi_eigh, pack_shape

BACKEND = "python"
MAX_DIM = None

_LOG_2PI = math.log(2.0 * math.pi)
MU_FLOOR = 1e-8
MILLS_THRESHOLD = -2.0
CF_DEPTH = 200


def _log_mnorm_ratio(k: int, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logm = np.empty_like(a)
    rho = np.empty_like(a)
    hi = a >= MILLS_THRESHOLD
    if np.any(hi):
        x = a[hi]
        phi = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        m_prev = ndtr(x)
        m = x * m_prev + phi
        for j in range(1, k):
            m, m_prev = x * m + j * m_prev, m
        logm[hi] = np.log(m)
        rho[hi] = k * m_prev / m
    lo = ~hi
    if np.any(lo):
        b = -a[lo]
        top = max(CF_DEPTH, k + CF_DEPTH // 2)
        h = np.zeros_like(b)
        hk = np.ones_like(b)
        logsum = np.zeros_like(b)
        for j in range(top, 0, -1):
            h = j / (b + h)
            if j <= k:
                logsum += np.log(h)
            if j == k:
                hk = h
        logm[lo] = -0.5 * b * b - 0.5 * _LOG_2PI - np.log(b + h) + logsum
        rho[lo] = k / hk
    return logm, rho


def _shape_eig(G: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    n = G.shape[0]
    k = d - 1
    lam = np.zeros((n, k))
    U = np.broadcast_to(np.eye(k), (n, k, k)).copy()
    nz = np.any(G != 0.0, axis=1)
    if np.any(nz):
        lam[nz], U[nz] = jacobi_eigh(pack_shape(G[nz], d))
    return lam, U


def _eval(Y, MU, G, want_grad):
    Y = np.asarray(Y, dtype=float)
    MU = np.asarray(MU, dtype=float)
    G = np.asarray(G, dtype=float)
    n, d = Y.shape
    k = d - 1
    r2 = np.einsum("ij,ij->i", MU, MU)
    r = np.sqrt(r2)
    bad = ~(r >= MU_FLOOR) | ~np.isfinite(r)
    r_safe = np.where(bad, 1.0, r)
    MUs = np.where(bad[:, None], np.eye(d)[-1], MU)
    xi = MUs / r_safe[:, None]
    sgn = np.where(xi[:, -1] >= 0.0, 1.0, -1.0)
    u = xi.copy()
    u[:, -1] += sgn
    c = 2.0 * (1.0 + sgn * xi[:, -1])
    t = np.einsum("ij,ij->i", u, Y)
    xy = np.einsum("ij,ij->i", xi, Y)
    z = Y[:, :k] - (2.0 * t / c)[:, None] * u[:, :k]
    lam, U = _shape_eig(G, d)
    w = np.einsum("nij,ni->nj", U, z)
    el = np.exp(-lam)
    q = xy * xy + np.einsum("nj,nj->n", el, w * w)
    sq = np.sqrt(q)
    a = r_safe * xy / sq
    logm, rho = _log_mnorm_ratio(k, a)
    ll = -0.5 * k * _LOG_2PI - 0.5 * d * np.log(q) + 0.5 * (a * a - np.where(bad, 1.0, r2)) + logm
    ll = np.where(bad, -np.inf, ll)
    if not want_grad:
        return ll
    dla = a + rho
    dlq = -0.5 * d / q - dla * a / (2.0 * q)
    v = np.zeros((n, d))
    v[:, :k] = np.einsum("nij,nj->ni", U, (el - 1.0) * w)
    vu = np.einsum("ij,ij->i", v, u)
    gu = -4.0 * (
        v * (t / c)[:, None]
        + (vu / c)[:, None] * Y
        - (2.0 * vu * t / (c * c))[:, None] * u
    )
    xg = np.einsum("ij,ij->i", xi, gu)
    gmu = dla[:, None] * Y / sq[:, None] - MUs + dlq[:, None] * (gu - xi * xg[:, None]) / r_safe[:, None]
    half_sum = 0.5 * (lam[:, :, None] + lam[:, None, :])
    half_diff = 0.5 * (lam[:, :, None] - lam[:, None, :])
    small = np.abs(half_diff) < 1e-4
    safe = np.where(small, 1.0, half_diff)
    shc = np.where(small, 1.0 + half_diff * half_diff / 6.0, np.sinh(safe) / safe)
    T = -np.exp(-half_sum) * shc * w[:, :, None] * w[:, None, :]
    Gs = U @ T @ np.swapaxes(U, 1, 2)
    diag = np.diagonal(Gs, axis1=1, axis2=2)
    iu, ju = np.triu_indices(k, 1)
    dq = np.concatenate([diag[:, : k - 1] - diag[:, k - 1 : k], 2.0 * Gs[:, iu, ju]], axis=1)
    gg = dlq[:, None] * dq
    gmu[bad] = 0.0
    gg[bad] = 0.0
    return ll, gmu, gg


def logpdf(Y, MU, G):
    """Per-row ESAG log density; rows of ``MU``/``G`` pair with rows of ``Y``."""
    return _eval(Y, MU, G, False)


def logpdf_grad(Y, MU, G):
    """Per-row log density with gradients in the row's ``mu`` and ``gamma``."""
    return _eval(Y, MU, G, True)


def vpower(MU, G, power):
    """Stack of ``V_i ** power`` for each row of ``MU``/``G``."""
    MU = np.asarray(MU, dtype=float)
    G = np.asarray(G, dtype=float)
    n, d = MU.shape
    k = d - 1
    xi = MU / np.linalg.norm(MU, axis=1, keepdims=True)
    sgn = np.where(xi[:, -1] >= 0.0, 1.0, -1.0)
    u = xi.copy()
    u[:, -1] += sgn
    c = 2.0 * (1.0 + sgn * xi[:, -1])
    E = np.eye(d)[:, :k] - 2.0 * u[:, :, None] * u[:, None, :k] / c[:, None, None]
    lam, U = _shape_eig(G, d)
    T = E @ U
    out = xi[:, :, None] * xi[:, None, :] + np.einsum("naj,nj,nbj->nab", T, np.exp(power * lam), T)
    nz = np.any(G != 0.0, axis=1)
    out[~nz] = np.eye(d)
    return out


def _unpack(theta, d, p, m):
    A = theta[: d * m].reshape(m, d).T
    B = theta[d * m:].reshape(m, p).T
    return A, B


def objective_grad(theta, Y, X, p, free_idx):
    """Negative mean log-likelihood and its gradient over ``free_idx``."""
    theta = np.asarray(theta, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, d = Y.shape
    m = X.shape[1]
    A, B = _unpack(theta, d, p, m)
    MU = X @ A.T
    G = X @ B.T
    ll, gmu, gg = _eval(Y, MU, G, True)
    if not np.all(np.isfinite(ll)):
        return math.inf, np.zeros(len(free_idx))
    gA = gmu.T @ X
    gB = gg.T @ X
    gfull = np.concatenate([gA.T.ravel(), gB.T.ravel()])
    return -ll.sum() / n, -gfull[np.asarray(free_idx, dtype=np.intp)] / n


def bfgs(theta, Y, X, p, free_idx, gtol=1e-8, ftol=1e-12, maxiter=1000, maxstep=5.0, H0=None):
    """Minimize the negative mean log-likelihood over the free coordinates.

    ``H0`` optionally seeds the inverse-Hessian estimate. Returns
    ``(theta, f, nit, nfev, status, H)``; see :mod:`esag.kernels` for the
    status codes.
    """
    theta = np.array(theta, dtype=float, copy=True)
    free_idx = np.asarray(free_idx, dtype=np.intp)
    nf = free_idx.shape[0]

    def fun(x):
        th = theta.copy()
        th[free_idx] = x
        return objective_grad(th, Y, X, p, free_idx)

    x = theta[free_idx].copy()
    f, g = fun(x)
    nfev = 1
    warm = H0 is not None
    H = np.array(H0, dtype=float, copy=True) if warm else np.eye(nf)
    if H.shape != (nf, nf):
        raise ValueError("H0 must be square in the number of free coordinates")
    if nf == 0:
        return theta, f, 0, nfev, 0 if math.isfinite(f) else 4, H
    if not math.isfinite(f):
        return theta, f, 0, nfev, 4, H
    first = not warm
    it = 0
    small = 0
    status = 2
    while it < maxiter:
        if np.max(np.abs(g)) <= gtol:
            status = 0
            break
        pdir = -(H @ g)
        gp = float(pdir @ g)
        if not gp < 0.0:
            H = np.eye(nf)
            pdir = -g
            gp = -float(g @ g)
        pmax = np.max(np.abs(pdir))
        step = 1.0
        if pmax * step > maxstep:
            step = maxstep / pmax
        ok = False
        for _ in range(60):
            xn = x + step * pdir
            fn, gn = fun(xn)
            nfev += 1
            if math.isfinite(fn) and fn <= f + 1e-4 * step * gp:
                ok = True
                break
            if math.isfinite(fn):
                denom = 2.0 * (fn - f - step * gp)
                st = -gp * step * step / denom if denom > 0.0 else 0.5 * step
                step = min(max(st, 0.1 * step), 0.5 * step)
            else:
                step *= 0.25
        if not ok:
            status = 3
            break
        it += 1
        s = xn - x
        yv = gn - g
        sy = float(s @ yv)
        yy = float(yv @ yv)
        df = f - fn
        x, g, f = xn, gn, fn
        if sy > 1e-12 * math.sqrt(float(s @ s)) * math.sqrt(yy) and sy > 0.0:
            if first:
                H = np.eye(nf) * (sy / yy)
                first = False
            rho = 1.0 / sy
            Hy = H @ yv
            yHy = float(yv @ Hy)
            H = H - rho * (np.outer(Hy, s) + np.outer(s, Hy)) + (rho * rho * yHy + rho) * np.outer(s, s)
        if df <= ftol * max(abs(f), 1.0):
            small += 1
            if small >= 3:
                status = 1
                break
        else:
            small = 0
    if status == 2 and np.max(np.abs(g)) <= gtol:
        status = 0
    theta[free_idx] = x
    return theta, f, it, nfev, status, H
