# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, nonecheck=False
"""Compiled ESAG kernels: batched log density, analytic gradients and a
BFGS driver for the regression log-likelihood.

Mirrors :mod:`esag._fallback` function for function; the two must stay
numerically equivalent up to rounding.
"""

import numpy as np

from libc.math cimport sqrt, exp, log, erfc, fabs, sinh, INFINITY, isfinite
from libc.stdlib cimport malloc, free, calloc

cdef enum:
    MAXD = 32

cdef double LOG_2PI = 1.8378770664093453
cdef double SQRT_2PI = 2.5066282746310002
cdef double SQRT_2 = 1.4142135623730951
cdef double MU_FLOOR = 1e-8
cdef double MILLS_THRESHOLD = -2.0
cdef int CF_DEPTH = 200
cdef double JACOBI_TOL = 1e-13
cdef int JACOBI_MAX_SWEEPS = 100

BACKEND = "compiled"
MAX_DIM = MAXD


cdef struct Work:
    double S[MAXD * MAXD]
    double U[MAXD * MAXD]
    double T[MAXD * MAXD]
    double Gs[MAXD * MAXD]
    double lam[MAXD]
    double el[MAXD]
    double xi[MAXD]
    double u[MAXD]
    double z[MAXD]
    double w[MAXD]
    # last shape decomposition, keyed by the gamma row that produced it
    double gkey[MAXD * MAXD]
    double Uc[MAXD * MAXD]
    double lamc[MAXD]
    int cached
    double v[MAXD]
    double gu[MAXD]


cdef void jacobi(double* A, double* U, double* lam, int k) noexcept nogil:
    cdef int i, p, q, r, sweep
    cdef double off, scale, apq, tau, t, c, s, x, y
    for i in range(k * k):
        U[i] = 0.0
    for i in range(k):
        U[i * k + i] = 1.0
    scale = 0.0
    for i in range(k * k):
        scale += A[i] * A[i]
    scale = sqrt(scale)
    if scale < 1.0:
        scale = 1.0
    for sweep in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(k):
            for q in range(k):
                if p != q:
                    off += A[p * k + q] * A[p * k + q]
        if sqrt(off) <= JACOBI_TOL * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p * k + q]
                if apq == 0.0:
                    continue
                tau = (A[q * k + q] - A[p * k + p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for r in range(k):
                    x = A[r * k + p]
                    y = A[r * k + q]
                    A[r * k + p] = c * x - s * y
                    A[r * k + q] = s * x + c * y
                for r in range(k):
                    x = A[p * k + r]
                    y = A[q * k + r]
                    A[p * k + r] = c * x - s * y
                    A[q * k + r] = s * x + c * y
                A[p * k + q] = 0.0
                A[q * k + p] = 0.0
                for r in range(k):
                    x = U[r * k + p]
                    y = U[r * k + q]
                    U[r * k + p] = c * x - s * y
                    U[r * k + q] = s * x + c * y
    for i in range(k):
        lam[i] = A[i * k + i]


cdef double log_mnorm_ratio(int k, double a, double* rho) noexcept nogil:
    """log M_k(a) and rho = k M_{k-1}(a) / M_k(a), for k >= 1."""
    cdef double phi, m, m_prev, tmp, b, h, hk, logsum
    cdef int j, top
    if a >= MILLS_THRESHOLD:
        phi = exp(-0.5 * a * a) / SQRT_2PI
        m_prev = 0.5 * erfc(-a / SQRT_2)
        m = a * m_prev + phi
        for j in range(1, k):
            tmp = a * m + j * m_prev
            m_prev = m
            m = tmp
        rho[0] = k * m_prev / m
        return log(m)
    b = -a
    top = CF_DEPTH
    if k + CF_DEPTH // 2 > top:
        top = k + CF_DEPTH // 2
    h = 0.0
    hk = 1.0
    logsum = 0.0
    for j in range(top, 0, -1):
        h = j / (b + h)
        if j <= k:
            logsum += log(h)
        if j == k:
            hk = h
    rho[0] = k / hk
    return -0.5 * a * a - 0.5 * LOG_2PI - log(b + h) + logsum


cdef inline bint same_row(const double* a, const double* b, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        if a[i] != b[i]:
            return False
    return True


cdef inline double sinhc(double x) noexcept nogil:
    if fabs(x) < 1e-4:
        return 1.0 + x * x / 6.0
    return sinh(x) / x


cdef double obs_eval(const double* y, const double* mu, const double* g, int d,
                     int want_grad, double* gmu, double* gg, Work* W) noexcept nogil:
    cdef int k = d - 1
    cdef int p = (d - 2) * (d + 1) // 2
    cdef int i, j, l, idx
    cdef double r2 = 0.0, r, sgn, c, t, xy, q, sq, a, logM, rho, ll
    cdef double dla, dlq, vu, xg, acc, trace
    cdef bint allzero = True
    for i in range(d):
        r2 += mu[i] * mu[i]
    r = sqrt(r2)
    if not (r >= MU_FLOOR) or not isfinite(r):
        if want_grad:
            for i in range(d):
                gmu[i] = 0.0
            for i in range(p):
                gg[i] = 0.0
        return -INFINITY
    for i in range(d):
        W.xi[i] = mu[i] / r
        W.u[i] = W.xi[i]
    sgn = 1.0 if W.xi[d - 1] >= 0.0 else -1.0
    W.u[d - 1] += sgn
    c = 2.0 * (1.0 + sgn * W.xi[d - 1])
    t = 0.0
    xy = 0.0
    for i in range(d):
        t += W.u[i] * y[i]
        xy += W.xi[i] * y[i]
    for i in range(k):
        W.z[i] = y[i] - (2.0 * t / c) * W.u[i]

    for i in range(p):
        if g[i] != 0.0:
            allzero = False
            break
    if allzero:
        for i in range(k * k):
            W.U[i] = 0.0
        for i in range(k):
            W.U[i * k + i] = 1.0
            W.lam[i] = 0.0
    elif W.cached and same_row(g, W.gkey, p):
        for i in range(k * k):
            W.U[i] = W.Uc[i]
        for i in range(k):
            W.lam[i] = W.lamc[i]
    else:
        for i in range(k * k):
            W.S[i] = 0.0
        trace = 0.0
        for i in range(k - 1):
            W.S[i * k + i] = g[i]
            trace += g[i]
        W.S[(k - 1) * k + (k - 1)] = -trace
        idx = k - 1
        for i in range(k):
            for j in range(i + 1, k):
                W.S[i * k + j] = g[idx]
                W.S[j * k + i] = g[idx]
                idx += 1
        jacobi(W.S, W.U, W.lam, k)
        for i in range(k * k):
            W.Uc[i] = W.U[i]
        for i in range(k):
            W.lamc[i] = W.lam[i]
        for i in range(p):
            W.gkey[i] = g[i]
        W.cached = 1

    q = xy * xy
    for j in range(k):
        acc = 0.0
        for i in range(k):
            acc += W.U[i * k + j] * W.z[i]
        W.w[j] = acc
        W.el[j] = exp(-W.lam[j])
        q += W.el[j] * acc * acc
    sq = sqrt(q)
    a = r * xy / sq
    logM = log_mnorm_ratio(k, a, &rho)
    ll = -0.5 * k * LOG_2PI - 0.5 * d * log(q) + 0.5 * (a * a - r2) + logM
    if not want_grad:
        return ll

    dla = a + rho
    dlq = -0.5 * d / q - dla * a / (2.0 * q)
    vu = 0.0
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += W.U[i * k + j] * (W.el[j] - 1.0) * W.w[j]
        W.v[i] = acc
        vu += acc * W.u[i]
    W.v[d - 1] = 0.0
    xg = 0.0
    for i in range(d):
        W.gu[i] = -4.0 * (W.v[i] * t / c + vu * y[i] / c - 2.0 * vu * t * W.u[i] / (c * c))
        xg += W.xi[i] * W.gu[i]
    for i in range(d):
        gmu[i] = dla * y[i] / sq - mu[i] + dlq * (W.gu[i] - W.xi[i] * xg) / r

    # d q / d S = U (F o w w^T) U^T with F the divided differences of exp(-x)
    for j in range(k):
        for l in range(k):
            W.T[j * k + l] = (-exp(-0.5 * (W.lam[j] + W.lam[l]))
                              * sinhc(0.5 * (W.lam[j] - W.lam[l]))
                              * W.w[j] * W.w[l])
    for i in range(k):
        for l in range(k):
            acc = 0.0
            for j in range(k):
                acc += W.U[i * k + j] * W.T[j * k + l]
            W.S[i * k + l] = acc
    for i in range(k):
        for l in range(i, k):
            acc = 0.0
            for j in range(k):
                acc += W.S[i * k + j] * W.U[l * k + j]
            W.Gs[i * k + l] = acc
    for j in range(k - 1):
        gg[j] = dlq * (W.Gs[j * k + j] - W.Gs[(k - 1) * k + (k - 1)])
    idx = k - 1
    for i in range(k):
        for j in range(i + 1, k):
            gg[idx] = dlq * 2.0 * W.Gs[i * k + j]
            idx += 1
    return ll


def _check_dims(int d):
    if d < 3 or d > MAXD:
        raise ValueError(f"compiled kernels support 3 <= d <= {MAXD}, got {d}")


def logpdf(const double[:, ::1] Y, const double[:, ::1] MU, const double[:, ::1] G):
    """Per-row ESAG log density; rows of ``MU``/``G`` pair with rows of ``Y``."""
    cdef Py_ssize_t n = Y.shape[0], i
    cdef int d = Y.shape[1]
    _check_dims(d)
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Work* W = <Work*> calloc(1, sizeof(Work))
    if W == NULL:
        raise MemoryError()
    with nogil:
        for i in range(n):
            o[i] = obs_eval(&Y[i, 0], &MU[i, 0], &G[i, 0], d, 0, NULL, NULL, W)
    free(W)
    return out


def logpdf_grad(const double[:, ::1] Y, const double[:, ::1] MU, const double[:, ::1] G):
    """Per-row log density with gradients in the row's ``mu`` and ``gamma``."""
    cdef Py_ssize_t n = Y.shape[0], i
    cdef int d = Y.shape[1]
    cdef int p = G.shape[1]
    _check_dims(d)
    out = np.empty(n)
    gmu = np.empty((n, d))
    gg = np.empty((n, p))
    cdef double[::1] o = out
    cdef double[:, ::1] gm = gmu
    cdef double[:, ::1] ggv = gg
    cdef Work* W = <Work*> calloc(1, sizeof(Work))
    if W == NULL:
        raise MemoryError()
    with nogil:
        for i in range(n):
            o[i] = obs_eval(&Y[i, 0], &MU[i, 0], &G[i, 0], d, 1, &gm[i, 0], &ggv[i, 0], W)
    free(W)
    return out, gmu, gg


def vpower(const double[:, ::1] MU, const double[:, ::1] G, double power):
    """Stack of ``V_i ** power`` (``power`` = 1, -1, 0.5, ...) for each row."""
    cdef Py_ssize_t n = MU.shape[0], i
    cdef int d = MU.shape[1]
    cdef int k = d - 1
    cdef int a, b, j, idx
    cdef double r, sgn, c, acc, trace
    cdef bint allzero
    _check_dims(d)
    out = np.empty((n, d, d))
    cdef double[:, :, ::1] o = out
    cdef Work* W = <Work*> calloc(1, sizeof(Work))
    if W == NULL:
        raise MemoryError()
    with nogil:
        for i in range(n):
            r = 0.0
            for a in range(d):
                r += MU[i, a] * MU[i, a]
            r = sqrt(r)
            for a in range(d):
                W.xi[a] = MU[i, a] / r
                W.u[a] = W.xi[a]
            sgn = 1.0 if W.xi[d - 1] >= 0.0 else -1.0
            W.u[d - 1] += sgn
            c = 2.0 * (1.0 + sgn * W.xi[d - 1])
            allzero = True
            for a in range(G.shape[1]):
                if G[i, a] != 0.0:
                    allzero = False
            if allzero:
                for a in range(d):
                    for b in range(d):
                        o[i, a, b] = 1.0 if a == b else 0.0
                continue
            for a in range(k * k):
                W.S[a] = 0.0
            trace = 0.0
            for a in range(k - 1):
                W.S[a * k + a] = G[i, a]
                trace += G[i, a]
            W.S[(k - 1) * k + (k - 1)] = -trace
            idx = k - 1
            for a in range(k):
                for b in range(a + 1, k):
                    W.S[a * k + b] = G[i, idx]
                    W.S[b * k + a] = G[i, idx]
                    idx += 1
            jacobi(W.S, W.U, W.lam, k)
            # T = E U, with E the first k columns of the Householder reflection
            for a in range(d):
                for j in range(k):
                    acc = 0.0
                    for b in range(k):
                        acc += ((1.0 if a == b else 0.0) - 2.0 * W.u[a] * W.u[b] / c) * W.U[b * k + j]
                    W.T[a * k + j] = acc
            for j in range(k):
                W.el[j] = exp(power * W.lam[j])
            for a in range(d):
                for b in range(a, d):
                    acc = W.xi[a] * W.xi[b]
                    for j in range(k):
                        acc += W.T[a * k + j] * W.el[j] * W.T[b * k + j]
                    o[i, a, b] = acc
                    o[i, b, a] = acc
    free(W)
    return out


# --------------------------------------------------------------------------
# Regression objective and BFGS
# --------------------------------------------------------------------------

cdef struct Problem:
    const double* Y
    const double* X
    Py_ssize_t n
    int d
    int p
    int m
    int nfree
    const Py_ssize_t* free_idx
    double* theta
    double* gfull
    double* mu
    double* g
    double* gmu
    double* gg
    Work* W


cdef double objective(Problem* P, const double* x, double* grad) noexcept nogil:
    """Negative mean log-likelihood over the free coordinates ``x``."""
    cdef Py_ssize_t i
    cdef int a, b, j, d = P.d, p = P.p, m = P.m
    cdef int L = (d + p) * m
    cdef double total = 0.0, ll, xij
    cdef const double* A = P.theta
    cdef const double* B = P.theta + d * m
    for j in range(P.nfree):
        P.theta[P.free_idx[j]] = x[j]
    for j in range(L):
        P.gfull[j] = 0.0
    for i in range(P.n):
        for a in range(d):
            P.mu[a] = 0.0
        for b in range(p):
            P.g[b] = 0.0
        for j in range(m):
            xij = P.X[i * m + j]
            for a in range(d):
                P.mu[a] += A[a + d * j] * xij
            for b in range(p):
                P.g[b] += B[b + p * j] * xij
        ll = obs_eval(&P.Y[i * d], P.mu, P.g, d, 1, P.gmu, P.gg, P.W)
        if not isfinite(ll):
            return INFINITY
        total += ll
        for j in range(m):
            xij = P.X[i * m + j]
            for a in range(d):
                P.gfull[a + d * j] += P.gmu[a] * xij
            for b in range(p):
                P.gfull[d * m + b + p * j] += P.gg[b] * xij
    for j in range(P.nfree):
        grad[j] = -P.gfull[P.free_idx[j]] / P.n
    return -total / P.n


cdef double maxabs(const double* v, int n) noexcept nogil:
    cdef double mx = 0.0
    cdef int i
    for i in range(n):
        if fabs(v[i]) > mx:
            mx = fabs(v[i])
    return mx




cdef int bfgs_core(Problem* P, double* x, double* H, bint warm, double* fout, int* nit_out,
                   int* nfev_out, double gtol, double ftol, int maxiter, double maxstep) noexcept nogil:
    # H (n x n, row-major) is the inverse-Hessian estimate: used as given
    # when ``warm``, reset to the identity otherwise; holds the final
    # estimate on return.
    cdef int n = P.nfree
    cdef int i, j, it = 0, nfev = 0, ls, small = 0, status = 2
    cdef bint first = not warm, ok
    cdef double f, fn, gp, step, st, denom, sy, yy, rho, yHy, df, pmax, snorm, ynorm
    cdef double* g = <double*> malloc(n * sizeof(double))
    cdef double* gn = <double*> malloc(n * sizeof(double))
    cdef double* xn = <double*> malloc(n * sizeof(double))
    cdef double* pdir = <double*> malloc(n * sizeof(double))
    cdef double* s = <double*> malloc(n * sizeof(double))
    cdef double* yv = <double*> malloc(n * sizeof(double))
    cdef double* Hy = <double*> malloc(n * sizeof(double))

    if not warm:
        for i in range(n * n):
            H[i] = 0.0
        for i in range(n):
            H[i * n + i] = 1.0
    f = objective(P, x, g)
    nfev = 1
    if not isfinite(f):
        status = 4
        it = maxiter  # skip loop
    while it < maxiter:
        if maxabs(g, n) <= gtol:
            status = 0
            break
        gp = 0.0
        for i in range(n):
            pdir[i] = 0.0
            for j in range(n):
                pdir[i] -= H[i * n + j] * g[j]
            gp += pdir[i] * g[i]
        if not (gp < 0.0):
            for i in range(n * n):
                H[i] = 0.0
            gp = 0.0
            for i in range(n):
                H[i * n + i] = 1.0
                pdir[i] = -g[i]
                gp -= g[i] * g[i]
        pmax = maxabs(pdir, n)
        step = 1.0
        if pmax * step > maxstep:
            step = maxstep / pmax
        ok = False
        fn = INFINITY
        for ls in range(60):
            for i in range(n):
                xn[i] = x[i] + step * pdir[i]
            fn = objective(P, xn, gn)
            nfev += 1
            if isfinite(fn) and fn <= f + 1e-4 * step * gp:
                ok = True
                break
            if isfinite(fn):
                denom = 2.0 * (fn - f - step * gp)
                if denom > 0.0:
                    st = -gp * step * step / denom
                else:
                    st = 0.5 * step
                if st > 0.5 * step:
                    st = 0.5 * step
                if st < 0.1 * step:
                    st = 0.1 * step
                step = st
            else:
                step *= 0.25
        if not ok:
            status = 3
            break
        it += 1
        sy = 0.0
        yy = 0.0
        snorm = 0.0
        ynorm = 0.0
        for i in range(n):
            s[i] = xn[i] - x[i]
            yv[i] = gn[i] - g[i]
            sy += s[i] * yv[i]
            yy += yv[i] * yv[i]
            snorm += s[i] * s[i]
        ynorm = sqrt(yy)
        snorm = sqrt(snorm)
        df = f - fn
        for i in range(n):
            x[i] = xn[i]
            g[i] = gn[i]
        f = fn
        if sy > 1e-12 * snorm * ynorm and sy > 0.0:
            if first:
                for i in range(n * n):
                    H[i] = 0.0
                for i in range(n):
                    H[i * n + i] = sy / yy
                first = False
            rho = 1.0 / sy
            yHy = 0.0
            for i in range(n):
                Hy[i] = 0.0
                for j in range(n):
                    Hy[i] += H[i * n + j] * yv[j]
                yHy += yv[i] * Hy[i]
            for i in range(n):
                for j in range(n):
                    H[i * n + j] += (-rho * (Hy[i] * s[j] + s[i] * Hy[j])
                                     + (rho * rho * yHy + rho) * s[i] * s[j])
        if df <= ftol * (fabs(f) if fabs(f) > 1.0 else 1.0):
            small += 1
            if small >= 3:
                status = 1
                break
        else:
            small = 0
    if status == 2 and maxabs(g, n) <= gtol:
        status = 0
    fout[0] = f
    nit_out[0] = it
    nfev_out[0] = nfev
    free(g); free(gn); free(xn); free(pdir); free(s); free(yv); free(Hy)
    return status


cdef class _ProblemHolder:
    cdef Problem P
    cdef object refs

    def __cinit__(self, const double[:, ::1] Y, const double[:, ::1] X, int p,
                  const Py_ssize_t[::1] free_idx, double[::1] theta):
        cdef int d = Y.shape[1]
        _check_dims(d)
        self.refs = (Y, X, free_idx, theta)
        self.P.Y = &Y[0, 0]
        self.P.X = &X[0, 0]
        self.P.n = Y.shape[0]
        self.P.d = d
        self.P.p = p
        self.P.m = X.shape[1]
        self.P.nfree = free_idx.shape[0]
        self.P.free_idx = &free_idx[0] if free_idx.shape[0] > 0 else NULL
        self.P.theta = &theta[0]
        self.P.gfull = <double*> calloc(theta.shape[0], sizeof(double))
        self.P.mu = <double*> calloc(MAXD, sizeof(double))
        self.P.g = <double*> calloc(MAXD * MAXD, sizeof(double))
        self.P.gmu = <double*> calloc(MAXD, sizeof(double))
        self.P.gg = <double*> calloc(MAXD * MAXD, sizeof(double))
        self.P.W = <Work*> calloc(1, sizeof(Work))

    def __dealloc__(self):
        free(self.P.gfull)
        free(self.P.mu)
        free(self.P.g)
        free(self.P.gmu)
        free(self.P.gg)
        free(self.P.W)


def _prep(Y, X, p, free_idx, theta):
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    free_idx = np.ascontiguousarray(free_idx, dtype=np.intp)
    theta = np.array(theta, dtype=np.float64, copy=True)
    expected = (Y.shape[1] + p) * X.shape[1]
    if theta.shape[0] != expected:
        raise ValueError(f"theta has {theta.shape[0]} entries, expected {expected}")
    return Y, X, free_idx, theta


def objective_grad(theta, Y, X, int p, free_idx):
    """Negative mean log-likelihood and its gradient over ``free_idx``."""
    Y, X, free_idx, theta = _prep(Y, X, p, free_idx, theta)
    holder = _ProblemHolder(Y, X, p, free_idx, theta)
    x = np.ascontiguousarray(theta[free_idx])
    grad = np.empty(x.shape[0])
    cdef double[::1] xv = x
    cdef double[::1] gv = grad
    cdef double f
    cdef Problem* P = &holder.P
    with nogil:
        f = objective(P, &xv[0] if xv.shape[0] else NULL, &gv[0] if gv.shape[0] else NULL)
    return f, grad


def bfgs(theta, Y, X, int p, free_idx, double gtol=1e-8, double ftol=1e-12,
         int maxiter=1000, double maxstep=5.0, H0=None):
    """Minimize the negative mean log-likelihood over the free coordinates.

    ``H0`` optionally seeds the inverse-Hessian estimate (free coordinates
    only). Returns ``(theta, f, nit, nfev, status, H)`` where ``theta`` is
    the full coefficient vector with the optimized free entries written in
    and ``H`` the final inverse-Hessian estimate.
    """
    Y, X, free_idx, theta = _prep(Y, X, p, free_idx, theta)
    holder = _ProblemHolder(Y, X, p, free_idx, theta)
    x = np.ascontiguousarray(theta[free_idx])
    cdef int nf = x.shape[0]
    warm = H0 is not None
    H = np.array(H0, dtype=np.float64, copy=True, order="C") if warm else np.eye(nf)
    if H.shape != (nf, nf):
        raise ValueError("H0 must be square in the number of free coordinates")
    cdef double[::1] xv = x
    cdef double[:, ::1] Hv = H
    cdef double f = 0.0
    cdef int nit = 0, nfev = 0, status
    cdef bint w = warm
    cdef Problem* P = &holder.P
    if nf == 0:
        fval, _ = objective_grad(theta, Y, X, p, free_idx)
        return theta, fval, 0, 1, 0 if np.isfinite(fval) else 4, H
    with nogil:
        status = bfgs_core(P, &xv[0], &Hv[0, 0], w, &f, &nit, &nfev, gtol, ftol, maxiter, maxstep)
    theta[free_idx] = x
    return theta, f, nit, nfev, status, H
