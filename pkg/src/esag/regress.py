"""Conditional ESAG regression.

The model is ``Y | X ~ ESAG(mu = alpha0 + A1 x, gamma = beta0 + B1 x)``
with covariates affinely mapped into ``[1, 2]``. Coefficients are fitted by
maximum likelihood over the blocks a :class:`NullSpec` leaves free.

The flat coefficient vector used by the kernels is

    theta = [vec(A), vec(B)],  A = [alpha0 | A1] (d x m),  B = [beta0 | B1] (p x m)

with ``vec`` stacking columns and ``m = q + 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .dist import EsagParams
from .errors import DegenerateDataError, ZeroRangeError
from .linalg import gamma_dim

__all__ = [
    "Dataset",
    "ExtrapolationWarning",
    "FitResult",
    "NullSpec",
    "OptimizerConfig",
    "RegressionCoefficients",
    "SmallSampleWarning",
    "StandardizationRecord",
    "fit",
    "init_coefficients",
    "loglik",
    "predict_params",
    "standardize_covariates",
]

#: Responses must have unit norm to this tolerance.
UNIT_TOL = 1e-10
#: Mean vectors shorter than this make the log-likelihood ``-inf``.
MU_FLOOR = 1e-8


class ExtrapolationWarning(UserWarning):
    """Prediction requested outside the covariate range seen in training."""


class SmallSampleWarning(UserWarning):
    """Fewer observations than free parameters."""


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column ``(min, range)`` of the affine map ``x -> (x - min)/range + 1``."""

    minimum: np.ndarray
    range: np.ndarray

    def __post_init__(self):
        lo = np.array(self.minimum, dtype=float).reshape(-1)
        rg = np.array(self.range, dtype=float).reshape(-1)
        if lo.shape != rg.shape:
            raise ValueError("minimum and range must have the same length")
        lo.setflags(write=False)
        rg.setflags(write=False)
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "range", rg)

    @property
    def q(self) -> int:
        return self.minimum.shape[0]

    def apply(self, raw) -> np.ndarray:
        """Map raw covariates (vector or rows) to the standardized scale."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape[-1] != self.q:
            raise ValueError(f"expected {self.q} covariates, got {raw.shape[-1]}")
        return (raw - self.minimum) / self.range + 1.0

    def extrapolates(self, raw) -> bool:
        """True when any entry of ``raw`` lies outside the training range."""
        z = self.apply(raw)
        return bool(np.any(z < 1.0) or np.any(z > 2.0))

    def to_dict(self) -> dict:
        return {"minimum": self.minimum.tolist(), "range": self.range.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "StandardizationRecord":
        return cls(np.asarray(obj["minimum"], float), np.asarray(obj["range"], float))


def standardize_covariates(raw) -> tuple[np.ndarray, StandardizationRecord]:
    """Map every covariate column into ``[1, 2]``.

    Parameters
    ----------
    raw : array_like, shape (n, q)

    Returns
    -------
    standardized : ndarray, shape (n, q)
        Column minima map to exactly 1 and maxima to exactly 2.
    record : StandardizationRecord
        Keeps the map for new inputs.

    Raises
    ------
    ZeroRangeError
        If a column is constant.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("covariates must be a 2-d array")
    lo = raw.min(axis=0) if raw.shape[0] else np.zeros(raw.shape[1])
    hi = raw.max(axis=0) if raw.shape[0] else np.ones(raw.shape[1])
    rg = hi - lo
    for k in range(raw.shape[1]):
        if not rg[k] > 0.0:
            raise ZeroRangeError(k)
    z = (raw - lo) / rg + 1.0
    # pin the endpoints against rounding in (x - lo) / rg
    z[raw == lo] = 1.0
    z[raw == hi] = 2.0
    return z, StandardizationRecord(lo, rg)


@dataclass(frozen=True)
class Dataset:
    """Directional responses paired with (standardized) covariates.

    Attributes
    ----------
    responses : ndarray, shape (n, d)
        Unit vectors.
    covariates : ndarray, shape (n, q)
        ``q = 0`` is allowed and gives intercept-only models.
    standardization_record : StandardizationRecord or None
        Map used to produce ``covariates`` from raw values.
    """

    responses: np.ndarray
    covariates: np.ndarray = None
    standardization_record: StandardizationRecord | None = None

    def __post_init__(self):
        Y = np.array(self.responses, dtype=float)
        if Y.ndim != 2 or Y.shape[0] < 1:
            raise ValueError("responses must be an (n, d) array with n >= 1")
        gamma_dim(Y.shape[1])
        err = np.abs(np.linalg.norm(Y, axis=1) - 1.0)
        if np.any(err > UNIT_TOL):
            bad = int(np.argmax(err > UNIT_TOL))
            raise ValueError(f"response row {bad} is not a unit vector")
        X = self.covariates
        X = np.zeros((Y.shape[0], 0)) if X is None else np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ValueError("responses and covariates have different row counts")
        Y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "responses", Y)
        object.__setattr__(self, "covariates", X)

    @classmethod
    def from_raw(cls, responses, raw_covariates=None) -> "Dataset":
        """Standardize ``raw_covariates`` and keep the record."""
        if raw_covariates is None:
            return cls(responses)
        raw = np.asarray(raw_covariates, dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
        z, rec = standardize_covariates(raw)
        return cls(responses, z, rec)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def d(self) -> int:
        return self.responses.shape[1]

    @property
    def q(self) -> int:
        return self.covariates.shape[1]

    def design(self) -> np.ndarray:
        """Rows ``[1, x_i]``."""
        return np.column_stack([np.ones(self.n), self.covariates])

    def with_responses(self, responses) -> "Dataset":
        return Dataset(responses, self.covariates, self.standardization_record)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.responses[idx], self.covariates[idx], self.standardization_record)


# --------------------------------------------------------------------------
# Coefficients and restrictions
# --------------------------------------------------------------------------


def _rows(X, q: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if q else X.reshape(-1, 0)
    if X.shape[1] != q:
        raise ValueError(f"expected {q} covariate columns, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class RegressionCoefficients:
    """``(alpha0, A1, beta0, B1)`` of a conditional ESAG model."""

    alpha0: np.ndarray
    A1: np.ndarray
    beta0: np.ndarray
    B1: np.ndarray

    def __post_init__(self):
        a0 = np.array(self.alpha0, dtype=float).reshape(-1)
        d = a0.shape[0]
        p = gamma_dim(d)
        A1 = np.array(self.A1, dtype=float).reshape(d, -1)
        q = A1.shape[1]
        b0 = np.array(self.beta0, dtype=float).reshape(-1)
        B1 = np.array(self.B1, dtype=float).reshape(p, q) if q else np.zeros((p, 0))
        if b0.shape != (p,):
            raise ValueError(f"beta0 must have {p} entries for d={d}")
        for name, arr in (("alpha0", a0), ("A1", A1), ("beta0", b0), ("B1", B1)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.alpha0.shape[0]

    @property
    def q(self) -> int:
        return self.A1.shape[1]

    @property
    def p(self) -> int:
        return self.beta0.shape[0]

    @classmethod
    def zeros(cls, d: int, q: int) -> "RegressionCoefficients":
        p = gamma_dim(d)
        return cls(np.zeros(d), np.zeros((d, q)), np.zeros(p), np.zeros((p, q)))

    def to_theta(self) -> np.ndarray:
        A = np.column_stack([self.alpha0, self.A1])
        B = np.column_stack([self.beta0, self.B1])
        return np.concatenate([A.ravel(order="F"), B.ravel(order="F")])

    @classmethod
    def from_theta(cls, theta, d: int, q: int) -> "RegressionCoefficients":
        theta = np.asarray(theta, dtype=float)
        p = gamma_dim(d)
        m = q + 1
        A = theta[: d * m].reshape((d, m), order="F")
        B = theta[d * m:].reshape((p, m), order="F")
        return cls(A[:, 0], A[:, 1:], B[:, 0], B[:, 1:])

    def mean(self, X) -> np.ndarray:
        """Rows ``alpha0 + A1 x_i`` for standardized covariate rows ``X``."""
        X = _rows(X, self.q)
        return self.alpha0 + X @ self.A1.T

    def shape(self, X) -> np.ndarray:
        """Rows ``beta0 + B1 x_i``."""
        X = _rows(X, self.q)
        return self.beta0 + X @ self.B1.T

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0.tolist(),
            "A1": self.A1.tolist(),
            "beta0": self.beta0.tolist(),
            "B1": self.B1.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegressionCoefficients":
        d = len(obj["alpha0"])
        p = gamma_dim(d)
        A1 = np.asarray(obj["A1"], dtype=float).reshape(d, -1)
        B1 = np.asarray(obj["B1"], dtype=float).reshape(p, A1.shape[1])
        return cls(np.asarray(obj["alpha0"], float), A1, np.asarray(obj["beta0"], float), B1)


@dataclass(frozen=True)
class NullSpec:
    """Which coefficient blocks are held at zero.

    Covariate column indices in ``frozen_alpha_columns`` and
    ``frozen_beta_columns`` are 0-based.

    Examples
    --------
    >>> NullSpec.isotropy().gamma_is_zero
    True
    >>> NullSpec.mu_const().freeze_A1
    True
    """

    freeze_A1: bool = False
    freeze_B1: bool = False
    freeze_beta0: bool = False
    frozen_alpha_columns: frozenset = field(default_factory=frozenset)
    frozen_beta_columns: frozenset = field(default_factory=frozenset)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "frozen_alpha_columns", frozenset(int(k) for k in self.frozen_alpha_columns))
        object.__setattr__(self, "frozen_beta_columns", frozenset(int(k) for k in self.frozen_beta_columns))

    @classmethod
    def full(cls) -> "NullSpec":
        return cls(name="full")

    @classmethod
    def isotropy(cls) -> "NullSpec":
        """``gamma = 0``: the mean may still depend on covariates."""
        return cls(freeze_B1=True, freeze_beta0=True, name="isotropy")

    @classmethod
    def mu_const(cls) -> "NullSpec":
        """Mean independent of covariates."""
        return cls(freeze_A1=True, name="mu_const")

    @classmethod
    def gamma_const(cls) -> "NullSpec":
        """Shape independent of covariates."""
        return cls(freeze_B1=True, name="gamma_const")

    @classmethod
    def alpha_column(cls, k: int) -> "NullSpec":
        return cls(frozen_alpha_columns=frozenset([k]), name=f"alpha_{k}")

    @classmethod
    def beta_column(cls, k: int) -> "NullSpec":
        return cls(frozen_beta_columns=frozenset([k]), name=f"beta_{k}")

    @classmethod
    def by_name(cls, name: str) -> "NullSpec":
        table = {
            "full": cls.full,
            "isotropy": cls.isotropy,
            "mu_const": cls.mu_const,
            "gamma_const": cls.gamma_const,
        }
        if name in table:
            return table[name]()
        for prefix, ctor in (("alpha_", cls.alpha_column), ("beta_", cls.beta_column)):
            if name.startswith(prefix) and name[len(prefix):].isdigit():
                return ctor(int(name[len(prefix):]))
        raise ValueError(f"unknown null specification {name!r}")

    @property
    def gamma_is_zero(self) -> bool:
        return self.freeze_beta0 and self.freeze_B1

    def free_mask(self, d: int, q: int) -> np.ndarray:
        """Boolean mask over ``theta`` marking free coordinates."""
        p = gamma_dim(d)
        m = q + 1
        A = np.ones((d, m), dtype=bool)
        B = np.ones((p, m), dtype=bool)
        if self.freeze_A1:
            A[:, 1:] = False
        if self.freeze_B1:
            B[:, 1:] = False
        if self.freeze_beta0:
            B[:, 0] = False
        for k in self.frozen_alpha_columns:
            if not 0 <= k < q:
                raise ValueError(f"alpha column {k} out of range for q={q}")
            A[:, k + 1] = False
        for k in self.frozen_beta_columns:
            if not 0 <= k < q:
                raise ValueError(f"beta column {k} out of range for q={q}")
            B[:, k + 1] = False
        return np.concatenate([A.ravel(order="F"), B.ravel(order="F")])

    def free_indices(self, d: int, q: int) -> np.ndarray:
        return np.flatnonzero(self.free_mask(d, q)).astype(np.intp)

    def n_free(self, d: int, q: int) -> int:
        return int(self.free_mask(d, q).sum())

    def nested_in(self, other: "NullSpec", d: int, q: int) -> bool:
        """True when every model allowed here is also allowed by ``other``
        and ``other`` frees at least one more coordinate."""
        a = self.free_mask(d, q)
        b = other.free_mask(d, q)
        return bool(np.all(b[a]) and b.sum() > a.sum())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "freeze_A1": self.freeze_A1,
            "freeze_B1": self.freeze_B1,
            "freeze_beta0": self.freeze_beta0,
            "frozen_alpha_columns": sorted(self.frozen_alpha_columns),
            "frozen_beta_columns": sorted(self.frozen_beta_columns),
        }


# --------------------------------------------------------------------------
# Likelihood
# --------------------------------------------------------------------------


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def loglik(coeffs: RegressionCoefficients, data: Dataset, backend: str | None = None) -> float:
    """Total log-likelihood; ``-inf`` if any fitted mean is shorter than 1e-8."""
    if coeffs.d != data.d or coeffs.q != data.q:
        raise ValueError("coefficient dimensions do not match the data")
    MU = coeffs.mean(data.covariates)
    G = coeffs.shape(data.covariates)
    if np.any(np.linalg.norm(MU, axis=1) < MU_FLOOR):
        return -math.inf
    ll = kernels.logpdf(data.responses, MU, G, backend=backend)
    return float(ll.sum())


def init_coefficients(data: Dataset, spec: NullSpec | None = None) -> RegressionCoefficients:
    """Moment-based starting point.

    ``alpha0 = c * ybar / |ybar|`` with
    ``c = |ybar| (d - |ybar|^2) / (1 - |ybar|^2)``; every other block is
    zero. ``c`` is floored at 0.1, and ``e_1`` replaces the direction when
    ``ybar = 0``.

    Raises
    ------
    DegenerateDataError
        If ``|ybar| >= 1 - 1e-12`` (all responses identical).
    """
    d, q = data.d, data.q
    ybar = data.responses.mean(axis=0)
    R = float(np.linalg.norm(ybar))
    if R >= 1.0 - 1e-12:
        raise DegenerateDataError("all responses coincide; the mean direction is not estimable")
    direction = ybar / R if R > 0.0 else np.eye(d)[0]
    c = R * (d - R * R) / (1.0 - R * R)
    c = max(c, 0.1)
    out = RegressionCoefficients.zeros(d, q)
    return replace(out, alpha0=c * direction)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`fit`.

    Attributes
    ----------
    method : {"bfgs", "nelder-mead"}
        BFGS uses the analytic gradient; Nelder-Mead is derivative free.
    n_restarts : int
        Extra local searches started from the best point plus Gaussian
        noise of standard deviation ``restart_scale`` on the free entries.
    seed : int
        Seeds the restart perturbations.
    gtol, ftol : float
        BFGS stops when the largest gradient entry of the mean negative
        log-likelihood is below ``gtol``, or after three consecutive steps
        that each improve it by less than ``ftol`` relatively. For
        Nelder-Mead ``ftol`` is the relative spread tolerance of the
        simplex values.
    maxiter : int or None
        ``None`` gives 1000 + 100 per free parameter for BFGS and 5000 per
        free parameter for Nelder-Mead.
    maxstep : float
        Cap on the largest coordinate change per BFGS step.
    staged : bool
        From the heuristic start, first fit the mean with the shape fixed,
        then release the shape blocks.
    """

    method: str = "bfgs"
    n_restarts: int = 5
    restart_scale: float = 0.25
    seed: int = 0
    gtol: float = 1e-6
    ftol: float = 1e-12
    maxiter: int | None = None
    maxstep: float = 5.0
    staged: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.method not in {"bfgs", "nelder-mead"}:
            raise ValueError(f"unknown optimizer {self.method!r}")
        if self.n_restarts < 0:
            raise ValueError("n_restarts must be >= 0")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_restarts": self.n_restarts,
            "restart_scale": self.restart_scale,
            "seed": self.seed,
            "gtol": self.gtol,
            "ftol": self.ftol,
            "maxiter": self.maxiter,
            "maxstep": self.maxstep,
            "staged": self.staged,
        }


@dataclass(frozen=True)
class FitResult:
    """Maximum likelihood fit of one :class:`NullSpec`.

    ``mu`` and ``gamma`` hold the fitted per-observation parameters as
    arrays; :attr:`per_observation_params` wraps them as
    :class:`~esag.dist.EsagParams`.
    """

    coefficients: RegressionCoefficients
    loglik: float
    converged: bool
    iterations: int
    evaluations: int
    status: str
    spec: NullSpec
    mu: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    inverse_hessian: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def per_observation_params(self) -> list[EsagParams]:
        return [EsagParams(m, g) for m, g in zip(self.mu, self.gamma)]

    def summary(self) -> dict:
        return {
            "spec": self.spec.name,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "status": self.status,
        }


def _nm_solve(theta0, free_idx, Y, X, p, cfg, be, maxiter):
    theta = theta0.copy()

    def f(x):
        theta[free_idx] = x
        val, _ = be.objective_grad(theta, Y, X, p, free_idx)
        return val if math.isfinite(val) else 1e300

    x0 = theta0[free_idx]
    f0 = f(x0)
    res = minimize(
        f,
        x0,
        method="Nelder-Mead",
        options={
            "maxiter": maxiter,
            "maxfev": 2 * maxiter,
            "xatol": 1e-8,
            "fatol": cfg.ftol * max(abs(f0), 1.0) if math.isfinite(f0) else 1e-8,
            "adaptive": free_idx.size > 5,
        },
    )
    out = theta0.copy()
    out[free_idx] = res.x
    status = 1 if res.success else 2
    return out, float(res.fun), int(res.nit), int(res.nfev), status, None


def _solve(theta0, free_idx, Y, X, p, cfg: OptimizerConfig, be, H0=None):
    nfree = free_idx.size
    if cfg.method == "bfgs":
        maxiter = cfg.maxiter if cfg.maxiter is not None else 1000 + 100 * nfree
        return be.bfgs(theta0, Y, X, p, free_idx, cfg.gtol, cfg.ftol, maxiter, cfg.maxstep, H0)
    maxiter = cfg.maxiter if cfg.maxiter is not None else 5000 * max(nfree, 1)
    return _nm_solve(theta0, free_idx, Y, X, p, cfg, be, maxiter)


def _project(coeffs: RegressionCoefficients, mask: np.ndarray) -> np.ndarray:
    theta = coeffs.to_theta()
    theta[~mask] = 0.0
    return theta


def _mean_obj(theta, Y, X, p, free_idx, be) -> float:
    f, _ = be.objective_grad(theta, Y, X, p, free_idx)
    return f


def fit(
    data: Dataset,
    spec: NullSpec | None = None,
    config: OptimizerConfig | None = None,
    start=None,
) -> FitResult:
    """Maximum likelihood fit under ``spec``.

    Parameters
    ----------
    data : Dataset
    spec : NullSpec, optional
        Defaults to the unrestricted model.
    config : OptimizerConfig, optional
    start : RegressionCoefficients, FitResult or a sequence of them, optional
        Candidate starting points; frozen blocks are zeroed. The heuristic
        start from :func:`init_coefficients` is always a candidate and the
        candidate with the highest log-likelihood is used. A ``FitResult``
        of the same specification among the candidates also passes on its
        inverse-Hessian estimate, which makes refits on similar data cheap.

    Returns
    -------
    FitResult
        ``converged`` is False (not an exception) when every local search
        ended on the iteration cap or a failed line search.
    """
    spec = spec or NullSpec.full()
    cfg = config or OptimizerConfig()
    d, q = data.d, data.q
    p = gamma_dim(d)
    Y = np.ascontiguousarray(data.responses)
    X = np.ascontiguousarray(_design(data.covariates))
    mask = spec.free_mask(d, q)
    free_idx = np.flatnonzero(mask).astype(np.intp)
    nfree = free_idx.size
    if data.n < nfree:
        warnings.warn(
            f"{data.n} observations for {nfree} free parameters", SmallSampleWarning, stacklevel=2
        )
    be = kernels.get_backend(cfg.backend, d)

    init = _project(init_coefficients(data, spec), mask)
    best_theta = init
    best_f = _mean_obj(init, Y, X, p, free_idx, be)
    from_init = True
    H0 = None
    if start is not None:
        starts = [start] if isinstance(start, (RegressionCoefficients, FitResult)) else list(start)
        for s in starts:
            coeffs = s.coefficients if isinstance(s, FitResult) else s
            th = _project(coeffs, mask)
            f = _mean_obj(th, Y, X, p, free_idx, be)
            if f < best_f:
                best_theta, best_f, from_init = th, f, False
            if (
                H0 is None
                and isinstance(s, FitResult)
                and s.inverse_hessian is not None
                and np.array_equal(s.spec.free_mask(d, q), mask)
            ):
                H0 = s.inverse_hessian

    total_it = 0
    total_ev = 0
    theta0 = best_theta
    if from_init and cfg.staged:
        shape_free = free_idx >= d * (q + 1)
        if np.any(shape_free) and not np.all(shape_free):
            th, f, it, ev, _, _ = _solve(theta0, free_idx[~shape_free], Y, X, p, cfg, be)
            total_it += it
            total_ev += ev
            if math.isfinite(f):
                theta0 = th
    theta, f, it, ev, status, H = _solve(theta0, free_idx, Y, X, p, cfg, be, None if from_init else H0)
    total_it += it
    total_ev += ev

    if cfg.n_restarts:
        rng = np.random.default_rng(cfg.seed)
        for _ in range(cfg.n_restarts):
            trial = theta.copy()
            trial[free_idx] += cfg.restart_scale * rng.standard_normal(nfree)
            th, ft, it, ev, st, Ht = _solve(trial, free_idx, Y, X, p, cfg, be)
            total_it += it
            total_ev += ev
            if ft < f - 1e-12 * max(abs(f), 1.0):
                theta, f, status, H = th, ft, st, Ht

    theta[~mask] = 0.0
    coeffs = RegressionCoefficients.from_theta(theta, d, q)
    MU = coeffs.mean(data.covariates)
    G = coeffs.shape(data.covariates)
    ll = loglik(coeffs, data, backend=cfg.backend)
    return FitResult(
        coefficients=coeffs,
        loglik=ll,
        converged=bool(status in (0, 1) and math.isfinite(ll)),
        iterations=int(total_it),
        evaluations=int(total_ev),
        status=kernels.STATUS.get(int(status), str(status)),
        spec=spec,
        mu=MU,
        gamma=G,
        inverse_hessian=H,
    )


def predict_params(coeffs: RegressionCoefficients, x=None, record: StandardizationRecord | None = None) -> EsagParams:
    """Conditional ESAG parameters at a raw covariate vector.

    ``x`` is mapped through ``record`` first; values outside the training
    range raise an :class:`ExtrapolationWarning`. With ``q = 0`` the
    intercepts are returned and ``x`` is ignored.
    """
    if coeffs.q == 0:
        return EsagParams(coeffs.alpha0, coeffs.beta0)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != coeffs.q:
        raise ValueError(f"expected {coeffs.q} covariates, got {x.shape[0]}")
    if record is not None:
        if record.extrapolates(x):
            warnings.warn("covariate outside the training range", ExtrapolationWarning, stacklevel=2)
        x = record.apply(x)
    return EsagParams(coeffs.alpha0 + coeffs.A1 @ x, coeffs.beta0 + coeffs.B1 @ x)
