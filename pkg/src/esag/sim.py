"""Simulation harness: data-generating mechanisms and study drivers.

The catalog holds ten mechanisms for one covariate in ``d = 4``. Names
encode the null they are built around (``V``, ``mu``, ``gamma``) and their
index, so ``"mu1"`` has a covariate-dependent mean and isotropic shape.
Mechanisms with index 0 satisfy their null.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .dist import EsagParams, log_density, sample, sample_rows
from .inference import bootstrap_tests, ReliabilityWarning
from .parallel import substream, worker_map
from .predict import coverage, regions
from .regress import (
    Dataset,
    NullSpec,
    OptimizerConfig,
    RegressionCoefficients,
    standardize_covariates,
)

__all__ = [
    "ALPHA0",
    "ALPHA1",
    "BETA0",
    "BETA1",
    "COVERAGE_MU",
    "COVERAGE_GAMMA",
    "DGM_NAMES",
    "DGMSpec",
    "PROFILE_ANGLES",
    "PROFILE_SHAPE_SCALES",
    "ProfileResult",
    "StudyResult",
    "concentration_profile",
    "dgm",
    "generate_dgm",
    "profile_setting",
    "run_coverage_study",
    "run_rejection_study",
    "sub_seed",
]

ALPHA0 = (2.0, -5.0, 3.0, 5.0)
ALPHA1 = (2.0, 1.0, 2.0, 1.0)
BETA0 = (3.0, 5.0, -3.0, -4.0, 2.0)
BETA1 = (4.0, 2.0, 5.0, -2.0, 3.0)

# intercept-only coverage setting
COVERAGE_MU = (2.0, -5.0, 3.0, 5.0)
COVERAGE_GAMMA = (3.0, 5.0, -3.0, 4.0, 2.0)

_NULL_OF = {"V": "isotropy", "mu": "mu_const", "gamma": "gamma_const"}


def _alpha1r(r: float) -> tuple:
    return (r / 2.0,) * 4


def _betar(r: float) -> tuple:
    return (r / math.sqrt(5.0),) * 5


_Z4 = (0.0,) * 4
_Z5 = (0.0,) * 5

# name -> (alpha0, alpha1, beta0, beta1) as functions of r
_CATALOG = {
    "V0": lambda r: (ALPHA0, ALPHA1, _Z5, _Z5),
    "V1": lambda r: (ALPHA0, ALPHA1, _betar(r), _Z5),
    "V2": lambda r: (ALPHA0, ALPHA1, _betar(r), _betar(r)),
    "mu0": lambda r: (ALPHA0, _Z4, _Z5, _Z5),
    "mu1": lambda r: (ALPHA0, _alpha1r(r), _Z5, _Z5),
    "mu2": lambda r: (ALPHA0, _alpha1r(r), BETA0, _Z5),
    "mu3": lambda r: (ALPHA0, _alpha1r(r), BETA0, BETA1),
    "gamma0": lambda r: (ALPHA0, ALPHA1, _Z5, _Z5),
    "gamma1": lambda r: (ALPHA0, ALPHA1, _Z5, _betar(r)),
    "gamma2": lambda r: (ALPHA0, ALPHA1, BETA0, _betar(r)),
}

DGM_NAMES = tuple(_CATALOG)


@dataclass(frozen=True)
class DGMSpec:
    """A fully specified conditional ESAG with one N(0, 1) covariate.

    The raw covariate is standardized to ``[1, 2]`` before it enters
    ``mu = alpha0 + alpha1 x`` and ``gamma = beta0 + beta1 x``.
    """

    name: str
    r: float
    alpha0: tuple
    alpha1: tuple
    beta0: tuple
    beta1: tuple
    d: int = 4
    covariate_law: str = "standard normal, min-max standardized to [1, 2]"

    @property
    def family(self) -> str:
        return self.name.rstrip("0123456789")

    @property
    def null_spec(self) -> NullSpec:
        return NullSpec.by_name(_NULL_OF[self.family])

    def coefficients(self) -> RegressionCoefficients:
        return RegressionCoefficients(
            np.array(self.alpha0), np.array(self.alpha1)[:, None],
            np.array(self.beta0), np.array(self.beta1)[:, None],
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "r": self.r,
            "alpha0": list(self.alpha0),
            "alpha1": list(self.alpha1),
            "beta0": list(self.beta0),
            "beta1": list(self.beta1),
            "covariate_law": self.covariate_law,
        }


def dgm(name: str, r: float = 0.0) -> DGMSpec:
    """Catalog entry ``name`` at severity ``r``."""
    if name not in _CATALOG:
        raise ValueError(f"unknown mechanism {name!r}; choose from {', '.join(DGM_NAMES)}")
    if r < 0:
        raise ValueError("r must be nonnegative")
    a0, a1, b0, b1 = _CATALOG[name](float(r))
    return DGMSpec(name, float(r), a0, a1, b0, b1)


def generate_dgm(spec: DGMSpec, n: int, seed: int, *key: int) -> Dataset:
    """Draw ``n`` observations from ``spec`` using ``substream(seed, *key)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = substream(seed, *key)
    raw = rng.standard_normal((n, 1))
    X, record = standardize_covariates(raw)
    coeffs = spec.coefficients()
    Y = sample_rows(coeffs.mean(X), coeffs.shape(X), rng)
    return Dataset(Y, X, record)


def sub_seed(seed: int, *key: int) -> int:
    """A 32-bit seed derived from ``(seed, key...)``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyResult:
    """Tidy study output.

    ``rows`` holds one dict per cell. ``replicates`` keeps the raw
    per-replicate outcome (p-values or coverages) keyed by the cell label.
    """

    kind: str
    rows: list
    replicates: dict = field(repr=False)
    reps: int
    B: int
    n: int
    seed: int
    n_flagged: int = 0
    meta: dict = field(default_factory=dict)

    def cell(self, **match) -> dict:
        hits = [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "reps": self.reps,
            "B": self.B,
            "n": self.n,
            "seed": self.seed,
            "n_flagged": self.n_flagged,
            "meta": self.meta,
            "rows": self.rows,
            "replicates": {k: [None if not math.isfinite(v) else float(v) for v in vals]
                           for k, vals in self.replicates.items()},
        }


# --------------------------------------------------------------------------
# Rejection rates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _RejCtx:
    spec: DGMSpec
    n: int
    null_spec: NullSpec
    statistics: tuple
    B: int
    seed: int
    mc_size: int
    config: OptimizerConfig


def _rejection_replicate(ctx: _RejCtx, k: int):
    data = generate_dgm(ctx.spec, ctx.n, ctx.seed, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reps = bootstrap_tests(
            data, ctx.null_spec, None, ctx.statistics, ctx.B, sub_seed(ctx.seed, k),
            mc_size=ctx.mc_size, config=ctx.config,
        )
    flagged = any(r.reliability_warning for r in reps.values())
    return {s: reps[s].p_value for s in ctx.statistics}, flagged


def run_rejection_study(
    spec: DGMSpec,
    n: int,
    statistics: Sequence[str] = ("roc",),
    B: int = 200,
    reps: int = 200,
    levels: Sequence[float] = (0.05,),
    seed: int = 0,
    *,
    null_spec: NullSpec | None = None,
    mc_size: int = 500,
    config: OptimizerConfig | None = None,
    workers: int = 1,
) -> StudyResult:
    """Rejection rates of bootstrap tests over simulated datasets.

    Replicate ``k`` draws its data from ``substream(seed, k)`` and runs
    one shared bootstrap for all ``statistics`` seeded with
    ``sub_seed(seed, k)``. A test rejects when its p-value is strictly
    below the level.

    Parameters
    ----------
    spec : DGMSpec
    n : int
    statistics : sequence of str
    B : int
        Bootstrap size per test.
    reps : int
        Simulated datasets.
    levels : sequence of float
    seed : int
    null_spec : NullSpec, optional
        Defaults to the null the mechanism is built around.
    mc_size : int
        Null draws per observation for the moment statistic.
    config : OptimizerConfig, optional
        Defaults to a single start without restarts.
    workers : int
        Processes over replicates; each bootstrap runs serially inside.

    Returns
    -------
    StudyResult
        Rows ``dgm, r, n, statistic, level, rate, se, reps, B, seed``.
        Replicates whose bootstrap excluded more than the reliability
        threshold are counted in ``n_flagged``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    null_spec = null_spec or spec.null_spec
    statistics = tuple(s.lower() for s in statistics)
    config = config or OptimizerConfig(n_restarts=0)
    ctx = _RejCtx(spec, int(n), null_spec, statistics, int(B), int(seed), int(mc_size), config)
    out = worker_map(_rejection_replicate, range(reps), ctx, workers)
    n_flagged = sum(f for _, f in out)
    if n_flagged:
        warnings.warn(f"{n_flagged} of {reps} replicates had unreliable bootstraps", ReliabilityWarning, stacklevel=2)
    pvals = {s: np.array([p[s] for p, _ in out], dtype=float) for s in statistics}
    rows = []
    for s in statistics:
        p = pvals[s]
        valid = np.isfinite(p)
        for lv in levels:
            rate = float(np.mean(p[valid] < lv)) if valid.any() else float("nan")
            m = int(valid.sum())
            rows.append({
                "dgm": spec.name, "r": spec.r, "n": int(n), "statistic": s, "level": float(lv),
                "rate": rate, "se": math.sqrt(rate * (1.0 - rate) / m) if m else float("nan"),
                "reps": m, "B": int(B), "seed": int(seed),
            })
    return StudyResult("rejection", rows, pvals, int(reps), int(B), int(n), int(seed), int(n_flagged),
                       {"null": null_spec.name, "dgm": spec.to_dict(), "mc_size": int(mc_size),
                        "config": config.to_dict()})


# --------------------------------------------------------------------------
# Coverage
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _CovCtx:
    params: EsagParams
    n: int
    levels: tuple
    m: int
    B: int
    seed: int
    config: OptimizerConfig


def _coverage_replicate(ctx: _CovCtx, k: int):
    Y = sample(ctx.params, ctx.n, substream(ctx.seed, k))
    data = Dataset(Y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        regs = regions(data, None, ctx.levels, ctx.m, ctx.B, sub_seed(ctx.seed, k), config=ctx.config)
    return [coverage(rg, Y) for rg in regs]


def run_coverage_study(
    n: int,
    levels: Sequence[float] = (0.9, 0.95, 0.99),
    m: int = 2000,
    B: int = 100,
    reps: int = 500,
    seed: int = 0,
    *,
    params: EsagParams | None = None,
    config: OptimizerConfig | None = None,
    workers: int = 1,
) -> StudyResult:
    """Within-sample coverage of prediction regions.

    Each replicate draws ``n`` responses from ``params`` (default: the
    intercept-only anisotropic setting ``COVERAGE_MU``, ``COVERAGE_GAMMA``),
    builds regions from those responses and records the share of the same
    responses inside each region.

    Returns
    -------
    StudyResult
        Rows ``n, level, mean, sd, se, reps, m, B, seed`` where ``sd`` is
        the spread of coverage across replicates and ``se = sd / sqrt(reps)``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    params = params or EsagParams(np.array(COVERAGE_MU), np.array(COVERAGE_GAMMA))
    config = config or OptimizerConfig(n_restarts=0)
    levels = tuple(float(lv) for lv in levels)
    ctx = _CovCtx(params, int(n), levels, int(m), int(B), int(seed), config)
    cov = np.array(worker_map(_coverage_replicate, range(reps), ctx, workers), dtype=float)
    rows = []
    for j, lv in enumerate(levels):
        c = cov[:, j]
        sd = float(np.std(c, ddof=1)) if reps > 1 else 0.0
        rows.append({
            "n": int(n), "level": lv, "mean": float(np.mean(c)), "sd": sd,
            "se": sd / math.sqrt(reps), "reps": int(reps), "m": int(m), "B": int(B), "seed": int(seed),
        })
    return StudyResult("coverage", rows, {f"{lv:g}": cov[:, j] for j, lv in enumerate(levels)},
                       int(reps), int(B), int(n), int(seed), 0,
                       {"mu": params.mu.tolist(), "gamma": params.gamma.tolist(), "config": config.to_dict()})


# --------------------------------------------------------------------------
# Concentration profile
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileResult:
    """``ell(c)`` on a grid, its maximizer and ``RoC* = c_a / c*``."""

    c_grid: np.ndarray
    ell: np.ndarray
    c_star: float
    ell_star: float
    roc_star: float

    def to_dict(self) -> dict:
        return {
            "c_grid": self.c_grid.tolist(),
            "ell": self.ell.tolist(),
            "roc_grid": (self.c_star * self.roc_star / self.c_grid).tolist(),
            "c_star": self.c_star,
            "ell_star": self.ell_star,
            "roc_star": self.roc_star,
        }


def concentration_profile(Y, mu_star, R=None, c_grid=None, c_a: float | None = None) -> ProfileResult:
    """Mean isotropic log-likelihood along the ray ``c R mu_star``.

    Parameters
    ----------
    Y : ndarray, shape (n, d)
        Sample from the true distribution.
    mu_star : array_like, shape (d,)
        Reference direction; normalized internally.
    R : ndarray, shape (d, d), optional
        Rotation applied to ``mu_star``; identity by default.
    c_grid : array_like, optional
        Positive increasing concentrations. Default: 200 log-spaced points
        between ``c_a / 20`` and ``3 c_a``.
    c_a : float, optional
        True concentration. Default: ``|mu_star|`` before normalization.

    Returns
    -------
    ProfileResult
        The grid maximum is refined by a bounded scalar search between its
        grid neighbours.
    """
    Y = np.asarray(Y, dtype=float)
    mu_star = np.asarray(mu_star, dtype=float)
    if c_a is None:
        c_a = float(np.linalg.norm(mu_star))
    u = mu_star / np.linalg.norm(mu_star)
    if R is not None:
        u = np.asarray(R, dtype=float) @ u
    if c_grid is None:
        c_grid = np.geomspace(c_a / 20.0, 3.0 * c_a, 200)
    c_grid = np.asarray(c_grid, dtype=float)
    if c_grid.ndim != 1 or c_grid.size < 2 or np.any(c_grid <= 0) or np.any(np.diff(c_grid) <= 0):
        raise ValueError("c_grid must be positive and strictly increasing")
    zero = np.zeros((Y.shape[1] - 2) * (Y.shape[1] + 1) // 2)

    def ell(c):
        return float(np.mean(log_density(Y, EsagParams(c * u, zero))))

    vals = np.array([ell(c) for c in c_grid])
    j = int(np.argmax(vals))
    lo, hi = c_grid[max(j - 1, 0)], c_grid[min(j + 1, c_grid.size - 1)]
    res = minimize_scalar(lambda c: -ell(c), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * hi})
    c_star, ell_star = (float(res.x), -float(res.fun)) if -res.fun >= vals[j] else (float(c_grid[j]), float(vals[j]))
    return ProfileResult(c_grid, vals, c_star, ell_star, c_a / c_star)


def _plane_rotation(u: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    d = u.size
    return (np.eye(d) + (math.cos(angle) - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + math.sin(angle) * (np.outer(v, u) - np.outer(u, v)))


PROFILE_SHAPE_SCALES = (0.0, 1.0, 2.0)
PROFILE_ANGLES = (0.0, math.pi / 12.0, math.pi / 6.0)


def profile_setting(anisotropy: int, rotation: int, mu=COVERAGE_MU) -> tuple[EsagParams, np.ndarray]:
    """Stand-in true distribution and rotation for the profile study.

    ``anisotropy`` and ``rotation`` index 1, 2 or 3. The shape vector is
    ``s * BETA0 / |BETA0|`` with ``s`` in ``PROFILE_SHAPE_SCALES``, and the
    rotation turns ``mu`` by an angle from ``PROFILE_ANGLES`` in the plane
    spanned by ``mu`` and a fixed orthogonal direction.

    Returns
    -------
    (EsagParams, ndarray)
        True distribution and the rotation ``R``.
    """
    if anisotropy not in (1, 2, 3) or rotation not in (1, 2, 3):
        raise ValueError("levels are 1, 2 or 3")
    mu = np.asarray(mu, dtype=float)
    b = np.asarray(BETA0)
    params = EsagParams(mu, PROFILE_SHAPE_SCALES[anisotropy - 1] * b / np.linalg.norm(b))
    u = mu / np.linalg.norm(mu)
    e = np.zeros(mu.size)
    e[int(np.argmin(np.abs(u)))] = 1.0
    v = e - (e @ u) * u
    v /= np.linalg.norm(v)
    return params, _plane_rotation(u, v, PROFILE_ANGLES[rotation - 1])
