"""Ellipsoidal prediction regions for ESAG responses.

A region at covariate value ``x0`` is

    { y on the sphere : (y - c)' V^-1 (y - c) <= q }

with ``c = mu / |mu|`` and ``(mu, V)`` the fitted conditional parameters.
The threshold ``q`` is the ``(1 - a)`` quantile of quadratic forms of
simulated responses, pooled over a parametric sample from the fit and
parametric samples from fits to case-resampled data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dist import EsagParams, sample
from .errors import ContractError
from .parallel import substream, worker_map
from .regress import Dataset, FitResult, NullSpec, OptimizerConfig, fit, predict_params

__all__ = [
    "DroppedReplicateWarning",
    "PredictionRegion",
    "contains",
    "coverage",
    "pooled_quadforms",
    "quadform",
    "quadform_variance",
    "region",
    "regions",
]


class DroppedReplicateWarning(UserWarning):
    """A bootstrap refit did not converge and its draws were left out."""


@dataclass(frozen=True)
class PredictionRegion:
    """``{y : (y - center)' Vinv (y - center) <= threshold}``.

    Attributes
    ----------
    center : ndarray, shape (d,)
    Vinv : ndarray, shape (d, d)
    threshold : float
    level : float
        Nominal coverage ``1 - a``.
    m, B, seed : int
        Draws per fit, bootstrap refits and seed that produced ``threshold``.
    pool_size : int
        Number of pooled quadratic forms.
    """

    center: np.ndarray
    Vinv: np.ndarray
    threshold: float
    level: float
    m: int = 0
    B: int = 0
    seed: int = 0
    pool_size: int = 0

    def quadform(self, y) -> np.ndarray:
        return quadform(y, self.center, self.Vinv)

    def contains(self, y) -> np.ndarray:
        return self.quadform(y) <= self.threshold

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "threshold": self.threshold,
            "center": self.center.tolist(),
            "Vinv": self.Vinv.tolist(),
            "m": self.m,
            "B": self.B,
            "seed": self.seed,
            "pool_size": self.pool_size,
        }


def quadform(y, center, Vinv) -> np.ndarray:
    """``(y - center)' Vinv (y - center)`` for a point or the rows of ``y``."""
    r = np.asarray(y, dtype=float) - center
    out = np.einsum("...i,ij,...j->...", r, Vinv, r)
    return out if np.ndim(out) else float(out)


def contains(region: PredictionRegion, y) -> np.ndarray:
    """Whether ``y`` (a point or rows of points) lies in ``region``."""
    return region.contains(y)


def coverage(region: PredictionRegion, points) -> float:
    """Share of ``points`` inside ``region``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("coverage of an empty sample is undefined")
    return float(np.mean(region.contains(points)))


def _draw_quadforms(params: EsagParams, m: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = params.direction
    Vinv = params.cov.Vinv
    return quadform(sample(params, m, rng), c, Vinv), c, Vinv


@dataclass(frozen=True)
class _Ctx:
    data: Dataset
    x0: np.ndarray | None
    m: int
    seed: int
    fit: FitResult
    config: OptimizerConfig


def _boot(ctx: _Ctx, b: int):
    rng = substream(ctx.seed, b)
    idx = rng.integers(0, ctx.data.n, size=ctx.data.n)
    data_b = ctx.data.take(idx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fb = fit(data_b, NullSpec.full(), ctx.config, start=ctx.fit)
        if not fb.converged:
            return None
        params = predict_params(fb.coefficients, ctx.x0, ctx.data.standardization_record)
    return _draw_quadforms(params, ctx.m, rng)[0]


def pooled_quadforms(
    data: Dataset | None = None,
    x0=None,
    m: int = 2000,
    B: int = 100,
    seed: int = 0,
    *,
    params: EsagParams | None = None,
    config: OptimizerConfig | None = None,
    refit_config: OptimizerConfig | None = None,
    workers: int = 1,
    fit_result: FitResult | None = None,
):
    """Fitted parameters at ``x0`` and the pooled quadratic forms.

    Returns ``(params, pool, B_used)``. With ``params`` given (known
    parameters) no fitting happens and ``B`` must be 0.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if B < 0:
        raise ValueError("B must be >= 0")
    if params is not None:
        if B:
            raise ContractError("known-parameter mode takes B = 0")
        return params, _draw_quadforms(params, m, substream(seed, 0))[0], 0
    if data is None:
        raise ValueError("data or params is required")
    config = config or OptimizerConfig()
    fr = fit_result or fit(data, NullSpec.full(), config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = predict_params(fr.coefficients, x0, data.standardization_record)
    pool = [_draw_quadforms(params, m, substream(seed, 0))[0]]
    if B:
        ctx = _Ctx(data, None if x0 is None else np.asarray(x0, float), int(m), int(seed), fr,
                   refit_config or replace(config, n_restarts=0))
        reps = worker_map(_boot, range(1, B + 1), ctx, workers)
        dropped = sum(r is None for r in reps)
        if dropped:
            warnings.warn(f"{dropped} of {B} bootstrap refits dropped", DroppedReplicateWarning, stacklevel=2)
        pool.extend(r for r in reps if r is not None)
    return params, np.concatenate(pool), len(pool) - 1


def _order_stat(sorted_pool: np.ndarray, level: float) -> float:
    N = sorted_pool.size
    k = math.ceil(round(level * N, 9))
    k = min(max(k, 1), N)
    return float(sorted_pool[k - 1])


def regions(
    data: Dataset | None = None,
    x0=None,
    levels: Sequence[float] = (0.9, 0.95, 0.99),
    m: int = 2000,
    B: int = 100,
    seed: int = 0,
    **kwargs,
) -> list[PredictionRegion]:
    """Prediction regions for several nominal levels from one pooled sample.

    Parameters
    ----------
    data : Dataset
        Training data; the unrestricted model is fitted to it.
    x0 : array_like, optional
        Covariates in raw units; ignored for intercept-only data.
    levels : sequence of float
        Nominal coverages ``1 - a`` in ``(0, 1)``.
    m : int
        Draws per fitted distribution.
    B : int
        Case-resampling refits; 0 keeps only the parametric stage.
    seed : int
    **kwargs
        ``params`` (known-parameter mode), ``config``, ``refit_config``,
        ``workers``, ``fit_result``.

    Returns
    -------
    list of PredictionRegion
        Thresholds are the ``ceil(level * N)``-th smallest of the ``N``
        pooled quadratic forms.
    """
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {lv}")
    params, pool, B_used = pooled_quadforms(data, x0, m, B, seed, **kwargs)
    pool = np.sort(pool)
    c = params.direction
    Vinv = params.cov.Vinv
    return [
        PredictionRegion(c, Vinv, _order_stat(pool, lv), float(lv), int(m), int(B_used), int(seed), int(pool.size))
        for lv in levels
    ]


def region(data: Dataset | None = None, x0=None, level: float = 0.9, m: int = 2000, B: int = 100, seed: int = 0, **kwargs) -> PredictionRegion:
    """Single-level form of :func:`regions`."""
    return regions(data, x0, (level,), m, B, seed, **kwargs)[0]


def quadform_variance(G) -> float:
    """``Var(Z' G Z) = 2 sum_j D_j^2`` for standard normal ``Z``.

    ``D_j`` are the eigenvalues of ``G``, which must be symmetric positive
    definite with unit determinant. By the AM-GM inequality the value is at
    least ``2 d``, with equality only at ``G = I``.

    >>> quadform_variance([[2.0, 0.0], [0.0, 0.5]])
    8.5
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("G must be a square matrix")
    if not np.allclose(G, G.T, rtol=0.0, atol=1e-12):
        raise ContractError("G must be symmetric")
    D = np.linalg.eigvalsh(G)
    if np.any(D <= 0.0):
        raise ContractError("G must be positive definite")
    if abs(np.prod(D) - 1.0) > 1e-8:
        raise ContractError("G must have unit determinant")
    return float(2.0 * np.sum(D * D))
