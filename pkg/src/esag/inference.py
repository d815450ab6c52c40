"""Test statistics and parametric-bootstrap tests for ESAG regression.

Statistics compare a restricted (null) fit with an unrestricted one:

* ``roc``: mean ratio of fitted concentrations ``|mu_a| / |mu_0|``;
* ``d``: the same ratios weighted by ``2 - cos`` of the angle between the
  fitted mean directions;
* ``m``: distance between the observed mean of ``Y**2`` and its value
  under the null fit, estimated by simulation;
* ``lr``: twice the log-likelihood gap.

Null distributions come from a parametric bootstrap that simulates from
the null fit with the covariates held fixed and refits both models on
every replicate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .dist import sample_rows
from .errors import ContractError, DegenerateMeanError
from .parallel import substream, worker_map
from .regress import Dataset, FitResult, NullSpec, OptimizerConfig, fit

__all__ = [
    "GofReport",
    "LRFloorWarning",
    "ReliabilityWarning",
    "STATISTICS",
    "TestReport",
    "bootstrap_test",
    "bootstrap_tests",
    "d_statistic",
    "gof_T",
    "gof_statistic",
    "lr_statistic",
    "m_statistic",
    "roc_statistic",
    "t_values",
]

STATISTICS = ("roc", "d", "m", "lr")
MU_FLOOR = 1e-8
#: Share of excluded replicates above which a report is flagged.
RELIABILITY_THRESHOLD = 0.10
#: Draws per observation for ``m`` unless told otherwise.
DEFAULT_MC_SIZE = 10_000
_MC_CHUNK = 200_000


class LRFloorWarning(UserWarning):
    """The restricted fit beat the unrestricted one; LR was set to 0."""


class ReliabilityWarning(UserWarning):
    """Too many bootstrap replicates failed to converge."""


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------


def _norm_ratio(fit0: FitResult, fitA: FitResult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if fit0.mu.shape != fitA.mu.shape:
        raise ContractError("fits were computed on different datasets")
    n0 = np.linalg.norm(fit0.mu, axis=1)
    na = np.linalg.norm(fitA.mu, axis=1)
    if np.any(n0 < MU_FLOOR) or np.any(na < MU_FLOOR):
        raise DegenerateMeanError("fitted mean vector below the norm floor")
    return n0, na, na / n0


def roc_statistic(fit0: FitResult, fitA: FitResult) -> float:
    """Ratio of concentrations, ``mean_i |mu_a,i| / |mu_0,i|``.

    >>> import numpy as np
    >>> from types import SimpleNamespace as F
    >>> roc_statistic(F(mu=np.ones((3, 3))), F(mu=2 * np.ones((3, 3))))
    2.0
    """
    _, _, ratio = _norm_ratio(fit0, fitA)
    return float(ratio.mean())


def d_statistic(fit0: FitResult, fitA: FitResult) -> float:
    """``mean_i (2 - cos_i) |mu_a,i| / |mu_0,i|`` with ``cos_i`` the cosine
    similarity of the two fitted means."""
    n0, na, ratio = _norm_ratio(fit0, fitA)
    cos = np.einsum("ij,ij->i", fit0.mu, fitA.mu) / (n0 * na)
    cos = np.clip(cos, -1.0, 1.0)
    return float(((2.0 - cos) * ratio).mean())


def null_second_moment(fit0: FitResult, mc_size: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo estimate of ``mean_i E_0(Y_i**2)`` under ``fit0``."""
    mc_size = int(mc_size)
    if mc_size < 1:
        raise ValueError("mc_size must be >= 1")
    MU, G = fit0.mu, fit0.gamma
    n, d = MU.shape
    total = np.zeros(d)
    rows = max(1, _MC_CHUNK // mc_size)
    for lo in range(0, n, rows):
        Yt = sample_rows(MU[lo:lo + rows], G[lo:lo + rows], rng, size=mc_size)
        total += (Yt * Yt).sum(axis=(0, 1))
    return total / (n * mc_size)


def m_statistic(
    fit0: FitResult,
    data: Dataset,
    mc_size: int = DEFAULT_MC_SIZE,
    rng: np.random.Generator | None = None,
) -> float:
    """Second-moment discrepancy ``|mean_i (Y_i**2 - E_0 Y_i**2)|``.

    ``E_0`` is estimated from ``mc_size`` draws per observation from the
    null fit's conditional distribution (its fitted ``gamma`` included).
    """
    rng = rng if rng is not None else np.random.default_rng()
    Y = data.responses
    e0 = null_second_moment(fit0, mc_size, rng)
    return float(np.linalg.norm((Y * Y).mean(axis=0) - e0))


def lr_statistic(fit0: FitResult, fitA: FitResult) -> float:
    """``2 (loglik_A - loglik_0)``, floored at zero.

    Raises
    ------
    ContractError
        If the null specification is not nested in the alternative.
    """
    d, q = fit0.coefficients.d, fit0.coefficients.q
    m0 = fit0.spec.free_mask(d, q)
    mA = fitA.spec.free_mask(d, q)
    if not np.all(mA[m0]):
        raise ContractError(f"{fit0.spec.name!r} is not nested in {fitA.spec.name!r}")
    val = 2.0 * (fitA.loglik - fit0.loglik)
    if val < 0.0:
        if val < -1e-6:
            warnings.warn(f"negative LR {val:.3g} set to 0; the unrestricted fit is not optimal", LRFloorWarning, stacklevel=2)
        val = 0.0
    return float(val)


def _compute(names, fit0, fitA, data, rng, mc_size) -> dict:
    out = {}
    for name in names:
        if name == "roc":
            out[name] = roc_statistic(fit0, fitA)
        elif name == "d":
            out[name] = d_statistic(fit0, fitA)
        elif name == "m":
            out[name] = m_statistic(fit0, data, mc_size, rng)
        elif name == "lr":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LRFloorWarning)
                out[name] = lr_statistic(fit0, fitA)
        else:
            raise ValueError(f"unknown statistic {name!r}")
    return out


# --------------------------------------------------------------------------
# Bootstrap engine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestReport:
    """Outcome of one bootstrap test.

    ``p_value`` is ``#{b : T_b > T_obs} / B_used`` over the replicates
    whose refits converged (``(s + 1) / (B_used + 1)`` when ``plus_one``).
    Excluded replicates appear as NaN in ``bootstrap_values``.
    """

    __test__ = False

    statistic_name: str
    observed_value: float
    bootstrap_values: np.ndarray = field(repr=False)
    p_value: float
    B: int
    seed: int
    null_fit: dict
    alt_fit: dict
    n_excluded: int = 0
    reliability_warning: bool = False
    plus_one: bool = False
    mc_size: int | None = None

    @property
    def exceedances(self) -> int:
        v = self.bootstrap_values
        return int(np.sum(v[np.isfinite(v)] > self.observed_value))

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic_name,
            "observed": self.observed_value,
            "p_value": self.p_value,
            "B": self.B,
            "B_used": self.B - self.n_excluded,
            "exceedances": self.exceedances,
            "seed": self.seed,
            "n_excluded": self.n_excluded,
            "reliability_warning": self.reliability_warning,
            "plus_one": self.plus_one,
            "mc_size": self.mc_size,
            "null_fit": self.null_fit,
            "alt_fit": self.alt_fit,
            "bootstrap_values": [None if not math.isfinite(v) else float(v) for v in self.bootstrap_values],
        }


def p_value(observed: float, values: np.ndarray, plus_one: bool = False) -> float:
    """Share of finite ``values`` strictly above ``observed``."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    s = int(np.sum(v > observed))
    if plus_one:
        return (s + 1) / (v.size + 1)
    return s / v.size if v.size else float("nan")


@dataclass(frozen=True)
class _BootContext:
    data: Dataset
    null_spec: NullSpec
    alt_spec: NullSpec
    names: tuple
    fit0: FitResult
    fitA: FitResult
    config: OptimizerConfig
    mc_size: int
    seed: int


def _replicate(ctx: _BootContext, b: int):
    rng = substream(ctx.seed, b)
    Yb = sample_rows(ctx.fit0.mu, ctx.fit0.gamma, rng)
    data_b = ctx.data.with_responses(Yb)
    cfg = replace(ctx.config, seed=int(rng.integers(2**31)))
    f0 = fit(data_b, ctx.null_spec, cfg, start=ctx.fit0)
    fA = fit(data_b, ctx.alt_spec, cfg, start=[ctx.fitA, f0])
    ok = f0.converged and fA.converged
    try:
        vals = _compute(ctx.names, f0, fA, data_b, rng, ctx.mc_size)
    except DegenerateMeanError:
        ok = False
        vals = {k: math.nan for k in ctx.names}
    if not ok:
        vals = {k: math.nan for k in ctx.names}
    return ok, vals


def bootstrap_tests(
    data: Dataset,
    null_spec: NullSpec,
    alt_spec: NullSpec | None = None,
    statistics: Sequence[str] = ("roc",),
    B: int = 300,
    seed: int = 0,
    *,
    mc_size: int = DEFAULT_MC_SIZE,
    config: OptimizerConfig | None = None,
    refit_config: OptimizerConfig | None = None,
    plus_one: bool = False,
    workers: int = 1,
    fits: tuple[FitResult, FitResult] | None = None,
) -> dict[str, TestReport]:
    """Several statistics from one shared parametric bootstrap.

    Parameters
    ----------
    data : Dataset
    null_spec, alt_spec : NullSpec
        ``null_spec`` must be strictly nested in ``alt_spec`` (default: the
        unrestricted model).
    statistics : sequence of {"roc", "d", "m", "lr"}
    B : int
        Bootstrap replicates.
    seed : int
        Replicate ``b`` draws from ``substream(seed, b)``; the observed
        ``m`` uses ``substream(seed, 0)``. Results do not depend on
        ``workers``.
    mc_size : int
        Null draws per observation for ``m``.
    config : OptimizerConfig, optional
        Used for the fits to the observed data.
    refit_config : OptimizerConfig, optional
        Used for the refits; defaults to ``config`` without restarts. Each
        refit starts from the better of the heuristic point and the
        observed-data fit, and the unrestricted refit also considers the
        replicate's restricted fit.
    plus_one : bool
        Report ``(s + 1) / (B + 1)`` instead of ``s / B``.
    workers : int
        Processes for the replicates.
    fits : (FitResult, FitResult), optional
        Precomputed observed-data fits ``(null, alt)``.

    Returns
    -------
    dict
        One :class:`TestReport` per statistic name.
    """
    alt_spec = alt_spec or NullSpec.full()
    names = tuple(s.lower() for s in statistics)
    for s in names:
        if s not in STATISTICS:
            raise ValueError(f"unknown statistic {s!r}")
    if B < 1:
        raise ValueError("B must be >= 1")
    d, q = data.d, data.q
    if not null_spec.nested_in(alt_spec, d, q):
        raise ContractError(f"{null_spec.name!r} is not strictly nested in {alt_spec.name!r}")
    config = config or OptimizerConfig()
    refit_config = refit_config or replace(config, n_restarts=0)

    if fits is None:
        fit0 = fit(data, null_spec, config)
        fitA = fit(data, alt_spec, config, start=fit0)
    else:
        fit0, fitA = fits
    observed = _compute(names, fit0, fitA, data, substream(seed, 0), mc_size)

    ctx = _BootContext(data, null_spec, alt_spec, names, fit0, fitA, refit_config, int(mc_size), int(seed))
    results = worker_map(_replicate, range(1, B + 1), ctx, workers)
    n_bad = sum(1 for ok, _ in results if not ok)
    flagged = n_bad > RELIABILITY_THRESHOLD * B
    if flagged:
        warnings.warn(f"{n_bad} of {B} bootstrap replicates excluded", ReliabilityWarning, stacklevel=2)

    reports = {}
    for name in names:
        values = np.array([vals[name] for _, vals in results], dtype=float)
        reports[name] = TestReport(
            statistic_name=name,
            observed_value=float(observed[name]),
            bootstrap_values=values,
            p_value=p_value(observed[name], values, plus_one),
            B=int(B),
            seed=int(seed),
            null_fit=fit0.summary(),
            alt_fit=fitA.summary(),
            n_excluded=n_bad,
            reliability_warning=flagged,
            plus_one=plus_one,
            mc_size=int(mc_size) if name == "m" else None,
        )
    return reports


def bootstrap_test(
    data: Dataset,
    null_spec: NullSpec,
    alt_spec: NullSpec | None = None,
    statistic: str = "roc",
    B: int = 300,
    seed: int = 0,
    **kwargs,
) -> TestReport:
    """Single-statistic form of :func:`bootstrap_tests`."""
    return bootstrap_tests(data, null_spec, alt_spec, (statistic,), B, seed, **kwargs)[statistic.lower()]


# --------------------------------------------------------------------------
# Goodness of fit
# --------------------------------------------------------------------------


def t_values(fit_result: FitResult, data: Dataset, backend: str | None = None) -> np.ndarray:
    """Residual statistics ``T_i = (|mu_i|^2 + sum_j lambda_ij) r_i' V_i^-1 r_i``.

    ``r_i = (I - c_i c_i') Y_i`` with ``c_i = mu_i / |mu_i|``. The sum runs
    over all ``d`` eigenvalues of ``V_i``, the one along ``mu_i`` (= 1)
    included. Approximately chi-square with ``d - 1`` degrees of freedom
    under a correct model.
    """
    MU, G = fit_result.mu, fit_result.gamma
    Y = data.responses
    c = MU / np.linalg.norm(MU, axis=1, keepdims=True)
    r = Y - np.einsum("ij,ij->i", c, Y)[:, None] * c
    Vinv = kernels.vpower(MU, G, -1.0, backend=backend)
    V = kernels.vpower(MU, G, 1.0, backend=backend)
    trace = np.einsum("nii->n", V)
    quad = np.einsum("ni,nij,nj->n", r, Vinv, r)
    return (np.einsum("ij,ij->i", MU, MU) + trace) * quad


def gof_statistic(T: np.ndarray, d: int) -> float:
    """Kolmogorov-Smirnov distance between ``T`` and chi-square(d - 1)."""
    return float(stats.kstest(np.asarray(T, dtype=float), stats.chi2(d - 1).cdf).statistic)


@dataclass(frozen=True)
class GofReport:
    """Residual goodness of fit: ``T_i``, KS distance and bootstrap p-value."""

    T: np.ndarray = field(repr=False)
    ks: float
    p_value: float
    bootstrap_values: np.ndarray = field(repr=False)
    B: int
    seed: int
    df: int
    n_excluded: int = 0

    def histogram(self, bins: int = 30) -> dict:
        """Plot-ready histogram of ``T`` with the expected chi-square counts."""
        edges = np.histogram_bin_edges(self.T, bins=bins)
        counts, _ = np.histogram(self.T, bins=edges)
        expected = np.diff(stats.chi2(self.df).cdf(edges)) * self.T.size
        return {
            "edges": edges.tolist(),
            "counts": counts.tolist(),
            "expected": expected.tolist(),
            "df": self.df,
        }

    def to_dict(self, bins: int = 30) -> dict:
        return {
            "ks": self.ks,
            "df": self.df,
            "histogram": self.histogram(bins),
            "p_value": self.p_value,
            "B": self.B,
            "seed": self.seed,
            "n_excluded": self.n_excluded,
            "T": self.T.tolist(),
            "bootstrap_values": [None if not math.isfinite(v) else float(v) for v in self.bootstrap_values],
        }


@dataclass(frozen=True)
class _GofContext:
    data: Dataset
    fit: FitResult
    config: OptimizerConfig
    seed: int


def _gof_replicate(ctx: _GofContext, b: int):
    rng = substream(ctx.seed, b)
    data_b = ctx.data.with_responses(sample_rows(ctx.fit.mu, ctx.fit.gamma, rng))
    fb = fit(data_b, ctx.fit.spec, ctx.config, start=ctx.fit)
    if not fb.converged:
        return math.nan
    return gof_statistic(t_values(fb, data_b), data_b.d)


def gof_T(
    fit_result: FitResult,
    data: Dataset,
    B: int = 200,
    seed: int = 0,
    *,
    config: OptimizerConfig | None = None,
    workers: int = 1,
) -> GofReport:
    """Residual ``T_i`` values and a bootstrap goodness-of-fit p-value.

    The summary is the KS distance of ``{T_i}`` to chi-square(d - 1); its
    null distribution is obtained by simulating from ``fit_result`` and
    refitting the same specification ``B`` times. ``B = 0`` skips the
    bootstrap and reports a NaN p-value.
    """
    T = t_values(fit_result, data)
    ks = gof_statistic(T, data.d)
    if B <= 0:
        return GofReport(T, ks, math.nan, np.array([]), 0, int(seed), data.d - 1)
    cfg = replace(config or OptimizerConfig(), n_restarts=0)
    vals = np.array(worker_map(_gof_replicate, range(1, B + 1), _GofContext(data, fit_result, cfg, int(seed)), workers))
    n_bad = int(np.sum(~np.isfinite(vals)))
    return GofReport(T, ks, p_value(ks, vals), vals, int(B), int(seed), data.d - 1, n_bad)
