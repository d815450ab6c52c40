import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from esag import kernels
from esag.dist import EsagParams, log_density, sample_rows
from esag.linalg import gamma_dim
from esag.regress import Dataset, OptimizerConfig, fit

compiled_only = pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")


def batch(rng, n=40, d=4, scale=0.8):
    MU = rng.normal(size=d) * 3 + rng.normal(size=(n, d))
    G = scale * rng.normal(size=(n, gamma_dim(d)))
    G[: n // 4] = 0.0
    return sample_rows(MU, G, rng), MU, G


@pytest.mark.parametrize("backend", kernels.available_backends())
@pytest.mark.parametrize("d", [3, 4, 6])
def test_logpdf_matches_reference_density(backend, d):
    rng = np.random.default_rng(d)
    Y, MU, G = batch(rng, d=d)
    ref = np.array([log_density(y, EsagParams(m, g)) for y, m, g in zip(Y, MU, G)])
    assert np.allclose(kernels.logpdf(Y, MU, G, backend=backend), ref, rtol=0, atol=1e-11)


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_gradients_match_finite_differences(backend):
    rng = np.random.default_rng(7)
    Y, MU, G = batch(rng, n=6, d=5)
    _, gmu, gg = kernels.logpdf_grad(Y, MU, G, backend=backend)
    for i in range(6):
        f_mu = lambda m: kernels.logpdf(Y[i:i + 1], m[None], G[i:i + 1], backend=backend)[0]  # noqa: E731
        f_g = lambda g: kernels.logpdf(Y[i:i + 1], MU[i:i + 1], g[None], backend=backend)[0]  # noqa: E731
        assert np.allclose(gmu[i], oracles.fd_gradient(f_mu, MU[i]), atol=1e-7)
        assert np.allclose(gg[i], oracles.fd_gradient(f_g, G[i]), atol=1e-7)


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_vpower_matches_factorization(backend):
    rng = np.random.default_rng(8)
    _, MU, G = batch(rng, n=10)
    for power, attr in ((1.0, "V"), (-1.0, "Vinv"), (0.5, "Vhalf")):
        out = kernels.vpower(MU, G, power, backend=backend)
        for i in range(10):
            assert np.allclose(out[i], getattr(EsagParams(MU[i], G[i]).cov, attr), atol=1e-12)


@compiled_only
def test_backends_agree():
    rng = np.random.default_rng(9)
    Y, MU, G = batch(rng, n=100)
    a = kernels.logpdf_grad(Y, MU, G, backend="compiled")
    b = kernels.logpdf_grad(Y, MU, G, backend="python")
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=0, atol=1e-11)


@compiled_only
def test_objective_and_optimizer_agree_across_backends():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(120, 1))
    MU = np.array([2.0, -1.0, 3.0, 1.0]) + x * np.array([1.0, 0.5, 0.0, -0.5])
    Y = sample_rows(MU, np.tile([0.4, -0.2, 0.1, 0.3, 0.0], (120, 1)), rng)
    data = Dataset.from_raw(Y, x)
    fc = fit(data, config=OptimizerConfig(n_restarts=0, backend="compiled"))
    fp = fit(data, config=OptimizerConfig(n_restarts=0, backend="python"))
    assert fc.loglik == pytest.approx(fp.loglik, rel=1e-9)
    assert np.allclose(fc.coefficients.to_theta(), fp.coefficients.to_theta(), atol=1e-5)


def test_large_dimension_routes_to_fallback():
    if "compiled" in kernels.available_backends():
        assert kernels.get_backend("compiled", 10_000).BACKEND == "python"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_pure_python_switch_selects_fallback():
    env = dict(os.environ, ESAG_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import esag.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
