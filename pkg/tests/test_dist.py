import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from esag.dist import (
    EsagParams,
    complement_basis,
    covariance_from,
    log_density,
    log_mnorm_moment,
    mnorm_moment,
    sample,
    sample_rows,
    uniform_log_density,
)
from esag.errors import DegenerateMeanError, DimensionTooSmallError
from esag.linalg import gamma_dim, pack_shape, unpack_shape


def random_params(rng, d, scale=1.0):
    return EsagParams(rng.normal(size=d) * 3, scale * rng.normal(size=gamma_dim(d)))


# gamma_dim ---------------------------------------------------------------


@pytest.mark.parametrize("d,p", [(3, 2), (4, 5), (5, 9)])
def test_gamma_dim_values(d, p):
    assert gamma_dim(d) == p


@pytest.mark.parametrize("d", [0, 1, 2])
def test_gamma_dim_rejects_small_dimensions(d):
    with pytest.raises(DimensionTooSmallError):
        gamma_dim(d)


# complement_basis ---------------------------------------------------------


@pytest.mark.parametrize("d", [3, 4, 6])
def test_basis_at_last_axis_is_identity_columns(d):
    e = np.zeros(d)
    e[-1] = 1.0
    assert np.array_equal(complement_basis(e), np.eye(d)[:, :-1])


@pytest.mark.parametrize("d", [3, 4, 5, 8])
def test_basis_is_orthonormal_complement(d):
    rng = np.random.default_rng(d)
    for _ in range(50):
        mu = rng.normal(size=d) * rng.uniform(0.01, 100)
        E = complement_basis(mu)
        assert np.abs(E.T @ E - np.eye(d - 1)).max() <= 1e-12
        assert np.linalg.norm(E.T @ mu) <= 1e-12 * np.linalg.norm(mu)


def test_basis_depends_only_on_direction():
    mu = np.array([0.3, -1.2, 0.7, -0.1])
    assert np.array_equal(complement_basis(mu), complement_basis(2 * mu))


def test_basis_matches_explicit_reflection():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mu = rng.normal(size=5)
        assert np.allclose(complement_basis(mu), oracles.householder_complement(mu), atol=1e-14)


def test_basis_near_negative_axis_is_stable():
    mu = np.array([1e-9, -2e-9, -1.0])
    E = complement_basis(mu)
    assert np.abs(E.T @ E - np.eye(2)).max() <= 1e-12


def test_zero_mean_rejected():
    with pytest.raises(DegenerateMeanError):
        complement_basis(np.zeros(3))
    with pytest.raises(DegenerateMeanError):
        EsagParams(np.zeros(4), np.zeros(5))


# covariance_from ------------------------------------------------------------


def test_zero_shape_gives_identity():
    f = covariance_from(np.array([1.0, 2.0, -0.5, 3.0]), np.zeros(5))
    assert np.abs(f.V - np.eye(4)).max() <= 1e-12
    assert np.array_equal(f.eigenvalues, np.ones(4))


@pytest.mark.parametrize("g", [0.3, -1.1, 2.5])
def test_d3_diagonal_shape_eigenvalues(g):
    mu = np.array([0.4, -0.2, 1.3])
    f = covariance_from(mu, np.array([g, 0.0]))
    brute = np.sort(np.linalg.eigvalsh(f.V))
    assert np.allclose(brute, np.sort([math.exp(g), math.exp(-g), 1.0]), rtol=1e-12)
    assert np.allclose(np.sort(f.eigenvalues), brute, rtol=1e-12)


def test_packing_order():
    S = pack_shape(np.array([1.0, 2.0, 10.0, 20.0, 30.0]), 4)
    expect = np.array([[1.0, 10.0, 20.0], [10.0, 2.0, 30.0], [20.0, 30.0, -3.0]])
    assert np.array_equal(S, expect)
    assert np.array_equal(unpack_shape(S), [1.0, 2.0, 10.0, 20.0, 30.0])
    assert np.array_equal(unpack_shape(np.zeros((3, 3))), np.zeros(5))


def test_covariance_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for d in (3, 4, 5, 6):
        for _ in range(10):
            mu = rng.normal(size=d)
            g = rng.normal(size=gamma_dim(d))
            assert np.allclose(covariance_from(mu, g).V, oracles.dense_covariance(mu, g), atol=1e-11)


@pytest.mark.parametrize("d", [3, 4, 5])
def test_constraints_random(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(200):
        mu = rng.normal(size=d) * rng.uniform(0.1, 20)
        g = rng.normal(size=gamma_dim(d))
        f = covariance_from(mu, 2 * g)
        assert np.abs(f.V @ mu - mu).max() <= 1e-10 * np.linalg.norm(mu)
        assert abs(np.linalg.det(f.V) - 1) <= 1e-8
        assert np.abs(f.V - f.V.T).max() <= 1e-12
        assert np.all(np.linalg.eigvalsh(f.V) > 0)
        assert abs(np.prod(f.eigenvalues) - 1) <= 1e-8
        assert f.eigenvalues[-1] == 1.0
        assert np.all(np.diff(f.eigenvalues[:-1]) >= 0)
        # round trips at unit-scale shapes; at scale 2 the condition number
        # reaches 1e7 and an absolute 1e-10 round trip is below rounding
        f = covariance_from(mu, g)
        assert np.abs(f.Vinv @ f.V - np.eye(d)).max() <= 1e-10
        assert np.abs(f.Vhalf @ f.Vhalf - f.V).max() <= 1e-10


@settings(max_examples=60, deadline=None, derandomize=True)
@given(
    d=st.integers(3, 6),
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(0.0, 3.0),
)
def test_constraints_property(d, seed, scale):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=d) + 1e-3
    f = covariance_from(mu, scale * rng.normal(size=gamma_dim(d)))
    assert np.abs(f.V @ mu - mu).max() <= 1e-10 * np.linalg.norm(mu)
    assert abs(np.prod(f.eigenvalues) - 1) <= 1e-8
    # a float determinant cannot resolve 1e-8 once cond(V) passes ~1e6
    floor = 10 * d * np.finfo(float).eps * np.linalg.cond(f.V)
    assert abs(np.linalg.det(f.V) - 1) <= max(1e-8, floor)


# mnorm_moment ---------------------------------------------------------------


def test_moment_anchors():
    assert mnorm_moment(0, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert mnorm_moment(2, 0.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("k", range(6))
@pytest.mark.parametrize("alpha", [-8.0, -2.0, 0.0, 2.0, 8.0])
def test_moment_matches_quadrature(k, alpha):
    assert mnorm_moment(k, alpha) == pytest.approx(oracles.mnorm_quad(k, alpha), rel=1e-8)


@pytest.mark.parametrize("alpha", [-40.0, -15.0, -6.5, -5.9, -2.01, -1.99, 3.0])
def test_moment_tail_and_branch_edges(alpha):
    for k in (0, 3, 7):
        assert mnorm_moment(k, alpha) == pytest.approx(oracles.mnorm_quad(k, alpha, dps=60), rel=1e-8)


def test_log_moment_vectorized_and_finite_far_tail():
    a = np.array([-200.0, -30.0, 0.0, 30.0])
    out = log_mnorm_moment(3, a)
    assert out.shape == (4,) and np.all(np.isfinite(out))
    assert out[0] < out[1] < out[2] < out[3]


# log_density ----------------------------------------------------------------


def test_near_uniform_density_first_order():
    # d = 3, gamma = 0: p(y) = exp(-|mu|^2 / 2) M_2(y'mu) / (2 pi) and
    # M_2(a) = 1/2 + 2 phi(0) a + O(a^2), so 4 pi p(y) = 1 + 4 phi(0) y'mu.
    rng = np.random.default_rng(1)
    mu = np.array([1e-6, 0.0, 0.0])
    P = EsagParams(mu, np.zeros(2))
    y = oracles.uniform_sphere(100, 3, rng)
    rel = np.exp(log_density(y, P)) * 4 * math.pi - 1
    assert np.allclose(rel, 4 / math.sqrt(2 * math.pi) * (y @ mu), rtol=0, atol=1e-11)
    assert uniform_log_density(3) == pytest.approx(-math.log(4 * math.pi))


def test_uniform_density_reciprocal_area():
    for d in (3, 4, 7):
        assert math.exp(uniform_log_density(d)) == pytest.approx(1 / oracles.sphere_area(d), rel=1e-14)


def test_rotation_equivariance_isotropic():
    rng = np.random.default_rng(2)
    for d in (3, 4, 5):
        for _ in range(10):
            mu = rng.normal(size=d) * 2
            R = oracles.random_rotation(d, rng)
            y = oracles.uniform_sphere(5, d, rng)
            a = log_density(y, EsagParams.isotropic(mu))
            b = log_density(y @ R.T, EsagParams.isotropic(R @ mu))
            assert np.abs(a - b).max() <= 1e-10


def test_density_matches_radial_integral():
    rng = np.random.default_rng(3)
    for d in (3, 4, 5):
        for _ in range(4):
            P = random_params(rng, d)
            for y in oracles.uniform_sphere(3, d, rng):
                ref = oracles.radial_density(y, P.mu, P.cov.V)
                assert math.exp(log_density(y, P)) == pytest.approx(ref, rel=1e-9)


def test_density_normalizes_small_mc():
    rng = np.random.default_rng(4)
    for d in (3, 4):
        P = random_params(rng, d, scale=0.5)
        val, se = oracles.sphere_mc_integral(lambda y: np.exp(log_density(y, P)), d, 200_000, rng)
        assert abs(val - 1) < max(4 * se, 0.01)


def test_density_scalar_and_batch_agree():
    rng = np.random.default_rng(6)
    P = random_params(rng, 4)
    Y = oracles.uniform_sphere(7, 4, rng)
    batch = log_density(Y, P)
    assert np.allclose(batch, [log_density(y, P) for y in Y], rtol=0, atol=1e-13)


# sampling -------------------------------------------------------------------


def test_samples_are_unit_and_reproducible():
    P = EsagParams(np.array([1.0, -2.0, 0.5, 3.0]), np.array([0.5, -0.3, 0.2, 0.1, -0.4]))
    a = sample(P, 5000, np.random.default_rng(9))
    b = sample(P, 5000, np.random.default_rng(9))
    assert np.array_equal(a, b)
    assert np.abs(np.linalg.norm(a, axis=1) - 1).max() <= 1e-12


def test_concentrated_sample_mean_direction():
    mu = np.array([30.0, -40.0, 0.0])
    Y = sample(EsagParams.isotropic(mu), 100_000, np.random.default_rng(10))
    m = Y.mean(axis=0)
    ang = math.acos(min(1.0, m @ mu / (np.linalg.norm(m) * 50)))
    assert ang < 0.01


def test_sample_rows_matches_per_row_law():
    rng = np.random.default_rng(12)
    MU = np.array([[3.0, 0.0, 1.0], [0.0, -2.0, 0.5]])
    G = np.array([[0.8, 0.2], [-0.5, 0.1]])
    Y = sample_rows(MU, G, rng, size=40_000)
    assert Y.shape == (2, 40_000, 3)
    for i in range(2):
        P = EsagParams(MU[i], G[i])
        Z = sample(P, 40_000, np.random.default_rng(100 + i))
        se = np.sqrt(Y[i].var(axis=0) / 40_000 + Z.var(axis=0) / 40_000)
        assert np.all(np.abs(Y[i].mean(axis=0) - Z.mean(axis=0)) < 5 * se)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_second_moments_match_density(seed):
    rng = np.random.default_rng(50 + seed)
    d = 3 + seed % 2
    P = random_params(rng, d, scale=0.7)
    Y = sample(P, 100_000, rng)
    emp = (Y**2).mean(axis=0)
    se_emp = (Y**2).std(axis=0) / math.sqrt(Y.shape[0])
    U = oracles.uniform_sphere(1_000_000, d, rng)
    w = np.exp(log_density(U, P)) * oracles.sphere_area(d)
    ref = (w[:, None] * U**2).mean(axis=0)
    se_ref = (w[:, None] * U**2).std(axis=0) / math.sqrt(U.shape[0])
    assert np.all(np.abs(emp - ref) <= 3 * np.sqrt(se_emp**2 + se_ref**2))
