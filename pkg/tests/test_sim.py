import math

import numpy as np
import pytest

from esag.dist import EsagParams, sample
from esag.regress import NullSpec
from esag.sim import (
    ALPHA0,
    ALPHA1,
    BETA0,
    BETA1,
    DGM_NAMES,
    concentration_profile,
    dgm,
    generate_dgm,
    profile_setting,
    run_coverage_study,
    run_rejection_study,
    sub_seed,
)


# catalog ----------------------------------------------------------------------


def test_catalog_constants():
    assert ALPHA0 == (2.0, -5.0, 3.0, 5.0)
    assert ALPHA1 == (2.0, 1.0, 2.0, 1.0)
    assert BETA0 == (3.0, 5.0, -3.0, -4.0, 2.0)
    assert BETA1 == (4.0, 2.0, 5.0, -2.0, 3.0)


@pytest.mark.parametrize("r", [0.1, 0.5, 2.0])
def test_catalog_entries(r):
    a1r = (r / 2,) * 4
    br = (r / math.sqrt(5),) * 5
    z4, z5 = (0.0,) * 4, (0.0,) * 5
    expected = {
        "V0": (ALPHA0, ALPHA1, z5, z5),
        "V1": (ALPHA0, ALPHA1, br, z5),
        "V2": (ALPHA0, ALPHA1, br, br),
        "mu0": (ALPHA0, z4, z5, z5),
        "mu1": (ALPHA0, a1r, z5, z5),
        "mu2": (ALPHA0, a1r, BETA0, z5),
        "mu3": (ALPHA0, a1r, BETA0, BETA1),
        "gamma0": (ALPHA0, ALPHA1, z5, z5),
        "gamma1": (ALPHA0, ALPHA1, z5, br),
        "gamma2": (ALPHA0, ALPHA1, BETA0, br),
    }
    assert set(DGM_NAMES) == set(expected)
    for name, (a0, a1, b0, b1) in expected.items():
        s = dgm(name, r)
        assert (s.alpha0, s.alpha1, s.beta0, s.beta1) == (a0, a1, b0, b1)


def test_catalog_nulls_and_errors():
    assert dgm("V1").null_spec == NullSpec.isotropy()
    assert dgm("mu2").null_spec == NullSpec.mu_const()
    assert dgm("gamma1").null_spec == NullSpec.gamma_const()
    with pytest.raises(ValueError):
        dgm("V9")
    with pytest.raises(ValueError):
        dgm("V1", -1.0)


# generate_dgm -----------------------------------------------------------------


def test_generate_properties():
    data = generate_dgm(dgm("mu1", 1.0), 300, 7)
    assert np.allclose(np.linalg.norm(data.responses, axis=1), 1.0, atol=1e-14)
    X = data.covariates[:, 0]
    assert X.min() == 1.0 and X.max() == 2.0
    again = generate_dgm(dgm("mu1", 1.0), 300, 7)
    assert np.array_equal(data.responses, again.responses)
    assert np.array_equal(data.covariates, again.covariates)
    other = generate_dgm(dgm("mu1", 1.0), 300, 7, 1)
    assert not np.array_equal(data.responses, other.responses)


def test_v0_is_isotropic_given_x():
    spec = dgm("V0", 3.0)
    G = spec.coefficients().shape(np.array([[1.0], [1.7], [2.0]]))
    assert np.array_equal(G, np.zeros((3, 5)))


def test_sub_seed_stable():
    assert sub_seed(3, 1) == sub_seed(3, 1)
    assert sub_seed(3, 1) != sub_seed(3, 2)
    assert 0 <= sub_seed(0) < 2**32


# studies -----------------------------------------------------------------------


def test_rejection_study_contract_and_determinism():
    kw = dict(statistics=("roc", "lr"), B=4, reps=4, levels=(0.05, 0.5), seed=2)
    a = run_rejection_study(dgm("V0"), 60, workers=1, **kw)
    b = run_rejection_study(dgm("V0"), 60, workers=2, **kw)
    assert a.to_dict() == b.to_dict()
    assert len(a.rows) == 4
    for row in a.rows:
        assert 0.0 <= row["rate"] <= 1.0
        assert row["se"] == math.sqrt(row["rate"] * (1 - row["rate"]) / row["reps"])
        assert set(row) == {"dgm", "r", "n", "statistic", "level", "rate", "se", "reps", "B", "seed"}
    p = a.replicates["lr"]
    assert a.cell(statistic="lr", level=0.5)["rate"] == np.mean(p < 0.5)


def test_coverage_study_contract():
    res = run_coverage_study(60, (0.5, 0.9, 0.99), m=200, B=2, reps=4, seed=1)
    means = [r["mean"] for r in res.rows]
    assert means == sorted(means)
    for r in res.rows:
        assert r["se"] == pytest.approx(r["sd"] / 2.0)
    again = run_coverage_study(60, (0.5, 0.9, 0.99), m=200, B=2, reps=4, seed=1, workers=2)
    assert res.to_dict() == again.to_dict()


# concentration profile ------------------------------------------------------------


def test_profile_isotropic_peak_at_truth():
    P, R = profile_setting(1, 1)
    assert np.allclose(R, np.eye(4))
    Y = sample(P, 10_000, np.random.default_rng(0))
    res = concentration_profile(Y, P.mu, R)
    assert 0.95 <= res.roc_star <= 1.05
    assert res.ell_star >= res.ell.max()


def test_profile_anisotropy_and_rotation_inflate():
    rng = np.random.default_rng(1)
    by_shape = []
    for a in (1, 2, 3):
        P, R = profile_setting(a, 1)
        by_shape.append(concentration_profile(sample(P, 10_000, rng), P.mu, R).roc_star)
    assert by_shape[0] < by_shape[1] < by_shape[2]
    assert by_shape[1] > 1
    P, _ = profile_setting(1, 1)
    Y = sample(P, 10_000, rng)
    by_rot = [concentration_profile(Y, P.mu, profile_setting(1, k)[1]).roc_star for k in (1, 2, 3)]
    assert by_rot[0] < by_rot[1] < by_rot[2]


def test_profile_rotations_are_orthogonal():
    for k in (1, 2, 3):
        _, R = profile_setting(2, k)
        assert np.allclose(R @ R.T, np.eye(4), atol=1e-14)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_profile_grid_validation():
    Y = sample(EsagParams.isotropic(np.array([1.0, 0.0, 0.0])), 10, np.random.default_rng(2))
    with pytest.raises(ValueError):
        concentration_profile(Y, [1.0, 0.0, 0.0], c_grid=[1.0, 0.5])
    res = concentration_profile(Y, [2.0, 0.0, 0.0], c_grid=np.linspace(0.1, 5, 50))
    assert res.roc_star == pytest.approx(2.0 / res.c_star)
