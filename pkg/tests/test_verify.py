import math

import numpy as np
import pytest

from sketchbench.errors import BadParams
from sketchbench.linalg import random_orthonormal
from sketchbench.randbits import BitSource
from sketchbench.sketch import KINDS
from sketchbench.verify import (
    ModelParams,
    augsym_eigen_check,
    augsym_spectrum,
    build_augsym,
    gaussian_model_spectrum,
    gaussian_spectrum_check,
    moment_audit,
    sigma_star_check,
    singular_value_bounds_check,
    universality_check,
    zeta,
)


def test_augsym_zero():
    assert not build_augsym(np.zeros((5, 3))).any()


def test_augsym_symmetric_and_eigen_oracle():
    Y = np.random.default_rng(0).standard_normal((20, 4))
    X = build_augsym(Y, 0.7)
    assert X.shape == (48, 48) and np.array_equal(X, X.T)
    assert augsym_eigen_check(Y) <= 1e-8
    for m in (8, 32, 64):
        assert augsym_eigen_check(np.random.default_rng(m).standard_normal((m, 6))) <= 1e-8


def test_augsym_lambda_gram_floor():
    Y = np.random.default_rng(1).standard_normal((10, 3))
    lam = 0.4
    X = build_augsym(Y, lam)
    top = X[:3]
    assert np.linalg.eigvalsh(top @ top.T).min() >= 4 * lam ** 2 - 1e-12


def test_augsym_general_aug_matches_simplified():
    Y = np.random.default_rng(2).standard_normal((16, 4))
    lam = 0.3
    a = build_augsym(Y, lam)
    b = build_augsym(Y, lam, expected_gram=4.0 * np.eye(4))
    assert np.allclose(a, b, atol=1e-12)


def test_gaussian_band():
    assert gaussian_spectrum_check(400, 100, 4, 100, seed=1) >= 0.99


def test_gaussian_model_positive_part():
    src = BitSource(3)
    ev = gaussian_model_spectrum(400, 100, 1.0, 0.0, src)
    pos = np.sort(ev)[-100:]
    lo, hi = math.sqrt(400) - 10 - 4, math.sqrt(400) + 10 + 4
    assert pos.min() >= lo and pos.max() <= hi
    assert np.allclose(np.sort(ev), np.sort(-ev), atol=1e-8)


def test_gaussian_model_large_lambda():
    m, d, p = 32, 4, 0.25
    lam = 10 * math.sqrt(p * m)
    ev = gaussian_model_spectrum(m, d, p, lam, BitSource(4))
    nz = np.abs(ev[np.abs(ev) > 1e-8])
    assert nz.size == 2 * d and nz.min() >= lam


def test_model_params_and_zeta_monotone():
    mp = ModelParams(64, 0.25)
    assert mp.sigma == 4.0 and mp.sigma_star == 1.0
    assert mp.zeta(1.0) == 1.0 + 16 ** (1 / 3) + 1.0
    ts = np.linspace(0.1, 10, 20)
    assert np.all(np.diff([zeta(t, 64, 0.25) for t in ts]) > 0)
    assert np.all(np.diff([zeta(2.0, 64, p) for p in (0.1, 0.2, 0.5, 1.0)]) > 0)
    assert np.all(np.diff([zeta(2.0, m, 0.25) for m in (8, 16, 64, 256)]) > 0)


def test_universality_iid_dense():
    st = universality_check("iid-ent", 64, 256, 8, 1.0, trials=100, seed=1, C=10.0)
    assert st.passed and st.percentile95 <= 10 * st.zeta


def test_universality_improves_with_density():
    small = universality_check("iid-ent", 64, 512, 8, 0.25, trials=60, seed=2)
    large = universality_check("iid-ent", 256, 512, 32, 1.0, trials=60, seed=2)
    assert large.median / math.sqrt(256) < small.median / math.sqrt(16)


def test_universality_null_reruns():
    a = universality_check("gaussian", 64, 256, 8, 0.25, trials=100, seed=3)
    b = universality_check("gaussian", 64, 256, 8, 0.25, trials=100, seed=4)
    assert 0.5 <= a.percentile95 / b.percentile95 <= 2


@pytest.mark.parametrize("kind", KINDS)
def test_bounds_operating_point(kind):
    res = singular_value_bounds_check(kind, 16, 4096, 2560, 64 / 2560, 0.5, trials=50, seed=5)
    assert res.success >= 0.9


def test_bounds_rejects_eps_one():
    with pytest.raises(BadParams):
        singular_value_bounds_check("osnap", 4, 64, 16, 0.25, 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_sigma_star(kind):
    out = sigma_star_check(kind, samples=5000, seed=6)
    assert out["ok"], out


def test_moment_audit_smoke():
    a = moment_audit("osnap", builds=500, seed=1)
    assert a.builds == 500 and a.p == 0.25 and a.excluded_columns == 0
    assert abs(a.extra["mean_variance"] - 0.25) <= 0.01
