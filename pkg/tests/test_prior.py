import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from epsense.errors import ParameterError
from epsense.prior import CavityMarginal, PriorParams, prior_density_pointwise, tilted_moments
from oracles import tilted_quadrature


def tm(m, v, rho, lam=1.0):
    t = tilted_moments(CavityMarginal(np.array([m], float), np.array([v], float)),
                       PriorParams(rho, lam))
    return float(t.log_z[0]), float(t.m1[0]), float(t.m2[0]), float(t.var[0])


def test_pure_spike():
    _, m1, m2, _ = tm(0.7, 2.0, 0.0)
    assert m1 == 0.0 and m2 == 0.0


def test_pure_slab_gaussian_product():
    _, m1, m2, _ = tm(1.0, 1.0, 1.0)
    assert m1 == pytest.approx(0.5, rel=1e-15)
    assert m2 == pytest.approx(0.75, rel=1e-15)


def test_half_density_matches_quadrature():
    got = tm(1.0, 1.0, 0.5)[:3]
    ref = tilted_quadrature(1.0, 1.0, 0.5, 1.0)
    for g, r in zip(got, ref):
        assert abs(g - r) < 1e-8 * max(1.0, abs(r))


def test_quadrature_grid():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        m, v = rng.uniform(-10, 10), 10 ** rng.uniform(-3, 3)
        r, lam = rng.uniform(0.01, 0.99), 10 ** rng.uniform(-1, 1)
        got = tm(m, v, r, lam)[:3]
        ref = tilted_quadrature(m, v, r, lam)
        for g, o in zip(got, ref):
            assert abs(g - o) < 1e-8 * max(1.0, abs(o))


@given(m=st.floats(-50, 50), v=st.floats(1e-3, 1e3), lam=st.floats(0.1, 10))
def test_rho_one_limit(m, v, lam):
    _, m1, m2, _ = tm(m, v, 1.0, lam)
    mu = lam * m / (lam + v)
    s = lam * v / (lam + v)
    assert abs(m1 - mu) <= 1e-12 * max(1.0, abs(mu))
    assert abs(m2 - (s + mu * mu)) <= 1e-12 * max(1.0, s + mu * mu)


@given(m=st.floats(-20, 20), v=st.floats(1e-3, 1e3), rho=st.floats(0.01, 1.0),
       lam=st.floats(0.1, 10))
def test_variance_positive(m, v, rho, lam):
    _, m1, m2, var = tm(m, v, rho, lam)
    assert var > 0
    assert m2 >= m1 * m1


@given(m=st.floats(-20, 20), v=st.floats(1e-3, 1e3), rho=st.floats(0.01, 0.99),
       lam=st.floats(0.1, 10))
def test_symmetry(m, v, rho, lam):
    a, b = tm(m, v, rho, lam), tm(-m, v, rho, lam)
    assert a[1] == -b[1]
    assert a[2] == b[2]


def test_confident_cavity_does_not_underflow():
    # N(0; 30, 1e-3) underflows in linear domain
    lz, m1, m2, var = tm(30.0, 1e-3, 0.5)
    assert np.isfinite(lz) and np.isfinite(m1) and var > 0
    assert m1 == pytest.approx(30.0 / (1 + 1e-3), rel=1e-12)


def test_tiny_variance_clamped():
    a = tm(0.3, 1e-20, 0.4)
    b = tm(0.3, 1e-12, 0.4)
    assert a == b


@pytest.mark.parametrize("v", [0.0, -1.0, float("nan")])
def test_nonpositive_variance_rejected(v):
    with pytest.raises(ParameterError):
        tm(0.0, v, 0.5)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    m, v = rng.normal(size=50), 10 ** rng.uniform(-2, 2, 50)
    t = tilted_moments(CavityMarginal(m, v), PriorParams(0.3, 2.0))
    for i in range(50):
        s = tm(m[i], v[i], 0.3, 2.0)
        assert (t.log_z[i], t.m1[i], t.m2[i]) == pytest.approx(s[:3], rel=1e-15)


def test_prior_params_validation():
    with pytest.raises(ParameterError):
        PriorParams(1.2, 1.0)
    with pytest.raises(ParameterError):
        PriorParams(0.5, 0.0)


def test_pointwise_density_examples():
    spike, slab = prior_density_pointwise(0.0, PriorParams(0.3, 1.0))
    assert spike == pytest.approx(0.7)
    assert slab == pytest.approx(0.3 / math.sqrt(2 * math.pi), rel=1e-15)
    spike, slab = prior_density_pointwise(1.0, PriorParams(1.0, 1.0))
    assert spike == 0.0
    assert slab == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), rel=1e-15)


@pytest.mark.parametrize("rho, lam", [(0.1, 1.0), (0.5, 0.2), (0.9, 7.0)])
def test_pointwise_density_normalized(rho, lam):
    prior = PriorParams(rho, lam)
    mass, _ = integrate.quad(lambda w: prior_density_pointwise(w, prior)[1], -np.inf, np.inf)
    assert mass + prior_density_pointwise(0.0, prior)[0] == pytest.approx(1.0, abs=1e-10)
