import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, special

from sojourn.covariance import (
    CauchySpatial,
    ConstantOne,
    CustomCovariance,
    GneitingCauchy,
    GneitingML,
    PoweredExponential,
    Separable,
    cholesky_smoke_test,
    condition2_check,
    cov_eval,
    lrd_exponent,
    model_from_dict,
    spatial_spectral_density,
    sup_decay_check,
    tau_panels,
    tauberian_constant,
    temporal_spectral_closed,
    temporal_spectral_density,
)
from sojourn.errors import ConfigError
from sojourn.geometry import ConvexBody

MODELS = {
    "separable": Separable(PoweredExponential(1.0, 1.0), 0.4),
    "separable-cauchy": Separable(CauchySpatial(2.0, 0.8, 0.7), 0.3),
    "gneiting_ml": GneitingML(a=1.0, alpha=0.5, beta=0.5, gamma=0.4, nu=0.5, d=2),
    "gneiting_cauchy": GneitingCauchy(a=1.0, alpha=0.5, beta=0.6, c=1.0, gamma=0.5, nu=1.0, d=1),
}


def test_cov_examples():
    assert cov_eval(GneitingML(1, 0.5, 0.5, 0.5, 0.5, 1), 0.0, 0.0) == 1.0
    assert cov_eval(Separable(PoweredExponential(1.0, 1.0), 0.4), 0.0, 0.0) == 1.0
    assert cov_eval(GneitingML(1, 0.5, 0.5, 0.5, 0.5, 1), 1.0, 0.0) == pytest.approx(0.4275836, abs=1e-7)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_bounds_on_grid(name):
    z = np.linspace(0, 5, 100)[:, None]
    tau = np.concatenate([[0.0], np.logspace(-2, 5, 99)])[None, :]
    c = cov_eval(MODELS[name], z, tau)
    assert c.shape == (100, 100)
    assert np.all(c >= 0) and np.all(c <= 1 + 1e-15)
    assert cov_eval(MODELS[name], 0.0, 0.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_positive_definite_smoke(name):
    d = getattr(MODELS[name], "d", 1)
    assert cholesky_smoke_test(MODELS[name], d=d)


@pytest.mark.parametrize(
    "ctor,kwargs",
    [
        (PoweredExponential, dict(lam=-1.0)),
        (PoweredExponential, dict(kappa=1.5)),
        (CauchySpatial, dict(gamma=0.0)),
        (GneitingML, dict(a=1, alpha=0.5, beta=0.5, gamma=0.5, nu=1.2, d=1)),
        (GneitingML, dict(a=1, alpha=0.5, beta=0.5, gamma=0.5, nu=0.5, d=0)),
        (GneitingCauchy, dict(a=1, alpha=0.5, beta=1.5, c=1, gamma=0.5, nu=1, d=1)),
    ],
)
def test_invalid_parameters(ctor, kwargs):
    with pytest.raises(ConfigError):
        ctor(**kwargs)


def test_separable_alpha_range():
    with pytest.raises(ConfigError) as exc:
        Separable(ConstantOne(), 1.0)
    assert exc.value.param == "model.alpha"


def test_custom_rejects_white_noise():
    with pytest.raises(ConfigError):
        CustomCovariance(lambda z, t: np.where((z == 0) & (t == 0), 1.0, 0.0))
    frozen = CustomCovariance(lambda z, t: np.ones_like(z))
    assert cov_eval(frozen, 3.0, 7.0) == 1.0


def test_negative_arguments():
    with pytest.raises(ConfigError):
        cov_eval(MODELS["separable"], -1.0, 0.0)


@pytest.mark.parametrize("name", ["separable", "gneiting_ml", "gneiting_cauchy"])
def test_dict_roundtrip(name):
    m = MODELS[name]
    assert model_from_dict(m.to_dict()) == m


def test_separable_tail():
    for alpha in (0.2, 0.4, 0.9):
        m = Separable(ConstantOne(), alpha)
        assert 1e4**alpha * m.temporal(1e4) == pytest.approx(1.0, rel=0.01)


def test_lrd_exponent_examples():
    sep = Separable(PoweredExponential(), 0.4)
    r2 = lrd_exponent(sep, 2)
    assert r2.theta == pytest.approx(0.8) and r2.is_lrd
    r3 = lrd_exponent(sep, 3)
    assert r3.theta == pytest.approx(1.2) and not r3.is_lrd
    g = lrd_exponent(MODELS["gneiting_ml"], 1)
    assert g.theta_paper == pytest.approx(0.3) and g.is_lrd_paper
    # the actual decay of the temporal prefactor is alpha*beta*d
    assert g.theta == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["separable", "gneiting_ml", "gneiting_cauchy"])
@pytest.mark.parametrize("m", [1, 2])
def test_lrd_exponent_matches_empirical_slope(name, m):
    model = MODELS[name]
    d = getattr(model, "d", 1)
    body = ConvexBody.ball(d) if d > 1 else ConvexBody.interval(1.0)
    z = body.diameter / 2
    tau = np.array([1e6, 2e6])
    c = cov_eval(model, z, tau) ** m
    slope = math.log(c[1] / c[0]) / math.log(2.0)
    assert slope == pytest.approx(-lrd_exponent(model, m).theta, abs=0.05)


def test_gneiting_lower_bound():
    m = GneitingML(a=2.0, alpha=0.7, beta=0.5, gamma=0.6, nu=0.4, d=2)
    z = np.linspace(0, 4, 50)[:, None]
    tau = np.logspace(-2, 3, 40)[None, :]
    assert np.all(cov_eval(m, z, tau) >= m.lower_bound(z, tau) * (1 - 1e-12))


def test_tau_panels():
    x, w = tau_panels(4096.0)
    assert w.sum() == pytest.approx(4096.0, rel=1e-13)
    assert np.dot(w, x**3) == pytest.approx(4096.0**4 / 4, rel=1e-12)
    x, w = tau_panels(0.5)
    assert w.sum() == pytest.approx(0.5) and x.max() < 0.5


def test_condition2_examples():
    body = ConvexBody.interval(1.0)
    T = 2.0 ** np.arange(6, 13)
    r = condition2_check(Separable(ConstantOne(), 0.4), body, 1, 0.5, T)
    assert r.increasing
    r = condition2_check(Separable(ConstantOne(), 0.9), body, 2, 0.5, T)
    assert np.all(np.diff(r.values[-3:]) <= 0)
    with pytest.raises(ConfigError):
        condition2_check(Separable(ConstantOne(), 0.4), body, 1, 0.5, [4.0, 2.0, 8.0])
    with pytest.raises(ConfigError):
        condition2_check(Separable(ConstantOne(), 0.4), body, 1, 1.5, T)


def test_sup_decay():
    body = ConvexBody.interval(1.0)
    sep = Separable(PoweredExponential(), 0.4)
    assert sup_decay_check(sep, body, [0.0]).sup[0] == 1.0
    r = sup_decay_check(MODELS["gneiting_ml"], ConvexBody.ball(2), np.logspace(0, 8, 9))
    assert r.decreasing and r.below_tol
    const = Separable(ConstantOne(), 0.4)
    tau = np.array([0.5, 3.0, 100.0])
    assert_allclose(sup_decay_check(const, body, tau).sup, const.temporal(tau))


def test_tauberian_constant():
    assert tauberian_constant(0.5) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    for a in (0.1, 0.3, 0.7):
        # reflection-formula form as an independent check
        alt = math.gamma(1 - a) * math.sin(math.pi * a / 2) / math.pi
        assert tauberian_constant(a) == pytest.approx(alt, rel=1e-13)
    with pytest.raises(ConfigError):
        tauberian_constant(1.0)


@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.6])
@pytest.mark.parametrize("mu", [1e-3, 0.05, 0.7, 3.0])
def test_temporal_spectral_vs_closed_form(alpha, mu):
    m = Separable(ConstantOne(), alpha)
    v = temporal_spectral_density(m, mu)
    assert v.value == pytest.approx(temporal_spectral_closed(alpha, mu), rel=1e-7)
    assert v.value >= 0
    assert temporal_spectral_density(m, -mu).value == v.value


def test_temporal_spectral_tauberian_limit():
    m = Separable(ConstantOne(), 0.3)
    v = temporal_spectral_density(m, 1e-3)
    assert v.value * 1e-3 ** 0.7 / tauberian_constant(0.3) == pytest.approx(1.0, rel=0.05)
    assert v.tauberian == pytest.approx(tauberian_constant(0.3) * 1e-3 ** -0.7)
    with pytest.raises(ConfigError):
        temporal_spectral_density(MODELS["gneiting_ml"], 0.1)


def test_temporal_spectral_inverts():
    # int f_T = C_T(0) = 1, using the closed form
    val, _ = integrate.quad(lambda x: 2 * temporal_spectral_closed(0.4, x), 0, np.inf, limit=400)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_spatial_spectral_examples():
    e = PoweredExponential(1.0, 1.0)
    assert spatial_spectral_density(e, 1, 0.0) == pytest.approx(1 / math.pi)
    assert spatial_spectral_density(e, 1, 2.0) == spatial_spectral_density(e, 1, -2.0)
    with pytest.raises(ConfigError):
        spatial_spectral_density(ConstantOne(), 1, 0.5)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("spatial", [PoweredExponential(1.5, 1.0), CauchySpatial(1.0, 1.0, 2.0)])
def test_spatial_spectral_mass(spatial, d):
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    val, _ = integrate.quad(
        lambda w: w ** (d - 1) * spatial_spectral_density(spatial, d, w), 0, np.inf, limit=200
    )
    assert area * val == pytest.approx(1.0, abs=1e-4)


def test_spatial_spectral_cauchy_closed_forms():
    c = CauchySpatial(1.0, 1.0, 1.0)
    for w in (0.1, 1.0, 4.0):
        assert spatial_spectral_density(c, 1, w) == pytest.approx(math.exp(-w) / 2, rel=1e-8)
        assert spatial_spectral_density(c, 2, w) == pytest.approx(special.k0(w) / (2 * math.pi), rel=1e-8)


def test_spatial_spectral_numeric_matches_exponential_closed_form():
    from sojourn.covariance import _hankel_radial

    e = PoweredExponential(1.3, 1.0)
    for d in (2, 4):
        for w in (0.2, 2.0):
            assert _hankel_radial(e, d, w) == pytest.approx(spatial_spectral_density(e, d, w), rel=1e-9)


@given(st.floats(0.0, 10.0), st.floats(0.0, 1e4), st.floats(0.05, 0.95))
@settings(max_examples=60, deadline=None)
def test_separable_monotone_in_z(z, tau, alpha):
    m = Separable(PoweredExponential(1.0, 0.5), alpha)
    assert cov_eval(m, z + 0.1, tau) <= cov_eval(m, z, tau)
    assert cov_eval(m, z, tau + 1.0) <= cov_eval(m, z, tau)
