import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from sojourn.errors import ConfigError
from sojourn.stats import ks_critical, ks_test, moment_report


def test_ks_null_calibration():
    # p > 0.001 should fail about once per thousand seeds
    fails = sum(ks_test(np.random.default_rng(s).standard_normal(1000)).p_value <= 1e-3 for s in range(200))
    assert fails <= 2


def test_ks_power():
    x = np.random.default_rng(0).standard_normal(1000) + 1.0
    r = ks_test(x)
    assert r.p_value < 1e-6
    assert ks_test(x + 50).p_value == 1e-16


@given(st.integers(30, 300), st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_ks_statistic_range(n, seed):
    r = ks_test(np.random.default_rng(seed).standard_cauchy(n))
    assert 0.0 <= r.statistic <= 1.0 and 1e-16 <= r.p_value <= 1.0


def test_ks_two_sample_and_reference():
    rng = np.random.default_rng(1)
    a, b = rng.gamma(3, size=500), rng.gamma(3, size=700)
    assert ks_test(a, b).p_value > 1e-3
    assert ks_test(a, b + 1).p_value < 1e-6
    assert ks_test(a, sps.gamma(3)).p_value > 1e-3


def test_ks_too_few():
    with pytest.raises(ConfigError):
        ks_test(np.zeros(29))
    with pytest.raises(ConfigError):
        ks_test(np.r_[np.zeros(40), np.nan])


def test_ks_critical_value():
    assert ks_critical(400) == pytest.approx(1.6276 / 20, rel=1e-3)


def test_moment_report_constant():
    r = moment_report(np.full(50, 2.5))
    assert r.var == 0.0 and r.degenerate
    assert math.isnan(r.skew) and math.isnan(r.kurt)


def test_moment_report_normal_null():
    r = moment_report(np.random.default_rng(3).standard_normal(10_000))
    assert abs(r.skew) < 3 * r.se_skew
    assert abs(r.kurt) < 3 * r.se_kurt
    assert r.se_mean == pytest.approx(math.sqrt(r.var / 1e4), rel=0.02)


def test_moment_report_matches_brute_jackknife():
    x = np.random.default_rng(4).exponential(size=60)
    r = moment_report(x)
    loo = np.array(
        [[np.delete(x, i).mean(), np.delete(x, i).var(ddof=1), sps.skew(np.delete(x, i)), sps.kurtosis(np.delete(x, i))] for i in range(60)]
    )
    se = np.sqrt(59 / 60 * ((loo - loo.mean(0)) ** 2).sum(0))
    np.testing.assert_allclose([r.se_mean, r.se_var, r.se_skew, r.se_kurt], se, rtol=1e-9)
    assert r.skew == pytest.approx(sps.skew(x)) and r.kurt == pytest.approx(sps.kurtosis(x))


def test_moment_report_skewed():
    x = np.random.default_rng(5).chisquare(2, size=400) - 2
    r = moment_report(x)
    assert r.skew / r.se_skew > 2
