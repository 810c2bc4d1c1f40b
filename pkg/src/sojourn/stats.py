"""Goodness-of-fit tests and moment summaries for replicate ensembles."""

from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy import stats as sps

from .errors import ConfigError

MIN_SAMPLES = 30
P_FLOOR = 1e-16


def _check(x, name="samples"):
    x = np.asarray(x, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise ConfigError(name, f"need at least {MIN_SAMPLES} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ConfigError(name, "contains non-finite values")
    return x


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n: int

    def to_dict(self):
        return asdict(self)


def ks_critical(n, level=0.01):
    """Asymptotic one-sample KS critical value ``K_{1-level} / sqrt(n)``."""
    return float(sps.kstwobign.isf(level)) / math.sqrt(n)


def ks_test(samples, reference=None):
    """KS test of ``samples`` against a reference.

    ``reference`` is None (standard normal), a frozen scipy distribution or
    CDF callable (one-sample), or an array (two-sample). P-values use the
    asymptotic Kolmogorov distribution and are floored at ``1e-16``.
    """
    x = _check(samples)
    if reference is None or callable(reference) or hasattr(reference, "cdf"):
        cdf = sps.norm.cdf if reference is None else getattr(reference, "cdf", reference)
        res = sps.kstest(x, cdf, method="asymp")
    else:
        y = _check(reference, "reference")
        res = sps.ks_2samp(x, y, method="asymp")
    return KSResult(float(res.statistic), max(float(res.pvalue), P_FLOOR), x.size)


@dataclass(frozen=True)
class MomentReport:
    """Sample moments with delete-one jackknife standard errors.

    ``skew`` and ``kurt`` (excess) are NaN with ``degenerate`` set when the
    sample variance is zero.
    """

    n: int
    mean: float
    var: float
    skew: float
    kurt: float
    se_mean: float
    se_var: float
    se_skew: float
    se_kurt: float
    degenerate: bool

    def to_dict(self):
        return asdict(self)


def _central(x):
    """Mean, variance (ddof=1), skewness and excess kurtosis of each row."""
    n = x.shape[-1]
    m = x.mean(axis=-1)
    c = x - m[..., None]
    m2 = (c**2).mean(axis=-1)
    m3 = (c**3).mean(axis=-1)
    m4 = (c**4).mean(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
    return m, m2 * n / (n - 1), skew, kurt


def moment_report(samples):
    x = _check(samples)
    n = x.size
    m, v, s, k = _central(x[None, :])
    m, v, s, k = m[0], v[0], s[0], k[0]
    if v == 0.0:
        return MomentReport(n, float(m), 0.0, math.nan, math.nan, 0.0, 0.0, math.nan, math.nan, True)
    # leave-one-out replicates from running sums keep this O(n)
    total = x.sum()
    xs = x - m
    p2, p3, p4 = (xs**2).sum(), (xs**3).sum(), (xs**4).sum()
    k1 = n - 1
    d = xs  # deviation of the dropped point from the full mean
    # power sums about the full mean of the remaining points
    r1 = -d
    r2 = p2 - d**2
    r3 = p3 - d**3
    r4 = p4 - d**4
    # recentre at the leave-one-out mean
    c2 = r2 / k1 - (r1 / k1) ** 2
    mu = r1 / k1
    c3 = r3 / k1 - 3 * mu * r2 / k1 + 2 * mu**3
    c4 = r4 / k1 - 4 * mu * r3 / k1 + 6 * mu**2 * r2 / k1 - 3 * mu**4
    loo = np.stack([(total - x) / k1, c2 * k1 / (k1 - 1), c3 / c2**1.5, c4 / c2**2 - 3.0])
    jack = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=1, keepdims=True)) ** 2).sum(axis=1))
    return MomentReport(n, float(m), float(v), float(s), float(k), *map(float, jack), False)


__all__ = ["KSResult", "MomentReport", "ks_critical", "ks_test", "moment_report"]
