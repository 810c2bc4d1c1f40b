"""Sojourn functionals and normalized limit statistics of a field sample.

All integrals over ``[0, T] x K`` are Riemann sums with the grid weights
``w_x * dt``. Centering uses the grid total ``T * sum w_x``, which is the exact
mean of the discretized functional.

Two normalizations are reported for the level statistics:

* ``tc`` (theorem-consistent) divides by the standard deviation of the
  leading chaos term, ``|G_m| sigma_m / m!``;
* ``pl`` (paper-literal) follows the published denominators verbatim, which
  differ from ``tc`` by the factor ``|K|`` for ``X1`` and by
  ``phi(u) / (2 u)`` for ``X2``.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from . import kernels
from .errors import ConfigError
from .hermite import hermite_rank
from .specfun import gauss_cdf, gauss_pdf, hermite_poly
from .variance import sigma2_grid, sigma2_nK

N_ETA = 4
NORMALIZATIONS = ("theorem-consistent", "paper-literal")


def _sums(sample, u, n_max=N_ETA):
    u = -np.inf if u == -math.inf else float(u)
    return kernels.sojourn_sums(np.ascontiguousarray(sample.values), sample.grid.weights, sample.grid.dt, u, n_max)


def _total(sample):
    return sample.grid.T * sample.grid.area


def minkowski1(sample, u):
    """``sum 1{Z >= u} w_x dt``."""
    return _sums(sample, u, 0)[0]


def minkowski2(sample, u):
    """``sum 1{|Z| >= u} w_x dt``."""
    if u < 0:
        raise ConfigError("u", "threshold of the modulus sojourn must be >= 0")
    return _sums(sample, u, 0)[1]


def eta_n(sample, n):
    """``sum H_n(Z) w_x dt``."""
    n = int(n)
    if n < 1:
        raise ConfigError("n", "chaos order must be at least 1")
    if n <= 16:
        return float(_sums(sample, 0.0, n)[2][n])
    return float(sample.grid.weights @ hermite_poly(n, sample.values).sum(axis=1) * sample.grid.dt)


def local_functional_A(sample, spec):
    """``sum G(Z) w_x dt`` for a point-evaluable functional."""
    g = np.asarray(spec(sample.values), dtype=float)
    return float(sample.grid.weights @ g.sum(axis=1) * sample.grid.dt)


def chaos_sigmas(model, grid, orders=(1, 2), source="grid"):
    """``{n: sigma_{n,K}(T)}`` from the exact grid sum or the continuum quadrature."""
    if source == "grid":
        return {n: math.sqrt(sigma2_grid(model, grid, n)) for n in orders}
    if source == "continuum":
        return {n: math.sqrt(sigma2_nK(model, grid.body, n, grid.T)) for n in orders}
    raise ConfigError("sigma_source", f"unknown variance source {source!r}")


def _check_sigma(sigma):
    if not sigma > 0:
        raise ConfigError("sigma", "must be positive")


def stat_Y(sample, spec, m, sigma_m):
    """``(Y_T, Y_{m,T})``: the functional and its rank-``m`` chaos term, normalized."""
    _check_sigma(sigma_m)
    m = int(m)
    if m != hermite_rank(spec):
        raise ConfigError("m", f"functional has Hermite rank {hermite_rank(spec)}, not {m}")
    g_m = spec.coeffs[m]
    scale = abs(g_m) * sigma_m / math.factorial(m)
    A = local_functional_A(sample, spec)
    Y = (A - spec.coeffs[0] * _total(sample)) / scale
    Ym = math.copysign(1.0, g_m) * eta_n(sample, m) / sigma_m
    return Y, Ym


def _check_norm(normalization):
    if normalization not in NORMALIZATIONS:
        raise ConfigError("normalization", f"must be one of {NORMALIZATIONS}")


def stat_X1(sample, u, sigma_1, normalization="theorem-consistent", M1=None):
    _check_sigma(sigma_1)
    _check_norm(normalization)
    M1 = minkowski1(sample, u) if M1 is None else M1
    x = (M1 - (1.0 - gauss_cdf(u)) * _total(sample)) / (gauss_pdf(u) * sigma_1)
    if normalization == "paper-literal":
        # the published denominator lacks |K|^2 under the square root
        x *= sample.grid.body.volume
    return x


def stat_X2_Y2(sample, u, sigma_2, normalization="theorem-consistent", M2=None, eta2=None):
    """``(X2, Y2)``; ``Y2 = eta_2 / sigma_2`` in either normalization."""
    _check_sigma(sigma_2)
    _check_norm(normalization)
    if not u > 0:
        raise ConfigError("u", "the rank-2 statistics need u > 0")
    M2 = minkowski2(sample, u) if M2 is None else M2
    eta2 = eta_n(sample, 2) if eta2 is None else eta2
    centered = M2 - 2.0 * (1.0 - gauss_cdf(u)) * _total(sample)
    if normalization == "theorem-consistent":
        # coefficient 2 phi(u) H_1(u) over 2!
        x = centered / (gauss_pdf(u) * u * sigma_2)
    else:
        x = centered / (gauss_pdf(u) ** 2 * sigma_2 / 2.0)
    return x, eta2 / sigma_2


@dataclass(frozen=True)
class SojournStats:
    u: float
    M1: float
    M2: float
    eta: tuple  # eta_1 .. eta_N_ETA
    X1_tc: float
    X1_pl: float
    X2_tc: float
    X2_pl: float
    Y2: float

    def row(self):
        d = asdict(self)
        eta = d.pop("eta")
        d.update({f"eta_{n}": v for n, v in enumerate(eta, start=1)})
        return d


def sojourn_stats(sample, u, sigmas, n_max=N_ETA):
    """All level statistics of one sample from a single pass over its values.

    ``sigmas`` maps chaos orders 1 and 2 to ``sigma_{n,K}(T)``. The rank-2
    statistics are NaN when ``u <= 0``.
    """
    M1, M2, eta = _sums(sample, u, max(n_max, 2))
    x1 = stat_X1(sample, u, sigmas[1], M1=M1)
    x1_pl = stat_X1(sample, u, sigmas[1], "paper-literal", M1=M1)
    if u > 0:
        x2, y2 = stat_X2_Y2(sample, u, sigmas[2], M2=M2, eta2=eta[2])
        x2_pl, _ = stat_X2_Y2(sample, u, sigmas[2], "paper-literal", M2=M2, eta2=eta[2])
    else:
        x2 = x2_pl = math.nan
        y2 = eta[2] / sigmas[2]
    return SojournStats(float(u), M1, M2, tuple(float(e) for e in eta[1 : n_max + 1]), x1, x1_pl, x2, x2_pl, y2)


def reconstruct_M1(u, eta, total):
    """Truncated chaos expansion of ``M1``: ``(1 - Phi(u)) T|K| + phi(u) sum H_{n-1}(u) eta_n / n!``."""
    s = (1.0 - gauss_cdf(u)) * total
    for n, e in enumerate(eta, start=1):
        s += gauss_pdf(u) * hermite_poly(n - 1, u) * e / math.factorial(n)
    return s


__all__ = [
    "NORMALIZATIONS",
    "SojournStats",
    "chaos_sigmas",
    "eta_n",
    "local_functional_A",
    "minkowski1",
    "minkowski2",
    "reconstruct_M1",
    "sojourn_stats",
    "stat_X1",
    "stat_X2_Y2",
    "stat_Y",
]
