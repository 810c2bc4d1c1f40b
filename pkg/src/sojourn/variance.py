"""Variances of the chaos components and their large-T asymptotics.

``sigma2_nK`` is the variance of ``eta_n = int_0^T int_K H_n(Z(x,t)) dx dt``:

    sigma^2_{n,K}(T) = 2 n! T |K|^2 int_0^T (1 - tau/T) int psi(z) C(z,tau)^n dz dtau.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from .covariance import (
    TAU_PANEL_NODES,
    lrd_exponent,
    spatial_average,
    tau_panels,
    tauberian_constant,
    triangle_lag_integral,
)
from .errors import ConfigError, NumericalError
from .geometry import distance_rule
from .hermite import functional_covariance

__all__ = [
    "VarianceReport",
    "c_K_constant",
    "expected_cov_power",
    "functional_variance_grid",
    "grid_lag_sum",
    "scaling_exponent_fit",
    "short_memory_B",
    "sigma2_grid",
    "sigma2_nK",
    "tauberian_constant",
]


def _check_order(n):
    n = int(n)
    if n < 1:
        raise ConfigError("n", "chaos order must be at least 1")
    return n


def sigma2_nK(model, body, n, T, nodes=TAU_PANEL_NODES, return_error=False):
    """Continuum variance of the n-th chaos component.

    With ``return_error`` the relative change under doubling both the time
    and the distance quadrature is returned as well.
    """
    n = _check_order(n)
    if not T > 0:
        raise ConfigError("T", "must be positive")
    scale = 2.0 * math.factorial(n) * T * body.volume**2
    val = scale * triangle_lag_integral(model, body, n, T, nodes)
    if not (math.isfinite(val) and val > 0):
        raise NumericalError(f"variance quadrature returned {val}")
    if not return_error:
        return val
    fine = scale * triangle_lag_integral(model, body, n, T, 2 * nodes, rule=distance_rule(body, nodes=64))
    return val, abs(fine - val) / abs(fine)


def grid_lag_sum(model, grid, f):
    """``sum_{x,y} w_x w_y sum_{t,s} dt^2 f(C(|x-y|, |t-s|))`` over a space-time grid.

    Summed over distinct distances and lags, so the cost is independent of
    the number of point pairs sharing a distance.
    """
    pts = np.asarray(grid.points, dtype=float).reshape(len(grid.weights), -1)
    w = np.asarray(grid.weights, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    pair_w = np.outer(w, w)
    # group identical distances; lattice distances repeat heavily
    key = np.round(dist.ravel(), 12)
    uniq, inv = np.unique(key, return_inverse=True)
    wsum = np.bincount(inv, weights=pair_w.ravel())
    nt = int(grid.n_t)
    lags = np.arange(nt) * grid.dt
    mult = np.where(np.arange(nt) == 0, nt, 2.0 * (nt - np.arange(nt)))
    c = f(model(uniq[:, None], lags[None, :]))
    return float(grid.dt**2 * (wsum @ c @ mult))


def sigma2_grid(model, grid, n):
    """Exact variance of the Riemann sum of ``H_n(Z)`` over a space-time grid.

    ``n! sum_{x,y} w_x w_y sum_{t,s} dt^2 C(|x-y|, |t-s|)^n``.
    """
    n = _check_order(n)
    return math.factorial(n) * grid_lag_sum(model, grid, lambda c: c**n)


def functional_variance_grid(model, grid, spec):
    """Exact variance of the Riemann sum of ``G(Z)`` for a functional spec."""
    return grid_lag_sum(model, grid, lambda c: functional_covariance(spec, c))


def expected_cov_power(body, spatial, n):
    """``int psi(z) C_S(z)**n dz``, the mean of ``C_S**n`` at a random pair distance."""
    n = _check_order(n)
    return distance_rule(body).expect(lambda z: spatial(z) ** n)


def c_K_constant(n, alpha, body, spatial, paper_literal=False):
    """Limit of ``sigma^2_{n,K}(T) / T**(2 - n alpha)`` for separable models.

    ``2 n! |K|^2 E[C_S^n] / ((1 - n alpha)(2 - n alpha))``. With
    ``paper_literal`` the spatial mean uses ``C_S`` instead of ``C_S**n``.
    """
    n = _check_order(n)
    if not 0 < alpha < 1:
        raise ConfigError("alpha", "must lie in (0, 1)")
    if n * alpha >= 1:
        raise ConfigError("n*alpha", f"must be < 1, got {n * alpha}")
    time_part = 1.0 / ((1.0 - n * alpha) * (2.0 - n * alpha))
    power = 1 if paper_literal else n
    return 2.0 * math.factorial(n) * time_part * body.volume**2 * expected_cov_power(body, spatial, power)


@dataclass(frozen=True, eq=False)
class VarianceReport:
    n: int
    T: np.ndarray
    sigma2: np.ndarray
    slope: float
    intercept: float
    r2: float
    reference: float  # 2 - theta_n with the actual decay exponent
    reference_paper: float
    quad_relerr: np.ndarray = None


def scaling_exponent_fit(model, body, n, T_list, threads=1, with_error=False):
    """Least-squares slope of ``log sigma^2`` against ``log T``."""
    n = _check_order(n)
    T = np.asarray(T_list, dtype=float)
    if T.size < 4:
        raise ConfigError("T_list", "need at least four values")
    ratios = T[1:] / T[:-1]
    if np.any(T <= 0) or not np.allclose(ratios, 2.0):
        raise ConfigError("T_list", "must be dyadically spaced")

    def one(t):
        return sigma2_nK(model, body, n, t, return_error=with_error)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(one, T))
    if with_error:
        sig = np.array([r[0] for r in results])
        err = np.array([r[1] for r in results])
    else:
        sig, err = np.array(results), None
    fit = stats.linregress(np.log(T), np.log(sig))
    try:
        lrd = lrd_exponent(model, n)
        ref, ref_paper = 2.0 - min(lrd.theta, 1.0), 2.0 - min(lrd.theta_paper, 1.0)
    except ConfigError:
        ref = ref_paper = math.nan
    return VarianceReport(n, T, sig, float(fit.slope), float(fit.intercept), float(fit.rvalue**2),
                          ref, ref_paper, err)


@dataclass(frozen=True)
class ShortMemoryB:
    value: float
    tail_bound: float
    terms: tuple


def short_memory_B(model, body, spec, Q_max, tau_cutoff):
    """Asymptotic variance constant ``B`` of a short-memory functional.

    ``B = sum_{n=m}^{Q_max} G_n^2/(n!)^2 lim sigma^2_n(T)/T`` with the limits
    ``2 n! |K|^2 int_0^cutoff int psi C^n dz dtau``. The tail beyond the
    cutoff is bounded by extrapolating the power-law decay of the rank-m lag
    profile; a non-integrable profile raises ``ConfigError``.
    """
    m = spec.rank
    Q_max = int(Q_max)
    if Q_max < m or Q_max > spec.Q:
        raise ConfigError("Q_max", f"must lie in [{m}, {spec.Q}]")
    try:
        lrd = lrd_exponent(model, m)
    except ConfigError:
        lrd = None  # custom kernel without a declared exponent
    if lrd is not None and lrd.theta <= 1:
        raise ConfigError("model", "C^m is not integrable in time (long memory): B is undefined")
    rule = distance_rule(body)
    prof = spatial_average(model, body, m, np.array([tau_cutoff / 2, tau_cutoff]), rule)
    if prof[1] > 0:
        p = math.log(prof[0] / prof[1]) / math.log(2.0)
        if p <= 1.0:
            raise ConfigError("model", "lag profile is not integrable (long memory): B is undefined")
        tail_m = tau_cutoff * prof[1] / (p - 1.0)
    else:
        tail_m = 0.0
    tau, w = tau_panels(tau_cutoff)
    terms, tail = [], 0.0
    for n in range(m, Q_max + 1):
        g = spec.coeffs[n]
        if g == 0.0:
            terms.append(0.0)
            continue
        lim = 2.0 * math.factorial(n) * body.volume**2 * float(w @ spatial_average(model, body, n, tau, rule))
        coef = g * g / math.factorial(n) ** 2
        terms.append(float(coef * lim))
        # 0 <= C <= 1, so the tail of C^n is dominated by the tail of C^m
        tail += coef * 2.0 * math.factorial(n) * body.volume**2 * tail_m
    return ShortMemoryB(float(sum(terms)), float(tail), tuple(terms))
