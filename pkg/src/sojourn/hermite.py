"""Hermite expansions of functionals of a standard normal variable.

Coefficients are unnormalized, ``G_q = E[G(Z) H_q(Z)]``, so that
``G = sum_q G_q H_q / q!`` and ``Var G(Z) = sum_{q>=1} G_q**2 / q!``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericalError
from .specfun import gauss_cdf, gauss_hermite_weighted, gauss_legendre, gauss_pdf, hermite_poly, hermite_table

DEFAULT_Q = 40
RANK_TOL = 1e-10
_NUMERIC_NODES = 256


def coeff_indicator(u, q):
    """Coefficient of ``1{x >= u}``."""
    q = int(q)
    if q < 0:
        raise ConfigError("q", "must be nonnegative")
    if q == 0:
        return 1.0 - gauss_cdf(u)
    return gauss_pdf(u) * hermite_poly(q - 1, u)


def coeff_abs_indicator(u, q):
    """Coefficient of ``1{|x| >= u}``; odd orders vanish by symmetry."""
    q = int(q)
    if u < 0:
        raise ConfigError("u", "threshold of the absolute-value indicator must be >= 0")
    if q < 0:
        raise ConfigError("q", "must be nonnegative")
    if q == 0:
        return 2.0 * (1.0 - gauss_cdf(u))
    if q % 2:
        return 0.0
    return 2.0 * gauss_pdf(u) * hermite_poly(q - 1, u)


def coeff_numeric(G, q, rule=None, breakpoints=None):
    """``int H_q(x) G(x) phi(x) dx`` by quadrature.

    With ``breakpoints`` (discontinuities of ``G``) the integral is split there
    and each piece is integrated adaptively; otherwise a Gauss rule weighted
    by ``phi`` with at least 64 nodes is used.
    """
    q = int(q)
    if breakpoints is not None:
        pts = sorted(float(b) for b in breakpoints)
        edges = [-np.inf] + pts + [np.inf]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):

            def f(x):
                return hermite_poly(q, x) * float(G(np.asarray(x))) * gauss_pdf(x)

            val, _ = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
            total += val
        if not math.isfinite(total):
            raise NumericalError("non-finite coefficient")
        return total
    rule = rule or gauss_hermite_weighted(_NUMERIC_NODES)
    if rule.kind != "hermite" or len(rule) < 64:
        raise ConfigError("rule", "need a phi-weighted Gauss rule with at least 64 nodes")
    g = np.asarray(G(rule.nodes), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericalError("transform is not finite at the quadrature nodes")
    return float(np.dot(rule.weights, hermite_poly(q, rule.nodes) * g))


@dataclass(frozen=True, eq=False)
class FunctionalSpec:
    """A transform ``G`` with cached Hermite coefficients ``G_0..G_Q``.

    Variants: ``indicator`` (``1{x >= u}``), ``abs_indicator`` (``1{|x| >= u}``),
    ``hermite`` (``H_m``) and ``custom`` (any vectorized callable).
    """

    variant: str
    u: float = 0.0
    m: int = 0
    func: object = field(default=None, repr=False)
    breakpoints: tuple = ()
    Q: int = DEFAULT_Q
    coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant not in ("indicator", "abs_indicator", "hermite", "custom"):
            raise ConfigError("functional.variant", f"unknown functional {self.variant!r}")
        if not 1 <= self.Q <= 64:
            raise ConfigError("functional.Q", "cache depth must lie in [1, 64]")
        if self.variant == "abs_indicator" and self.u < 0:
            raise ConfigError("functional.u", "threshold of the absolute-value indicator must be >= 0")
        if self.variant == "hermite" and not 1 <= self.m <= self.Q:
            raise ConfigError("functional.m", "Hermite order must lie in [1, Q]")
        if self.variant == "custom" and not callable(self.func):
            raise ConfigError("functional.func", "custom functionals need a callable")
        object.__setattr__(self, "coeffs", self._compute())

    @classmethod
    def indicator(cls, u, Q=DEFAULT_Q):
        return cls("indicator", u=float(u), Q=Q)

    @classmethod
    def abs_indicator(cls, u, Q=DEFAULT_Q):
        return cls("abs_indicator", u=float(u), Q=Q)

    @classmethod
    def hermite(cls, m, Q=DEFAULT_Q):
        return cls("hermite", m=int(m), Q=max(Q, int(m)))

    @classmethod
    def custom(cls, func, breakpoints=(), Q=DEFAULT_Q):
        return cls("custom", func=func, breakpoints=tuple(breakpoints), Q=Q)

    def _compute(self):
        qs = range(self.Q + 1)
        if self.variant == "indicator":
            return np.array([coeff_indicator(self.u, q) for q in qs])
        if self.variant == "abs_indicator":
            return np.array([coeff_abs_indicator(self.u, q) for q in qs])
        if self.variant == "hermite":
            out = np.zeros(self.Q + 1)
            out[self.m] = math.factorial(self.m)
            return out
        bp = self.breakpoints or None
        return np.array([coeff_numeric(self.func, q, breakpoints=bp) for q in qs])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.variant == "indicator":
            return (x >= self.u).astype(float)
        if self.variant == "abs_indicator":
            return (np.abs(x) >= self.u).astype(float)
        if self.variant == "hermite":
            return hermite_poly(self.m, x)
        return np.asarray(self.func(x), dtype=float)

    @property
    def rank(self):
        return hermite_rank(self)

    def partial_variance(self, q_max=None):
        """``sum_{q=1}^{q_max} G_q**2 / q!``; increases to ``Var G(Z)``."""
        q_max = self.Q if q_max is None else int(q_max)
        q = np.arange(1, q_max + 1)
        fact = np.array([math.factorial(k) for k in q], dtype=float)
        return float(np.sum(self.coeffs[1 : q_max + 1] ** 2 / fact))

    def expansion(self, x, q_max=None):
        """Truncated series ``sum_{q <= q_max} G_q H_q(x) / q!``."""
        q_max = self.Q if q_max is None else int(q_max)
        tab = hermite_table(q_max, x)
        fact = np.array([math.factorial(k) for k in range(q_max + 1)], dtype=float)
        return np.tensordot(self.coeffs[: q_max + 1] / fact, tab, axes=1)

    def to_dict(self):
        if self.variant == "custom":
            raise ConfigError("functional", "custom functionals cannot be serialized")
        d = {"variant": self.variant, "Q": self.Q}
        if self.variant == "hermite":
            d["m"] = self.m
        else:
            d["u"] = self.u
        return d

    @classmethod
    def from_dict(cls, d):
        variant = d.get("variant")
        Q = int(d.get("Q", DEFAULT_Q))
        if variant in ("indicator", "abs_indicator"):
            if "u" not in d:
                raise ConfigError("functional.u", "missing")
            return cls(variant, u=float(d["u"]), Q=Q)
        if variant == "hermite":
            return cls.hermite(d.get("m", 1), Q=Q)
        raise ConfigError("functional.variant", f"unknown functional {variant!r}")


def hermite_rank(spec, tol=RANK_TOL):
    """Smallest ``q >= 1`` with ``|G_q| / sqrt(q!) > tol``.

    The tolerance applies to the coefficients of the orthonormal basis:
    quadrature errors in ``G_q`` scale like ``sqrt(q!)``, so an absolute test
    would report spurious high ranks for numeric coefficients.
    """
    q = np.arange(1, spec.Q + 1)
    norm = np.sqrt([float(math.factorial(k)) for k in q])
    nz = np.flatnonzero(np.abs(spec.coeffs[1:]) / norm > tol)
    if nz.size == 0:
        raise ConfigError("functional", f"all coefficients up to order {spec.Q} are below {tol}")
    return int(nz[0]) + 1


def _upper_orthant_excess(u, rho, nodes=48):
    """``P(X >= u, Y >= u) - (1 - Phi(u))**2`` for standard normals with correlation ``rho``.

    The derivative in ``rho`` is the bivariate density at ``(u, u)``; after
    ``r = sin(theta)`` the integrand ``exp(-u^2 / (1 + sin theta)) / (2 pi)`` is smooth.
    """
    rho = np.clip(np.asarray(rho, dtype=float), -1.0, 1.0)
    top = np.arcsin(rho)
    g = gauss_legendre(nodes, 0.0, 1.0)
    theta = top[..., None] * g.nodes
    with np.errstate(divide="ignore", over="ignore"):
        f = np.exp(-u * u / (1.0 + np.sin(theta)))
    return top * (f @ g.weights) / (2.0 * math.pi)


def functional_covariance(spec, rho):
    """``Cov(G(X), G(Y))`` for standard normals with correlation ``rho``.

    Exact for indicator, absolute-value indicator and Hermite functionals;
    custom functionals use the series ``sum_{q=1}^Q G_q^2 rho^q / q!``.
    """
    rho = np.asarray(rho, dtype=float)
    if spec.variant == "indicator":
        return _upper_orthant_excess(spec.u, rho)
    if spec.variant == "abs_indicator":
        # the two tails contribute by symmetry: {X >= u} and {X <= -u}
        return 2.0 * (_upper_orthant_excess(spec.u, rho) + _upper_orthant_excess(spec.u, -rho))
    if spec.variant == "hermite":
        return math.factorial(spec.m) * rho**spec.m
    q = np.arange(1, spec.Q + 1)
    fact = np.array([math.factorial(k) for k in q], dtype=float)
    return np.polynomial.polynomial.polyval(rho, np.r_[0.0, spec.coeffs[1:] ** 2 / fact])
