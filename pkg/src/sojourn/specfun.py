"""Special functions and quadrature rules used throughout the package.

Hermite polynomials follow the probabilists' convention
(``H_2(x) = x**2 - 1``), orthogonal with respect to the standard normal
density with ``<H_p, H_q> = q! delta_pq``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import ConfigError

HERMITE_MAX_ORDER = 64
QUAD_MAX_NODES = 512

# Taylor series is used while x**(1/nu) stays below this; beyond it the
# alternating sum loses more than ~1e-12 to cancellation.
_ML_TAYLOR_LIMIT = 8.0
# exp(-_ML_CUTOFF) is negligible in the integral representation
_ML_CUTOFF = 50.0

SQRT_2PI = math.sqrt(2.0 * math.pi)


def hermite_poly(q, x):
    """Hermite polynomial ``H_q(x)`` by the three-term recurrence.

    Works element-wise on arrays; returns a float for scalar input.
    """
    q = int(q)
    if not 0 <= q <= HERMITE_MAX_ORDER:
        raise ConfigError("q", f"order must lie in [0, {HERMITE_MAX_ORDER}], got {q}")
    x = np.asarray(x, dtype=float)
    h0 = np.ones_like(x)
    if q == 0:
        return h0 if h0.ndim else float(h0)
    h1 = x.copy()
    for k in range(1, q):
        h0, h1 = h1, x * h1 - k * h0
    return h1 if h1.ndim else float(h1)


def hermite_table(q_max, x):
    """All ``H_0..H_{q_max}`` at ``x``; shape ``(q_max + 1,) + x.shape``."""
    q_max = int(q_max)
    if not 0 <= q_max <= HERMITE_MAX_ORDER:
        raise ConfigError("q_max", f"must lie in [0, {HERMITE_MAX_ORDER}], got {q_max}")
    x = np.asarray(x, dtype=float)
    out = np.empty((q_max + 1,) + x.shape)
    out[0] = 1.0
    if q_max >= 1:
        out[1] = x
    for k in range(1, q_max):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def gauss_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return out if out.ndim else float(out)


def gauss_cdf(x):
    # ndtr is erfc-based and accurate to a few ulps over the whole line
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def gamma(x):
    return special.gamma(x)


@lru_cache(maxsize=128)
def _ml_coefficients(nu):
    kmax = int(math.ceil(70.0 / nu)) + 2
    k = np.arange(kmax + 1, dtype=float)
    return np.ascontiguousarray(special.rgamma(nu * k + 1.0))


def _ml_integral(nu, x):
    # E_nu(-x) = sin(nu pi)/(nu pi) * int_0^inf exp(-t w^(1/nu)) / (w^2 + 2 w cos(nu pi) + 1) dw,
    # t = x^(1/nu); the substitution r = w^(1/nu) removes the r^(nu-1) singularity.
    t = x ** (1.0 / nu)
    c = math.cos(nu * math.pi)
    upper = (_ML_CUTOFF / t) ** nu
    points = []
    if c < 0.0 and -c < upper:
        points.append(-c)

    def f(w):
        return math.exp(-t * w ** (1.0 / nu)) / (w * w + 2.0 * w * c + 1.0)

    val, _ = integrate.quad(f, 0.0, upper, points=points or None, epsabs=0.0, epsrel=1e-13, limit=200)
    return math.sin(nu * math.pi) / (nu * math.pi) * val


# composite Gauss-Legendre for the integral representation, vectorized over x;
# for nu close to 1 the integrand has a sharp Lorentzian peak and adaptive
# quadrature is used instead
_ML_VEC_NU_MAX = 0.95
_ML_VEC_NODES = 32
_ML_VEC_LEVELS = 14
_ML_VEC_CHUNK = 4096


@lru_cache(maxsize=1)
def _ml_unit_rule():
    edges = np.concatenate([[0.0], 2.0 ** -np.arange(_ML_VEC_LEVELS, -1, -1)])
    x, w = _leggauss(_ML_VEC_NODES)
    width = np.diff(edges)[:, None]
    nodes = (edges[:-1, None] + 0.5 * width * (x[None, :] + 1.0)).ravel()
    return nodes, (0.5 * width * w[None, :]).ravel()


def _ml_integral_vec(nu, x):
    c = math.cos(nu * math.pi)
    nodes, weights = _ml_unit_rule()
    out = np.empty_like(x)
    for lo in range(0, len(x), _ML_VEC_CHUNK):
        t = x[lo : lo + _ML_VEC_CHUNK] ** (1.0 / nu)
        upper = (_ML_CUTOFF / t) ** nu
        w = upper[:, None] * nodes[None, :]
        f = np.exp(-t[:, None] * w ** (1.0 / nu)) / (w * w + 2.0 * w * c + 1.0)
        out[lo : lo + _ML_VEC_CHUNK] = upper * (f @ weights)
    return math.sin(nu * math.pi) / (nu * math.pi) * out


def mittag_leffler_neg(nu, x):
    """One-parameter Mittag-Leffler function on the negative axis, ``E_nu(-x)``.

    Parameters
    ----------
    nu : float in (0, 1]
    x : float or array, x >= 0

    Notes
    -----
    Taylor series while ``x**(1/nu) <= 8``; beyond, the completely monotone
    integral representation, evaluated by graded composite Gauss-Legendre
    (adaptive quadrature when nu > 0.95). ``nu == 1`` returns ``exp(-x)``.
    """
    nu = float(nu)
    if not 0.0 < nu <= 1.0:
        raise ConfigError("nu", f"must lie in (0, 1], got {nu}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise ConfigError("x", "must be finite and nonnegative")
    if nu == 1.0:
        out = np.exp(-xa)
        return out if out.ndim else float(out)
    flat = xa.ravel()
    out = np.empty_like(flat)
    small = flat ** (1.0 / nu) <= _ML_TAYLOR_LIMIT
    if small.any():
        out[small] = kernels.ml_taylor(_ml_coefficients(nu), np.ascontiguousarray(flat[small]))
    if nu <= _ML_VEC_NU_MAX:
        if not small.all():
            out[~small] = _ml_integral_vec(nu, np.ascontiguousarray(flat[~small]))
    else:
        for i in np.flatnonzero(~small):
            out[i] = _ml_integral(nu, flat[i])
    out = out.reshape(xa.shape)
    return out if out.ndim else float(out)


def incomplete_beta(mu, p, q):
    """Regularized incomplete beta ``I_mu(p, q)``."""
    mu_a = np.asarray(mu, dtype=float)
    if np.any((mu_a < 0) | (mu_a > 1)):
        raise ConfigError("mu", "must lie in [0, 1]")
    if p <= 0:
        raise ConfigError("p", f"must be positive, got {p}")
    if q <= 0:
        raise ConfigError("q", f"must be positive, got {q}")
    out = special.betainc(p, q, mu_a)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str  # "legendre" or "hermite"
    a: float = -math.inf
    b: float = math.inf

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))

    def __len__(self):
        return len(self.nodes)


def _check_nodes(n):
    n = int(n)
    if not 1 <= n <= QUAD_MAX_NODES:
        raise ConfigError("n", f"node count must lie in [1, {QUAD_MAX_NODES}], got {n}")
    return n


@lru_cache(maxsize=64)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss-Legendre rule on ``[a, b]``, exact for degree ``2n - 1``."""
    n = _check_nodes(n)
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w, kind="legendre", a=a, b=b)


@lru_cache(maxsize=16)
def _hermite_weighted(n):
    x, w = special.roots_hermitenorm(n)
    w = w / SQRT_2PI
    # extreme weights of very large rules underflow; those nodes carry no mass
    keep = w > 0
    return x[keep], w[keep]


def gauss_hermite_weighted(n):
    """Gauss rule for ``int f(x) phi(x) dx`` with the standard normal density."""
    n = _check_nodes(n)
    x, w = _hermite_weighted(n)
    return QuadratureRule(nodes=x, weights=w, kind="hermite")
