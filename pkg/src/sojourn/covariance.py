"""Space-time correlation models and long-memory diagnostics.

All models are isotropic in space and stationary in time, with unit variance
and nonnegative values. ``C(z, tau)`` takes a spatial distance ``z`` and a
time lag ``tau`` and broadcasts like a numpy ufunc.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, NumericalError
from .geometry import distance_rule
from .specfun import gauss_legendre, mittag_leffler_neg

TAU_PANEL_NODES = 64


def _check_range(name, value, lo, hi, lo_open=True, hi_open=False):
    ok_lo = value > lo if lo_open else value >= lo
    ok_hi = value < hi if hi_open else value <= hi
    if not (ok_lo and ok_hi and math.isfinite(value)):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ConfigError(name, f"must lie in {lb}{lo}, {hi}{rb}, got {value}")


# -- spatial factors -------------------------------------------------------


@dataclass(frozen=True)
class PoweredExponential:
    """``exp(-(lam z)**kappa)``; ``kappa = 1`` is the exponential model."""

    lam: float = 1.0
    kappa: float = 1.0
    kind = "powered-exponential"

    def __post_init__(self):
        _check_range("spatial.lam", self.lam, 0.0, math.inf)
        _check_range("spatial.kappa", self.kappa, 0.0, 1.0)

    def __call__(self, z):
        return np.exp(-((self.lam * np.asarray(z, dtype=float)) ** self.kappa))

    def to_dict(self):
        return {"variant": self.kind, "lam": self.lam, "kappa": self.kappa}


@dataclass(frozen=True)
class CauchySpatial:
    """``(1 + c z**(2 gamma))**(-nu)``."""

    c: float = 1.0
    gamma: float = 1.0
    nu: float = 1.0
    kind = "cauchy"

    def __post_init__(self):
        _check_range("spatial.c", self.c, 0.0, math.inf)
        _check_range("spatial.gamma", self.gamma, 0.0, 1.0)
        _check_range("spatial.nu", self.nu, 0.0, math.inf)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return (1.0 + self.c * z ** (2.0 * self.gamma)) ** (-self.nu)

    def to_dict(self):
        return {"variant": self.kind, "c": self.c, "gamma": self.gamma, "nu": self.nu}


@dataclass(frozen=True)
class ConstantOne:
    kind = "constant-one"

    def __call__(self, z):
        return np.ones_like(np.asarray(z, dtype=float))

    def to_dict(self):
        return {"variant": self.kind}


def spatial_from_dict(d):
    d = dict(d)
    variant = d.pop("variant", None)
    try:
        if variant in ("powered-exponential", "exponential"):
            if variant == "exponential":
                d.setdefault("kappa", 1.0)
            return PoweredExponential(**d)
        if variant == "cauchy":
            return CauchySpatial(**d)
        if variant == "constant-one":
            return ConstantOne()
    except TypeError as exc:
        raise ConfigError("spatial", str(exc)) from None
    raise ConfigError("spatial.variant", f"unknown spatial covariance {variant!r}")


# -- space-time models ------------------------------------------------------


def temporal_factor(alpha, tau):
    """Regularized long-memory factor ``(1 + tau**2)**(-alpha/2)``."""
    tau = np.asarray(tau, dtype=float)
    return (1.0 + tau * tau) ** (-0.5 * alpha)


@dataclass(frozen=True)
class Separable:
    spatial: object
    alpha: float
    kind = "separable"

    def __post_init__(self):
        _check_range("model.alpha", self.alpha, 0.0, 1.0, hi_open=True)

    def temporal(self, tau):
        return temporal_factor(self.alpha, tau)

    def __call__(self, z, tau):
        return self.spatial(z) * self.temporal(tau)

    def to_dict(self):
        return {"variant": self.kind, "alpha": self.alpha, "spatial": self.spatial.to_dict()}


@dataclass(frozen=True)
class GneitingML:
    """Gneiting-class model with a Mittag-Leffler spatial profile."""

    a: float
    alpha: float
    beta: float
    gamma: float
    nu: float
    d: int
    kind = "gneiting_ml"

    def __post_init__(self):
        _check_range("model.a", self.a, 0.0, math.inf)
        for name in ("alpha", "beta", "gamma", "nu"):
            _check_range(f"model.{name}", getattr(self, name), 0.0, 1.0)
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("model.d", "dimension must be a positive integer")

    def _psi(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.a * tau ** (2.0 * self.alpha) + 1.0

    def __call__(self, z, tau):
        z, tau = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(tau, dtype=float))
        psi = self._psi(tau)
        arg = z ** (2.0 * self.gamma) / psi ** (self.beta * self.gamma)
        return psi ** (-0.5 * self.beta * self.d) * mittag_leffler_neg(self.nu, arg)

    def lower_bound(self, z, tau):
        """Pointwise lower estimate from the Mittag-Leffler lower bound."""
        z, tau = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(tau, dtype=float))
        psi = self._psi(tau)
        arg = z ** (2.0 * self.gamma) / psi ** (self.beta * self.gamma)
        if self.nu == 1.0:
            return psi ** (-0.5 * self.beta * self.d) * np.exp(-arg)
        return psi ** (-0.5 * self.beta * self.d) / (1.0 + math.gamma(1.0 - self.nu) * arg)

    def to_dict(self):
        return {"variant": self.kind, "a": self.a, "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "nu": self.nu, "d": self.d}


@dataclass(frozen=True)
class GneitingCauchy:
    """Gneiting-class model with a generalized Cauchy spatial profile."""

    a: float
    alpha: float
    beta: float
    c: float
    gamma: float
    nu: float
    d: int
    kind = "gneiting_cauchy"

    def __post_init__(self):
        _check_range("model.a", self.a, 0.0, math.inf)
        _check_range("model.c", self.c, 0.0, math.inf)
        _check_range("model.nu", self.nu, 0.0, math.inf)
        for name in ("alpha", "beta", "gamma"):
            _check_range(f"model.{name}", getattr(self, name), 0.0, 1.0)
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("model.d", "dimension must be a positive integer")

    def __call__(self, z, tau):
        z, tau = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(tau, dtype=float))
        psi = 1.0 + self.a * tau ** (2.0 * self.alpha)
        spatial = (1.0 + self.c * z ** (2.0 * self.gamma) / psi ** (self.beta * self.gamma)) ** (-self.nu)
        return psi ** (-0.5 * self.beta * self.d) * spatial

    def to_dict(self):
        return {"variant": self.kind, "a": self.a, "alpha": self.alpha, "beta": self.beta,
                "c": self.c, "gamma": self.gamma, "nu": self.nu, "d": self.d}


@dataclass(frozen=True, eq=False)
class CustomCovariance:
    """A user-supplied correlation ``func(z, tau)``, for frozen test kernels.

    ``theta`` optionally declares the temporal decay exponent of ``C``.
    """

    func: object = field(repr=False)
    name: str = "custom"
    theta: float = None
    kind = "custom"

    def __post_init__(self):
        if not callable(self.func):
            raise ConfigError("model.func", "must be callable")
        c00 = float(np.asarray(self.func(np.array(0.0), np.array(0.0))))
        if abs(c00 - 1.0) > 1e-12:
            raise ConfigError("model.func", f"C(0, 0) must be 1, got {c00}")
        # a continuous correlation cannot drop immediately off the origin
        eps = float(np.asarray(self.func(np.array(1e-9), np.array(1e-9))))
        if eps < 0.5:
            raise ConfigError("model.func", "correlation is not continuous at the origin")

    def __call__(self, z, tau):
        z, tau = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(tau, dtype=float))
        return np.asarray(self.func(z, tau), dtype=float) * np.ones_like(z)

    def to_dict(self):
        raise ConfigError("model", "custom covariances cannot be serialized")


def model_from_dict(d):
    d = dict(d)
    variant = d.pop("variant", None)
    try:
        if variant == "separable":
            return Separable(spatial_from_dict(d.get("spatial", {"variant": "constant-one"})), d["alpha"])
        if variant == "gneiting_ml":
            return GneitingML(**d)
        if variant == "gneiting_cauchy":
            return GneitingCauchy(**d)
    except KeyError as exc:
        raise ConfigError(f"model.{exc.args[0]}", "missing") from None
    except TypeError as exc:
        raise ConfigError("model", str(exc)) from None
    raise ConfigError("model.variant", f"unknown covariance model {variant!r}")


def cov_eval(model, z, tau):
    """Evaluate ``C(z, tau)``; returns a float for scalar input."""
    za, ta = np.asarray(z, dtype=float), np.asarray(tau, dtype=float)
    if np.any(za < 0) or np.any(ta < 0):
        raise ConfigError("z/tau", "distances and lags must be nonnegative")
    out = np.asarray(model(za, ta), dtype=float)
    return out if out.ndim else float(out)


def cholesky_smoke_test(model, d=1, n_points=120, extent=2.0, seed=0):
    """Factorize the covariance of random space-time points; True on success.

    A smoke test for positive definiteness, not a proof.
    """
    rng = np.random.default_rng(seed)
    x = rng.random((n_points, d)) * extent
    t = rng.random(n_points) * 10 * extent
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    lag = np.abs(t[:, None] - t[None, :])
    cov = cov_eval(model, dist, lag)
    try:
        np.linalg.cholesky(cov + 1e-12 * np.eye(n_points))
    except np.linalg.LinAlgError:
        return False
    return True


# -- long-memory exponents ---------------------------------------------------


@dataclass(frozen=True)
class LRDExponent:
    """Temporal decay exponent of ``C**m``.

    ``theta`` is the actual decay rate, ``theta_paper`` the exponent appearing
    in the published sufficient condition for the Gneiting families (equal to
    ``theta`` for separable models).
    """

    theta: float
    is_lrd: bool
    theta_paper: float
    is_lrd_paper: bool


def lrd_exponent(model, m):
    m = int(m)
    if m < 1:
        raise ConfigError("m", "Hermite rank must be at least 1")
    if model.kind == "separable":
        theta = theta_paper = m * model.alpha
    elif model.kind == "gneiting_ml":
        theta = m * model.alpha * model.beta * model.d
        theta_paper = 2 * m * model.alpha * model.beta * (model.d / 2 - model.gamma)
    elif model.kind == "gneiting_cauchy":
        theta = m * model.alpha * model.beta * model.d
        theta_paper = 2 * m * model.alpha * model.beta * (model.d / 2 - model.gamma * model.nu)
    elif getattr(model, "theta", None) is not None:
        theta = theta_paper = m * model.theta
    else:
        raise ConfigError("model", "temporal decay exponent unknown for this model")
    return LRDExponent(theta, theta < 1, theta_paper, 0 < theta_paper < 1)


# -- lag integrals -------------------------------------------------------------


def tau_panels(T, nodes=TAU_PANEL_NODES):
    """Gauss-Legendre nodes on ``[0,1], [1,2], [2,4], ..., [2^k, T]``."""
    if not T > 0:
        raise ConfigError("T", "must be positive")
    edges = [0.0]
    b = min(1.0, T)
    while True:
        edges.append(b)
        if b >= T:
            break
        b = min(2.0 * b, T)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r = gauss_legendre(nodes, a, b)
        xs.append(r.nodes)
        ws.append(r.weights)
    return np.concatenate(xs), np.concatenate(ws)


def spatial_average(model, body, m, tau, rule=None):
    """``int psi(z) C(z, tau)**m dz`` for each lag in ``tau``."""
    rule = rule or distance_rule(body)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    vals = cov_eval(model, rule.nodes[:, None], tau[None, :]) ** m
    out = rule.weights @ vals
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite covariance values in the spatial average")
    return out


def triangle_lag_integral(model, body, m, T, nodes=TAU_PANEL_NODES, rule=None):
    """``int_0^T (1 - tau/T) int psi(z) C(z, tau)**m dz dtau``."""
    tau, w = tau_panels(T, nodes)
    return float(np.dot(w * (1.0 - tau / T), spatial_average(model, body, m, tau, rule)))


@dataclass(frozen=True, eq=False)
class Condition2Report:
    T: np.ndarray
    values: np.ndarray
    delta: float
    increasing: bool


def condition2_check(model, body, m, delta, T_list):
    """Tabulate ``T**-delta int_0^T (1-tau/T) int C**m psi dz dtau`` over ``T_list``."""
    _check_range("delta", delta, 0.0, 1.0, hi_open=True)
    T = np.asarray(T_list, dtype=float)
    if T.size < 3 or np.any(np.diff(T) <= 0):
        raise ConfigError("T_list", "need at least three increasing values")
    vals = np.array([triangle_lag_integral(model, body, m, t) / t**delta for t in T])
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite integrand in the lag integral")
    return Condition2Report(T, vals, float(delta), bool(np.all(np.diff(vals) > 0)))


@dataclass(frozen=True, eq=False)
class SupDecayReport:
    tau: np.ndarray
    sup: np.ndarray
    decreasing: bool
    below_tol: bool


def sup_decay_check(model, body, tau_list, tol=0.05):
    """``sup_z C(z, tau)`` over a 512-point grid of ``[0, D(K)]`` for each lag."""
    z = np.linspace(0.0, body.diameter, 512)
    tau = np.asarray(tau_list, dtype=float)
    sups = np.max(cov_eval(model, z[:, None], tau[None, :]), axis=0)
    return SupDecayReport(tau, sups, bool(np.all(np.diff(sups) <= 0)), bool(sups[-1] < tol))


# -- spectral densities --------------------------------------------------------


def tauberian_constant(alpha):
    """Constant ``c_T`` in ``f_T(mu) ~ c_T |mu|**(alpha-1)`` as ``mu -> 0``."""
    _check_range("alpha", alpha, 0.0, 1.0, hi_open=True)
    return math.gamma((1 - alpha) / 2) / (2**alpha * math.gamma(alpha / 2) * math.sqrt(math.pi))


def temporal_spectral_closed(alpha, mu):
    """Closed form of the spectral density of ``(1 + tau**2)**(-alpha/2)``.

    Uses ``int_0^inf cos(mu t)(1+t^2)^-s dt = sqrt(pi)/Gamma(s) (|mu|/2)^(s-1/2) K_(s-1/2)(|mu|)``.
    """
    s = alpha / 2.0
    mu = np.abs(np.asarray(mu, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = math.sqrt(math.pi) / math.gamma(s) * (mu / 2.0) ** (s - 0.5) * special.kv(s - 0.5, mu) / math.pi
    val = np.where(mu == 0, np.inf, val)
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class SpectralValue:
    mu: float
    value: float
    tauberian: float  # c_T |mu|^(alpha-1); nan above the crossover
    abserr: float


def temporal_spectral_density(model, mu, crossover=0.1):
    """Spectral density ``f_T(mu) = (1/pi) int_0^inf cos(mu tau) C_T(tau) dtau``.

    Evaluated by an adaptive Fourier integral over the half line (QUADPACK
    QAWF). Below ``crossover`` the Tauberian power law is reported alongside.
    """
    if getattr(model, "kind", None) != "separable":
        raise ConfigError("model", "temporal spectral density needs a separable model")
    mu = abs(float(mu))
    alpha = model.alpha
    taub = tauberian_constant(alpha) * mu ** (alpha - 1) if 0 < mu < crossover else math.nan
    if mu == 0.0:
        return SpectralValue(0.0, math.inf, math.inf, 0.0)
    # the integrand decays like tau^-alpha; QAWF extrapolates cycle by cycle
    val, err = integrate.quad(model.temporal, 0.0, np.inf, weight="cos", wvar=mu, limlst=200, limit=400)
    if not math.isfinite(val):
        raise NumericalError("cosine transform did not converge")
    return SpectralValue(mu, max(val / math.pi, 0.0), taub, err / math.pi)


def _hankel_radial(spatial, d, w, n_avg=30):
    # (2 pi)^(-d/2) w^(1-d/2) int_0^inf r^(d/2) J_(d/2-1)(w r) C_S(r) dr.
    # Pieces between consecutive Bessel zeros alternate in sign; the partial
    # sums are accelerated by repeated averaging of neighbours.
    nu = d / 2 - 1

    def f(r):
        return r ** (d / 2) * special.jv(nu, w * r) * spatial(r)

    n_pieces = 2 * n_avg
    if nu == int(nu):
        zeros = special.jn_zeros(int(nu), n_pieces)
    else:
        # leading McMahon term; approximate alignment is enough for averaging
        zeros = (np.arange(n_pieces) + 0.75 + nu / 2) * math.pi
    edges = np.concatenate([[0.0], zeros / w])
    partial, total = [], 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        piece, _ = integrate.quad(f, a, b, limit=100, epsabs=1e-16 * abs(total), epsrel=1e-12)
        total += piece
        partial.append(total)
    sums = np.array(partial[-n_avg:])
    for _ in range(n_avg - 1):
        sums = 0.5 * (sums[1:] + sums[:-1])
    total = float(sums[0])
    if not math.isfinite(total):
        raise NumericalError("Hankel transform did not converge")
    return total * w ** (1 - d / 2) / (2 * math.pi) ** (d / 2)


def spatial_spectral_density(spatial, d, omega):
    """Radial spectral density ``f_S(|omega|)`` of an isotropic ``C_S`` on R^d.

    Normalized so that ``int f_S = C_S(0) = 1``. Exponential models use the
    closed form; others a Hankel-type transform.
    """
    d = int(d)
    if d < 1:
        raise ConfigError("d", "must be at least 1")
    if spatial.kind == "constant-one":
        raise ConfigError("spatial", "constant-one has no spectral density (point mass at 0)")
    if spatial.kind == "powered-exponential" and spatial.kappa == 1.0:
        lam, w = spatial.lam, np.abs(np.asarray(omega, dtype=float))
        val = math.gamma((d + 1) / 2) * lam / (math.pi ** ((d + 1) / 2) * (lam * lam + w * w) ** ((d + 1) / 2))
        return val if val.ndim else float(val)
    if np.ndim(omega):
        w = np.abs(np.asarray(omega, dtype=float))
        uniq, inv = np.unique(w, return_inverse=True)
        vals = np.array([_spectral_scalar(spatial, d, x) for x in uniq])
        return vals[inv].reshape(w.shape)
    return _spectral_scalar(spatial, d, abs(float(omega)))


def _spectral_scalar(spatial, d, w):
    if w == 0.0:
        val, _ = integrate.quad(lambda r: r ** (d - 1) * spatial(r), 0, np.inf, limit=400)
        return val * 2 * math.pi ** (d / 2) / math.gamma(d / 2) / (2 * math.pi) ** d
    if d == 1:
        val, _ = integrate.quad(spatial, 0.0, np.inf, weight="cos", wvar=w, limlst=200, limit=400)
        val /= math.pi
    elif d == 3:
        val, _ = integrate.quad(lambda r: r * spatial(r), 0.0, np.inf, weight="sin", wvar=w, limlst=200, limit=400)
        val /= 2 * math.pi**2 * w
    else:
        val = _hankel_radial(spatial, d, w)
    # oscillatory quadrature leaves noise of order 1e-12 in far tails
    if val < -1e-9:
        raise NumericalError(f"negative spectral density {val:.3e} at omega={w}")
    return max(val, 0.0)
