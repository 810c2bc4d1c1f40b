"""The rank-2 long-memory limit: a second-Wiener-chaos law of Rosenblatt type.

With ``S(x) = (e^{ix} - 1)/(ix)`` and ``I_K`` the characteristic function of
the body, the limit is the double Wiener integral (hyperdiagonal excluded)

    R = c_T(alpha) / sqrt(c_K(2, alpha)) int'' S(mu1 + mu2) |mu1 mu2|^{-(1-alpha)/2}
        I_K(w1 + w2) sqrt(f_S(w1) f_S(w2)) W(dmu1, dw1) W(dmu2, dw2).

Equivalently ``R = sum_k lambda_k (xi_k^2 - 1)`` where ``lambda_k`` are the
eigenvalues of the operator with kernel ``|t - s|^{-alpha} C_S(|x - y|) /
sqrt(c_K)`` on ``[0, 1] x K``, so its cumulants are
``kappa_p = 2^{p-1} (p-1)! tr(A^p)``. The time and space factors of the
traces are computed separately.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .covariance import spatial_spectral_density, tauberian_constant
from .errors import ConfigError, NumericalError
from .fieldsim import replicate_rng
from .geometry import ConvexBody
from .specfun import gauss_legendre
from .variance import c_K_constant, expected_cov_power

SAMPLE_CHUNK = 256
MIN_GRID_KAPPA2 = 0.5


def body_char_fn(body, omega):
    """``int_K exp(i <x, omega>) dx`` for ``omega`` of shape ``(..., d)``.

    Rectangular bodies ``prod [0, s_j]`` factorize; balls centered at the
    origin use ``(2 pi)^{d/2} r^d J_{d/2}(r|w|) / (r|w|)^{d/2}``.
    """
    w = np.asarray(omega, dtype=float)
    if body.dim == 1 and (w.ndim == 0 or w.shape[-1] != 1):
        w = w[..., None]
    if w.shape[-1] != body.dim:
        raise ConfigError("omega", f"need {body.dim}-vectors")
    if body.is_rectangular:
        out = np.ones(w.shape[:-1], dtype=complex)
        for j, s in enumerate(body.sides):
            x = w[..., j] * s
            # (e^{ix} - 1)/(ix) = e^{ix/2} sinc(x/2)
            out = out * s * np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))
        return out
    d, r = body.dim, body.radius
    k = r * np.sqrt((w**2).sum(-1))
    safe = np.where(k > 0, k, 1.0)
    val = (2 * np.pi) ** (d / 2) * r**d * special.jv(d / 2, safe) / safe ** (d / 2)
    return np.where(k > 0, val, body.volume).astype(complex)


def sinc_factor(x):
    """``(e^{ix} - 1)/(ix)``, equal to 1 at 0."""
    x = np.asarray(x, dtype=float)
    return np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))


@dataclass(frozen=True, eq=False)
class RosenblattParams:
    """Limit-law parameters and the symmetric frequency grid of the sampler.

    The time axis has ``n_t`` cells of equal width on ``(0, cutoff_t]`` and
    their mirror images; the space axis has ``2 n_s`` equal cells on
    ``[-cutoff_s, cutoff_s]``. No cell is centered at 0.
    """

    alpha: float
    spatial: object
    body: ConvexBody
    n_t: int = 64
    n_s: int = 64
    cutoff_t: float = 64.0
    cutoff_s: float = 16.0

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ConfigError("alpha", "the rank-2 limit needs alpha in (0, 1/2)")
        if self.n_t < 2 or self.n_s < 2:
            raise ConfigError("n_t/n_s", "need at least two cells per half axis")
        if not (self.cutoff_t > 0 and self.cutoff_s > 0):
            raise ConfigError("cutoff", "must be positive")

    @property
    def d(self):
        return self.body.dim

    @property
    def c_K(self):
        return c_K_constant(2, self.alpha, self.body, self.spatial)

    @property
    def scale(self):
        return tauberian_constant(self.alpha) / math.sqrt(self.c_K)

    def time_grid(self):
        """Nodes and exact cell masses ``int |mu|^{alpha-1} dmu``."""
        a = self.alpha
        e = np.linspace(0.0, self.cutoff_t, self.n_t + 1)
        lo, hi = e[:-1], e[1:]
        mass = (hi**a - lo**a) / a
        # power-weighted cell mean keeps the node away from mu = 0
        mu = a / (a + 1) * (hi ** (a + 1) - lo ** (a + 1)) / (hi**a - lo**a)
        return np.concatenate([-mu[::-1], mu]), np.concatenate([mass[::-1], mass])

    def space_grid(self, nodes=8):
        """Cell midpoints and cell masses ``int f_S(w) dw`` (d = 1)."""
        if self.d != 1:
            raise ConfigError("body", "the frequency-grid sampler is implemented for d = 1")
        e = np.linspace(-self.cutoff_s, self.cutoff_s, 2 * self.n_s + 1)
        x, w = gauss_legendre(nodes).nodes, gauss_legendre(nodes).weights
        half = 0.5 * (e[1:] - e[:-1])
        mid = 0.5 * (e[1:] + e[:-1])
        pts = mid[:, None] + half[:, None] * x[None, :]
        dens = np.asarray(spatial_spectral_density(self.spatial, 1, pts.ravel())).reshape(pts.shape)
        mass = (dens * w[None, :]).sum(1) * half
        return mid, mass

    def to_dict(self):
        return {"alpha": self.alpha, "spatial": self.spatial.to_dict(), "body": self.body.to_dict(),
                "n_t": self.n_t, "n_s": self.n_s, "cutoff_t": self.cutoff_t, "cutoff_s": self.cutoff_s}


def rosenblatt_kernel(params, mu1, mu2, omega1, omega2):
    """Integrand of the double Wiener integral at frequencies ``(mu_j, omega_j)`` (d = 1 or d-vectors)."""
    mu1, mu2 = np.asarray(mu1, dtype=float), np.asarray(mu2, dtype=float)
    if np.any(mu1 == 0) or np.any(mu2 == 0):
        raise ConfigError("mu", "the kernel is singular at mu = 0")
    w1, w2 = np.asarray(omega1, dtype=float), np.asarray(omega2, dtype=float)
    if params.d == 1:
        r1, r2 = np.abs(w1), np.abs(w2)
        wsum = w1 + w2
    else:
        r1, r2 = np.linalg.norm(w1, axis=-1), np.linalg.norm(w2, axis=-1)
        wsum = w1 + w2
    fs = spatial_spectral_density(params.spatial, params.d, r1) * spatial_spectral_density(params.spatial, params.d, r2)
    a = params.alpha
    return (params.scale * sinc_factor(mu1 + mu2) * np.abs(mu1 * mu2) ** (-(1 - a) / 2)
            * body_char_fn(params.body, wsum) * np.sqrt(fs))


# -- cumulants ---------------------------------------------------------------


def _power_cell_matrix(alpha, n):
    """Galerkin matrix of ``|t - s|^{-alpha}`` on ``n`` equal cells of ``[0, 1]``.

    Cell-pair integrals are exact: with ``G(x) = |x|^{2-a}/((1-a)(2-a))``,
    ``int_a^b int_c^d |t-s|^{-a} = G(b-c) - G(a-c) - G(b-d) + G(a-d)``.
    """
    e = np.linspace(0.0, 1.0, n + 1)
    G = lambda x: np.abs(x) ** (2 - alpha) / ((1 - alpha) * (2 - alpha))
    a, b, c, d = e[:-1, None], e[1:, None], e[None, :-1], e[None, 1:]
    return (G(b - c) - G(a - c) - G(b - d) + G(a - d)) * n


def _richardson(values):
    """Extrapolate a sequence from grids refined by factors of two.

    Returns ``(limit, error)``; the geometric rate is estimated from the last
    three terms.
    """
    v = np.asarray(values, dtype=float)
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 == 0 or not 0 < d2 / d1 < 1:
        return float(v[-1]), float(abs(d2))
    r = d2 / d1
    corr = d2 * r / (1 - r)
    return float(v[-1] + corr), float(abs(corr))


def time_traces(alpha, levels=(512, 1024, 2048)):
    """``tr(K_t^2)`` (closed form) and ``tr(K_t^3)`` with its error estimate."""
    exact2 = 2.0 / ((1 - 2 * alpha) * (2 - 2 * alpha))
    tr3 = []
    for n in levels:
        lam = np.linalg.eigvalsh(_power_cell_matrix(alpha, n))
        tr3.append(float((lam**3).sum()))
    t3, err = _richardson(tr3)
    return exact2, t3, err


def space_traces(spatial, body, panels=64, nodes=8):
    """``tr(C_S^2)`` and ``tr(C_S^3)`` on an interval by Nystrom quadrature.

    Errors are estimated by halving the number of panels.
    """
    if body.dim != 1:
        raise ConfigError("body", "trace quadrature is implemented for d = 1")

    def traces(p):
        L = body.sides[0]
        e = np.linspace(0.0, L, p + 1)
        g = gauss_legendre(nodes)
        half = 0.5 * (e[1:] - e[:-1])
        x = (0.5 * (e[1:] + e[:-1])[:, None] + half[:, None] * g.nodes[None, :]).ravel()
        w = (half[:, None] * g.weights[None, :]).ravel()
        sw = np.sqrt(w)
        A = sw[:, None] * spatial(np.abs(x[:, None] - x[None, :])) * sw[None, :]
        lam = np.linalg.eigvalsh(A)
        return float((lam**2).sum()), float((lam**3).sum())

    s2, s3 = traces(panels)
    c2, c3 = traces(panels // 2)
    return s2, s3, abs(s2 - c2), abs(s3 - c3)


def spatial_frequency_factor(params, panels_per_unit=4, nodes=6):
    """``int int |I_K(w1 + w2)|^2 f_S(w1) f_S(w2) dw1 dw2`` on the sampler's window.

    Tensor-product Gauss-Legendre; this is the frequency-domain route to
    ``|K|^2 E[C_S(rho)^2]``.
    """
    L = 4.0 * params.cutoff_s
    p = max(8, int(2 * L * panels_per_unit))
    e = np.linspace(-L, L, p + 1)
    g = gauss_legendre(nodes)
    half = 0.5 * (e[1:] - e[:-1])
    w = (0.5 * (e[1:] + e[:-1])[:, None] + half[:, None] * g.nodes[None, :]).ravel()
    q = (half[:, None] * g.weights[None, :]).ravel() * spatial_spectral_density(params.spatial, 1, np.abs(w))
    ik = np.abs(body_char_fn(params.body, w[:, None] + w[None, :])) ** 2
    return float(q @ ik @ q)


@dataclass(frozen=True)
class RosenblattCumulants:
    kappa2: float
    kappa2_err: float
    kappa3: float
    kappa3_err: float
    kappa2_grid: float  # exact variance of the sampler's discretized form
    ik_ratio: float  # frequency-route spatial factor over the distance-route value

    @property
    def skewness(self):
        return self.kappa3 / self.kappa2**1.5


def grid_kappa2(params):
    """Variance of the discretized quadratic form used by :func:`rosenblatt_sample`.

    ``2 sum_{b != -a} |K_ab|^2 m_a m_b`` with cell masses ``m``.
    """
    mu, p = params.time_grid()
    w, q = params.space_grid()
    S = np.abs(sinc_factor(mu[:, None] + mu[None, :])) ** 2
    I = np.abs(body_char_fn(params.body, w[:, None] + w[None, :])) ** 2
    full = (p @ S @ p) * (q @ I @ q)
    diag = (p**2).sum() * params.body.volume**2 * (q**2).sum()
    return float(2.0 * params.scale**2 * (full - diag))


def rosenblatt_cumulants(params):
    """Second and third cumulants of the limit law (d = 1)."""
    if params.d != 1:
        raise ConfigError("body", "cumulant quadrature is implemented for d = 1")
    a = params.alpha
    t2, t3, t3_err = time_traces(a)
    s2, s3, s2_err, s3_err = space_traces(params.spatial, params.body)
    cK = params.c_K
    k2 = 2.0 * t2 * s2 / cK
    k3 = 8.0 * t3 * s3 / cK**1.5
    k3_err = 8.0 * (t3_err * s3 + t3 * s3_err) / cK**1.5
    if not (math.isfinite(k2) and k2 > 0):
        raise NumericalError(f"second cumulant quadrature returned {k2}")
    dist_route = params.body.volume**2 * expected_cov_power(params.body, params.spatial, 2)
    ratio = spatial_frequency_factor(params) / dist_route
    return RosenblattCumulants(k2, 2.0 * t2 * s2_err / cK, k3, k3_err, grid_kappa2(params), ratio)


# -- sampler -----------------------------------------------------------------


class RosenblattSampler:
    """Discretized double Wiener integral on the symmetric frequency grid.

    Cell variables are Hermitian: ``xi(-mu, -w) = conj(xi(mu, w))`` with
    ``E|xi|^2 = 1``. Because the kernel factorizes into ``S(mu + mu')`` and
    ``I_K(w + w')``, the quadratic form is ``Re sum V * (S V I)`` for the
    matrix ``V`` of weighted cell variables; the conjugate-pair hyperdiagonal
    contributes ``|K| sum |V|^2`` and is removed.
    """

    def __init__(self, params):
        self.params = params
        mu, p = params.time_grid()
        w, q = params.space_grid()
        self.S = sinc_factor(mu[:, None] + mu[None, :])
        self.I = body_char_fn(params.body, w[:, None] + w[None, :])
        self.amp = np.sqrt(p[:, None] * q[None, :])
        self.kappa2 = grid_kappa2(params)

    def _draw_chunk(self, rng, n):
        nt, ns = self.params.n_t, 2 * self.params.n_s
        xi = (rng.standard_normal((n, nt, ns)) + 1j * rng.standard_normal((n, nt, ns))) / math.sqrt(2)
        # negative time frequencies mirror the positive half through (mu, w) -> (-mu, -w)
        full = np.concatenate([np.conj(xi[:, ::-1, ::-1]), xi], axis=1)
        V = self.amp[None] * full
        SVI = self.S @ V @ self.I
        q = np.einsum("bij,bij->b", V, SVI).real
        q -= self.params.body.volume * (np.abs(V) ** 2).sum(axis=(1, 2))
        return self.params.scale * q

    def sample(self, n_samples, seed):
        n_samples = int(n_samples)
        if n_samples < 1:
            raise ConfigError("n_samples", "must be positive")
        out = []
        for c in range(math.ceil(n_samples / SAMPLE_CHUNK)):
            n = min(SAMPLE_CHUNK, n_samples - c * SAMPLE_CHUNK)
            out.append(self._draw_chunk(replicate_rng(seed, c), SAMPLE_CHUNK)[:n])
        return np.concatenate(out)


def rosenblatt_sample(params, n_samples, seed, reference_kappa2=1.0):
    """``n_samples`` i.i.d. draws of the discretized limit law.

    Raises when the grid captures less than half of ``reference_kappa2``.
    """
    sampler = RosenblattSampler(params)
    if sampler.kappa2 < MIN_GRID_KAPPA2 * reference_kappa2:
        raise NumericalError(
            f"frequency grid too coarse: discretized kappa2 {sampler.kappa2:.3g} "
            f"is below {MIN_GRID_KAPPA2} x {reference_kappa2:.3g}"
        )
    return sampler.sample(n_samples, seed)


def eigen_sample(params, n_samples, seed, n_time=512, panels=32, n_keep=2048):
    """Reference sampler ``sum_k lambda_k (xi_k^2 - 1)`` from the Galerkin spectrum.

    Eigenvalues of the separable limit operator are products of time and
    space eigenvalues. The ``n_keep`` largest in modulus are sampled exactly;
    the many small remaining terms are replaced by a Gaussian of the same
    variance ``2 sum lambda^2``.
    """
    lt = np.linalg.eigvalsh(_power_cell_matrix(params.alpha, n_time))
    L = params.body.sides[0]
    g = gauss_legendre(8)
    e = np.linspace(0.0, L, panels + 1)
    half = 0.5 * (e[1:] - e[:-1])
    x = (0.5 * (e[1:] + e[:-1])[:, None] + half[:, None] * g.nodes[None, :]).ravel()
    w = np.sqrt((half[:, None] * g.weights[None, :]).ravel())
    ls = np.linalg.eigvalsh(w[:, None] * params.spatial(np.abs(x[:, None] - x[None, :])) * w[None, :])
    lam = np.outer(lt, ls).ravel() / math.sqrt(params.c_K)
    order = np.argsort(-np.abs(lam))
    top, rest = lam[order[:n_keep]], lam[order[n_keep:]]
    rest_sd = math.sqrt(2.0 * float((rest**2).sum()))
    out = []
    for c in range(math.ceil(n_samples / SAMPLE_CHUNK)):
        n = min(SAMPLE_CHUNK, n_samples - c * SAMPLE_CHUNK)
        rng = replicate_rng(seed, c)
        xi = rng.standard_normal((SAMPLE_CHUNK, top.size))
        out.append(((xi**2 - 1.0) @ top + rest_sd * rng.standard_normal(SAMPLE_CHUNK))[:n])
    return np.concatenate(out)


__all__ = [
    "RosenblattCumulants",
    "RosenblattParams",
    "RosenblattSampler",
    "body_char_fn",
    "eigen_sample",
    "grid_kappa2",
    "rosenblatt_cumulants",
    "rosenblatt_kernel",
    "rosenblatt_sample",
    "sinc_factor",
    "space_traces",
    "time_traces",
]
