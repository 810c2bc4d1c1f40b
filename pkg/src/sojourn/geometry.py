"""Convex bodies and the distribution of the distance between two uniform points.

Bodies live in fixed positions: an interval is ``[0, L]``, a box is
``[0, s_1] x ... x [0, s_d]`` and a ball is centred at the origin.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .specfun import gauss_legendre, incomplete_beta

_MC_BATCH = 200_000


def sphere_area(d):
    """Surface measure of the unit sphere in R^d (``|S_0| = 2``)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class ConvexBody:
    kind: str
    dim: int
    sides: tuple = ()
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("interval", "box", "ball"):
            raise ConfigError("body.kind", f"unknown body {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("body.dim", "dimension must be at least 1")
        if self.kind in ("interval", "box"):
            if len(self.sides) != self.dim or any(s <= 0 for s in self.sides):
                raise ConfigError("body.sides", "need one positive side length per dimension")
        elif self.radius <= 0:
            raise ConfigError("body.radius", "radius must be positive")

    @classmethod
    def interval(cls, length):
        return cls("interval", 1, sides=(float(length),))

    @classmethod
    def box(cls, sides):
        sides = tuple(float(s) for s in sides)
        if len(sides) == 1:
            return cls.interval(sides[0])
        return cls("box", len(sides), sides=sides)

    @classmethod
    def ball(cls, d, radius=1.0):
        return cls("ball", int(d), radius=float(radius))

    @property
    def is_rectangular(self):
        return self.kind in ("interval", "box")

    @property
    def diameter(self):
        if self.is_rectangular:
            return math.sqrt(sum(s * s for s in self.sides))
        return 2.0 * self.radius

    @property
    def volume(self):
        if self.is_rectangular:
            return math.prod(self.sides)
        return ball_volume(self.dim) * self.radius**self.dim

    @property
    def surface_area(self):
        if self.dim == 1:
            return 0.0
        if self.is_rectangular:
            vol = self.volume
            return 2.0 * sum(vol / s for s in self.sides)
        return sphere_area(self.dim) * self.radius ** (self.dim - 1)

    @property
    def bounds(self):
        """Axis-aligned bounding box as ``(lower, upper)`` arrays."""
        if self.is_rectangular:
            return np.zeros(self.dim), np.array(self.sides)
        r = np.full(self.dim, self.radius)
        return -r, r

    def contains(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if self.is_rectangular:
            return np.all((pts >= 0) & (pts <= np.array(self.sides)), axis=1)
        return np.einsum("ij,ij->i", pts, pts) <= self.radius**2

    def to_dict(self):
        if self.kind == "interval":
            return {"variant": "interval", "length": self.sides[0]}
        if self.kind == "box":
            return {"variant": "box", "sides": list(self.sides)}
        return {"variant": "ball", "dim": self.dim, "radius": self.radius}

    @classmethod
    def from_dict(cls, d):
        variant = d.get("variant")
        try:
            if variant == "interval":
                return cls.interval(d["length"])
            if variant == "box":
                return cls.box(d["sides"])
            if variant == "ball":
                return cls.ball(d["dim"], d.get("radius", 1.0))
        except KeyError as exc:
            raise ConfigError(f"body.{exc.args[0]}", "missing") from None
        raise ConfigError("body.variant", f"unknown body {variant!r}")


def body_descriptors(body):
    return {"diameter": body.diameter, "volume": body.volume, "surface_area": body.surface_area}


def chord_length_cdf_ball(d, v):
    """Chord-length distribution of the unit ball in R^d under invariant measure."""
    if d < 2:
        raise ConfigError("d", "chord-length law needs d >= 2")
    v = np.asarray(v, dtype=float)
    inner = np.clip(1.0 - (np.clip(v, 0.0, 2.0) / 2.0) ** 2, 0.0, 1.0)
    out = np.where(v <= 0, 0.0, np.where(v >= 2, 1.0, 1.0 - inner ** ((d - 1) / 2.0)))
    return out if out.ndim else float(out)


def _unit_ball_density_beta(d, z):
    # Lord's form: d z^{d-1} I_{1-(z/2)^2}((d+1)/2, 1/2)
    z = np.asarray(z, dtype=float)
    mu = np.clip(1.0 - (z / 2.0) ** 2, 0.0, 1.0)
    return d * z ** (d - 1) * incomplete_beta(mu, (d + 1) / 2.0, 0.5)


def _unit_ball_density_chord(d, z, nodes=48):
    # d z^{d-1} [1 - V_{d-1}/V_d int_0^z (1-(v/2)^2)^{(d-1)/2} dv]; the integral is
    # taken in v = 2 sin(theta) where the integrand 2 cos^d(theta) is smooth.
    z = np.atleast_1d(np.asarray(z, dtype=float))
    theta_max = np.arcsin(np.clip(z / 2.0, 0.0, 1.0))
    rule = gauss_legendre(nodes, 0.0, 1.0)
    th = theta_max[:, None] * rule.nodes[None, :]
    integral = theta_max * (2.0 * np.cos(th) ** d @ rule.weights)
    ratio = math.gamma(d / 2.0 + 1.0) / (math.sqrt(math.pi) * math.gamma((d + 1) / 2.0))
    return d * z ** (d - 1) * (1.0 - ratio * integral)


def ball_density_incomplete_beta(d, z):
    """Pair-distance density of the unit ball via the incomplete beta function."""
    out = _unit_ball_density_beta(d, z)
    return out if np.ndim(out) else float(out)


def ball_density_chord_integral(d, z):
    """Same density through the chord-length integral; an independent route."""
    out = _unit_ball_density_chord(d, z)
    return out if np.ndim(z) else float(out[0])


def distance_density_from_chord_cdf(body, chord_cdf, z):
    """Pair-distance density from a chord-length CDF, valid for ``d >= 2``."""
    d = body.dim
    if d < 2:
        raise ConfigError("body.dim", "chord-length route is undefined for d = 1")
    z = float(z)
    if z < 0 or z > body.diameter * (1 + 1e-12):
        raise ConfigError("z", f"must lie in [0, {body.diameter}]")
    if z == 0.0:
        return 0.0
    tail, _ = integrate.quad(lambda v: 1.0 - chord_cdf(v), 0.0, z, epsabs=1e-14, epsrel=1e-12, limit=200)
    vol = body.volume
    val = (
        z ** (d - 1) * sphere_area(d) * vol
        - z ** (d - 1) * sphere_area(d - 1) * body.surface_area * tail / (d - 1)
    ) / vol**2
    return max(val, 0.0)


@dataclass(frozen=True, eq=False)
class DistanceTable:
    """Monte Carlo histogram of the pair distance."""

    edges: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    n_pairs: int
    seed: int

    @property
    def midpoints(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, z, side="right") - 1, 0, len(self.density) - 1)
        out = self.density[idx]
        return out if out.ndim else float(out)


def uniform_points(body, n, rng):
    """``n`` i.i.d. uniform points in the body (rejection sampling for balls)."""
    lo, hi = body.bounds
    if body.is_rectangular:
        return lo + (hi - lo) * rng.random((n, body.dim))
    out = np.empty((0, body.dim))
    while len(out) < n:
        m = int(1.3 * (n - len(out)) / (body.volume / np.prod(hi - lo))) + 16
        cand = lo + (hi - lo) * rng.random((m, body.dim))
        out = np.vstack([out, cand[body.contains(cand)]])
    return out[:n]


def distance_density_mc(body, n_pairs, n_bins=50, seed=0):
    """Histogram estimate of the pair-distance density.

    Pairs are drawn in fixed-size batches, each with its own child seed, so
    the table depends only on ``(body, n_pairs, n_bins, seed)``.
    """
    if n_pairs < 10_000:
        raise ConfigError("n_pairs", "need at least 10^4 pairs")
    edges = np.linspace(0.0, body.diameter, n_bins + 1)
    counts = np.zeros(n_bins, dtype=np.int64)
    n_batches = -(-n_pairs // _MC_BATCH)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    remaining = n_pairs
    for child in children:
        m = min(_MC_BATCH, remaining)
        rng = np.random.Generator(np.random.Philox(child))
        p = uniform_points(body, m, rng)
        q = uniform_points(body, m, rng)
        dist = np.sqrt(((p - q) ** 2).sum(axis=1))
        counts += np.histogram(dist, bins=edges)[0]
        remaining -= m
    width = np.diff(edges)
    prob = counts / n_pairs
    table = DistanceTable(
        edges=edges,
        density=prob / width,
        stderr=np.sqrt(prob * (1 - prob) / n_pairs) / width,
        n_pairs=int(n_pairs),
        seed=int(seed),
    )
    return DistanceDensity(body, "monte-carlo-table", table=table)


@dataclass(frozen=True, eq=False)
class DistanceDensity:
    """Pair-distance density of a body, bound to an evaluation method."""

    body: ConvexBody
    method: str  # "closed-form", "chord-cdf" or "monte-carlo-table"
    table: DistanceTable = None
    chord_cdf: object = None

    @classmethod
    def for_body(cls, body, table=None, chord_cdf=None):
        if body.kind != "box":
            return cls(body, "closed-form")
        if chord_cdf is not None:
            return cls(body, "chord-cdf", chord_cdf=chord_cdf)
        if table is None:
            raise ConfigError("body", "box bodies need a chord-length CDF or a Monte Carlo table")
        return cls(body, "monte-carlo-table", table=_as_table(table))

    def __call__(self, z):
        if self.method == "closed-form":
            return distance_density(self.body, z)
        if self.method == "chord-cdf":
            return distance_density(self.body, z, chord_cdf=self.chord_cdf)
        return distance_density(self.body, z, table=self.table)


def _as_table(table):
    return table.table if isinstance(table, DistanceDensity) else table


def distance_density(body, z, table=None, chord_cdf=None):
    """Density of the distance between two independent uniform points of ``body``.

    Intervals and balls use closed forms (balls of radius r by the scaling
    ``psi_r(z) = psi_1(z / r) / r``). Boxes need either a chord-length CDF or
    a Monte Carlo ``table``.
    """
    za = np.asarray(z, dtype=float)
    D = body.diameter
    if np.any(za < 0) or np.any(za > D * (1 + 1e-12)):
        raise ConfigError("z", f"must lie in [0, {D}]")
    if body.kind == "interval":
        L = body.sides[0]
        out = 2.0 / L * (1.0 - za / L)
    elif body.kind == "ball":
        r = body.radius
        out = _unit_ball_density_beta(body.dim, za / r) / r if body.dim >= 2 else 1.0 / r * (1.0 - za / (2 * r))
    elif chord_cdf is not None:
        out = np.vectorize(lambda v: distance_density_from_chord_cdf(body, chord_cdf, v))(za)
    elif table is not None:
        out = _as_table(table)(za)
    else:
        raise ConfigError("body", "box bodies need a chord-length CDF or a Monte Carlo table")
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def containment_bound(body, z):
    """Pointwise upper bound ``z^{d-1} |S_{d-1}| / |K|`` on the density."""
    z = np.asarray(z, dtype=float)
    return z ** (body.dim - 1) * sphere_area(body.dim) / body.volume


@dataclass(frozen=True, eq=False)
class DistanceRule:
    """Quadrature nodes and weights for ``E[g(|P1 - P2|)]`` on a body."""

    nodes: np.ndarray
    weights: np.ndarray
    method: str
    table: DistanceTable = field(default=None, repr=False)

    def expect(self, g):
        return float(np.dot(self.weights, g(self.nodes)))


_DISTANCE_RULES = {}


def distance_rule(body, nodes=32, levels=10, table=None):
    """Rule integrating against the pair-distance density.

    Closed-form bodies use Gauss-Legendre panels graded geometrically towards
    both ends of ``[0, D]``; kernels such as ``exp(-z**kappa)`` with kappa < 1
    have a cusp at 0 and ball densities vanish algebraically at D. Boxes use
    the midpoints of a Monte Carlo table (built with a fixed seed if absent).
    """
    key = (body, nodes, levels, id(table))
    if key in _DISTANCE_RULES:
        return _DISTANCE_RULES[key]
    if body.kind == "box":
        if table is None:
            table = distance_density_mc(body, 2_000_000, n_bins=400, seed=0)
        table = _as_table(table)
        rule = DistanceRule(table.midpoints, table.density * table.widths, "monte-carlo-table", table)
    else:
        D = body.diameter
        # graded towards both ends: cusps of C_S at 0, algebraic decay of the
        # ball density at the diameter
        g = 0.5 * D * 2.0 ** -np.arange(levels, -1, -1)
        edges = np.unique(np.concatenate([[0.0], g, D - g, [D]]))
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            r = gauss_legendre(nodes, a, b)
            xs.append(r.nodes)
            ws.append(r.weights * distance_density(body, r.nodes))
        rule = DistanceRule(np.concatenate(xs), np.concatenate(ws), "closed-form")
    _DISTANCE_RULES[key] = rule
    return rule
