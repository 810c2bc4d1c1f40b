"""Gaussian field realizations on a space-time lattice.

A grid is the set of cell centers of a cubic lattice of step ``h`` that fall
inside the body, times ``n_t`` equally spaced instants. Two samplers are
provided: an exact Cholesky sampler for small grids and a circulant-embedding
(FFT) sampler for large rectangular lattices. Replicate ``r`` of an ensemble
draws from its own counter-based stream derived from ``(master_seed, r)``, so
results never depend on the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import math
import struct

import numpy as np
from scipy import fft, linalg

from .errors import ConfigError, NumericalError

MAX_GRID_VALUES = 2**26
CHOLESKY_MAX_POINTS = 8192
CIRCULANT_MAX_VALUES = 2**25
NEG_MASS_TOL = 1e-6
MAX_PAD_RETRIES = 3
BINARY_MAGIC = b"SJFS"
BINARY_VERSION = 1


# -- grids -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Space-time lattice over a body.

    ``points`` are the in-body cell centers in lexicographic order and
    ``weights`` their cell volumes ``h**d``. ``box_shape`` is the bounding
    lattice and ``box_index`` the flat positions of ``points`` in it.
    """

    body: object
    h: float
    dt: float
    n_t: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    box_shape: tuple = ()
    box_index: np.ndarray = field(default=None, repr=False)

    @property
    def n_s(self):
        return len(self.weights)

    @property
    def T(self):
        return self.n_t * self.dt

    @property
    def times(self):
        return np.arange(self.n_t) * self.dt

    @property
    def area(self):
        """Riemann approximation ``sum w_x`` of ``|K|``."""
        return float(self.weights.sum())

    def to_dict(self):
        return {"h": self.h, "dt": self.dt, "n_t": self.n_t}


def build_grid(body, h, delta_t, n_t, max_values=MAX_GRID_VALUES):
    """Cell-center lattice of step ``h`` clipped to ``body``, with ``n_t`` times."""
    h, delta_t, n_t = float(h), float(delta_t), int(n_t)
    if not 0 < h <= body.diameter / 2:
        raise ConfigError("grid.h", f"must lie in (0, D/2] = (0, {body.diameter / 2}]")
    if not delta_t > 0:
        raise ConfigError("grid.dt", "must be positive")
    if n_t < 2:
        raise ConfigError("grid.n_t", "need at least two time points")
    lo, hi = body.bounds
    # a relative slack keeps exact multiples of h from gaining a phantom cell
    counts = [max(1, math.ceil((b - a) / h - 1e-9)) for a, b in zip(lo, hi)]
    n_box = math.prod(counts)
    if n_box * n_t > max_values:
        raise ConfigError("grid", f"{n_box} x {n_t} values exceed the budget of {max_values}")
    axes = [a + (np.arange(c) + 0.5) * h for a, c in zip(lo, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    box_pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = body.contains(box_pts)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        raise ConfigError("grid.h", "no lattice point falls inside the body")
    pts = box_pts[idx]
    return GridSpec(body, h, delta_t, n_t, pts, np.full(idx.size, h**body.dim), tuple(counts), idx)


def subsample_grid(grid, space_stride=1, time_stride=1):
    """Every ``space_stride``-th point and time of a rectangular grid.

    Weights and the time step are rescaled so that totals are preserved.
    """
    if grid.body.dim != 1:
        raise ConfigError("grid", "subsampling is implemented for intervals")
    s, k = int(space_stride), int(time_stride)
    h = grid.h * s
    counts = (math.ceil(grid.box_shape[0] / s),)
    pts = grid.points[::s]
    n_t = math.ceil(grid.n_t / k)
    return GridSpec(grid.body, h, grid.dt * k, n_t, pts, np.full(len(pts), h), counts, np.arange(len(pts)))


# -- seeds -------------------------------------------------------------------


def replicate_seed_sequence(master_seed, r):
    if master_seed is None:
        raise ConfigError("seed", "a master seed is mandatory")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(r),))


def replicate_seed(master_seed, r):
    """Stable 128-bit seed of replicate ``r``."""
    words = replicate_seed_sequence(master_seed, r).generate_state(4, np.uint32)
    return sum(int(w) << (32 * i) for i, w in enumerate(words))


def replicate_rng(master_seed, r):
    return np.random.Generator(np.random.Philox(replicate_seed_sequence(master_seed, r)))


def stream_seed(master_seed, tag):
    """Seed of an auxiliary stream, disjoint from every replicate stream."""
    if master_seed is None:
        raise ConfigError("seed", "a master seed is mandatory")
    # replicate streams use one-element spawn keys, auxiliary streams two
    words = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(1, int(tag))).generate_state(4, np.uint32)
    return sum(int(w) << (32 * i) for i, w in enumerate(words))


# -- samples -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: GridSpec
    values: np.ndarray = field(repr=False)  # n_s x n_t
    method: str = ""
    seed: int = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.grid.n_s, self.grid.n_t):
            raise NumericalError(f"sample shape {self.values.shape} does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("sample contains non-finite values")


def _pair_distances(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(-1))


class CholeskySampler:
    """Exact sampler from the full space-time covariance matrix.

    The factor is computed once and reused for every replicate.
    """

    method = "cholesky"

    def __init__(self, model, grid, max_points=CHOLESKY_MAX_POINTS):
        n = grid.n_s * grid.n_t
        if n > max_points:
            raise ConfigError("grid", f"Cholesky sampler needs n_s*n_t <= {max_points}, got {n}")
        self.model, self.grid = model, grid
        dist = _pair_distances(grid.points)
        t = grid.times
        lag = np.abs(t[:, None] - t[None, :])
        # index (x, t) with x varying slowest, matching values.ravel()
        cov = np.asarray(model(dist[:, None, :, None], lag[None, :, None, :]), dtype=float)
        self.cov = cov.reshape(n, n)
        self.jitter = 0.0
        try:
            self.factor = linalg.cholesky(self.cov, lower=True)
        except linalg.LinAlgError:
            self.jitter = 1e-10 * np.trace(self.cov) / n
            try:
                self.factor = linalg.cholesky(self.cov + self.jitter * np.eye(n), lower=True)
            except linalg.LinAlgError:
                lam = linalg.eigh(self.cov, eigvals_only=True, subset_by_index=[0, 0])[0]
                raise NumericalError(
                    f"covariance matrix is not positive definite after jitter {self.jitter:.3g} "
                    f"(smallest eigenvalue {lam:.3g})"
                ) from None

    @property
    def diagnostics(self):
        return {"jitter": self.jitter}

    def draw(self, rng):
        z = rng.standard_normal(self.grid.n_s * self.grid.n_t)
        return (self.factor @ z).reshape(self.grid.n_s, self.grid.n_t)


def _wrapped_offsets(m, step):
    i = np.arange(m)
    return np.minimum(i, m - i) * step


class CirculantSampler:
    """Circulant embedding of the stationary covariance on the bounding lattice.

    Each axis of length ``n`` is embedded in a torus of ``pad_factor * n``
    points. Negative eigenvalues are clipped when their share of the total
    absolute mass is at most ``neg_tol``; otherwise the padding is doubled, up
    to ``MAX_PAD_RETRIES`` times.
    """

    method = "circulant"

    def __init__(self, model, grid, pad_factor=2, neg_tol=NEG_MASS_TOL, max_values=CIRCULANT_MAX_VALUES):
        if pad_factor < 2:
            raise ConfigError("pad_factor", "must be at least 2")
        self.model, self.grid = model, grid
        shape = tuple(grid.box_shape) + (grid.n_t,)
        pad = int(pad_factor)
        history = []
        for attempt in range(MAX_PAD_RETRIES + 1):
            emb = tuple(pad * n for n in shape)
            if math.prod(emb) > max_values:
                raise NumericalError(
                    f"circulant embedding {emb} exceeds the budget of {max_values} values; "
                    "use the Cholesky sampler on a smaller grid"
                )
            lam = self._eigenvalues(emb)
            neg = float(np.abs(lam[lam < 0]).sum())
            frac = neg / float(np.abs(lam).sum())
            history.append((pad, frac))
            if frac <= neg_tol:
                break
            pad *= 2
        else:
            raise NumericalError(
                f"covariance is not circulant-embeddable: negative eigenvalue mass fraction "
                f"{frac:.3g} at padding {pad // 2}; use the Cholesky sampler"
            )
        lam = np.clip(lam, 0.0, None)
        self.shape, self.embedding = shape, emb
        self.pad_factor = pad
        self.scale = np.sqrt(lam / lam.size)
        self.neg_fraction = frac
        self.marginal_variance = float(lam.mean())
        self.history = history

    def _eigenvalues(self, emb):
        g = self.grid
        *sp, mt = emb
        offs = [_wrapped_offsets(m, g.h) for m in sp]
        sq = np.zeros(tuple(sp))
        for j, o in enumerate(offs):
            sq = sq + o.reshape([-1 if k == j else 1 for k in range(len(sp))]) ** 2
        dist = np.sqrt(sq)[..., None]
        lag = _wrapped_offsets(mt, g.dt).reshape((1,) * len(sp) + (-1,))
        c = np.asarray(self.model(dist, lag), dtype=float)
        return fft.fftn(c, workers=1).real

    @property
    def diagnostics(self):
        return {
            "pad_factor": self.pad_factor,
            "embedding": list(self.embedding),
            "negative_mass_fraction": self.neg_fraction,
            "marginal_variance": self.marginal_variance,
        }

    def draw(self, rng):
        w = rng.standard_normal(self.embedding) + 1j * rng.standard_normal(self.embedding)
        y = fft.fftn(self.scale * w, workers=1).real
        y = y[tuple(slice(0, n) for n in self.shape)]
        return y.reshape(-1, self.shape[-1])[self.grid.box_index]


def make_sampler(model, grid, method="auto", pad_factor=2):
    """``auto`` uses Cholesky up to ``CHOLESKY_MAX_POINTS`` values, else circulant."""
    if method == "auto":
        method = "cholesky" if grid.n_s * grid.n_t <= CHOLESKY_MAX_POINTS else "circulant"
    if method == "cholesky":
        return CholeskySampler(model, grid)
    if method == "circulant":
        return CirculantSampler(model, grid, pad_factor=pad_factor)
    raise ConfigError("method", f"unknown sampler {method!r}")


def _sample(sampler, seed, r=0):
    values = sampler.draw(replicate_rng(seed, r))
    return FieldSample(sampler.grid, values, sampler.method, replicate_seed(seed, r), sampler.diagnostics)


def simulate_cholesky(model, grid, seed):
    return _sample(CholeskySampler(model, grid), seed)


def simulate_circulant(model, grid, seed, pad_factor=2):
    return _sample(CirculantSampler(model, grid, pad_factor=pad_factor), seed)


def ensemble_map(func, sampler, n_rep, master_seed, threads=1, start=0):
    """``[func(sample_r, r) for r in range(start, start + n_rep)]`` in a thread pool.

    Samples are generated inside the workers and discarded after ``func``, so
    memory stays bounded by the number of threads. Numerical failures are
    re-raised with the replicate index and seed.
    """

    def one(r):
        try:
            return func(_sample(sampler, master_seed, r), r)
        except NumericalError as exc:
            raise NumericalError(f"replicate {r} (seed {replicate_seed(master_seed, r)}): {exc}") from exc

    reps = range(int(start), int(start) + int(n_rep))
    threads = max(1, int(threads))
    if threads == 1:
        return [one(r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, reps))


# -- covariance validation ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovCheckReport:
    probes: list  # (z, k) with z a spatial distance and k a time-lag index
    empirical: np.ndarray
    stderr: np.ndarray
    target: np.ndarray
    z_scores: np.ndarray
    max_abs_z: float
    n_rep: int


def probe_pairs(grid, probes, tol=1e-9):
    """Index pairs ``(i, j)`` of spatial points at each probed distance."""
    dist = _pair_distances(grid.points)
    out = []
    for z, k in probes:
        if not 0 <= int(k) < grid.n_t:
            raise ConfigError("probes", f"time lag {k} outside the grid")
        i, j = np.nonzero(np.abs(dist - z) <= tol)
        if i.size == 0:
            raise ConfigError("probes", f"no pair of grid points at distance {z}")
        out.append((i, j))
    return out


def lag_products(values, pairs, probes):
    """Per-sample average of ``Z(x, t) Z(y, t + k)`` over all pairs at each probe."""
    out = np.empty(len(probes))
    nt = values.shape[1]
    for p, ((i, j), (_, k)) in enumerate(zip(pairs, probes)):
        k = int(k)
        out[p] = np.mean(values[i, : nt - k] * values[j, k:])
    return out


def sample_cov_check(products, probes, target=None):
    """Empirical covariances and studentized deviations from ``target``.

    ``products`` holds one row of :func:`lag_products` per replicate. Each row
    is a single draw of an unbiased estimator, so the standard error is the
    across-replicate standard deviation over ``sqrt(n_rep)``.
    """
    products = np.asarray(products, dtype=float)
    n = products.shape[0]
    if n < 100:
        raise ConfigError("n_rep", "need at least 100 replicates")
    emp = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(n)
    if target is None:
        target = np.full(len(probes), np.nan)
    target = np.asarray(target, dtype=float)
    z = (emp - target) / se
    finite = z[np.isfinite(z)]
    return CovCheckReport(list(probes), emp, se, target, z, float(np.max(np.abs(finite))) if finite.size else math.nan, n)


def ensemble_cov_check(model, sampler, probes, n_rep, master_seed, threads=1):
    """Simulate ``n_rep`` replicates and compare lag covariances with ``model``."""
    pairs = probe_pairs(sampler.grid, probes)
    rows = ensemble_map(lambda s, r: lag_products(s.values, pairs, probes), sampler, n_rep, master_seed, threads)
    target = [float(model(np.float64(z), np.float64(k * sampler.grid.dt))) for z, k in probes]
    return sample_cov_check(np.array(rows), probes, target)


# -- I/O ---------------------------------------------------------------------


def write_csv(sample, path):
    """Long format: one row per (point, time) with columns x1..xd, t, value."""
    g = sample.grid
    d = g.points.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(d)] + ["t", "value"])
        t = g.times
        for i, x in enumerate(g.points):
            xs = [repr(float(v)) for v in x]
            for k in range(g.n_t):
                w.writerow(xs + [repr(float(t[k])), repr(float(sample.values[i, k]))])


def write_binary(sample, path):
    """Binary block.

    Header (little-endian): magic ``SJFS``, u32 version, u32 d, u32 n_s,
    u32 n_t, f64 h, f64 dt. Then ``n_s * d`` f64 point coordinates and
    ``n_s * n_t`` f64 values in row-major (point, time) order.
    """
    g = sample.grid
    d = g.points.shape[1]
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<IIIIdd", BINARY_VERSION, d, g.n_s, g.n_t, g.h, g.dt))
        fh.write(np.ascontiguousarray(g.points, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())


def read_binary(path):
    """Returns ``(points, times, values)`` from a :func:`write_binary` file."""
    with open(path, "rb") as fh:
        if fh.read(4) != BINARY_MAGIC:
            raise ConfigError("path", "not a sojourn field file")
        version, d, ns, nt, h, dt = struct.unpack("<IIIIdd", fh.read(32))
        if version != BINARY_VERSION:
            raise ConfigError("path", f"unsupported version {version}")
        pts = np.frombuffer(fh.read(8 * ns * d), dtype="<f8").reshape(ns, d)
        vals = np.frombuffer(fh.read(8 * ns * nt), dtype="<f8").reshape(ns, nt)
    return pts, np.arange(nt) * dt, vals


def lattice_distances(grid):
    """Sorted distinct distances between grid points (useful probe values)."""
    return np.unique(np.round(_pair_distances(grid.points), 12))


__all__ = [
    "CholeskySampler",
    "CirculantSampler",
    "CovCheckReport",
    "FieldSample",
    "GridSpec",
    "build_grid",
    "ensemble_cov_check",
    "ensemble_map",
    "lag_products",
    "lattice_distances",
    "make_sampler",
    "probe_pairs",
    "read_binary",
    "replicate_rng",
    "replicate_seed",
    "sample_cov_check",
    "simulate_circulant",
    "simulate_cholesky",
    "stream_seed",
    "subsample_grid",
    "write_binary",
    "write_csv",
]
