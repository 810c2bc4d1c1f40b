import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sojourn.covariance import (
    ConstantOne,
    CustomCovariance,
    GneitingML,
    PoweredExponential,
    Separable,
    sup_decay_check,
)
from sojourn.errors import ConfigError, NumericalError
from sojourn.fieldsim import (
    CholeskySampler,
    CirculantSampler,
    build_grid,
    ensemble_cov_check,
    ensemble_map,
    lag_products,
    lattice_distances,
    probe_pairs,
    read_binary,
    replicate_rng,
    replicate_seed,
    sample_cov_check,
    simulate_cholesky,
    simulate_circulant,
    subsample_grid,
    write_binary,
    write_csv,
)
from sojourn.geometry import ConvexBody
from sojourn.variance import sigma2_grid, sigma2_nK

SEP = Separable(PoweredExponential(), 0.4)
UNIT = ConvexBody.interval(1.0)
# 1 - tau^2 clipped at 0 is not positive definite on lags 0, 0.5, 1
NOT_PD = CustomCovariance(lambda z, t: np.clip(1.0 - t**2, 0.0, None) * np.exp(-z))


def test_interval_grid_example():
    g = build_grid(UNIT, 0.25, 1.0, 4)
    np.testing.assert_allclose(g.points.ravel(), [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(g.weights, 0.25)
    assert g.T == 4.0


def test_disk_grid_example():
    g = build_grid(ConvexBody.ball(2), 0.5, 1.0, 2)
    # direct enumeration of the 4 x 4 cell centers inside the unit disk
    c = np.array([-0.75, -0.25, 0.25, 0.75])
    brute = sum(1 for a in c for b in c if a * a + b * b < 1)
    assert g.n_s == brute == 12
    assert np.all(np.einsum("ij,ij->i", g.points, g.points) < 1)
    # lexicographic order
    assert [tuple(p) for p in g.points] == sorted(tuple(p) for p in g.points)


@pytest.mark.parametrize("body", [UNIT, ConvexBody.box([1.0, 2.0]), ConvexBody.ball(2), ConvexBody.ball(3, 0.7)])
def test_weights_converge_to_volume(body):
    g = build_grid(body, body.diameter / 40, 1.0, 2)
    assert g.area / body.volume == pytest.approx(1.0, abs=0.05)


@given(st.floats(0.02, 1.0), st.sampled_from([UNIT, ConvexBody.ball(2), ConvexBody.box([1.5, 0.8])]))
@settings(max_examples=40, deadline=None)
def test_grid_invariants(h, body):
    h = min(h, body.diameter / 2)
    g = build_grid(body, h, 0.5, 3)
    assert np.all(body.contains(g.points))
    # boundary measure of an interval is its two endpoints
    boundary = body.surface_area if body.dim > 1 else 2.0
    assert abs(g.area - body.volume) <= 2 * h * boundary + 1e-12


def test_grid_errors():
    with pytest.raises(ConfigError):
        build_grid(UNIT, 0.6, 1.0, 4)
    with pytest.raises(ConfigError):
        build_grid(UNIT, 0.1, 1.0, 1)
    with pytest.raises(ConfigError):
        build_grid(UNIT, 0.001, 1.0, 10**6, max_values=10**7)


def test_subsample_grid():
    g = build_grid(UNIT, 1 / 64, 1.0, 4096)
    s = subsample_grid(g, 8, 4)
    assert s.n_s == 8 and s.n_t == 1024
    assert s.area == pytest.approx(1.0) and s.T == g.T


def test_replicate_seeds():
    assert replicate_seed(7, 3) == replicate_seed(7, 3)
    assert replicate_seed(7, 3) != replicate_seed(7, 4)
    assert replicate_seed(7, 3).bit_length() > 64
    a = replicate_rng(7, 3).standard_normal(5)
    np.testing.assert_array_equal(a, replicate_rng(7, 3).standard_normal(5))
    with pytest.raises(ConfigError):
        replicate_rng(None, 0)


def test_cholesky_two_point_identity():
    g = build_grid(UNIT, 0.5, 3.0, 2)
    g = subsample_grid(g, 2, 1)
    s = CholeskySampler(SEP, g)
    target = np.array([[1.0, SEP(0.0, 3.0)], [SEP(0.0, 3.0), 1.0]])
    np.testing.assert_allclose(s.cov, target)
    np.testing.assert_allclose(s.factor @ s.factor.T, target, atol=1e-15)


def test_cholesky_determinism():
    g = build_grid(UNIT, 0.25, 1.0, 32)
    a = simulate_cholesky(SEP, g, 11)
    b = simulate_cholesky(SEP, g, 11)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.method == "cholesky" and a.seed == replicate_seed(11, 0)


def test_cholesky_jitter_and_failure():
    g = build_grid(UNIT, 0.25, 1.0, 8)
    s = CholeskySampler(Separable(ConstantOne(), 0.01), g)  # numerically rank deficient
    assert s.jitter >= 0
    frozen = CholeskySampler(CustomCovariance(lambda z, t: np.ones_like(z)), g)
    assert frozen.jitter == pytest.approx(1e-10)
    with pytest.raises(NumericalError, match="smallest eigenvalue"):
        CholeskySampler(NOT_PD, build_grid(UNIT, 0.5, 0.5, 8))
    with pytest.raises(ConfigError):
        CholeskySampler(SEP, build_grid(UNIT, 1 / 64, 1.0, 256))


def test_circulant_diagnostics_and_padding():
    g = build_grid(UNIT, 1 / 16, 1.0, 512)
    s2 = CirculantSampler(SEP, g, pad_factor=2)
    s4 = CirculantSampler(SEP, g, pad_factor=4)
    assert s2.diagnostics["embedding"] == [32, 1024]
    assert s2.neg_fraction <= 1e-6
    assert abs(s2.marginal_variance - 1) < 1e-3 and abs(s4.marginal_variance - 1) < 1e-3
    x = simulate_circulant(SEP, g, 5)
    assert x.values.shape == (16, 512)
    assert x.values.tobytes() == simulate_circulant(SEP, g, 5).values.tobytes()


def test_circulant_rejects_non_embeddable():
    g = build_grid(UNIT, 0.25, 0.5, 16)
    with pytest.raises(NumericalError, match="Cholesky"):
        CirculantSampler(NOT_PD, g)
    with pytest.raises(ConfigError):
        CirculantSampler(SEP, g, pad_factor=1)


def test_circulant_ball_restriction():
    g = build_grid(ConvexBody.ball(2), 0.25, 1.0, 64)
    m = GneitingML(1, 0.5, 0.35, 1 / 7, 0.5, d=2)
    s = CirculantSampler(m, g)
    x = s.draw(replicate_rng(0, 0))
    assert x.shape == (g.n_s, 64) and g.n_s < 64


def test_ensemble_thread_independence():
    g = build_grid(UNIT, 1 / 16, 1.0, 256)
    s = CirculantSampler(SEP, g)
    f = lambda smp, r: smp.values.sum()
    assert ensemble_map(f, s, 12, 3, threads=1) == ensemble_map(f, s, 12, 3, threads=4)


@pytest.mark.parametrize("method", ["cholesky", "circulant"])
def test_ensemble_covariance(method):
    g = build_grid(UNIT, 1 / 8, 1.0, 128)
    d = lattice_distances(g)
    probes = [(0.0, 0), (d[1], 0), (d[3], 2), (0.0, 7), (d[5], 40), (0.0, 100)]
    sampler = CholeskySampler(SEP, g) if method == "cholesky" else CirculantSampler(SEP, g)
    rep = ensemble_cov_check(SEP, sampler, probes, 400, 9)
    assert rep.max_abs_z < 3.0
    assert rep.empirical[0] == pytest.approx(1.0, abs=3 * rep.stderr[0])
    # the largest lag sits near the sup of C over distances
    sup = sup_decay_check(SEP, UNIT, [100.0]).sup[0]
    assert abs(rep.empirical[-1] - sup) < 3 * rep.stderr[-1]


def test_sample_cov_check_requirements():
    with pytest.raises(ConfigError):
        sample_cov_check(np.zeros((50, 2)), [(0, 0), (0, 1)])
    rng = np.random.default_rng(0)
    rep = sample_cov_check(rng.normal(size=(1000, 40)), [(0, k) for k in range(40)], np.zeros(40))
    # studentized deviations look standard normal
    assert abs(rep.z_scores.mean()) < 0.6 and 0.5 < rep.z_scores.std() < 1.5


def test_probe_errors():
    g = build_grid(UNIT, 0.25, 1.0, 4)
    with pytest.raises(ConfigError):
        probe_pairs(g, [(0.3, 0)])
    with pytest.raises(ConfigError):
        probe_pairs(g, [(0.25, 4)])
    pairs = probe_pairs(g, [(0.25, 1)])
    v = np.arange(16.0).reshape(4, 4)
    assert lag_products(v, pairs, [(0.25, 1)])[0] == pytest.approx(
        np.mean([v[i, :3] * v[j, 1:] for i, j in [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)]])
    )


def test_io_roundtrip(tmp_path):
    g = build_grid(ConvexBody.ball(2), 0.5, 0.5, 6)
    s = simulate_cholesky(SEP, g, 1)
    write_binary(s, tmp_path / "f.bin")
    pts, t, vals = read_binary(tmp_path / "f.bin")
    np.testing.assert_array_equal(pts, g.points)
    np.testing.assert_array_equal(vals, s.values)
    np.testing.assert_allclose(t, g.times)
    write_csv(s, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,t,value" and len(lines) == 1 + 12 * 6
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ConfigError):
        read_binary(tmp_path / "bad.bin")


def test_sigma2_grid_matches_continuum():
    # midpoint sums converge to the continuum variance as h, dt shrink
    T = 64.0
    cont = sigma2_nK(SEP, UNIT, 1, T)
    g = build_grid(UNIT, 1 / 32, 0.25, 256)
    assert sigma2_grid(SEP, g, 1) == pytest.approx(cont, rel=0.01)


def test_sigma2_grid_matches_cholesky_matrix():
    g = build_grid(UNIT, 0.25, 1.0, 16)
    s = CholeskySampler(SEP, g)
    w = np.repeat(g.weights, g.n_t) * g.dt
    for n in (1, 2):
        assert sigma2_grid(SEP, g, n) == pytest.approx(math.factorial(n) * w @ s.cov**n @ w, rel=1e-12)
