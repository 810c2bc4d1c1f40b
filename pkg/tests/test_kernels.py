import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose
from scipy import special

from sojourn import _fallback, kernels

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


@compiled
@pytest.mark.parametrize("u", [-math.inf, -0.5, 0.0, 1.0, 3.0])
@pytest.mark.parametrize("n_max", [0, 1, 4, 12])
def test_sojourn_sums_backends_agree(u, n_max):
    rng = np.random.default_rng(int(10 * n_max + (u if math.isfinite(u) else -9)) + 100)
    z = rng.standard_normal((7, 300))
    w = rng.uniform(0.1, 1.0, 7)
    a = kernels.sojourn_sums(z, w, 0.5, u, n_max)
    b = _fallback.sojourn_sums(z, w, 0.5, u, n_max)
    assert a[0] == pytest.approx(b[0], rel=1e-14) and a[1] == pytest.approx(b[1], rel=1e-14)
    assert_allclose(a[2], b[2], rtol=1e-11, atol=1e-9)
    assert len(a[2]) == n_max + 1 and a[2][0] == 0.0


@compiled
@given(arrays(np.float64, (3, 17), elements=st.floats(-4, 4)), st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_sojourn_sums_property(z, u):
    w = np.array([0.5, 1.0, 2.0])
    a = kernels.sojourn_sums(z, w, 1.0, u, 3)
    b = _fallback.sojourn_sums(z, w, 1.0, u, 3)
    assert a[0] == pytest.approx(b[0]) and a[1] == pytest.approx(b[1])
    assert_allclose(a[2], b[2], rtol=1e-10, atol=1e-8)
    # M2 counts both tails, so it dominates M1 for u >= 0
    if u >= 0:
        assert a[1] >= a[0]


def test_fallback_hermite_values():
    z = np.array([[0.3, -1.2, 2.0]])
    _, _, eta = _fallback.sojourn_sums(z, np.ones(1), 1.0, 0.0, 5)
    for n in range(1, 6):
        assert eta[n] == pytest.approx(special.eval_hermitenorm(n, z).sum(), rel=1e-13)


@compiled
def test_ml_taylor_backends_agree():
    coef = special.rgamma(0.7 * np.arange(200) + 1.0)
    x = np.linspace(0.0, 3.0, 101)
    assert_allclose(kernels.ml_taylor(coef, x), _fallback.ml_taylor(coef, x), rtol=1e-12, atol=1e-15)


def test_env_forces_fallback():
    env = {**os.environ, "SOJOURN_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from sojourn import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True).stdout.strip()
    assert out == "python"
