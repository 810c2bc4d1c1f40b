"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def ml_taylor(coef, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = -x
    # Horner from the highest order term; coef is already truncated by the caller
    s = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        s = s * y + c
    return s


def sojourn_sums(z, w, dt, u, n_max):
    z = np.ascontiguousarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    m1 = float(w @ (z >= u).sum(axis=1)) * dt
    m2 = float(w @ (np.abs(z) >= u).sum(axis=1)) * dt
    eta = np.zeros(n_max + 1)
    if n_max >= 1:
        h0 = np.ones_like(z)
        h1 = z
        eta[1] = float(w @ h1.sum(axis=1)) * dt
        for n in range(2, n_max + 1):
            h0, h1 = h1, z * h1 - (n - 1) * h0
            eta[n] = float(w @ h1.sum(axis=1)) * dt
    return m1, m2, eta
