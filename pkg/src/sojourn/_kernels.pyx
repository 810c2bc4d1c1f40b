# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`sojourn._fallback` exactly."""

import numpy as np

from libc.math cimport fabs


def ml_taylor(const double[::1] coef, const double[::1] x):
    """Evaluate ``sum_k coef[k] * (-x)**k`` element-wise with early stopping."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t ncoef = coef.shape[0]
    cdef Py_ssize_t i, k
    cdef double s, p, term, y
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(n):
            y = -x[i]
            s = coef[0]
            p = 1.0
            for k in range(1, ncoef):
                p = p * y
                term = coef[k] * p
                s = s + term
                if fabs(term) <= 1e-17 * fabs(s):
                    break
            res[i] = s
    return out


def sojourn_sums(const double[:, ::1] z, const double[::1] w, double dt, double u, int n_max):
    """One pass over a field sample: M1, M2 and eta_1..eta_{n_max}.

    Row partial sums are accumulated first and then combined in row order,
    so the result does not depend on how the caller chunks replicates.
    """
    cdef Py_ssize_t ns = z.shape[0]
    cdef Py_ssize_t nt = z.shape[1]
    cdef Py_ssize_t s, t
    cdef int n
    cdef double v, h0, h1, h2, r1, r2
    cdef double m1 = 0.0, m2 = 0.0
    eta_out = np.zeros(n_max + 1, dtype=np.float64)
    row_out = np.zeros(n_max + 1, dtype=np.float64)
    cdef double[::1] eta = eta_out
    cdef double[::1] row = row_out
    with nogil:
        for s in range(ns):
            r1 = 0.0
            r2 = 0.0
            for n in range(n_max + 1):
                row[n] = 0.0
            for t in range(nt):
                v = z[s, t]
                if v >= u:
                    r1 += 1.0
                if fabs(v) >= u:
                    r2 += 1.0
                h0 = 1.0
                h1 = v
                if n_max >= 1:
                    row[1] += h1
                for n in range(2, n_max + 1):
                    h2 = v * h1 - (n - 1) * h0
                    row[n] += h2
                    h0 = h1
                    h1 = h2
            m1 += w[s] * r1
            m2 += w[s] * r2
            for n in range(1, n_max + 1):
                eta[n] += w[s] * row[n]
        for n in range(1, n_max + 1):
            eta[n] *= dt
    return m1 * dt, m2 * dt, eta_out
