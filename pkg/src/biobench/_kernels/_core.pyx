# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: stage log-likelihood and the SVM pair solver.

Numerically interchangeable with ``fallback``; see that module for the
contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log, pi


def stage_loglik(Z, mu, sd):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    sd = np.ascontiguousarray(sd, dtype=np.float64)
    out = np.empty((Z.shape[0], mu.shape[0]), dtype=np.float64)
    _stage_loglik(Z, mu, sd, out)
    return out


cdef void _stage_loglik(double[:, ::1] Z, double[:, ::1] mu, double[::1] sd,
                        double[:, ::1] out) noexcept:
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], S = mu.shape[0]
    cdef Py_ssize_t i, s, j
    cdef double acc, diff, const
    cdef double[::1] w = np.empty(d)
    const = -0.5 * d * log(2.0 * pi)
    for j in range(d):
        w[j] = 1.0 / (sd[j] * sd[j])
        const -= log(sd[j])
    for i in range(n):
        for s in range(S):
            acc = 0.0
            for j in range(d):
                diff = Z[i, j] - mu[s, j]
                acc += diff * diff * w[j]
            out[i, s] = -0.5 * acc + const


def smo_solve(double[:, ::1] K, double[::1] y, double[::1] cap,
              double tol, long max_iter,
              double[::1] alpha, double[::1] grad):
    cdef Py_ssize_t n = K.shape[0]
    cdef Py_ssize_t it, i, j, k
    cdef double m, M, gap, a, d, myg, b
    gap = INFINITY
    b = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        m = -INFINITY
        M = INFINITY
        i = -1
        j = -1
        for k in range(n):
            myg = -(y[k] * grad[k])
            if (y[k] > 0 and alpha[k] < cap[k]) or (y[k] < 0 and alpha[k] > 0):
                if myg > m:
                    m = myg
                    i = k
            if (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < cap[k]):
                if myg < M:
                    M = myg
                    j = k
        if i < 0 or j < 0:
            break
        gap = m - M
        b = 0.5 * (m + M)
        if gap <= tol:
            return it - 1, gap, b
        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if a <= 1e-12:
            a = 1e-12
        d = gap / a
        if y[i] > 0:
            if d > cap[i] - alpha[i]:
                d = cap[i] - alpha[i]
        else:
            if d > alpha[i]:
                d = alpha[i]
        if y[j] > 0:
            if d > alpha[j]:
                d = alpha[j]
        else:
            if d > cap[j] - alpha[j]:
                d = cap[j] - alpha[j]
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        for k in range(n):
            grad[k] += d * y[k] * (K[k, i] - K[k, j])
    return it, gap, b
