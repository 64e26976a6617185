# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled chain engine. Same contract as ``_engine_py.advance``."""
import numpy as np

from libc.math cimport log, log1p, pow, sqrt

cdef enum:
    RWM = 0
    PCN = 1
    MPCN = 2
    STUDENT = 0
    GAUSSIAN = 1
    GENEXP = 2


cdef inline double _logpi(int family, double a, double b, double r2) nogil:
    if family == STUDENT:
        return -a * log1p(r2)
    if family == GAUSSIAN:
        return -a * r2
    return -a * pow(r2, b)


def advance(int kind, int family, double a, double b, double tau,
            double[:, ::1] X, double[::1] lp,
            double[:, :, ::1] W, double[:, ::1] S, double[:, ::1] logu,
            long long[::1] acc, unsigned char[::1] active,
            double hit_r2, long long t0, long long[::1] hit_at,
            double[:, :, ::1] out):
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef bint record = out.shape[0] == n and n > 0
    cdef bint hitting = hit_r2 >= 0.0
    cdef double sr = 0.0, s1r = 0.0, half_d = 0.5 * d
    cdef double r2x, r2y, coef, lpy, ratio, v
    cdef double[::1] y
    if kind != RWM:
        sr = sqrt(tau)
        s1r = sqrt(1.0 - tau)
    y = np.empty(d, dtype=np.float64)
    with nogil:
        for i in range(n):
            for j in range(m):
                if not active[j]:
                    if record:
                        for k in range(d):
                            out[i, j, k] = X[j, k]
                    continue
                r2x = 0.0
                for k in range(d):
                    r2x = r2x + X[j, k] * X[j, k]
                if kind == RWM:
                    for k in range(d):
                        y[k] = X[j, k] + tau * W[i, j, k]
                elif kind == PCN:
                    for k in range(d):
                        y[k] = sr * X[j, k] + s1r * W[i, j, k]
                else:
                    coef = s1r * (sqrt(r2x) * S[i, j])
                    for k in range(d):
                        y[k] = sr * X[j, k] + coef * W[i, j, k]
                r2y = 0.0
                for k in range(d):
                    r2y = r2y + y[k] * y[k]
                lpy = _logpi(family, a, b, r2y)
                if kind == RWM:
                    ratio = lpy - lp[j]
                elif kind == PCN:
                    ratio = (lpy + 0.5 * r2y) - (lp[j] + 0.5 * r2x)
                else:
                    ratio = (lpy + half_d * log(r2y)) - (lp[j] + half_d * log(r2x))
                # NaN ratio compares false: reject
                if logu[i, j] <= ratio:
                    for k in range(d):
                        X[j, k] = y[k]
                    lp[j] = lpy
                    acc[j] += 1
                    r2x = r2y
                if record:
                    for k in range(d):
                        out[i, j, k] = X[j, k]
                if hitting and r2x <= hit_r2:
                    hit_at[j] = t0 + i + 1
                    active[j] = 0
