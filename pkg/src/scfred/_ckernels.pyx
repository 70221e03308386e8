# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _psi(double x) nogil:
    if x <= 0.0:
        return 0.0
    return exp(-1.0 / x)


cdef inline double _dpsi(double x) nogil:
    if x <= 0.0:
        return 0.0
    return exp(-1.0 / x) / (x * x)


def cutoff(s):
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    dout = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[::1] dv = dout
    cdef double y, a, b, den
    with nogil:
        for i in range(n):
            y = 0.5 * (sv[i] + 1.0)
            a = _psi(y)
            b = _psi(1.0 - y)
            den = a + b
            ov[i] = 1.0 - a / den
            dv[i] = -0.5 * (_dpsi(y) * b + a * _dpsi(1.0 - y)) / (den * den)
    return out, dout


def glue_pointwise(beta, h, k):
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(k, dtype=np.float64)
    cdef Py_ssize_t n = hv.shape[0], d = hv.shape[1], i, j
    glued = np.empty((n, d), dtype=np.float64)
    anti = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] gv = glued
    cdef double[:, ::1] av = anti
    cdef double b, c
    with nogil:
        for i in range(n):
            b = bv[i]
            c = 1.0 - b
            for j in range(d):
                gv[i, j] = b * hv[i, j] + c * kv[i, j]
                av[i, j] = -c * hv[i, j] + b * kv[i, j]
    return glued, anti


def unglue_pointwise(beta, glued, anti):
    cdef const double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef const double[:, ::1] gv = np.ascontiguousarray(glued, dtype=np.float64)
    cdef const double[:, ::1] av = np.ascontiguousarray(anti, dtype=np.float64)
    cdef Py_ssize_t n = gv.shape[0], d = gv.shape[1], i, j
    h = np.empty((n, d), dtype=np.float64)
    k = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] hv = h
    cdef double[:, ::1] kv = k
    cdef double b, c, det
    with nogil:
        for i in range(n):
            b = bv[i]
            c = 1.0 - b
            det = b * b + c * c
            for j in range(d):
                hv[i, j] = (b * gv[i, j] - c * av[i, j]) / det
                kv[i, j] = (c * gv[i, j] + b * av[i, j]) / det
    return h, k


def gf2_row_reduce(M):
    R = (np.asarray(M, dtype=np.uint8) % 2).copy(order="C")
    cdef cnp.uint8_t[:, ::1] rv = R
    cdef Py_ssize_t m = rv.shape[0], n = rv.shape[1]
    cdef Py_ssize_t row = 0, col, r, p, c
    cdef cnp.uint8_t tmp
    pivots = []
    for col in range(n):
        if row >= m:
            break
        p = -1
        for r in range(row, m):
            if rv[r, col]:
                p = r
                break
        if p < 0:
            continue
        if p != row:
            for c in range(n):
                tmp = rv[row, c]
                rv[row, c] = rv[p, c]
                rv[p, c] = tmp
        for r in range(m):
            if r != row and rv[r, col]:
                for c in range(col, n):
                    rv[r, c] ^= rv[row, c]
        pivots.append(col)
        row += 1
    return R, pivots
