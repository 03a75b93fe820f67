# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled periodic offset-scan kernels.

Per output element the offsets are accumulated in the order given, which is
the order the NumPy fallback in ``_pykernels`` uses, so both backends agree
bit for bit.  Parallelism (OpenMP, when available) is over offsets for the
max scan and over grid rows for the weighted sum.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs

cnp.import_array()


cdef inline double _row_max(const double[:, ::1] v, Py_ssize_t i, Py_ssize_t ii,
                            Py_ssize_t b, Py_ssize_t n1) noexcept nogil:
    cdef Py_ssize_t j
    cdef double m = 0.0, d
    for j in range(b):
        d = fabs(v[ii, j - b + n1] - v[i, j])
        if d > m:
            m = d
    for j in range(b, n1):
        d = fabs(v[ii, j - b] - v[i, j])
        if d > m:
            m = d
    return m


def offset_max_abs_diff(const double[:, ::1] v, const long[::1] di, const long[::1] dj):
    """Per offset ``t``: max over the grid of ``|v[x - t] - v[x]|`` (periodic)."""
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], nk = di.shape[0]
    cdef Py_ssize_t k, i, ii, a, b
    cdef double m, d
    out = np.zeros(nk, dtype=np.float64)
    cdef double[::1] res = out
    for k in prange(nk, nogil=True, schedule="static"):
        a = ((di[k] % n0) + n0) % n0
        b = ((dj[k] % n1) + n1) % n1
        m = 0.0
        for i in range(n0):
            ii = i - a
            if ii < 0:
                ii = ii + n0
            d = _row_max(v, i, ii, b, n1)
            if d > m:
                m = d
        res[k] = m
    return out


def offset_weighted_diff(const double[:, ::1] v, const long[::1] di, const long[::1] dj,
                         const double[::1] w):
    """``out[x] = sum_k w[k] * (v[x - t_k] - v[x])`` with periodic wrap."""
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], nk = di.shape[0]
    cdef Py_ssize_t k, i, j, ii, a, b
    cdef double wk
    out = np.zeros((n0, n1), dtype=np.float64)
    cdef double[:, ::1] res = out
    for i in prange(n0, nogil=True, schedule="static"):
        for k in range(nk):
            a = ((di[k] % n0) + n0) % n0
            b = ((dj[k] % n1) + n1) % n1
            wk = w[k]
            ii = i - a
            if ii < 0:
                ii = ii + n0
            for j in range(b):
                res[i, j] = res[i, j] + wk * (v[ii, j - b + n1] - v[i, j])
            for j in range(b, n1):
                res[i, j] = res[i, j] + wk * (v[ii, j - b] - v[i, j])
    return out
