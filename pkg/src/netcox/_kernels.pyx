# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot accumulation loops.

Semantics mirror netcox._kernels_py exactly; keep the two in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, fabs

cnp.import_array()

EPANECHNIKOV_ID = 0
TRIANGULAR_ID = 1
BOX_ID = 2


cdef inline double _kval(double u, int kernel_id) noexcept nogil:
    if u < -1.0 or u > 1.0:
        return 0.0
    if kernel_id == 0:
        return 0.75 * (1.0 - u * u)
    if kernel_id == 1:
        return 1.0 - fabs(u)
    return 0.5


def kernel_values(u, kernel_id):
    u_arr = np.ascontiguousarray(np.atleast_1d(u), dtype=np.float64)
    shape = u_arr.shape
    flat = u_arr.ravel()
    out = np.empty_like(flat)
    cdef double[::1] uv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i, m = flat.shape[0]
    cdef int kid = kernel_id
    if kid not in (0, 1, 2):
        raise ValueError(f"unknown kernel id {kernel_id}")
    for i in range(m):
        ov[i] = _kval(uv[i], kid)
    return out.reshape(shape)


def segment_kernel_mass(lo, hi, double t0, double h, int kernel_id,
                        double max_step):
    lo_arr = np.ascontiguousarray(lo, dtype=np.float64)
    hi_arr = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t m = lo_arr.shape[0]
    out_arr = np.zeros(m, dtype=np.float64)
    if m == 0:
        return out_arr
    cdef double[::1] lov = lo_arr
    cdef double[::1] hiv = hi_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef long n
    cdef double length, delta, acc
    for i in range(m):
        length = hiv[i] - lov[i]
        if length <= 0.0:
            continue
        n = <long> ceil(length / max_step)
        if n < 1:
            n = 1
        delta = length / n
        acc = 0.5 * (_kval((lov[i] - t0) / h, kernel_id)
                     + _kval((lov[i] + delta * n - t0) / h, kernel_id))
        for k in range(1, n):
            acc += _kval((lov[i] + delta * k - t0) / h, kernel_id)
        out[i] = acc * delta / h
    return out_arr


def cox_accumulate(X, w, theta):
    X_arr = np.ascontiguousarray(X, dtype=np.float64)
    w_arr = np.ascontiguousarray(w, dtype=np.float64)
    t_arr = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t m = X_arr.shape[0]
    cdef Py_ssize_t q = t_arr.shape[0]
    g_arr = np.zeros(q, dtype=np.float64)
    h_arr = np.zeros((q, q), dtype=np.float64)
    if m == 0:
        return 0.0, g_arr, h_arr
    cdef double[:, ::1] Xv = X_arr
    cdef double[::1] wv = w_arr
    cdef double[::1] tv = t_arr
    cdef double[::1] gv = g_arr
    cdef double[:, ::1] hv = h_arr
    cdef double val = 0.0, eta, e
    cdef Py_ssize_t i, a, b
    for i in range(m):
        eta = 0.0
        for a in range(q):
            eta += Xv[i, a] * tv[a]
        e = wv[i] * exp(eta)
        val += e
        for a in range(q):
            gv[a] += e * Xv[i, a]
            for b in range(q):
                hv[a, b] += e * Xv[i, a] * Xv[i, b]
    return val, g_arr, h_arr
