# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-marching kernels; semantics defined by _reference.py.

Field updates are plain assignments and multiplications applied in the
same order as the reference, so stored fields agree bitwise; norms use
a linear accumulator and may differ from numpy's pairwise sums at the
last few ulps.
"""
from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef double _weighted_norm(double[::1] x, double[::1] w) nogil:
    cdef Py_ssize_t m
    cdef double acc = 0.0
    for m in range(x.shape[0]):
        acc += w[m] * x[m] * x[m]
    return sqrt(acc)


def closed_loop_march(x0, first_nodes, scale, left_values, weights, snap_steps):
    """See transportchain.kernels._reference.closed_loop_march."""
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef cnp.int64_t[::1] fn = np.ascontiguousarray(first_nodes, dtype=np.int64)
    cdef double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(left_values, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.int64_t[::1] ss = np.ascontiguousarray(snap_steps, dtype=np.int64)

    cdef Py_ssize_t n_steps = sc.shape[0]
    cdef Py_ssize_t n_nodes = x.shape[0]
    cdef Py_ssize_t n_first = fn.shape[0]
    cdef Py_ssize_t n_snaps = ss.shape[0]

    norms_arr = np.empty(n_steps + 1, dtype=np.float64)
    traces_arr = np.empty((n_steps + 1, n_first), dtype=np.float64)
    snaps_arr = np.empty((n_snaps, n_nodes), dtype=np.float64)
    cdef double[::1] norms = norms_arr
    cdef double[:, ::1] traces = traces_arr
    cdef double[:, ::1] snaps = snaps_arr

    cdef Py_ssize_t k, m, j, si = 0
    with nogil:
        norms[0] = _weighted_norm(x, w)
        for j in range(n_first):
            traces[0, j] = x[fn[j] - 1]
    if si < n_snaps and ss[si] == 0:
        snaps_arr[si] = np.asarray(x)
        si += 1
    for k in range(n_steps):
        with nogil:
            for m in range(n_nodes - 1, 0, -1):
                x[m] = x[m - 1]
            for j in range(n_first):
                x[fn[j]] *= sc[k]
            x[0] = lv[k]
            norms[k + 1] = _weighted_norm(x, w)
            for j in range(n_first):
                traces[k + 1, j] = x[fn[j] - 1]
        if si < n_snaps and ss[si] == k + 1:
            snaps_arr[si] = np.asarray(x)
            si += 1
    return norms_arr, traces_arr, snaps_arr


def upwind_march(x0, first_nodes, double lam, ghost_add, left_values, weights,
                 snap_steps):
    """See transportchain.kernels._reference.upwind_march."""
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef cnp.int64_t[::1] fn = np.ascontiguousarray(first_nodes, dtype=np.int64)
    cdef double[:, ::1] ga = np.ascontiguousarray(ghost_add, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(left_values, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.int64_t[::1] ss = np.ascontiguousarray(snap_steps, dtype=np.int64)

    cdef Py_ssize_t n_steps = ga.shape[0]
    cdef Py_ssize_t n_nodes = x.shape[0]
    cdef Py_ssize_t n_first = fn.shape[0]
    cdef Py_ssize_t n_snaps = ss.shape[0]

    norms_arr = np.empty(n_steps + 1, dtype=np.float64)
    snaps_arr = np.empty((n_snaps, n_nodes), dtype=np.float64)
    cdef double[::1] norms = norms_arr
    cdef Py_ssize_t k, m, j, si = 0

    with nogil:
        norms[0] = _weighted_norm(x, w)
    if si < n_snaps and ss[si] == 0:
        snaps_arr[si] = np.asarray(x)
        si += 1
    for k in range(n_steps):
        with nogil:
            for m in range(n_nodes - 1, 0, -1):
                x[m] = x[m] - lam * (x[m] - x[m - 1])
            for j in range(n_first):
                x[fn[j]] += lam * ga[k, j]
            x[0] = lv[k]
            norms[k + 1] = _weighted_norm(x, w)
        if si < n_snaps and ss[si] == k + 1:
            snaps_arr[si] = np.asarray(x)
            si += 1
    return np.asarray(x), norms_arr, snaps_arr
