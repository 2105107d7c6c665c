# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled orbit kernels. Contract identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, INFINITY

cnp.import_array()

ZERO_REL_TOL = 64 * np.finfo(float).eps


cdef void _matmul_into(const double[:, ::1] A, double[:, ::1] B, double[:, ::1] out,
                       Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(n):
                acc += A[i, l] * B[l, j]
            out[i, j] = acc


def chain_product(mats):
    cdef double[:, :, ::1] M = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t L = M.shape[0], n = M.shape[1], t
    out_arr = np.eye(n)
    tmp_arr = np.empty((n, n))
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] tmp = tmp_arr
    with nogil:
        for t in range(L):
            _matmul_into(M[t], out, tmp, n, n)
            out[:, :] = tmp
    return out_arr


cdef void _complement_column(double[:, ::1] Q, Py_ssize_t j, Py_ssize_t n,
                             double[::1] v, double[::1] best) noexcept nogil:
    cdef Py_ssize_t k, i, l, p
    cdef double c, nv, best_norm = -1.0
    for k in range(n):
        for l in range(n):
            v[l] = 0.0
        v[k] = 1.0
        for p in range(2):
            for i in range(j):
                c = 0.0
                for l in range(n):
                    c += Q[l, i] * v[l]
                for l in range(n):
                    v[l] -= c * Q[l, i]
        nv = 0.0
        for l in range(n):
            nv += v[l] * v[l]
        nv = sqrt(nv)
        if nv > best_norm:
            best_norm = nv
            for l in range(n):
                best[l] = v[l]
    for l in range(n):
        Q[l, j] = best[l] / best_norm


cdef void _mgs(double[:, ::1] Q, double[::1] logs_row, Py_ssize_t n, Py_ssize_t k,
               double zero_rel_tol, double[::1] v, double[::1] w) noexcept nogil:
    cdef Py_ssize_t i, j, l, p
    cdef double c, r, orig
    for j in range(k):
        orig = 0.0
        for l in range(n):
            v[l] = Q[l, j]
            orig += v[l] * v[l]
        orig = sqrt(orig)
        for p in range(2):
            for i in range(j):
                c = 0.0
                for l in range(n):
                    c += Q[l, i] * v[l]
                for l in range(n):
                    v[l] -= c * Q[l, i]
        r = 0.0
        for l in range(n):
            r += v[l] * v[l]
        r = sqrt(r)
        if orig == 0.0 or r <= zero_rel_tol * orig:
            logs_row[j] = -INFINITY
            _complement_column(Q, j, n, v, w)
        else:
            logs_row[j] = log(r)
            for l in range(n):
                Q[l, j] = v[l] / r


def qr_steps(mats, frame, Py_ssize_t stride, double zero_rel_tol=ZERO_REL_TOL):
    cdef double[:, :, ::1] M = np.ascontiguousarray(mats, dtype=np.float64)
    F_arr = np.array(frame, dtype=np.float64, order="C")
    cdef double[:, ::1] F = F_arr
    cdef Py_ssize_t L = M.shape[0], n = F.shape[0], k = F.shape[1]
    cdef Py_ssize_t nblocks = (L + stride - 1) // stride
    logs_arr = np.empty((nblocks, k))
    cdef double[:, ::1] logs = logs_arr
    cdef double[:, ::1] tmp = np.empty((n, k))
    cdef double[::1] v = np.empty(n)
    cdef double[::1] w = np.empty(n)
    cdef Py_ssize_t b, t = 0, stop
    with nogil:
        for b in range(nblocks):
            stop = t + stride
            if stop > L:
                stop = L
            while t < stop:
                _matmul_into(M[t], F, tmp, n, k)
                F[:, :] = tmp
                t += 1
            _mgs(F, logs[b], n, k, zero_rel_tol, v, w)
    return logs_arr, F_arr


def hilbert_diameter(G_in):
    cdef double[:, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef Py_ssize_t n = G.shape[0], k = G.shape[1], a, b, i
    cdef double diam = 0.0, r, lo, hi
    for a in range(k):
        for b in range(a + 1, k):
            lo = INFINITY
            hi = -INFINITY
            for i in range(n):
                r = log(G[i, a]) - log(G[i, b])
                if r < lo:
                    lo = r
                if r > hi:
                    hi = r
            if hi - lo > diam:
                diam = hi - lo
    return diam


def cone_push(mats, G_in):
    cdef double[:, :, ::1] M = np.ascontiguousarray(mats, dtype=np.float64)
    G_arr = np.array(G_in, dtype=np.float64, order="C")
    cdef double[:, ::1] G = G_arr
    cdef Py_ssize_t L = M.shape[0], n = G.shape[0], k = G.shape[1], t, i, j
    cdef double[:, ::1] tmp = np.empty((n, k))
    cdef double s
    with nogil:
        for t in range(L):
            _matmul_into(M[t], G, tmp, n, k)
            for j in range(k):
                s = 0.0
                for i in range(n):
                    s += tmp[i, j]
                for i in range(n):
                    G[i, j] = tmp[i, j] / s
    return G_arr, hilbert_diameter(G_arr)
