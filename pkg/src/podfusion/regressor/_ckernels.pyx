# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled data-movement kernels for the regressor (see _pykernels for the
NumPy twins and the exact semantics)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int k, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1
    out_arr = np.zeros((n * ho * wo, c * k * k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ch, ki, kj, r, col, yy, xx
    with nogil:
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    r = (b * ho + i) * wo + j
                    col = 0
                    for ch in range(c):
                        for ki in range(k):
                            yy = i + ki - pad
                            for kj in range(k):
                                xx = j + kj - pad
                                if 0 <= yy < h and 0 <= xx < w:
                                    out[r, col] = x[b, ch, yy, xx]
                                col += 1
    return out_arr


def col2im(const double[:, ::1] cols, tuple x_shape, int k, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t hp = h + 2 * pad, wp = w + 2 * pad
    cdef Py_ssize_t ho = hp - k + 1, wo = wp - k + 1
    dxp_arr = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] dxp = dxp_arr
    cdef Py_ssize_t b, ch, ki, kj, i, j, col
    # same accumulation order as the NumPy twin: kernel offset outermost
    with nogil:
        for b in range(n):
            for ch in range(c):
                for ki in range(k):
                    for kj in range(k):
                        col = (ch * k + ki) * k + kj
                        for i in range(ho):
                            for j in range(wo):
                                dxp[b, ch, i + ki, j + kj] += cols[(b * ho + i) * wo + j, col]
    return np.ascontiguousarray(dxp_arr[:, :, pad:pad + h, pad:pad + w])


def maxpool_forward(const double[:, :, :, ::1] x, int size):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // size, wo = x.shape[3] // size
    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    arg_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ch, i, j, di, dj
    cdef double best, v
    cdef cnp.int64_t best_k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[b, ch, i * size, j * size]
                        best_k = 0
                        for di in range(size):
                            for dj in range(size):
                                v = x[b, ch, i * size + di, j * size + dj]
                                if v > best:
                                    best = v
                                    best_k = di * size + dj
                        out[b, ch, i, j] = best
                        arg[b, ch, i, j] = best_k
    return out_arr, arg_arr


def maxpool_backward(const double[:, :, :, ::1] dout, const cnp.int64_t[:, :, :, ::1] arg,
                     tuple x_shape, int size):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], ho = dout.shape[2], wo = dout.shape[3]
    dx_arr = np.zeros(x_shape, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j, kk
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        kk = arg[b, ch, i, j]
                        dx[b, ch, i * size + kk // size, j * size + kk % size] = dout[b, ch, i, j]
    return dx_arr
