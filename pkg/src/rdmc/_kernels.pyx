# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: unit-covariance mixture energies and RBF kernel sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


cdef inline double _sqdist(const double[:, ::1] A, Py_ssize_t i,
                           const double[:, ::1] B, Py_ssize_t j, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t k
    for k in range(d):
        diff = A[i, k] - B[j, k]
        acc += diff * diff
    return acc


def gmm_energy(const double[:, ::1] X, const double[:, ::1] means, const double[::1] log_w):
    cdef Py_ssize_t n = X.shape[0], m = means.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j
    cdef double top, acc
    out = np.empty(n)
    cdef double[::1] f = out
    logits_arr = np.empty(m)
    cdef double[::1] logits = logits_arr
    with nogil:
        for i in range(n):
            top = -1e308
            for j in range(m):
                logits[j] = log_w[j] - 0.5 * _sqdist(X, i, means, j, d)
                if logits[j] > top:
                    top = logits[j]
            acc = 0.0
            for j in range(m):
                acc += exp(logits[j] - top)
            f[i] = -(top + log(acc))
    return out


def gmm_energy_grad(const double[:, ::1] X, const double[:, ::1] means, const double[::1] log_w):
    cdef Py_ssize_t n = X.shape[0], m = means.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double top, acc, r
    energy_arr = np.empty(n)
    grad_arr = np.empty((n, d))
    logits_arr = np.empty(m)
    cdef double[::1] f = energy_arr
    cdef double[:, ::1] g = grad_arr
    cdef double[::1] logits = logits_arr
    with nogil:
        for i in range(n):
            top = -1e308
            for j in range(m):
                logits[j] = log_w[j] - 0.5 * _sqdist(X, i, means, j, d)
                if logits[j] > top:
                    top = logits[j]
            acc = 0.0
            for j in range(m):
                logits[j] = exp(logits[j] - top)
                acc += logits[j]
            f[i] = -(top + log(acc))
            for k in range(d):
                g[i, k] = X[i, k]
            for j in range(m):
                r = logits[j] / acc
                for k in range(d):
                    g[i, k] -= r * means[j, k]
    return energy_arr, grad_arr


def rbf_kernel_sum(const double[:, ::1] X, const double[:, ::1] Y, double gamma):
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(m):
                row += exp(-gamma * _sqdist(X, i, Y, j, d))
            total += row
    return total
