# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan kernels. Same signatures as ``_pykernels``."""
import numpy as np


def lti_scan(const double[:, ::1] Abar, const double[::1] Bbar, const double[::1] Cbar,
             const double[::1] x, const double[::1] h0):
    cdef Py_ssize_t L = x.shape[0], n = Abar.shape[0], k, i, j
    cdef double acc, xk
    h_arr = np.array(h0, dtype=np.float64)
    tmp_arr = np.empty(n)
    y_arr = np.empty(L)
    cdef double[::1] h = h_arr, tmp = tmp_arr, y = y_arr
    for k in range(L):
        xk = x[k]
        for i in range(n):
            acc = Bbar[i] * xk
            for j in range(n):
                acc += Abar[i, j] * h[j]
            tmp[i] = acc
        acc = 0.0
        for i in range(n):
            h[i] = tmp[i]
            acc += Cbar[i] * h[i]
        y[k] = acc
    return y_arr, h_arr


def causal_conv(const double[::1] kernel, const double[::1] x):
    cdef Py_ssize_t L = x.shape[0], k, i
    cdef double acc
    y_arr = np.empty(L)
    cdef double[::1] y = y_arr
    for k in range(L):
        acc = 0.0
        for i in range(k + 1):
            acc += kernel[i] * x[k - i]
        y[k] = acc
    return y_arr


def krylov(const double[:, ::1] Abar, const double[::1] Bbar, const double[::1] Cbar, Py_ssize_t L):
    cdef Py_ssize_t n = Abar.shape[0], k, i, j
    cdef long long muls = 0
    cdef double acc
    K_arr = np.empty((n, L))
    ker_arr = np.empty(L)
    cdef double[:, ::1] K = K_arr
    cdef double[::1] ker = ker_arr
    for i in range(n):
        K[i, 0] = Bbar[i]
    for k in range(1, L):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Abar[i, j] * K[j, k - 1]
                muls += 1
            K[i, k] = acc
    for k in range(L):
        acc = 0.0
        for i in range(n):
            acc += Cbar[i] * K[i, k]
            muls += 1
        ker[k] = acc
    return K_arr, ker_arr, int(muls)


def diag_scan_fwd(const double[:, :, ::1] dA, const double[:, :, ::1] dBx, const double[:, ::1] C):
    cdef Py_ssize_t L = dA.shape[0], D = dA.shape[1], N = dA.shape[2], k, d, m
    cdef double h, acc
    hs_arr = np.empty((L, D, N))
    y_arr = np.empty((L, D))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, ::1] y = y_arr
    for d in range(D):
        for m in range(N):
            h = 0.0
            for k in range(L):
                h = dA[k, d, m] * h + dBx[k, d, m]
                hs[k, d, m] = h
    for k in range(L):
        for d in range(D):
            acc = 0.0
            for m in range(N):
                acc += hs[k, d, m] * C[k, m]
            y[k, d] = acc
    return y_arr, hs_arr


def diag_scan_bwd(const double[:, :, ::1] dA, const double[:, ::1] C, const double[:, ::1] gy):
    cdef Py_ssize_t L = dA.shape[0], D = dA.shape[1], N = dA.shape[2], k, d, m
    cdef double carry
    gh_arr = np.empty((L, D, N))
    cdef double[:, :, ::1] gh = gh_arr
    for d in range(D):
        for m in range(N):
            carry = 0.0
            for k in range(L - 1, -1, -1):
                carry = carry + gy[k, d] * C[k, m]
                gh[k, d, m] = carry
                carry = dA[k, d, m] * carry
    return gh_arr
