# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled SMO inner loop.

Mirrors _smo_py.smo_loop operation-for-operation (same floating-point order,
first-index tie breaking) so results are bit-identical to the numpy fallback.
Build with -ffp-contract=off to keep the C arithmetic unfused.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def smo_loop(double[:, ::1] K, double[::1] y, double C, double tol,
             long max_iter):
    cdef Py_ssize_t n = y.shape[0]
    alpha_arr = np.zeros(n)
    grad_arr = np.full(n, -1.0)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr

    cdef Py_ssize_t i, j, t
    cdef long iteration = 0
    cdef double gap = 0.0
    cdef double v_t, m, big_m, quad, d
    cdef double d_min_i, d_max_i, d_min_j, d_max_j, lo, hi
    cdef bint up_t, low_t

    while iteration < max_iter:
        i = -1
        j = -1
        m = 0.0
        big_m = 0.0
        for t in range(n):
            v_t = -(y[t] * grad[t])
            if y[t] > 0.0:
                up_t = alpha[t] < C
                low_t = alpha[t] > 0.0
            else:
                up_t = alpha[t] > 0.0
                low_t = alpha[t] < C
            if up_t and (i == -1 or v_t > m):
                i = t
                m = v_t
            if low_t and (j == -1 or v_t < big_m):
                j = t
                big_m = v_t
        if i == -1 or j == -1:
            gap = 0.0
            break
        gap = m - big_m
        if gap <= tol:
            break

        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        d = gap / quad

        if y[i] > 0.0:
            d_min_i = -alpha[i]
            d_max_i = C - alpha[i]
        else:
            d_min_i = alpha[i] - C
            d_max_i = alpha[i]
        if y[j] > 0.0:
            d_min_j = alpha[j] - C
            d_max_j = alpha[j]
        else:
            d_min_j = -alpha[j]
            d_max_j = C - alpha[j]
        lo = d_min_i if d_min_i > d_min_j else d_min_j
        hi = d_max_i if d_max_i < d_max_j else d_max_j
        if d > hi:
            d = hi
        if d < lo:
            d = lo

        alpha[i] = alpha[i] + y[i] * d
        alpha[j] = alpha[j] - y[j] * d
        for t in range(n):
            grad[t] = grad[t] + (d * y[t]) * (K[i, t] - K[j, t])
        iteration += 1

    return alpha_arr, grad_arr, int(iteration), float(gap)
