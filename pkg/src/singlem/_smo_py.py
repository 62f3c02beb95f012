"""Pure-numpy SMO inner loop; reference fallback for the compiled kernel.

Same algorithm and floating-point operation order as the Cython extension in
_smo.pyx, so the two produce bit-identical results: maximal-violating-pair
working set selection, box-clipped two-variable updates, O(n) gradient
refresh per iteration. Bias extraction happens in svm.py, shared by both.
"""

from __future__ import annotations

import numpy as np


def smo_loop(K: np.ndarray, y: np.ndarray, C: float, tol: float,
             max_iter: int) -> tuple[np.ndarray, np.ndarray, int, float]:
    """Iterate the dual soft-margin problem on a precomputed kernel matrix.

    y must be +-1. Returns (alpha, gradient, iterations, final KKT gap); the
    caller decides whether a gap above tol at the iteration cap is an error.
    """
    n = y.size
    alpha = np.zeros(n)
    grad = np.full(n, -1.0)
    pos = y > 0.0
    iteration = 0
    gap = 0.0

    while iteration < max_iter:
        v = -(y * grad)
        mask_up = np.where(pos, alpha < C, alpha > 0.0)
        mask_low = np.where(pos, alpha > 0.0, alpha < C)
        v_up = np.where(mask_up, v, -np.inf)
        v_low = np.where(mask_low, v, np.inf)
        i = int(np.argmax(v_up))
        j = int(np.argmin(v_low))
        m = v_up[i]
        big_m = v_low[j]
        if not np.isfinite(m) or not np.isfinite(big_m):
            gap = 0.0
            break
        gap = float(m - big_m)
        if gap <= tol:
            break

        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        d = gap / quad

        if y[i] > 0.0:
            d_min_i, d_max_i = -alpha[i], C - alpha[i]
        else:
            d_min_i, d_max_i = alpha[i] - C, alpha[i]
        if y[j] > 0.0:
            d_min_j, d_max_j = alpha[j] - C, alpha[j]
        else:
            d_min_j, d_max_j = -alpha[j], C - alpha[j]
        lo = d_min_i if d_min_i > d_min_j else d_min_j
        hi = d_max_i if d_max_i < d_max_j else d_max_j
        if d > hi:
            d = hi
        if d < lo:
            d = lo

        alpha[i] = alpha[i] + y[i] * d
        alpha[j] = alpha[j] - y[j] * d
        grad += (d * y) * (K[i] - K[j])
        iteration += 1

    return alpha, grad, iteration, gap
