"""Numba-compiled versions of the hot kernels.

Same contracts as _numpy_impl; see that module for the math. Loops are
written out explicitly so numba can fuse them.
"""

import numpy as np
from numba import njit

_INV_SQRT_4PI = 0.5 / np.sqrt(np.pi)


@njit(cache=True)
def legendre_tables(x, degree):
    nx = x.shape[0]
    n_entries = (degree + 1) * (degree + 2) // 2
    A = np.zeros((nx, n_entries))
    dA = np.zeros((nx, n_entries))
    for i in range(nx):
        xi = x[i]
        sin_t = np.sqrt(max(0.0, 1.0 - xi * xi))
        A[i, 0] = _INV_SQRT_4PI
        for m in range(1, degree + 1):
            t = m * (m + 1) // 2 + m
            tp = (m - 1) * m // 2 + (m - 1)
            A[i, t] = sin_t * np.sqrt((2 * m + 1) / (2.0 * m)) * A[i, tp]
        for m in range(0, degree):
            t = (m + 1) * (m + 2) // 2 + m
            tp = m * (m + 1) // 2 + m
            A[i, t] = np.sqrt(2 * m + 3.0) * xi * A[i, tp]
        for m in range(0, degree + 1):
            for l in range(m + 2, degree + 1):
                a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = np.sqrt(((2.0 * l + 1.0) * (l + m - 1.0) * (l - m - 1.0))
                            / ((2.0 * l - 3.0) * (l - m) * (l + m)))
                t = l * (l + 1) // 2 + m
                t1 = (l - 1) * l // 2 + m
                t2 = (l - 2) * (l - 1) // 2 + m
                A[i, t] = a * xi * A[i, t1] - b * A[i, t2]
        for m in range(0, degree + 1):
            for l in range(m, degree + 1):
                t = l * (l + 1) // 2 + m
                num = l * xi * A[i, t]
                if l - 1 >= m:
                    e = np.sqrt((2.0 * l + 1.0) * (l - m) * (l + m) / (2.0 * l - 1.0))
                    num = num - e * A[i, (l - 1) * l // 2 + m]
                dA[i, t] = num / sin_t
    return A, dA


@njit(cache=True, inline="always")
def _overlap(k, n):
    if (k + n) % 2 == 0:
        return 0.0
    return 2.0 * k / (np.pi * (k * k - n * n))


@njit(cache=True)
def trig_weight_matrix(c0, c, n_in, n_out):
    n_pad = c.shape[0]
    W = np.zeros((n_out, n_in))
    for n in range(1, n_out + 1):
        for p in range(1, n_in + 1):
            acc = c0 * _overlap(p, n)
            for q in range(1, n_pad + 1):
                acc += 0.5 * c[q - 1] * (_overlap(p + q, n) + _overlap(p - q, n))
            W[n - 1, p - 1] = acc
    return W
