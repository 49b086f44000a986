"""Pure-numpy versions of the hot kernels.

These are the reference implementations; the numba module mirrors them
loop-for-loop.  Keep the two in sync.
"""

import numpy as np

_INV_SQRT_4PI = 0.5 / np.sqrt(np.pi)


def legendre_tables(x, degree):
    """Normalized associated-Legendre tables and their theta derivatives.

    For each abscissa x = cos(theta) compute A[l,m] = K(l,m) P_l^m(x) with
    the 4pi-orthonormalization constant K(l,m) (so that the full harmonic
    sqrt(2) A cos(m phi) has unit L2 norm on the sphere), and dA = dA/dtheta.
    Entries are packed by (l,m) with m >= 0 at flat index l(l+1)/2 + m.

    Returns (A, dA), each of shape (len(x), (degree+1)(degree+2)/2).
    """
    x = np.asarray(x, dtype=np.float64)
    nx = x.shape[0]
    n_entries = (degree + 1) * (degree + 2) // 2
    A = np.zeros((nx, n_entries))
    dA = np.zeros((nx, n_entries))
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - x * x))

    def tri(l, m):
        return l * (l + 1) // 2 + m

    A[:, 0] = _INV_SQRT_4PI
    for m in range(1, degree + 1):
        A[:, tri(m, m)] = sin_t * np.sqrt((2 * m + 1) / (2.0 * m)) * A[:, tri(m - 1, m - 1)]
    for m in range(0, degree):
        A[:, tri(m + 1, m)] = np.sqrt(2 * m + 3.0) * x * A[:, tri(m, m)]
    for m in range(0, degree + 1):
        for l in range(m + 2, degree + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((2.0 * l + 1.0) * (l + m - 1.0) * (l - m - 1.0))
                        / ((2.0 * l - 3.0) * (l - m) * (l + m)))
            A[:, tri(l, m)] = a * x * A[:, tri(l - 1, m)] - b * A[:, tri(l - 2, m)]

    # dA/dtheta = [l x A_l - e_lm A_{l-1}] / sin(theta); Gauss nodes never
    # touch the poles so the division is safe.
    for m in range(0, degree + 1):
        for l in range(m, degree + 1):
            num = l * x * A[:, tri(l, m)]
            if l - 1 >= m:
                e = np.sqrt((2.0 * l + 1.0) * (l - m) * (l + m) / (2.0 * l - 1.0))
                num = num - e * A[:, tri(l - 1, m)]
            dA[:, tri(l, m)] = num / sin_t
    return A, dA


def _sin_cos_overlap(k, n):
    """int_0^1 sin(k pi s) cos(n pi s) ds for integer k (any sign), n >= 0."""
    if (k + n) % 2 == 0:
        return 0.0
    return 2.0 * k / (np.pi * (k * k - n * n))


def trig_weight_matrix(c0, c, n_in, n_out):
    """Weights W[n,p] of the sine-times-profile cosine projection.

    For a profile c0 + sum_q c_q cos(q pi s) and p = 1..n_in, n = 1..n_out:

        W[n,p] = c0 J(p,n) + 1/2 sum_q c_q (J(p+q,n) + J(p-q,n))

    with J(k,n) = int_0^1 sin(k pi s) cos(n pi s) ds.  Then

        int_0^1 [sum_p phi_p H_p(s)] (c0 + sum c_q cos) cos(n pi s) ds
            = sqrt(2) sum_p W[n,p] phi_p.

    Returns W of shape (n_out, n_in).
    """
    c = np.asarray(c, dtype=np.float64)
    n_pad = c.shape[0]
    k_min = 1 - n_pad
    k_max = n_in + n_pad
    ks = np.arange(k_min, k_max + 1)
    ns = np.arange(1, n_out + 1)
    kk, nn = np.meshgrid(ks, ns, indexing="ij")
    j_table = np.zeros(kk.shape)
    odd = (kk + nn) % 2 != 0
    # k + n odd rules out k = +-n, so the denominator is never zero there
    np.divide(2.0 * kk, np.pi * (kk * kk - nn * nn), out=j_table, where=odd)

    p = np.arange(1, n_in + 1)
    q = np.arange(1, n_pad + 1)
    base = j_table[p - k_min, :]                      # (n_in, n_out)
    plus = j_table[(p[:, None] + q[None, :]) - k_min]   # (n_in, n_pad, n_out)
    minus = j_table[(p[:, None] - q[None, :]) - k_min]
    summed = np.einsum("q,pqn->pn", c, plus + minus)
    return (c0 * base + 0.5 * summed).T
