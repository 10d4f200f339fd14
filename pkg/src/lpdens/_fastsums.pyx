# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled kernel-weighted power sums.

This is the hot primitive of the whole package: every smoother evaluation,
Newton iteration, leave-one-out refit and Monte Carlo replication reduces
its data-side work to sums of the form

    W[d, j] = n^{-1} sum_i K^(d)(z_i) z_i^j,   z_i = (x_i - x) / h,

for a registered kernel K and derivative orders d <= 2.  The pure-Python
twin lives in ``_pysums.py``; both must agree bit-for-bit in exact
arithmetic (same order of accumulation is not required, tests allow 1e-13).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014327

# kernel ids, kept in sync with lpdens.backend.KERNEL_IDS
DEF KID_GAUSSIAN = 0
DEF KID_UNIFORM_HALF = 1
DEF KID_UNIFORM_ONE = 2
DEF KID_EPANECHNIKOV = 3
DEF KID_BIWEIGHT = 4


cdef inline bint _kvals(int kid, double z, double* k) noexcept nogil:
    """Fill k[0..2] with K(z), K'(z), K''(z); return False outside support."""
    cdef double u
    if kid == KID_GAUSSIAN:
        k[0] = INV_SQRT_2PI * exp(-0.5 * z * z)
        k[1] = -z * k[0]
        k[2] = (z * z - 1.0) * k[0]
        return True
    elif kid == KID_UNIFORM_HALF:
        if fabs(z) > 0.5:
            return False
        k[0] = 1.0
        k[1] = 0.0
        k[2] = 0.0
        return True
    elif kid == KID_UNIFORM_ONE:
        if fabs(z) > 1.0:
            return False
        k[0] = 0.5
        k[1] = 0.0
        k[2] = 0.0
        return True
    elif kid == KID_EPANECHNIKOV:
        if fabs(z) > 0.5:
            return False
        k[0] = 1.5 * (1.0 - 4.0 * z * z)
        k[1] = -12.0 * z
        k[2] = -12.0
        return True
    elif kid == KID_BIWEIGHT:
        if fabs(z) > 1.0:
            return False
        u = 1.0 - z * z
        k[0] = 0.9375 * u * u
        k[1] = -3.75 * z * u
        k[2] = -3.75 * (1.0 - 3.0 * z * z)
        return True
    return False


def weighted_sums(double[::1] data, double x, double h, int kid,
                  int jmax, int dmax):
    """W[d, j] = n^{-1} sum_i K^(d)((x_i-x)/h) ((x_i-x)/h)^j."""
    cdef Py_ssize_t n = data.shape[0]
    if n == 0:
        raise ValueError("empty data")
    if h <= 0.0:
        raise ValueError("h must be positive")
    if dmax < 0 or dmax > 2 or jmax < 0:
        raise ValueError("invalid derivative/power order")
    out = np.zeros((dmax + 1, jmax + 1))
    cdef double[:, ::1] o = out
    cdef double inv_h = 1.0 / h
    cdef double z, zj
    cdef double kv[3]
    cdef Py_ssize_t i
    cdef int d, j
    with nogil:
        for i in range(n):
            z = (data[i] - x) * inv_h
            if _kvals(kid, z, kv):
                for d in range(dmax + 1):
                    zj = kv[d]
                    for j in range(jmax + 1):
                        o[d, j] += zj
                        zj *= z
    out /= n
    return out
