"""NumPy twin of the compiled power-sum core.

Selected by :mod:`lpdens.backend` when the extension is unavailable or
explicitly disabled.  Must implement the same contract as
``_fastsums.weighted_sums``.
"""

import numpy as np

_INV_SQRT_2PI = 0.3989422804014327

KID_GAUSSIAN = 0
KID_UNIFORM_HALF = 1
KID_UNIFORM_ONE = 2
KID_EPANECHNIKOV = 3
KID_BIWEIGHT = 4


def _kernel_values(kid, z):
    """Return (K, K', K'') arrays at z, zero outside support."""
    if kid == KID_GAUSSIAN:
        k0 = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        return k0, -z * k0, (z * z - 1.0) * k0
    if kid == KID_UNIFORM_HALF:
        inside = np.abs(z) <= 0.5
        k0 = np.where(inside, 1.0, 0.0)
        return k0, np.zeros_like(z), np.zeros_like(z)
    if kid == KID_UNIFORM_ONE:
        inside = np.abs(z) <= 1.0
        k0 = np.where(inside, 0.5, 0.0)
        return k0, np.zeros_like(z), np.zeros_like(z)
    if kid == KID_EPANECHNIKOV:
        inside = np.abs(z) <= 0.5
        k0 = np.where(inside, 1.5 * (1.0 - 4.0 * z * z), 0.0)
        k1 = np.where(inside, -12.0 * z, 0.0)
        k2 = np.where(inside, -12.0, 0.0)
        return k0, k1, k2
    if kid == KID_BIWEIGHT:
        inside = np.abs(z) <= 1.0
        u = 1.0 - z * z
        k0 = np.where(inside, 0.9375 * u * u, 0.0)
        k1 = np.where(inside, -3.75 * z * u, 0.0)
        k2 = np.where(inside, -3.75 * (1.0 - 3.0 * z * z), 0.0)
        return k0, k1, k2
    raise ValueError(f"unknown kernel id {kid}")


def weighted_sums(data, x, h, kid, jmax, dmax):
    """W[d, j] = n^{-1} sum_i K^(d)((x_i-x)/h) ((x_i-x)/h)^j."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty data")
    if h <= 0.0:
        raise ValueError("h must be positive")
    if dmax < 0 or dmax > 2 or jmax < 0:
        raise ValueError("invalid derivative/power order")
    z = (data - x) / h
    kv = _kernel_values(kid, z)
    zp = z[None, :] ** np.arange(jmax + 1)[:, None]
    out = np.empty((dmax + 1, jmax + 1))
    for d in range(dmax + 1):
        out[d] = zp @ kv[d]
    return out / n
