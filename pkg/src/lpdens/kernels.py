"""Smoothing kernels, their moment functionals, and kernel-weighted sums.

Provides the shipped symmetric kernels (Gaussian, two uniforms,
Epanechnikov, biweight) together with their moments k_j, roughness
R(K) = int K^2, moment-generating function psi(u) = int e^{uz} K(z) dz,
the classic kernel smoother with derivatives, and Gauss-Legendre
quadrature of kernel-weighted integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .backend import KERNEL_IDS, weighted_sums

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}

#: nodes per quadrature panel
GL_NODES = 64

#: truncation of infinite-support kernels, in standardized kernel units
DEFAULT_TRUNC = 8.0


def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def gauss_legendre_nodes(a: float, b: float, panels: int = 1, n: int = GL_NODES):
    """Nodes and weights for composite Gauss-Legendre on [a, b]."""
    z, w = _leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * z[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


@dataclass(frozen=True)
class Kernel:
    """A symmetric smoothing kernel.

    Attributes
    ----------
    name : str
        Registry identifier.
    support_radius : float
        Half-width of the support; ``inf`` for the Gaussian.
    eval : callable
        Vectorized z -> K(z), zero outside a finite support.
    deriv1, deriv2 : callable, optional
        Analytic K' and K''; when absent the smoother falls back to
        central differences.
    moments : tuple, optional
        Analytic k_0..k_6 with k_j = int z^j K(z) dz.
    roughness : float, optional
        Analytic R(K) = int K(z)^2 dz.
    mgf : callable, optional
        Closed-form psi(u); quadrature is used otherwise (finite support
        only).
    """

    name: str
    support_radius: float
    eval: Callable[[np.ndarray], np.ndarray]
    deriv1: Optional[Callable] = None
    deriv2: Optional[Callable] = None
    moments: Optional[tuple] = None
    roughness: Optional[float] = None
    mgf: Optional[Callable[[float], float]] = None
    backend_id: int = field(default=-1)

    @property
    def has_analytic_moments(self) -> bool:
        return self.moments is not None

    @property
    def has_analytic_derivs(self) -> bool:
        return self.deriv1 is not None and self.deriv2 is not None

    @property
    def sigma2(self) -> float:
        """Second moment k_2 = sigma_K^2."""
        return kernel_moment(self, 2)

    def trunc_radius(self, trunc: float = DEFAULT_TRUNC) -> float:
        return min(self.support_radius, trunc)


def _gaussian_eval(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def _make_registry() -> dict[str, Kernel]:
    gaussian = Kernel(
        name="gaussian",
        support_radius=math.inf,
        eval=_gaussian_eval,
        deriv1=lambda z: -z * _gaussian_eval(z),
        deriv2=lambda z: (np.square(z) - 1.0) * _gaussian_eval(z),
        moments=(1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0),
        roughness=1.0 / (2.0 * math.sqrt(math.pi)),
        mgf=lambda u: math.exp(0.5 * u * u),
        backend_id=KERNEL_IDS["gaussian"],
    )
    uniform = Kernel(
        name="uniform",
        support_radius=0.5,
        eval=lambda z: np.where(np.abs(z) <= 0.5, 1.0, 0.0),
        deriv1=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        deriv2=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        moments=(1.0, 0.0, 1.0 / 12.0, 0.0, 1.0 / 80.0, 0.0, 1.0 / 448.0),
        roughness=1.0,
        mgf=lambda u: 2.0 * math.sinh(0.5 * u) / u if u != 0.0 else 1.0,
        backend_id=KERNEL_IDS["uniform"],
    )
    uniform1 = Kernel(
        name="uniform1",
        support_radius=1.0,
        eval=lambda z: np.where(np.abs(z) <= 1.0, 0.5, 0.0),
        deriv1=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        deriv2=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        moments=(1.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 5.0, 0.0, 1.0 / 7.0),
        roughness=0.5,
        mgf=lambda u: math.sinh(u) / u if u != 0.0 else 1.0,
        backend_id=KERNEL_IDS["uniform1"],
    )
    epanechnikov = Kernel(
        name="epanechnikov",
        support_radius=0.5,
        eval=lambda z: np.where(
            np.abs(z) <= 0.5, 1.5 * (1.0 - 4.0 * np.square(z)), 0.0
        ),
        deriv1=lambda z: np.where(np.abs(z) <= 0.5, -12.0 * z, 0.0),
        deriv2=lambda z: np.where(np.abs(z) <= 0.5, -12.0, 0.0),
        moments=(1.0, 0.0, 0.05, 0.0, 3.0 / 560.0, 0.0, 1.0 / 1344.0),
        roughness=1.2,
        backend_id=KERNEL_IDS["epanechnikov"],
    )
    biweight = Kernel(
        name="biweight",
        support_radius=1.0,
        eval=lambda z: np.where(
            np.abs(z) <= 1.0, 0.9375 * np.square(1.0 - np.square(z)), 0.0
        ),
        deriv1=lambda z: np.where(
            np.abs(z) <= 1.0, -3.75 * z * (1.0 - np.square(z)), 0.0
        ),
        deriv2=lambda z: np.where(
            np.abs(z) <= 1.0, -3.75 * (1.0 - 3.0 * np.square(z)), 0.0
        ),
        moments=(1.0, 0.0, 1.0 / 7.0, 0.0, 1.0 / 21.0, 0.0, 5.0 / 231.0),
        roughness=5.0 / 7.0,
        backend_id=KERNEL_IDS["biweight"],
    )
    return {k.name: k for k in (gaussian, uniform, uniform1, epanechnikov, biweight)}


KERNELS = _make_registry()


def get_kernel(name: str) -> Kernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; registered: {sorted(KERNELS)}"
        ) from None


def kernel_eval(kernel: Kernel, z):
    """Evaluate K(z); zero outside a finite support."""
    return kernel.eval(np.asarray(z, dtype=float))


def kernel_moment(kernel: Kernel, j: int) -> float:
    """Moment k_j = int z^j K(z) dz for j <= 6.

    Uses the analytic table when available, Gauss-Legendre quadrature
    otherwise.  Odd moments of symmetric kernels are exactly zero.
    """
    if not 0 <= j <= 6:
        raise ValueError("moment order must be in 0..6")
    if j % 2 == 1:
        return 0.0
    if kernel.moments is not None:
        return float(kernel.moments[j])
    return quad_moment(kernel, j)


def quad_moment(kernel: Kernel, j: int, trunc: float = DEFAULT_TRUNC) -> float:
    """k_j by quadrature, independent of the analytic table."""
    s = kernel.trunc_radius(trunc)
    t, w = gauss_legendre_nodes(-s, s, panels=2)
    return float(np.sum(w * t**j * kernel.eval(t)))


def kernel_roughness(kernel: Kernel, trunc: float = DEFAULT_TRUNC) -> float:
    """R(K) = int K(z)^2 dz."""
    if kernel.roughness is not None:
        return float(kernel.roughness)
    s = kernel.trunc_radius(trunc)
    t, w = gauss_legendre_nodes(-s, s, panels=2)
    return float(np.sum(w * kernel.eval(t) ** 2))


def kernel_mgf(kernel: Kernel, u: float, trunc: float = DEFAULT_TRUNC) -> float:
    """psi(u) = int e^{uz} K(z) dz."""
    if kernel.mgf is not None:
        return float(kernel.mgf(u))
    if not math.isfinite(kernel.support_radius):
        raise ValueError(
            f"kernel {kernel.name!r} has unbounded support and no closed-form "
            "moment-generating function"
        )
    s = kernel.support_radius
    t, w = gauss_legendre_nodes(-s, s, panels=2)
    return float(np.sum(w * np.exp(u * t) * kernel.eval(t)))


@dataclass(frozen=True)
class SmootherStats:
    """Classic kernel smoother and companions at a single point.

    ``q_tilde`` (= f'/f) and ``d_hat`` (= f''/f - (f'/f)^2) are ``None``
    when the density estimate carries no mass at ``x``.
    """

    x: float
    f_tilde: float
    f_tilde_d1: float
    f_tilde_d2: float
    g_tilde: float
    g2_tilde: float
    q_tilde: Optional[float]
    d_hat: Optional[float]


def classic_estimate(
    kernel: Kernel, h: float, data, x: float, fd_step: float = 1e-5
) -> SmootherStats:
    """Classic estimate f~(x) = n^{-1} sum K_h(x_i - x) with derivatives.

    Also fills the first two local moments g~ = n^{-1} sum K_h (x_i - x)
    and g2~ = n^{-1} sum K_h (x_i - x)^2.  Derivatives use the kernel's
    analytic K', K'' when present, else central differences with step
    ``fd_step * h``.
    """
    data = np.ascontiguousarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    if h <= 0:
        raise ValueError("h must be positive")
    if kernel.backend_id >= 0:
        w = weighted_sums(data, x, h, kernel.backend_id, 2, 2)
        f = w[0, 0] / h
        g = w[0, 1]
        g2 = h * w[0, 2]
        d1 = -w[1, 0] / h**2
        d2 = w[2, 0] / h**3
    else:
        z = (data - x) / h
        k0 = kernel.eval(z)
        f = float(np.mean(k0)) / h
        g = float(np.mean(k0 * z))
        g2 = h * float(np.mean(k0 * z * z))
        if kernel.has_analytic_derivs:
            d1 = -float(np.mean(kernel.deriv1(z))) / h**2
            d2 = float(np.mean(kernel.deriv2(z))) / h**3
        else:
            step = fd_step * h
            fp = np.mean(kernel.eval((data - (x + step)) / h)) / h
            fm = np.mean(kernel.eval((data - (x - step)) / h)) / h
            d1 = (fp - fm) / (2.0 * step)
            d2 = (fp - 2.0 * f + fm) / step**2
    if f > 0:
        q = d1 / f
        d_hat = d2 / f - q * q
    else:
        q = None
        d_hat = None
    return SmootherStats(
        x=float(x),
        f_tilde=float(f),
        f_tilde_d1=float(d1),
        f_tilde_d2=float(d2),
        g_tilde=float(g),
        g2_tilde=float(g2),
        q_tilde=q,
        d_hat=d_hat,
    )


def moment_sums(kernel: Kernel, h: float, data, x: float, jmax: int) -> np.ndarray:
    """M_j = n^{-1} sum_i K_h(x_i - x) (x_i - x)^j for j = 0..jmax."""
    data = np.ascontiguousarray(data, dtype=float)
    if kernel.backend_id >= 0:
        w = weighted_sums(data, x, h, kernel.backend_id, jmax, 0)
        return w[0] * h ** (np.arange(jmax + 1) - 1.0)
    z = (data - x) / h
    k0 = kernel.eval(z)
    zp = z[None, :] ** np.arange(jmax + 1)[:, None]
    return (zp @ k0) / data.size * h ** (np.arange(jmax + 1) - 1.0)


def window_integral(
    kernel: Kernel,
    h: float,
    x: float,
    func,
    lo: float = -math.inf,
    hi: float = math.inf,
    trunc: float = DEFAULT_TRUNC,
) -> np.ndarray:
    """int K_h(t - x) func(t) dt over the kernel window clipped to [lo, hi].

    ``func`` maps a node vector to an array whose last axis runs over
    nodes; the integral is taken along that axis.  A single 64-node
    Gauss-Legendre panel is used on the unclipped window and four panels
    when clipping is active.  An empty window integrates to zero.
    """
    s = kernel.trunc_radius(trunc) * h
    a, b = x - s, x + s
    clipped = False
    if lo > a:
        a, clipped = lo, True
    if hi < b:
        b, clipped = hi, True
    if a >= b:
        probe = np.atleast_1d(np.asarray(func(np.array([x])), dtype=float))
        return np.zeros(probe.shape[:-1])
    t, w = gauss_legendre_nodes(a, b, panels=4 if clipped else 1)
    kh = kernel.eval((t - x) / h) / h
    vals = np.asarray(func(t), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand values in the kernel window")
    return vals @ (w * kh)


def kernel_convolve(
    kernel: Kernel, h: float, x: float, g, trunc: float = DEFAULT_TRUNC
) -> float:
    """(K_h * g)(x) = int K_h(t - x) g(t) dt by Gauss-Legendre quadrature."""
    return float(window_integral(kernel, h, x, lambda t: np.asarray(g(t)), trunc=trunc))
