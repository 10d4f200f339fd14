"""Boundary-region functionals and bias diagnostics for densities
supported on [0, inf).

Near a support edge the kernel window is truncated: with x = p*h the
partial moments a_l(p) = int_{-S}^{p} u^l K(u) du and
b(p) = int_{-S}^{p} K(u)^2 du replace the full moments, and the
two-parameter local fit attains the O(h^2) boundary bias
Q(p) h^2 (f'' - f0'')/2 with Q(p) = (a2^2 - a1 a3)/(a2 a0 - a1^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import BiasCurve, _wrap_density, population_bias_curve
from .kernels import Kernel, gauss_legendre_nodes
from .models import LocalFamily, weights_make


@dataclass(frozen=True)
class BoundaryMoments:
    """Truncated kernel moments at relative position p (x = p*h)."""

    p: float
    a: tuple  # a_0 .. a_3
    b: float
    q: float


def boundary_moments(kernel: Kernel, p: float) -> BoundaryMoments:
    """Partial moments over [-S, min(p, S)] for a finite-support kernel.

    For p >= S these reduce to the interior values a0 = 1, a1 = 0,
    a2 = sigma_K^2, b = R(K), Q = sigma_K^2.
    """
    if not math.isfinite(kernel.support_radius):
        raise ValueError("boundary moments require a finite-support kernel")
    if p < 0:
        raise ValueError("relative position p must be nonnegative")
    s = kernel.support_radius
    hi = min(p, s)
    t, w = gauss_legendre_nodes(-s, hi, panels=2)
    k = kernel.eval(t)
    a = tuple(float(np.sum(w * t**l * k)) for l in range(4))
    b = float(np.sum(w * k * k))
    q = (a[2] ** 2 - a[1] * a[3]) / (a[2] * a[0] - a[1] ** 2)
    return BoundaryMoments(p=float(p), a=a, b=b, q=float(q))


def boundary_kernel(kernel: Kernel, p: float):
    """The equivalent boundary kernel of the two-parameter local fit,

    z -> (a2(p) - a1(p) z) / (a0(p) a2(p) - a1(p)^2) K(z)

    restricted to [-S, p]; integrates to 1 with vanishing first moment.
    """
    bm = boundary_moments(kernel, p)
    a0, a1, a2, _ = bm.a
    denom = a0 * a2 - a1 * a1
    s = kernel.support_radius

    def bk(z):
        z = np.asarray(z, dtype=float)
        inside = (z >= -s) & (z <= p)
        return np.where(inside, (a2 - a1 * z) / denom * kernel.eval(z), 0.0)

    return bk


@dataclass(frozen=True)
class BoundaryBiasReport:
    p_rel: float
    curve: BiasCurve
    q_at_p: float
    theory_coefficient: Optional[float]

    @property
    def slope(self) -> float:
        return self.curve.slope

    @property
    def coefficient(self) -> float:
        return self.curve.coefficient


def boundary_bias_diag(
    family: LocalFamily,
    kernel: Kernel,
    h_list,
    f_true,
    p_rel: float,
    scheme_kind: str = "powers",
) -> BoundaryBiasReport:
    """Population boundary bias at x = p_rel * h over a bandwidth list.

    Solves the population equations clipped to [0, inf) at each h and
    fits the log-log bias slope: O(h) for one local parameter, O(h^2)
    for two.  For a two-parameter family the theory coefficient
    Q(p) (f'' - f0'')/2 is attached (f0'' from the fitted member at the
    smallest h).
    """
    if not math.isfinite(kernel.support_radius):
        raise ValueError("boundary diagnostics require a finite-support kernel")
    f_true = _wrap_density(f_true)
    fam0 = family.recenter(p_rel * h_list[0]) if family.recenter else family
    scheme = weights_make(scheme_kind, fam0)
    curve = population_bias_curve(
        fam0,
        scheme,
        kernel,
        f_true,
        x=0.0,
        h_list=h_list,
        support=(0.0, math.inf),
        boundary_rel=p_rel,
    )
    q = boundary_moments(kernel, p_rel).q
    theory = None
    if family.p == 2 and family.model_curvature is not None:
        h_min = float(np.asarray(h_list)[-1])
        x_min = p_rel * h_min
        fam_min = family.recenter(x_min) if family.recenter else family
        f0_dd = fam_min.model_curvature(x_min, fam_min.decode(curve.theta0_smallest.values))
        f_dd = float(f_true(np.array([x_min]), 2)[0])
        theory = 0.5 * q * (f_dd - f0_dd)
    return BoundaryBiasReport(
        p_rel=float(p_rel), curve=curve, q_at_p=q, theory_coefficient=theory
    )
