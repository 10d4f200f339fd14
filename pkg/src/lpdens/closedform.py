"""Explicit estimators available for the Gaussian kernel.

Each closed form is the exact solution of the corresponding local
estimating equations and doubles as a fast path and a cross-check for
the generic Newton solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, SmootherStats, classic_estimate, get_kernel, kernel_convolve

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ClosedFormResult:
    f_hat: float
    auxiliaries: dict = field(default_factory=dict)
    valid: bool = True
    reason: str = ""


def _invalid(reason: str) -> ClosedFormResult:
    return ClosedFormResult(f_hat=math.nan, auxiliaries={}, valid=False, reason=reason)


def cf_loglinear(stats: SmootherStats, h: float) -> ClosedFormResult:
    """Local log-linear fit a*exp(b(t-x)) with Gaussian kernel:

    b = f~'/f~ and f^ = f~ exp(-h^2 b^2 / 2), an explicit slope
    correction of the classic estimate.
    """
    if stats.f_tilde <= 0:
        return _invalid("zero smoother mass")
    b = stats.f_tilde_d1 / stats.f_tilde
    f_hat = stats.f_tilde * math.exp(-0.5 * h * h * b * b)
    return ClosedFormResult(f_hat=f_hat, auxiliaries={"b": b})


def cf_logquad(stats: SmootherStats, h: float) -> ClosedFormResult:
    """Local log-quadratic fit a*exp(b(t-x) + c(t-x)^2/2), Gaussian kernel.

    With D = f~''/f~ - (f~'/f~)^2 the shrink factor is
    R = (1 + h^2 D)^{-1/2} and f^ = f~ R exp(-h^2 R^2 (f~'/f~)^2 / 2);
    c = D / (1 + h^2 D), valid only while 1 + h^2 D > 0.
    """
    if stats.f_tilde <= 0:
        return _invalid("zero smoother mass")
    d_hat = stats.d_hat
    denom = 1.0 + h * h * d_hat
    if denom <= 0:
        return _invalid("1 + h^2 D <= 0: no log-quadratic solution")
    r_hat = denom**-0.5
    c_hat = d_hat / denom
    q = stats.q_tilde
    f_hat = stats.f_tilde * r_hat * math.exp(-0.5 * h * h * r_hat * r_hat * q * q)
    return ClosedFormResult(
        f_hat=f_hat,
        auxiliaries={"R": r_hat, "c": c_hat, "b": r_hat * r_hat * q, "D": d_hat},
    )


def cf_mult_const(f_init, kernel: Kernel, h: float, data, x: float) -> ClosedFormResult:
    """Constant multiplicative correction of a parametric start:

    f^ = f~(x) f_init(x) / (K_h * f_init)(x).
    """
    conv = kernel_convolve(kernel, h, x, f_init)
    if conv <= 0:
        return _invalid("vanishing smoothed start at x")
    stats = classic_estimate(kernel, h, data, x)
    f0 = float(np.asarray(f_init(np.array([x])), dtype=float)[0])
    theta = stats.f_tilde / conv
    return ClosedFormResult(
        f_hat=f0 * theta, auxiliaries={"theta": theta, "conv": conv}
    )


def cf_mult_loglinear_normal(
    stats: SmootherStats, h: float, sigma: float
) -> ClosedFormResult:
    """Log-linear multiplicative correction of a normal start with scale
    sigma, Gaussian kernel:

    f^ = f~ (1 + h^2/sigma^2)^{1/2}
         exp[-h^2 (1 + h^2/sigma^2) (f~'/f~)^2 / 2].

    Exact for any start mean (it cancels).
    """
    if stats.f_tilde <= 0:
        return _invalid("zero smoother mass")
    if sigma <= 0:
        return _invalid("sigma must be positive")
    s = 1.0 + h * h / (sigma * sigma)
    q = stats.q_tilde
    f_hat = stats.f_tilde * math.sqrt(s) * math.exp(-0.5 * h * h * s * q * q)
    return ClosedFormResult(f_hat=f_hat, auxiliaries={"inflation": s, "b": s * q})


def cf_running_normal(
    data, h: float, x: float, kernel: Kernel = None
) -> ClosedFormResult:
    """Running normal fit with weights (1, t-x) and Gaussian kernel.

    Matches the classic estimates of f and f' with the model-predicted
    values: with q = f~'/f~ the scale solves

        (2 pi)^{-1/2} (sigma^2 + h^2)^{-1/2}
            exp(-q^2 (sigma^2 + h^2) / 2) = f~(x),

    which has a unique root in sigma^2 + h^2 > h^2 exactly when
    phi(h q) > h f~(x); then mu = x + (sigma^2 + h^2) q.
    """
    kernel = kernel if kernel is not None else get_kernel("gaussian")
    if kernel.name != "gaussian":
        return _invalid("running normal closed form requires the Gaussian kernel")
    stats = classic_estimate(kernel, h, data, x)
    if stats.f_tilde <= 0:
        return _invalid("zero smoother mass")
    q = stats.q_tilde
    ft = stats.f_tilde
    phi_hq = math.exp(-0.5 * (h * q) ** 2) / _SQRT_2PI
    # small relative margin: equality means a degenerate sigma -> 0 root
    if not phi_hq > h * ft * (1.0 + 1e-10):
        return _invalid(
            f"no solution: phi(h q) = {phi_hq:.6g} <= h f~ = {h * ft:.6g}"
        )

    def lhs(s):
        return math.exp(-0.5 * q * q * s) / (_SQRT_2PI * math.sqrt(s)) - ft

    lo = h * h * (1.0 + 1e-12)
    hi = max(2.0 * lo, 1.0)
    for _ in range(60):
        if lhs(hi) < 0.0:
            break
        hi *= 2.0
    else:
        return _invalid("no sign change while bracketing the scale equation")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lhs(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    s = 0.5 * (lo + hi)
    sigma = math.sqrt(max(s - h * h, 0.0))
    mu = x + s * q
    if sigma <= 0:
        return _invalid("degenerate scale solution")
    z = (x - mu) / sigma
    f_hat = math.exp(-0.5 * z * z) / (_SQRT_2PI * sigma)
    return ClosedFormResult(f_hat=f_hat, auxiliaries={"mu": mu, "sigma": sigma})


def cf_hjort_glad(f_init, kernel: Kernel, h: float, data, x: float) -> ClosedFormResult:
    """Parametric-start estimator with the locally modified kernel
    K(z) f_init(x) / f_init(x + hz):

    f^ = f_init(x) n^{-1} sum_i K_h(x_i - x) / f_init(x_i).
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return _invalid("empty data")
    kw = kernel.eval((data - x) / h) / h
    active = kw > 0
    fi = np.asarray(f_init(data[active]), dtype=float)
    if np.any(fi <= 0) or not np.all(np.isfinite(fi)):
        return _invalid("nonpositive start density at a data point in the window")
    f0 = float(np.asarray(f_init(np.array([x])), dtype=float)[0])
    corr = float(np.sum(kw[active] / fi)) / data.size
    return ClosedFormResult(f_hat=f0 * corr, auxiliaries={"correction": corr})
