"""Verification layer: deterministic population oracles for the locally
least false parameter and its bias, theoretical bias/variance factors,
higher-order equivalent kernels, and a seeded Monte Carlo harness.

The population oracle replaces the data-side sum of the estimating
equations by its expectation under a known true density, so bias laws
can be checked by quadrature alone, without sampling noise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .closedform import cf_loglinear
from .kernels import (
    DEFAULT_TRUNC,
    Kernel,
    classic_estimate,
    gauss_legendre_nodes,
    get_kernel,
    kernel_moment,
)
from .models import LocalFamily, ParamVector, WeightScheme, weights_make
from .solver import FitConfig, FitStatus, _newton, _Problem, fit_grid

_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# true densities with analytic derivatives and seeded samplers


@dataclass(frozen=True)
class TrueDensity:
    """A known density with derivatives up to order 4 and a sampler.

    ``pdf(t, deriv)`` evaluates the deriv-th derivative; ``sample(rng, n)``
    draws from the density using the supplied generator (normal variates
    via the polar transform, exponential via inverse cdf, mixtures by
    seeded component choice).  ``effective_range`` bounds where the
    density carries numerically relevant mass; quadrature windows are
    clipped to it so population fits stay accurate at any bandwidth.
    """

    name: str
    pdf: Callable
    sample: Callable
    support: tuple = (-math.inf, math.inf)
    effective_range: tuple = (-math.inf, math.inf)

    def __call__(self, t, deriv: int = 0):
        return self.pdf(t, deriv)


def polar_normal(rng, n: int) -> np.ndarray:
    """Standard normal draws via the Marsaglia polar transform."""
    out = np.empty(0)
    while out.size < n:
        m = max(8, int(0.7 * (n - out.size)) + 8)
        u = 2.0 * rng.random(m) - 1.0
        v = 2.0 * rng.random(m) - 1.0
        s = u * u + v * v
        ok = (s > 0.0) & (s < 1.0)
        f = np.sqrt(-2.0 * np.log(s[ok]) / s[ok])
        out = np.concatenate([out, u[ok] * f, v[ok] * f])
    return out[:n]


def _phi_derivs(u, d):
    f = np.exp(-0.5 * u * u) / _SQRT_2PI
    if d == 0:
        return f
    if d == 1:
        return -u * f
    if d == 2:
        return (u * u - 1.0) * f
    if d == 3:
        return (3.0 * u - u**3) * f
    if d == 4:
        return (u**4 - 6.0 * u * u + 3.0) * f
    raise ValueError("derivatives available up to order 4")


def normal_density(mu: float = 0.0, sigma: float = 1.0) -> TrueDensity:
    def pdf(t, deriv: int = 0):
        u = (np.asarray(t, dtype=float) - mu) / sigma
        return _phi_derivs(u, deriv) / sigma ** (deriv + 1)

    def sample(rng, n):
        return mu + sigma * polar_normal(rng, n)

    return TrueDensity(
        name=f"normal({mu},{sigma})",
        pdf=pdf,
        sample=sample,
        effective_range=(mu - 16.0 * sigma, mu + 16.0 * sigma),
    )


def mixture_density(weights, mus, sigmas) -> TrueDensity:
    weights = np.asarray(weights, dtype=float)
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if not math.isclose(float(np.sum(weights)), 1.0, rel_tol=1e-12):
        raise ValueError("mixture weights must sum to 1")

    def pdf(t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t, dtype=float)
        for w, m, s in zip(weights, mus, sigmas):
            out += w * _phi_derivs((t - m) / s, deriv) / s ** (deriv + 1)
        return out

    def sample(rng, n):
        comp = np.searchsorted(np.cumsum(weights), rng.random(n), side="right")
        comp = np.minimum(comp, len(weights) - 1)
        z = polar_normal(rng, n)
        return mus[comp] + sigmas[comp] * z

    label = ",".join(f"{w:g}*N({m:g},{s:g})" for w, m, s in zip(weights, mus, sigmas))
    lo = float(np.min(mus - 16.0 * sigmas))
    hi = float(np.max(mus + 16.0 * sigmas))
    return TrueDensity(
        name=f"mix({label})", pdf=pdf, sample=sample, effective_range=(lo, hi)
    )


def exponential_density(rate: float = 1.0) -> TrueDensity:
    if rate <= 0:
        raise ValueError("rate must be positive")

    def pdf(t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        vals = np.where(t >= 0, rate * np.exp(-rate * np.clip(t, 0, None)), 0.0)
        return (-rate) ** deriv * vals

    def sample(rng, n):
        return -np.log1p(-rng.random(n)) / rate

    return TrueDensity(
        name=f"exp({rate})",
        pdf=pdf,
        sample=sample,
        support=(0.0, math.inf),
        effective_range=(0.0, 46.0 / rate),
    )


def _wrap_density(f_true):
    """Accept a TrueDensity or a plain callable (derivatives by central
    differences in the latter case)."""
    if isinstance(f_true, TrueDensity):
        return f_true

    def pdf(t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        if deriv == 0:
            return np.asarray(f_true(t), dtype=float)
        step = 1e-4 * (1.0 + np.abs(t))
        if deriv == 1:
            return (pdf(t + step) - pdf(t - step)) / (2.0 * step)
        return (pdf(t + step, deriv - 1) - pdf(t - step, deriv - 1)) / (2.0 * step)

    return TrueDensity(name="user", pdf=pdf, sample=None)


# ---------------------------------------------------------------------------
# population oracle


@dataclass(frozen=True)
class PopulationFit:
    x: float
    h: float
    theta0: ParamVector
    f0_at_x: float
    bias: float
    kl_local: float


def _truth_window(kernel, h, x, f_true, support, trunc):
    """Kernel window intersected with the support and effective range of
    the true density (and an explicit support clip)."""
    s = kernel.trunc_radius(trunc) * h
    lo, hi = x - s, x + s
    clipped = False
    for b in (support, f_true.support, f_true.effective_range):
        if b is None:
            continue
        if b[0] > lo:
            lo, clipped = b[0], True
        if b[1] < hi:
            hi, clipped = b[1], True
    return lo, hi, clipped


class _PopProblem(_Problem):
    """Estimating equations with the data side replaced by its
    population expectation under f_true (quadrature)."""

    def __init__(self, family, scheme, kernel, h, f_true, x, trunc, support):
        self.family = family
        self.scheme = scheme
        self.kernel = kernel
        self.h = float(h)
        self.x = float(x)
        self.support = support
        s = kernel.trunc_radius(trunc) * self.h
        self._win = (self.x - s, self.x + s)
        lo, hi, clipped = _truth_window(kernel, self.h, self.x, f_true, support, trunc)
        if lo >= hi:
            raise ValueError("empty integration window for the population fit")
        t, wt = gauss_legendre_nodes(lo, hi, panels=4 if clipped else 1)
        kh = kernel.eval((t - self.x) / self.h) / self.h
        self._dt = t
        self._dw = wt
        self._ft = f_true(t)
        self._dwkh = wt * kh * self._ft
        self._const_data = None
        self._nodes_key = None
        self._nodes = None

    def data_side(self, theta_raw):
        if self.scheme.theta_free:
            if self._const_data is None:
                w = self.scheme.weight(self.x, self._dt, theta_raw)
                self._const_data = w @ self._dwkh
            return self._const_data
        w = self.scheme.weight(self.x, self._dt, theta_raw)
        return w @ self._dwkh

    def pop_stats(self):
        """Population analogue of the classic smoother stats: the data
        sums replaced by quadrature against f_true."""
        from .kernels import SmootherStats

        z = (self._dt - self.x) / self.h
        ft = float(np.sum(self._dwkh))
        g = float(np.sum(self._dwkh * (self._dt - self.x)))
        g2 = float(np.sum(self._dwkh * (self._dt - self.x) ** 2))
        if self.kernel.has_analytic_derivs:
            d1 = -float(np.sum(self._dw * self.kernel.deriv1(z) * self._ft)) / self.h**2
            d2 = float(np.sum(self._dw * self.kernel.deriv2(z) * self._ft)) / self.h**3
        else:
            d1 = g / (self.h**2 * kernel_moment(self.kernel, 2))
            d2 = 0.0
        q = d1 / ft if ft > 0 else None
        dh = d2 / ft - q * q if ft > 0 else None
        return SmootherStats(
            x=self.x,
            f_tilde=ft,
            f_tilde_d1=d1,
            f_tilde_d2=d2,
            g_tilde=g,
            g2_tilde=g2,
            q_tilde=q,
            d_hat=dh,
        )


def kl_local_distance(family, kernel, h, f_true, x, theta_raw,
                      trunc=DEFAULT_TRUNC, support=None) -> float:
    """Locally weighted Kullback-Leibler-type distance

    int K_h(t-x) [ f log(f/f_theta) - (f - f_theta) ] dt  >= 0.
    """
    f_true = _wrap_density(f_true)
    lo, hi, clipped = _truth_window(kernel, h, x, f_true, support, trunc)
    if lo >= hi:
        return 0.0
    t, wt = gauss_legendre_nodes(lo, hi, panels=4 if clipped else 1)
    kh = kernel.eval((t - x) / h) / h
    f = f_true(t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lf = family.log_density(t, theta_raw)
        ft = family.density(t, theta_raw)
        rel = np.where(f > 0, f * (np.log(np.where(f > 0, f, 1.0)) - lf), 0.0)
    return float(np.sum(wt * kh * (rel - (f - ft))))


def population_theta0(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    h: float,
    f_true,
    x: float,
    support: Optional[tuple] = None,
    theta_init=None,
    trunc: float = DEFAULT_TRUNC,
    grad_tol: float = 1e-12,
    max_iter: int = 200,
    check_kl: bool = True,
) -> PopulationFit:
    """Solve the population estimating equations for the locally least
    false parameter.

    For the score scheme the root is additionally cross-checked against a
    direct Nelder-Mead minimization of the local Kullback-Leibler
    distance; disagreement beyond 1e-6 raises.
    """
    f_true = _wrap_density(f_true)
    prob = _PopProblem(family, scheme, kernel, h, f_true, x, trunc, support)
    if theta_init is None:
        theta_init = family.init_guess(prob.pop_stats(), h)
    theta_int = family.encode(theta_init)
    scales = (
        family.param_scales(h) if family.param_scales is not None else np.ones(family.p)
    )
    fx = float(f_true(np.array([x]))[0])
    cfg = FitConfig(grad_tol=grad_tol, max_iter=max_iter, max_halvings=40)
    theta_int, gnorm, _, status = _newton(
        prob, theta_int, scales, cfg, vscale=max(fx, 1e-12)
    )
    if status is not FitStatus.CONVERGED:
        raise RuntimeError(
            f"population root not found in {max_iter} iterations "
            f"(h={h}, x={x}, |V|={gnorm:.3g})"
        )
    theta_raw = family.decode(theta_int)
    kl = kl_local_distance(
        family, kernel, h, f_true, x, theta_raw, trunc=trunc, support=support
    )
    if check_kl and scheme.kind == "score":
        theta_kl = _kl_argmin(
            family, kernel, h, f_true, x, theta_int, trunc, support
        )
        if float(np.max(np.abs(theta_kl - theta_int))) > 1e-6:
            raise RuntimeError(
                "estimating-equation root and local KL minimizer disagree: "
                f"{theta_int} vs {theta_kl}"
            )
    f0 = float(family.density(np.array([x]), theta_raw)[0])
    return PopulationFit(
        x=float(x),
        h=float(h),
        theta0=family.param_vector(theta_int),
        f0_at_x=f0,
        bias=f0 - fx,
        kl_local=kl,
    )


def _kl_argmin(family, kernel, h, f_true, x, theta_int0, trunc, support):
    def objective(theta_int):
        theta_raw = family.decode(theta_int)
        return kl_local_distance(
            family, kernel, h, f_true, x, theta_raw, trunc=trunc, support=support
        )

    res = minimize(
        objective,
        np.asarray(theta_int0, dtype=float),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000, "maxfev": 8000},
    )
    return np.asarray(res.x, dtype=float)


@dataclass(frozen=True)
class BiasCurve:
    h_list: np.ndarray
    bias: np.ndarray
    slope: float
    coefficient: float  # bias / h^round(slope) at the smallest h
    theta0_smallest: ParamVector


def population_bias_curve(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    f_true,
    x: float,
    h_list,
    support: Optional[tuple] = None,
    boundary_rel: Optional[float] = None,
) -> BiasCurve:
    """Population bias f(x, theta0(h)) - f(x) over a decreasing h list,
    with a log-log slope fitted on the 4 smallest bandwidths.

    With ``boundary_rel`` set, the evaluation point tracks the boundary
    as x = boundary_rel * h (and the fit clips at the support).
    Successive fits are warm-started by transporting the previous root.
    """
    h_list = np.asarray(h_list, dtype=float)
    if h_list.size < 4 or not np.all(np.diff(h_list) < 0):
        raise ValueError("h_list must be decreasing with at least 4 values")
    f_true = _wrap_density(f_true)
    biases = []
    theta_prev = None
    h_prev = None
    last_fit = None
    for h in h_list:
        xh = boundary_rel * h if boundary_rel is not None else x
        init = None
        if theta_prev is not None:
            if family.transport is not None and boundary_rel is not None:
                init = family.transport(theta_prev, boundary_rel * h_prev, xh)
            else:
                init = theta_prev
        fam_h = family.recenter(xh) if family.recenter is not None else family
        sch_h = weights_make(scheme.kind, fam_h)
        fit = population_theta0(
            fam_h, sch_h, kernel, h, f_true, xh,
            support=support, theta_init=init, check_kl=False,
        )
        biases.append(fit.bias)
        theta_prev = fam_h.decode(fit.theta0.values)
        h_prev = h
        last_fit = fit
    biases = np.asarray(biases)
    hs, bs = h_list[-4:], np.abs(biases[-4:])
    if np.any(bs <= 1e-13):
        slope = math.inf  # model-correct: bias at noise level, no power law
        coef = 0.0
    else:
        slope = float(np.polyfit(np.log(hs), np.log(bs), 1)[0])
        coef = float(biases[-1] / h_list[-1] ** round(slope))
    return BiasCurve(
        h_list=h_list,
        bias=biases,
        slope=slope,
        coefficient=coef,
        theta0_smallest=last_fit.theta0,
    )


# ---------------------------------------------------------------------------
# theoretical factors


@dataclass(frozen=True)
class AsymptoticFactors:
    """Bundle of the leading bias/variance theory at a point: the bias
    factor b(x), the variance factor tau(K)^2, and the integrated
    roughnesses of the new and classic bias factors."""

    b_at_x: float
    tau_sq: float
    r_new: float
    r_trad: float

    def __post_init__(self):
        if not self.tau_sq > 0:
            raise ValueError("tau^2 must be positive")
        if self.r_new < 0 or self.r_trad < 0:
            raise ValueError("roughnesses must be nonnegative")


def bias_factor(case: str, **d) -> float:
    """Leading bias factor b(x) (the multiplier of sigma_K^2 h^2 / 2).

    Cases and required derivatives:

    - ``one_param``: f_d1, f_d2, f0_d1, f0_d2, v0_log_d1 ->
      f'' - f0'' + 2 (v0'/v0)(f' - f0')
    - ``two_param``: f_d2, f0_d2 -> f'' - f0''
    - ``mult_const``: f, f_d2, finit, finit_d2 -> f'' - f finit''/finit
    - ``mult_loglin``: f, f_d1, f_d2, finit, finit_d1, finit_d2 ->
      f'' - (f')^2/f + f (finit')^2/finit^2 - f finit''/finit
    - ``hjort_glad``: f, f_d1, f_d2, finit, finit_d1, finit_d2 ->
      finit (f/finit)''
    """
    try:
        if case == "one_param":
            return (
                d["f_d2"]
                - d["f0_d2"]
                + 2.0 * d["v0_log_d1"] * (d["f_d1"] - d["f0_d1"])
            )
        if case == "two_param":
            return d["f_d2"] - d["f0_d2"]
        if case == "mult_const":
            return d["f_d2"] - d["f"] * d["finit_d2"] / d["finit"]
        if case == "mult_loglin":
            return (
                d["f_d2"]
                - d["f_d1"] ** 2 / d["f"]
                + d["f"] * d["finit_d1"] ** 2 / d["finit"] ** 2
                - d["f"] * d["finit_d2"] / d["finit"]
            )
        if case == "hjort_glad":
            g, g1, g2 = d["finit"], d["finit_d1"], d["finit_d2"]
            f, f1, f2 = d["f"], d["f_d1"], d["f_d2"]
            return f2 - 2.0 * f1 * g1 / g + 2.0 * f * g1 * g1 / (g * g) - f * g2 / g
    except KeyError as e:
        raise ValueError(f"missing derivative {e} for bias factor case {case!r}")
    raise ValueError(f"unknown bias factor case {case!r}")


def _basis_matrices(kernel: Kernel, p: int, rebase=None):
    s = kernel.trunc_radius(DEFAULT_TRUNC)
    t, w = gauss_legendre_nodes(-s, s, panels=2)
    V = np.vander(t, p, increasing=True).T
    v0 = np.vander(np.zeros(1), p, increasing=True).T[:, 0]
    if rebase is not None:
        rebase = np.asarray(rebase, dtype=float)
        V = rebase @ V
        v0 = rebase @ v0
    k = kernel.eval(t)
    a = (V * (w * k)) @ V.T
    b = (V * (w * k * k)) @ V.T
    return a, b, v0


def tau_squared(kernel: Kernel, p: int, rebase=None) -> float:
    """Small-bandwidth variance factor for a p-parameter local fit,

    tau(K)^2 = e1' (int K V V')^{-1} (int K^2 V V') (int K V V')^{-1} e1

    with V(z) = (1, z, ..., z^{p-1}).  Equals R(K) for p <= 2 and the
    roughness of the fourth-order equivalent kernel for p in {3, 4}.
    ``rebase`` replaces V by A V (the factor is invariant).
    """
    if not 1 <= p <= 4:
        raise ValueError("p must be in 1..4")
    a, b, v0 = _basis_matrices(kernel, p, rebase)
    try:
        y = np.linalg.solve(a, v0)
    except np.linalg.LinAlgError:
        raise ValueError("singular kernel moment matrix") from None
    return float(y @ b @ y)


def fourth_order_equivalent(kernel: Kernel):
    """The (sign-normalized) fourth-order kernel equivalent of a three-
    or four-parameter local fit: z -> (k4 - k2 z^2)/(k4 - k2^2) K(z).

    Integrates to one, has vanishing second moment, and its roughness
    equals tau_squared(kernel, 4).
    """
    k2 = kernel_moment(kernel, 2)
    k4 = kernel_moment(kernel, 4)
    denom = k4 - k2 * k2
    if denom <= 0:
        raise ValueError("degenerate kernel moments: k4 <= k2^2")

    def fok(z):
        z = np.asarray(z, dtype=float)
        return (k4 - k2 * z * z) / denom * kernel.eval(z)

    return fok


def jh_mh_matrices(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    h: float,
    f_true,
    x: float,
    trunc: float = DEFAULT_TRUNC,
):
    """Sandwich matrices of the fixed-h law for theta_hat(x):

    J_h = int K_h [ v u' f0 + v* (f0 - f) ] dt
    M_h = h int K_h^2 v v' f dt - h xi xi',  xi = int K_h v f dt,

    all evaluated at the locally least false parameter.
    """
    f_true = _wrap_density(f_true)
    fit = population_theta0(
        family, scheme, kernel, h, f_true, x, trunc=trunc, check_kl=False
    )
    theta = family.decode(fit.theta0.values)
    lo, hi, _ = _truth_window(kernel, h, x, f_true, None, trunc)
    t, w = gauss_legendre_nodes(lo, hi, panels=4)
    kh = kernel.eval((t - x) / h) / h
    f = f_true(t)
    f0 = family.density(t, theta)
    v = scheme.weight(x, t, theta)
    u = family.score(t, theta)
    vstar = scheme.weight_param_jacobian(x, t, theta)
    jh = (v * (w * kh * f0)) @ u.T + np.einsum(
        "jkm,m->jk", vstar, w * kh * (f0 - f)
    )
    xi = v @ (w * kh * f)
    mh = h * ((v * (w * kh * kh * f)) @ v.T) - h * np.outer(xi, xi)
    return jh, mh, fit


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class EstimatorSpec:
    """What to run in a Monte Carlo cell."""

    model: str  # classic | constant | loglinear | logquad | logcubic | linear | normal
    h: float
    kernel: str = "gaussian"
    scheme: str = "score"

    @property
    def n_params(self) -> int:
        return {
            "classic": 1,
            "constant": 1,
            "linear": 2,
            "loglinear": 2,
            "logquad": 3,
            "logcubic": 4,
            "normal": 2,
        }[self.model]


@dataclass
class McReport:
    estimator: str
    n: int
    reps: int
    seed: int
    h: float
    grid: np.ndarray
    f_true: np.ndarray
    emp_bias: np.ndarray
    emp_var: np.ndarray
    emp_mse: np.ndarray
    se_bias: np.ndarray
    se_var: np.ndarray
    theory_bias: np.ndarray
    theory_var: np.ndarray
    failed_reps: int
    flagged: bool


def _estimate_curve(spec: EstimatorSpec, data, grid) -> tuple[np.ndarray, bool]:
    """One realized estimate on the grid; returns (values, failed)."""
    from . import models

    kernel = get_kernel(spec.kernel)
    h = spec.h
    if spec.model == "classic" or (
        spec.model == "loglinear" and spec.kernel == "gaussian"
    ):
        out = np.empty(len(grid))
        for i, xg in enumerate(grid):
            st = classic_estimate(kernel, h, data, xg)
            if st.f_tilde < 1e-12:
                out[i] = 0.0
            elif spec.model == "classic":
                out[i] = st.f_tilde
            else:
                out[i] = cf_loglinear(st, h).f_hat
        return out, False
    factories = {
        "constant": lambda xg: models.family_polyexp(1, xg),
        "loglinear": lambda xg: models.family_polyexp(2, xg),
        "logquad": lambda xg: models.family_polyexp(3, xg),
        "logcubic": lambda xg: models.family_polyexp(4, xg),
        "linear": models.family_linear,
        "normal": lambda xg: models.family_normal(),
    }
    fam = factories[spec.model](grid[0])
    sch = weights_make(spec.scheme, fam)
    est = fit_grid(fam, sch, kernel, h, data, grid)
    failed = any(
        s in (FitStatus.MAX_ITER, FitStatus.DEGENERATE) for s in est.statuses
    )
    return est.f_hat, failed


def _theory_columns(spec: EstimatorSpec, dens: TrueDensity, grid, n):
    kernel = get_kernel(spec.kernel)
    k2 = kernel_moment(kernel, 2)
    h = spec.h
    f = dens(grid)
    f1 = dens(grid, 1)
    f2 = dens(grid, 2)
    if spec.model in ("classic", "constant", "linear"):
        b = f2
    elif spec.model == "loglinear":
        with np.errstate(divide="ignore", invalid="ignore"):
            b = f2 - np.where(f > 0, f1 * f1 / f, 0.0)
    else:
        b = np.full_like(f, math.nan)
    t2 = tau_squared(kernel, min(spec.n_params, 4))
    theory_bias = 0.5 * k2 * h * h * b
    theory_var = t2 * f / (n * h) - f * f / n
    return theory_bias, theory_var


def mc_experiment(
    true_density: TrueDensity,
    estimator: EstimatorSpec,
    n: int,
    reps: int,
    seed: int,
    grid,
    threads: int = 1,
) -> McReport:
    """Seeded Monte Carlo bias/variance study of an estimator.

    Replication r draws its sample from ``default_rng((seed, r))``, so
    results are independent of execution order and thread count; moments
    are reduced in replication order.  A report is flagged when more than
    5% of replications contain a non-converged fit.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if true_density.sample is None:
        raise ValueError("true density has no sampler")
    grid = np.asarray(grid, dtype=float)
    values = np.empty((reps, grid.size))
    failed = np.zeros(reps, dtype=bool)

    def run(r):
        rng = np.random.default_rng((seed, r))
        data = true_density.sample(rng, n)
        values[r], failed[r] = _estimate_curve(estimator, data, grid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run, range(reps)))
    else:
        for r in range(reps):
            run(r)

    f = true_density(grid)
    mean = values.mean(axis=0)
    emp_bias = mean - f
    emp_var = values.var(axis=0)  # population variance: mse = bias^2 + var
    emp_mse = emp_bias**2 + emp_var
    sd = values.std(axis=0, ddof=1)
    se_bias = sd / math.sqrt(reps)
    se_var = emp_var * math.sqrt(2.0 / (reps - 1))
    theory_bias, theory_var = _theory_columns(estimator, true_density, grid, n)
    nfail = int(np.sum(failed))
    return McReport(
        estimator=estimator.model,
        n=n,
        reps=reps,
        seed=seed,
        h=estimator.h,
        grid=grid,
        f_true=f,
        emp_bias=emp_bias,
        emp_var=emp_var,
        emp_mse=emp_mse,
        se_bias=se_bias,
        se_var=se_var,
        theory_bias=theory_bias,
        theory_var=theory_var,
        failed_reps=nfail,
        flagged=nfail > 0.05 * reps,
    )
