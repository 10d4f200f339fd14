"""Core fitting engine: local log-likelihood, estimating equations,
damped Newton root finding, and grid sweeps with warm starts.

For each evaluation point x the fitted parameters solve the p equations

    V_n(x, theta) = n^{-1} sum_i K_h(x_i - x) v(x, x_i, theta)
                    - int K_h(t - x) v(x, t, theta) f(t, theta) dt = 0,

with v the weight functions of the chosen scheme.  The score scheme makes
this the stationarity condition of the local log-likelihood.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .kernels import (
    DEFAULT_TRUNC,
    Kernel,
    SmootherStats,
    classic_estimate,
    gauss_legendre_nodes,
    moment_sums,
)
from .models import LocalFamily, ParamVector, WeightScheme, weights_make

_JAC_REG = 1e-10


class FitStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    SKIPPED = "skipped"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class FitConfig:
    """Solver configuration.

    ``support`` clips the model integral (e.g. ``(0, inf)`` for densities
    supported on the half line); ``min_mass`` is the smoother mass below
    which a point is reported as skipped rather than fitted.
    """

    grad_tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    trunc: float = DEFAULT_TRUNC
    warm_start: bool = True
    min_mass: float = 1e-12
    support: Optional[tuple] = None


DEFAULT_CONFIG = FitConfig()


@dataclass(frozen=True)
class LocalFitResult:
    x: float
    theta_hat: Optional[ParamVector]
    f_hat: float
    status: FitStatus
    iterations: int
    grad_norm: float
    local_loglik: float


@dataclass
class DensityEstimate:
    """Grid-level assembly of local fits with the running-parameter trace."""

    grid: np.ndarray
    f_hat: np.ndarray
    theta_trace: list
    statuses: list
    h: float
    kernel: str
    model: str
    scheme: str

    def __post_init__(self):
        n = len(self.grid)
        if not (n == len(self.f_hat) == len(self.theta_trace) == len(self.statuses)):
            raise ValueError("length mismatch in density estimate")
        if n > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")


class _Problem:
    """Bound state for one evaluation point: data-side sums, quadrature
    window handling, and the estimating-equation residual."""

    def __init__(self, family, scheme, kernel, h, data, x, trunc, support):
        self.family = family
        self.scheme = scheme
        self.kernel = kernel
        self.h = float(h)
        self.x = float(x)
        self.support = support
        self.data = np.ascontiguousarray(data, dtype=float)
        self.n = self.data.size
        s = kernel.trunc_radius(trunc) * self.h
        self._win = (self.x - s, self.x + s)
        if scheme.from_moments is not None:
            self._moments = moment_sums(
                kernel, self.h, self.data, self.x, scheme.moment_order
            )
            self._wdata = None
        else:
            self._moments = None
            if math.isfinite(kernel.support_radius):
                lo, hi = self._win
                self._wdata = self.data[(self.data >= lo) & (self.data <= hi)]
            else:
                self._wdata = self.data
            self._kw = kernel.eval((self._wdata - self.x) / self.h) / self.h
        self._nodes_key = None
        self._nodes = None

    def data_side(self, theta_raw):
        if self._moments is not None:
            return self.scheme.from_moments(self.x, self.h, self._moments, theta_raw)
        if self._wdata.size == 0:
            return np.zeros(self.scheme.p)
        w = self.scheme.weight(self.x, self._wdata, theta_raw)
        return (w @ self._kw) / self.n

    def _window(self, theta_raw):
        lo, hi = self._win
        clipped = False
        if self.support is not None:
            if self.support[0] > lo:
                lo, clipped = self.support[0], True
            if self.support[1] < hi:
                hi, clipped = self.support[1], True
        if self.family.effective_support is not None:
            eff = self.family.effective_support(theta_raw)
            if eff is not None:
                if eff[0] > lo:
                    lo, clipped = eff[0], True
                if eff[1] < hi:
                    hi, clipped = eff[1], True
        return lo, hi, clipped

    def quad_nodes(self, theta_raw):
        lo, hi, clipped = self._window(theta_raw)
        if lo >= hi:
            return None
        key = (lo, hi)
        if key != self._nodes_key:
            t, wt = gauss_legendre_nodes(lo, hi, panels=4 if clipped else 1)
            kh = self.kernel.eval((t - self.x) / self.h) / self.h
            self._nodes_key = key
            self._nodes = (t, wt * kh)
        return self._nodes

    def model_integral(self, theta_raw):
        nodes = self.quad_nodes(theta_raw)
        if nodes is None:
            # model mass entirely outside the kernel window: treat the
            # parameter as out of domain rather than as a spurious root
            return np.full(self.scheme.p, np.nan)
        t, wkh = nodes
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            dens = self.family.density(t, theta_raw)
            v = self.scheme.weight(self.x, t, theta_raw)
            return v @ (wkh * dens)

    def residual(self, theta_raw):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self.data_side(theta_raw) - self.model_integral(theta_raw)

    def residual_int(self, theta_int):
        return self.residual(self.family.decode(theta_int))

    def jacobian_int(self, theta_int):
        """d residual / d internal theta.  Analytic for the log-polynomial
        family under its own (theta-free, polynomial) weights, central
        finite differences otherwise.  Returns None when non-finite."""
        fam = self.family
        if (
            self.scheme.theta_free
            and self.scheme.from_moments is not None
            and fam.name.startswith("polyexp")
        ):
            nodes = self.quad_nodes(theta_int)
            if nodes is None:
                return None
            t, wkh = nodes
            dt = t - self.x
            with np.errstate(over="ignore", invalid="ignore"):
                dens = fam.density(t, theta_int)
            pw = np.vander(dt, 2 * fam.p - 1, increasing=True).T
            mom = pw @ (wkh * dens)
            if not np.all(np.isfinite(mom)):
                return None
            return -np.array([[mom[j + k] for k in range(fam.p)] for j in range(fam.p)])
        p = fam.p
        out = np.empty((p, p))
        for k in range(p):
            step = 1e-6 * (1.0 + abs(theta_int[k]))
            tp = np.array(theta_int)
            tp[k] += step
            tm = np.array(theta_int)
            tm[k] -= step
            out[:, k] = (self.residual_int(tp) - self.residual_int(tm)) / (2.0 * step)
        if not np.all(np.isfinite(out)):
            return None
        return out


def _unit_scheme() -> WeightScheme:
    return WeightScheme(
        kind="unit",
        p=1,
        weight=lambda x, t, theta: np.ones((1, np.size(t))),
        weight_param_jacobian=lambda x, t, theta: np.zeros((1, 1, np.size(t))),
        theta_free=True,
    )


def local_loglik(
    family: LocalFamily,
    kernel: Kernel,
    h: float,
    data,
    x: float,
    theta,
    trunc: float = DEFAULT_TRUNC,
    support: Optional[tuple] = None,
) -> float:
    """Kernel-weighted local log-likelihood

    n^{-1} sum_i K_h(x_i - x) log f(x_i, theta) - int K_h(t - x) f(t, theta) dt.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    data = np.ascontiguousarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    theta = np.asarray(theta, dtype=float)
    kw = kernel.eval((data - x) / h) / h
    active = kw > 0
    term = 0.0
    if np.any(active):
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = family.log_density(data[active], theta)
        if not np.all(np.isfinite(logf)):
            raise ValueError("non-finite log-density at a weighted data point")
        term = float(np.dot(kw[active], logf)) / data.size
    prob = _Problem(family, _unit_scheme(), kernel, h, data, x, trunc, support)
    return term - float(prob.model_integral(theta)[0])


def estimating_eqs(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    h: float,
    data,
    x: float,
    theta,
    trunc: float = DEFAULT_TRUNC,
    support: Optional[tuple] = None,
) -> np.ndarray:
    """Estimating-equation residual V_n(x, theta) at raw parameters."""
    if h <= 0:
        raise ValueError("h must be positive")
    prob = _Problem(family, scheme, kernel, h, data, x, trunc, support)
    v = prob.residual(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite weight or density at a weighted data point")
    return v


def _newton(prob, theta_int, scales, cfg, vscale=1.0):
    """Damped Newton on the residual.

    ``vscale`` sets the natural magnitude of the equations (the local
    kernel mass); convergence requires the sup-norm of the residual to
    drop below ``grad_tol * vscale`` and the reported gradient norm is
    on that relative scale.  Returns (theta, grad_norm, iters, status).
    """
    v = prob.residual_int(theta_int)
    if not np.all(np.isfinite(v)):
        return theta_int, math.inf, 0, FitStatus.MAX_ITER
    gnorm = float(np.max(np.abs(v)))
    tol = cfg.grad_tol * vscale
    singular_run = 0
    status = FitStatus.MAX_ITER
    it = 0
    eye = np.eye(prob.family.p)
    for it in range(cfg.max_iter + 1):
        if gnorm <= tol:
            return theta_int, gnorm / vscale, it, FitStatus.CONVERGED
        if it == cfg.max_iter:
            break
        jac = prob.jacobian_int(theta_int)
        step = None
        if jac is not None:
            js = jac * scales[None, :] + _JAC_REG * eye
            try:
                y = np.linalg.solve(js, -v)
                if np.all(np.isfinite(y)):
                    step = scales * y
            except np.linalg.LinAlgError:
                pass
        if step is None:
            singular_run += 1
            if singular_run >= 3:
                return theta_int, gnorm / vscale, it, FitStatus.DEGENERATE
            step = -scales * v  # conservative fallback direction
        else:
            singular_run = 0
        lam = 1.0
        accepted = None
        fallback = None
        for _ in range(cfg.max_halvings + 1):
            cand = theta_int + lam * step
            vc = prob.residual_int(cand)
            if np.all(np.isfinite(vc)):
                nc = float(np.max(np.abs(vc)))
                if nc < gnorm:
                    accepted = (cand, vc, nc)
                    break
                fallback = (cand, vc, nc)  # smallest finite step so far
            lam *= 0.5
        if accepted is None:
            if fallback is None:
                break  # nowhere finite to go
            accepted = fallback
        theta_int, v, gnorm = accepted
    return theta_int, gnorm / vscale, it, status


def fit_at(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    h: float,
    data,
    x: float,
    cfg: FitConfig = DEFAULT_CONFIG,
    theta_init=None,
    stats: Optional[SmootherStats] = None,
) -> LocalFitResult:
    """Solve V_n(x, theta) = 0 by damped Newton iteration.

    Returns a skipped result with zero density where the kernel window
    carries mass below ``cfg.min_mass``.  Non-convergence is reported via
    the status field, never raised.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    data = np.ascontiguousarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    if stats is None:
        stats = classic_estimate(kernel, h, data, x)
    if stats.f_tilde < cfg.min_mass:
        return LocalFitResult(
            x=float(x),
            theta_hat=None,
            f_hat=0.0,
            status=FitStatus.SKIPPED,
            iterations=0,
            grad_norm=math.nan,
            local_loglik=math.nan,
        )
    if theta_init is not None:
        theta_int = family.encode(theta_init)
    else:
        theta_int = family.encode(family.init_guess(stats, h))
    prob = _Problem(family, scheme, kernel, h, data, x, cfg.trunc, cfg.support)
    scales = (
        family.param_scales(h) if family.param_scales is not None else np.ones(family.p)
    )
    theta_int, gnorm, iters, status = _newton(
        prob, theta_int, scales, cfg, vscale=stats.f_tilde
    )

    theta_raw = family.decode(theta_int)
    with np.errstate(over="ignore", invalid="ignore"):
        f_hat = float(family.density(np.array([x]), theta_raw)[0])
    f_hat = max(f_hat, 0.0) if math.isfinite(f_hat) else 0.0
    try:
        ll = local_loglik(
            family, kernel, h, data, x, theta_raw, trunc=cfg.trunc, support=cfg.support
        )
    except ValueError:
        ll = math.nan
    return LocalFitResult(
        x=float(x),
        theta_hat=family.param_vector(theta_int),
        f_hat=f_hat,
        status=status,
        iterations=iters,
        grad_norm=gnorm,
        local_loglik=ll,
    )


def fit_grid(
    family: LocalFamily,
    scheme: WeightScheme,
    kernel: Kernel,
    h: float,
    data,
    grid,
    cfg: FitConfig = DEFAULT_CONFIG,
    threads: int = 1,
) -> DensityEstimate:
    """Sweep the grid left to right, re-centering the family at each point.

    With ``warm_start`` on, each fit starts from the previous converged
    parameters (transported to the new center); the sweep is sequential
    by contract.  With ``warm_start`` off the points are independent and
    may be evaluated concurrently (``threads``), assembled in grid order.
    Per-point failures are recorded in the statuses, never raised.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing")
    data = np.ascontiguousarray(data, dtype=float)

    def one(xg, theta_init=None):
        fam_g = family.recenter(xg) if family.recenter is not None else family
        sch_g = weights_make(scheme.kind, fam_g)
        return fit_at(fam_g, sch_g, kernel, h, data, xg, cfg, theta_init=theta_init)

    if cfg.warm_start:
        results = []
        prev_theta = None
        prev_x = None
        for xg in grid:
            init = None
            if prev_theta is not None:
                if family.transport is not None:
                    init = family.transport(prev_theta, prev_x, xg)
                else:
                    init = prev_theta
            res = one(xg, init)
            if res.status is FitStatus.CONVERGED:
                prev_theta = family.decode(res.theta_hat.values)
                prev_x = xg
            elif res.status is FitStatus.SKIPPED:
                prev_theta = None
                prev_x = None
            results.append(res)
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, grid))
    else:
        results = [one(xg) for xg in grid]

    return DensityEstimate(
        grid=grid,
        f_hat=np.array([r.f_hat for r in results]),
        theta_trace=[r.theta_hat for r in results],
        statuses=[r.status for r in results],
        h=float(h),
        kernel=kernel.name,
        model=family.name,
        scheme=scheme.kind,
    )
