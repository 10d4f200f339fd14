"""Product-kernel bivariate estimation: the classic smoother and the
locally parametric method with tensor quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .kernels import Kernel, gauss_legendre_nodes
from .models import ParamVector
from .solver import DEFAULT_CONFIG, FitConfig, FitStatus, LocalFitResult, _newton

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def as_sample2d(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("bivariate sample must have shape (n, 2)")
    if not np.all(np.isfinite(data)):
        raise ValueError("bivariate sample contains non-finite values")
    return data


@dataclass(frozen=True)
class Stats2D:
    x: tuple
    f_tilde: float
    f_tilde_d1: float  # d/dx1
    f_tilde_d2: float  # d/dx2


def classic2d_stats(
    k1: Kernel, k2: Kernel, h1: float, h2: float, data, x
) -> Stats2D:
    """Product-kernel estimate with both partial derivatives."""
    data = as_sample2d(data)
    if h1 <= 0 or h2 <= 0:
        raise ValueError("bandwidths must be positive")
    z1 = (data[:, 0] - x[0]) / h1
    z2 = (data[:, 1] - x[1]) / h2
    a = k1.eval(z1)
    b = k2.eval(z2)
    norm = h1 * h2 * data.shape[0]
    f = float(np.sum(a * b)) / norm
    if k1.has_analytic_derivs and k2.has_analytic_derivs:
        d1 = -float(np.sum(k1.deriv1(z1) * b)) / (norm * h1)
        d2 = -float(np.sum(a * k2.deriv1(z2))) / (norm * h2)
    else:
        eps1, eps2 = 1e-5 * h1, 1e-5 * h2
        d1 = (
            float(np.sum(k1.eval(z1 - eps1 / h1) * b))
            - float(np.sum(k1.eval(z1 + eps1 / h1) * b))
        ) / (2.0 * eps1 * norm)
        d2 = (
            float(np.sum(a * k2.eval(z2 - eps2 / h2)))
            - float(np.sum(a * k2.eval(z2 + eps2 / h2)))
        ) / (2.0 * eps2 * norm)
    return Stats2D(x=(float(x[0]), float(x[1])), f_tilde=f, f_tilde_d1=d1, f_tilde_d2=d2)


def classic2d(k1: Kernel, k2: Kernel, h1: float, h2: float, data, x) -> float:
    """f~(x) = n^{-1} sum_i K_{h1,h2}(x_i - x) with a product kernel."""
    return classic2d_stats(k1, k2, h1, h2, data, x).f_tilde


def cf_bilinear2d(stats: Stats2D, h1: float, h2: float) -> float:
    """Closed-form bivariate local log-linear fit, Gaussian product kernel:

    f^ = f~ exp[-(h1^2 (f~_1/f~)^2 + h2^2 (f~_2/f~)^2) / 2].
    """
    if stats.f_tilde <= 0:
        raise ValueError("zero smoother mass")
    q1 = stats.f_tilde_d1 / stats.f_tilde
    q2 = stats.f_tilde_d2 / stats.f_tilde
    return stats.f_tilde * math.exp(-0.5 * (h1 * h1 * q1 * q1 + h2 * h2 * q2 * q2))


@dataclass(frozen=True)
class LocalFamily2D:
    """Bivariate local parametric model; mirrors the 1D contract."""

    name: str
    p: int
    center: tuple
    density: Callable  # (t1, t2, theta_raw) -> (m,)
    score: Callable  # (t1, t2, theta_raw) -> (p, m)
    param_names: tuple
    log_scale: tuple
    init_guess: Callable
    param_scales: Callable
    effective_support: Optional[Callable] = None
    recenter: Optional[Callable] = None
    transport: Optional[Callable] = None

    def encode(self, theta_raw):
        out = np.array(theta_raw, dtype=float)
        for j, is_log in enumerate(self.log_scale):
            if is_log:
                if out[j] <= 0:
                    raise ValueError(f"parameter {self.param_names[j]!r} must be positive")
                out[j] = math.log(out[j])
        return out

    def decode(self, theta_int):
        out = np.array(theta_int, dtype=float)
        with np.errstate(over="ignore"):
            for j, is_log in enumerate(self.log_scale):
                if is_log:
                    out[j] = np.exp(out[j])
        return out

    def param_vector(self, theta_int):
        return ParamVector(
            values=np.array(theta_int, dtype=float),
            names=self.param_names,
            log_scale=self.log_scale,
        )


def family_logpoly2d(order: str, x) -> LocalFamily2D:
    """Log-polynomial bivariate families centered at x:

    const  -> exp(a),                                 p = 1
    linear -> exp(a + b1 dt1 + b2 dt2),               p = 3
    quad   -> ... + (c1 dt1^2 + c2 dt2^2)/2 + d dt1 dt2,  p = 6
    """
    orders = {"const": 1, "linear": 3, "quad": 6}
    if order not in orders:
        raise ValueError(f"order must be one of {sorted(orders)}")
    p = orders[order]
    x1, x2 = float(x[0]), float(x[1])

    def basis(t1, t2):
        d1 = np.asarray(t1, dtype=float) - x1
        d2 = np.asarray(t2, dtype=float) - x2
        rows = [np.ones_like(d1)]
        if p >= 3:
            rows += [d1, d2]
        if p == 6:
            rows += [0.5 * d1 * d1, 0.5 * d2 * d2, d1 * d2]
        return np.vstack(rows)

    def density(t1, t2, theta):
        return np.exp(np.dot(theta, basis(t1, t2)))

    def score(t1, t2, theta):
        return basis(t1, t2)

    def init_guess(stats, h1, h2):
        theta = np.zeros(p)
        theta[0] = math.log(stats.f_tilde)
        if p >= 3:
            theta[1] = stats.f_tilde_d1 / stats.f_tilde
            theta[2] = stats.f_tilde_d2 / stats.f_tilde
        return theta

    def param_scales(h1, h2):
        s = [1.0]
        if p >= 3:
            s += [h1, h2]
        if p == 6:
            s += [h1 * h1, h2 * h2, h1 * h2]
        return np.array(s)

    def transport(theta, old, new):
        e1, e2 = new[0] - old[0], new[1] - old[1]
        th = np.array(theta, dtype=float)
        out = th.copy()
        if p >= 3:
            out[0] = th[0] + th[1] * e1 + th[2] * e2
            if p == 6:
                out[0] += 0.5 * th[3] * e1 * e1 + 0.5 * th[4] * e2 * e2 + th[5] * e1 * e2
                out[1] = th[1] + th[3] * e1 + th[5] * e2
                out[2] = th[2] + th[4] * e2 + th[5] * e1
        return out

    names = ("a", "b1", "b2", "c1", "c2", "d")[:p] if p != 1 else ("a",)
    return LocalFamily2D(
        name=f"logpoly2d-{order}",
        p=p,
        center=(x1, x2),
        density=density,
        score=score,
        param_names=names,
        log_scale=(False,) * p,
        init_guess=init_guess,
        param_scales=param_scales,
        recenter=lambda xx: family_logpoly2d(order, xx),
        transport=transport,
    )


def family_binormal_product() -> LocalFamily2D:
    """Product-normal model with parameters (mu1, sigma1, mu2, sigma2)."""

    def density(t1, t2, theta):
        m1, s1, m2, s2 = theta
        z1 = (np.asarray(t1, dtype=float) - m1) / s1
        z2 = (np.asarray(t2, dtype=float) - m2) / s2
        return np.exp(-0.5 * (z1 * z1 + z2 * z2)) / (2.0 * math.pi * s1 * s2)

    def score(t1, t2, theta):
        m1, s1, m2, s2 = theta
        d1 = np.asarray(t1, dtype=float) - m1
        d2 = np.asarray(t2, dtype=float) - m2
        return np.vstack(
            [
                d1 / s1**2,
                (d1 * d1 / s1**2 - 1.0) / s1,
                d2 / s2**2,
                (d2 * d2 / s2**2 - 1.0) / s2,
            ]
        )

    def init_guess(stats, h1, h2):
        # marginal moment guesses are injected by fit2d via stats extras
        m1, s1 = stats.extra["dim1"]
        m2, s2 = stats.extra["dim2"]
        return np.array([m1, s1, m2, s2])

    def effective_support(theta):
        m1, s1, m2, s2 = theta
        return ((m1 - 16.0 * s1, m1 + 16.0 * s1), (m2 - 16.0 * s2, m2 + 16.0 * s2))

    return LocalFamily2D(
        name="binormal-product",
        p=4,
        center=(0.0, 0.0),
        density=density,
        score=score,
        param_names=("mu1", "sigma1", "mu2", "sigma2"),
        log_scale=(False, True, False, True),
        init_guess=init_guess,
        param_scales=lambda h1, h2: np.ones(4),
        effective_support=effective_support,
    )


@dataclass(frozen=True)
class WeightScheme2D:
    kind: str
    p: int
    weight: Callable  # (x, t1, t2, theta) -> (p, m)


def weights_make2d(kind: str, family: LocalFamily2D) -> WeightScheme2D:
    if kind == "score":
        return WeightScheme2D(
            kind="score",
            p=family.p,
            weight=lambda x, t1, t2, theta: family.score(t1, t2, theta),
        )
    if kind == "l2":
        return WeightScheme2D(
            kind="l2",
            p=family.p,
            weight=lambda x, t1, t2, theta: family.density(t1, t2, theta)[None, :]
            * family.score(t1, t2, theta),
        )
    raise ValueError("bivariate weights: use score or l2")


class _Problem2D:
    def __init__(self, family, scheme, k1, k2, h1, h2, data, x, trunc):
        self.family = family
        self.scheme = scheme
        self.kernels = (k1, k2)
        self.h = (float(h1), float(h2))
        self.x = (float(x[0]), float(x[1]))
        self.data = as_sample2d(data)
        self.n = self.data.shape[0]
        self._wins = tuple(
            (
                self.x[j] - self.kernels[j].trunc_radius(trunc) * self.h[j],
                self.x[j] + self.kernels[j].trunc_radius(trunc) * self.h[j],
            )
            for j in range(2)
        )
        kw = np.ones(self.n)
        inside = np.ones(self.n, dtype=bool)
        for j in range(2):
            zj = (self.data[:, j] - self.x[j]) / self.h[j]
            if math.isfinite(self.kernels[j].support_radius):
                inside &= np.abs(zj) <= self.kernels[j].support_radius
        sub = self.data[inside]
        kw = (
            self.kernels[0].eval((sub[:, 0] - self.x[0]) / self.h[0])
            * self.kernels[1].eval((sub[:, 1] - self.x[1]) / self.h[1])
            / (self.h[0] * self.h[1])
        )
        self._sub = sub
        self._kw = kw
        self._nodes_key = None
        self._nodes = None

    def data_side(self, theta_raw):
        if self._sub.shape[0] == 0:
            return np.zeros(self.scheme.p)
        w = self.scheme.weight(self.x, self._sub[:, 0], self._sub[:, 1], theta_raw)
        return (w @ self._kw) / self.n

    def quad_nodes(self, theta_raw):
        eff = (
            self.family.effective_support(theta_raw)
            if self.family.effective_support is not None
            else None
        )
        bounds = []
        clipped = False
        for j in range(2):
            lo, hi = self._wins[j]
            if eff is not None:
                if eff[j][0] > lo:
                    lo, clipped = eff[j][0], True
                if eff[j][1] < hi:
                    hi, clipped = eff[j][1], True
            if lo >= hi:
                return None
            bounds.append((lo, hi))
        key = tuple(bounds)
        if key != self._nodes_key:
            panels = 2 if clipped else 1
            t1, w1 = gauss_legendre_nodes(*bounds[0], panels=panels)
            t2, w2 = gauss_legendre_nodes(*bounds[1], panels=panels)
            kh1 = self.kernels[0].eval((t1 - self.x[0]) / self.h[0]) / self.h[0]
            kh2 = self.kernels[1].eval((t2 - self.x[1]) / self.h[1]) / self.h[1]
            tt1 = np.repeat(t1, t2.size)
            tt2 = np.tile(t2, t1.size)
            ww = np.repeat(w1 * kh1, t2.size) * np.tile(w2 * kh2, t1.size)
            self._nodes_key = key
            self._nodes = (tt1, tt2, ww)
        return self._nodes

    def model_integral(self, theta_raw):
        nodes = self.quad_nodes(theta_raw)
        if nodes is None:
            return np.full(self.scheme.p, np.nan)
        t1, t2, ww = nodes
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            dens = self.family.density(t1, t2, theta_raw)
            v = self.scheme.weight(self.x, t1, t2, theta_raw)
            return v @ (ww * dens)

    def residual(self, theta_raw):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self.data_side(theta_raw) - self.model_integral(theta_raw)

    def residual_int(self, theta_int):
        return self.residual(self.family.decode(theta_int))

    def jacobian_int(self, theta_int):
        p = self.family.p
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


@dataclass(frozen=True)
class _StatsBundle:
    x: tuple
    f_tilde: float
    f_tilde_d1: float
    f_tilde_d2: float
    extra: dict


def fit2d(
    family: LocalFamily2D,
    scheme: WeightScheme2D,
    k1: Kernel,
    k2: Kernel,
    h1: float,
    h2: float,
    data,
    x,
    cfg: FitConfig = DEFAULT_CONFIG,
    theta_init=None,
) -> LocalFitResult:
    """Damped Newton solve of the bivariate estimating equations at x."""
    data = as_sample2d(data)
    base = classic2d_stats(k1, k2, h1, h2, data, x)
    if base.f_tilde < cfg.min_mass:
        return LocalFitResult(
            x=tuple(map(float, x)),
            theta_hat=None,
            f_hat=0.0,
            status=FitStatus.SKIPPED,
            iterations=0,
            grad_norm=math.nan,
            local_loglik=math.nan,
        )
    if theta_init is None:
        stats = _marginal_bundle(base, k1, k2, h1, h2, data, x)
        theta_init = family.init_guess(stats, h1, h2)
    theta_int = family.encode(theta_init)
    prob = _Problem2D(family, scheme, k1, k2, h1, h2, data, x, cfg.trunc)
    scales = family.param_scales(h1, h2)
    theta_int, gnorm, iters, status = _newton(
        prob, theta_int, scales, cfg, vscale=base.f_tilde
    )
    theta_raw = family.decode(theta_int)
    with np.errstate(over="ignore", invalid="ignore"):
        f_hat = float(
            family.density(np.array([x[0]]), np.array([x[1]]), theta_raw)[0]
        )
    f_hat = max(f_hat, 0.0) if math.isfinite(f_hat) else 0.0
    return LocalFitResult(
        x=tuple(map(float, x)),
        theta_hat=family.param_vector(theta_int),
        f_hat=f_hat,
        status=status,
        iterations=iters,
        grad_norm=gnorm,
        local_loglik=math.nan,
    )


def _marginal_bundle(base, k1, k2, h1, h2, data, x):
    from .kernels import classic_estimate
    from .models import family_normal

    fam = family_normal()
    extra = {}
    for j, (k, h) in enumerate(((k1, h1), (k2, h2)), start=1):
        col = np.ascontiguousarray(data[:, j - 1])
        st = classic_estimate(k, h, col, x[j - 1])
        if st.f_tilde > 0 and st.q_tilde is not None:
            guess = fam.init_guess(st, h)
        else:
            guess = np.array([float(np.mean(col)), float(np.std(col) + 1e-6)])
        extra[f"dim{j}"] = (float(guess[0]), float(guess[1]))
    return _StatsBundle(
        x=base.x,
        f_tilde=base.f_tilde,
        f_tilde_d1=base.f_tilde_d1,
        f_tilde_d2=base.f_tilde_d2,
        extra=extra,
    )


@dataclass
class Estimate2D:
    grid1: np.ndarray
    grid2: np.ndarray
    f_hat: np.ndarray  # (len(grid1), len(grid2))
    statuses: list
    theta: list
    h1: float
    h2: float
    kernels: tuple
    model: str
    scheme: str

    def __post_init__(self):
        if self.f_hat.shape != (len(self.grid1), len(self.grid2)):
            raise ValueError("estimate shape does not match the grid")
        if np.any(self.f_hat < 0):
            raise ValueError("negative density in bivariate estimate")


def fit2d_grid(
    family: LocalFamily2D,
    scheme: WeightScheme2D,
    k1: Kernel,
    k2: Kernel,
    h1: float,
    h2: float,
    data,
    grid1,
    grid2,
    cfg: FitConfig = DEFAULT_CONFIG,
) -> Estimate2D:
    """Row-major sweep over the rectangular grid with warm starts along
    each row."""
    grid1 = np.asarray(grid1, dtype=float)
    grid2 = np.asarray(grid2, dtype=float)
    f = np.zeros((grid1.size, grid2.size))
    statuses = []
    thetas = []
    for i, x1 in enumerate(grid1):
        prev = None
        prev_x = None
        row_status = []
        row_theta = []
        for j, x2 in enumerate(grid2):
            xg = (x1, x2)
            fam_g = family.recenter(xg) if family.recenter is not None else family
            sch_g = weights_make2d(scheme.kind, fam_g)
            init = None
            if prev is not None and cfg.warm_start:
                init = (
                    family.transport(prev, prev_x, xg)
                    if family.transport is not None
                    else prev
                )
            res = fit2d(fam_g, sch_g, k1, k2, h1, h2, data, xg, cfg, theta_init=init)
            f[i, j] = res.f_hat
            row_status.append(res.status)
            row_theta.append(res.theta_hat)
            if res.status is FitStatus.CONVERGED:
                prev = fam_g.decode(res.theta_hat.values)
                prev_x = xg
            elif res.status is FitStatus.SKIPPED:
                prev = None
        statuses.append(row_status)
        thetas.append(row_theta)
    return Estimate2D(
        grid1=grid1,
        grid2=grid2,
        f_hat=f,
        statuses=statuses,
        theta=thetas,
        h1=float(h1),
        h2=float(h2),
        kernels=(k1.name, k2.name),
        model=family.name,
        scheme=scheme.kind,
    )
