"""Parametric families fitted locally, and the weight schemes pairing them.

A family exposes its density, log-density and score with respect to the
*raw* parameters (e.g. (mu, sigma) for the normal).  Positivity-constrained
entries are handled internally on log scale so that Newton steps stay in
the domain; ``encode``/``decode`` translate between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ParamVector:
    """Fitted parameters in internal coordinates plus their decode mask."""

    values: np.ndarray
    names: tuple
    log_scale: tuple

    def decode(self) -> np.ndarray:
        """Raw parameters (exp applied to log-scale entries)."""
        out = np.array(self.values, dtype=float)
        with np.errstate(over="ignore"):
            for j, is_log in enumerate(self.log_scale):
                if is_log:
                    out[j] = np.exp(out[j])
        return out


@dataclass(frozen=True)
class LocalFamily:
    """A local parametric density model.

    ``density``, ``log_density`` and ``score`` take a node vector ``t``
    and the raw parameter vector; ``score`` returns shape ``(p, len(t))``.
    Optional hooks drive the solver: ``init_guess`` maps smoother stats to
    a starting raw parameter, ``param_scales`` gives per-parameter Newton
    preconditioning scales, ``effective_support`` bounds where the model
    carries mass (used to clip quadrature windows for very large
    bandwidths), and ``score_from_moments`` expresses the data-side score
    sum through kernel moment sums when possible.
    """

    name: str
    p: int
    center: float
    density: Callable
    log_density: Callable
    score: Callable
    param_names: tuple
    log_scale: tuple
    support: tuple = (-math.inf, math.inf)
    is_log_concave_in_params: bool = False
    init_guess: Optional[Callable] = None
    param_scales: Optional[Callable] = None
    effective_support: Optional[Callable] = None
    score_moment_order: Optional[int] = None
    score_from_moments: Optional[Callable] = None
    model_curvature: Optional[Callable] = None
    cdf: Optional[Callable] = None
    recenter: Optional[Callable] = None
    transport: Optional[Callable] = None

    def encode(self, theta_raw) -> np.ndarray:
        out = np.array(theta_raw, dtype=float)
        for j, is_log in enumerate(self.log_scale):
            if is_log:
                if out[j] <= 0:
                    raise ValueError(
                        f"parameter {self.param_names[j]!r} must be positive"
                    )
                out[j] = math.log(out[j])
        return out

    def decode(self, theta_int) -> np.ndarray:
        out = np.array(theta_int, dtype=float)
        with np.errstate(over="ignore"):
            for j, is_log in enumerate(self.log_scale):
                if is_log:
                    out[j] = np.exp(out[j])
        return out

    def param_vector(self, theta_int) -> ParamVector:
        return ParamVector(
            values=np.array(theta_int, dtype=float),
            names=self.param_names,
            log_scale=self.log_scale,
        )


def family_polyexp(p: int, x: float) -> LocalFamily:
    """Log-polynomial family exp(sum_j theta_j (t-x)^j), j = 0..p-1.

    p=1 is the local constant model, p=2 the local log-linear model
    a*exp(b(t-x)), p=3 adds local curvature, p=4 a cubic log term.
    """
    if not 1 <= p <= 4:
        raise ValueError("polyexp supports 1..4 parameters")

    def log_density(t, theta):
        dt = np.asarray(t, dtype=float) - x
        out = np.full_like(dt, theta[0])
        for j in range(1, p):
            out += theta[j] * dt**j
        return out

    def density(t, theta):
        return np.exp(log_density(t, theta))

    def score(t, theta):
        dt = np.asarray(t, dtype=float) - x
        return np.vander(dt, p, increasing=True).T

    def init_guess(stats, h):
        theta = np.zeros(p)
        theta[0] = math.log(stats.f_tilde)
        if p >= 2:
            theta[1] = stats.q_tilde
        if p >= 3:
            theta[2] = 0.5 * stats.d_hat
        return theta

    def model_curvature(at, theta):
        dt = at - x
        lp = sum(j * theta[j] * dt ** (j - 1) for j in range(1, p))
        lpp = sum(j * (j - 1) * theta[j] * dt ** (j - 2) for j in range(2, p))
        return float(density(np.array([at]), theta)[0] * (lp * lp + lpp))

    def transport(theta, x_old, x_new):
        d = x_new - x_old
        return np.array(
            [
                sum(theta[j] * math.comb(j, k) * d ** (j - k) for j in range(k, p))
                for k in range(p)
            ]
        )

    return LocalFamily(
        name=f"polyexp{p}",
        p=p,
        center=x,
        density=density,
        log_density=log_density,
        score=score,
        param_names=tuple(f"theta{j + 1}" for j in range(p)),
        log_scale=(False,) * p,
        is_log_concave_in_params=True,
        init_guess=init_guess,
        param_scales=lambda h: np.array([h**j for j in range(p)]),
        score_moment_order=p - 1,
        score_from_moments=lambda xx, h, m, theta: np.array(m[:p]),
        model_curvature=model_curvature,
        recenter=lambda xx: family_polyexp(p, xx),
        transport=transport,
    )


def family_linear(x: float) -> LocalFamily:
    """Local line theta1 + theta2 (t-x), the density analogue of a
    local linear regression fit.  Positive only locally; pair it with
    the powers weights for the explicit moment-matching equations.
    """

    def density(t, theta):
        dt = np.asarray(t, dtype=float) - x
        return theta[0] + theta[1] * dt

    def log_density(t, theta):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.log(density(t, theta))

    def score(t, theta):
        dt = np.asarray(t, dtype=float) - x
        f = theta[0] + theta[1] * dt
        with np.errstate(divide="ignore"):
            return np.vstack([1.0 / f, dt / f])

    def init_guess(stats, h):
        return np.array([stats.f_tilde, stats.f_tilde_d1])

    return LocalFamily(
        name="linear",
        p=2,
        center=x,
        density=density,
        log_density=log_density,
        score=score,
        param_names=("theta1", "theta2"),
        log_scale=(False, False),
        is_log_concave_in_params=True,
        init_guess=init_guess,
        param_scales=lambda h: np.array([1.0, h]),
        model_curvature=lambda at, theta: 0.0,
        recenter=family_linear,
        transport=lambda theta, x_old, x_new: np.array(
            [theta[0] + theta[1] * (x_new - x_old), theta[1]]
        ),
    )


def family_normal() -> LocalFamily:
    """Normal family with raw parameters (mu, sigma), sigma on log scale
    internally.  The score is ((t-mu)/sigma^2, ((t-mu)^2/sigma^2 - 1)/sigma).
    """

    def density(t, theta):
        mu, sig = theta
        z = (np.asarray(t, dtype=float) - mu) / sig
        return np.exp(-0.5 * z * z) / (_SQRT_2PI * sig)

    def log_density(t, theta):
        mu, sig = theta
        z = (np.asarray(t, dtype=float) - mu) / sig
        return -0.5 * z * z - math.log(_SQRT_2PI * sig)

    def score(t, theta):
        mu, sig = theta
        d = np.asarray(t, dtype=float) - mu
        return np.vstack([d / sig**2, (d * d / sig**2 - 1.0) / sig])

    def init_guess(stats, h):
        q = stats.q_tilde
        ft = stats.f_tilde
        # invert the level equation of the running-normal fit for
        # s = sigma^2 + h^2 (valid while phi(h q) > h f~, i.e. away from
        # the very-large-h regime)
        sig0 = None
        if math.exp(-0.5 * (h * q) ** 2) / _SQRT_2PI > h * ft * (1.0 + 1e-10):
            lo = h * h * (1.0 + 1e-12)
            hi = max(2.0 * lo, 1.0)
            for _ in range(60):
                if math.exp(-0.5 * q * q * hi) / (_SQRT_2PI * math.sqrt(hi)) < ft:
                    break
                hi *= 2.0
            else:
                hi = None
            if hi is not None:
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    if math.exp(-0.5 * q * q * mid) / (_SQRT_2PI * math.sqrt(mid)) > ft:
                        lo = mid
                    else:
                        hi = mid
                s = 0.5 * (lo + hi)
                if s > h * h * (1.0 + 1e-9):
                    sig0 = math.sqrt(s - h * h)
        if sig0 is None:
            # moment fallback: deconvolved centered local spread, floored
            # at h/2 but never above the raw spread (the h^2 subtraction
            # overshoots once h exceeds the data range)
            m1 = stats.g_tilde / ft
            v_c = max(stats.g2_tilde / ft - m1 * m1, 1e-16)
            sig0 = math.sqrt(max(v_c - h * h, 0.0))
            sig0 = min(max(sig0, 0.5 * h), math.sqrt(v_c))
        mu0 = stats.x + (sig0**2 + h * h) * q
        return np.array([mu0, sig0])

    def score_from_moments(x, h, m, theta):
        mu, sig = theta
        d = x - mu
        s1 = (m[1] + d * m[0]) / sig**2
        s2 = ((m[2] + 2.0 * d * m[1] + d * d * m[0]) / sig**2 - m[0]) / sig
        return np.array([s1, s2])

    def effective_support(theta):
        mu, sig = theta
        return (mu - 16.0 * sig, mu + 16.0 * sig)

    def model_curvature(at, theta):
        mu, sig = theta
        d = at - mu
        return float((d * d / sig**4 - 1.0 / sig**2) * density(np.array([at]), theta)[0])

    def cdf(t, theta):
        from scipy.stats import norm

        return norm.cdf(np.asarray(t, dtype=float), loc=theta[0], scale=theta[1])

    return LocalFamily(
        name="normal",
        p=2,
        center=0.0,
        density=density,
        log_density=log_density,
        score=score,
        param_names=("mu", "sigma"),
        log_scale=(False, True),
        is_log_concave_in_params=False,
        init_guess=init_guess,
        param_scales=lambda h: np.array([1.0, 1.0]),
        effective_support=effective_support,
        score_moment_order=2,
        score_from_moments=score_from_moments,
        model_curvature=model_curvature,
        cdf=cdf,
    )


def normal_pdf(mu: float, sigma: float):
    """Normal density callable carrying its parameters, for use as a
    parametric start f_init."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def pdf(t):
        z = (np.asarray(t, dtype=float) - mu) / sigma
        return np.exp(-0.5 * z * z) / (_SQRT_2PI * sigma)

    pdf.normal_params = (mu, sigma)
    return pdf


def fit_normal_global(data) -> tuple[float, float]:
    """Closed-form normal maximum likelihood fit (mean, ML sd)."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    mu = float(np.mean(data))
    sig = float(np.sqrt(np.mean((data - mu) ** 2)))
    if sig <= 0:
        raise ValueError("degenerate sample: zero variance")
    return mu, sig


def family_mult_correction(f_init, order: int, x: float) -> LocalFamily:
    """Multiplicative correction of a parametric start f_init.

    order 1: f(t, theta) = f_init(t) * theta, a local constant correction.
    order 2: f(t, (a, b)) = f_init(t) * a * exp(b (t-x)), a log-linear
    correction with score (1/a, t-x).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    normal_params = getattr(f_init, "normal_params", None)

    def _finit(t):
        vals = np.asarray(f_init(np.asarray(t, dtype=float)), dtype=float)
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ValueError("f_init must be positive and finite on the window")
        return vals

    if order == 1:

        def density(t, theta):
            return _finit(t) * theta[0]

        def log_density(t, theta):
            return np.log(_finit(t)) + math.log(theta[0])

        def score(t, theta):
            return np.full((1, np.size(t)), 1.0 / theta[0])

        def init_guess(stats, h):
            return np.array([stats.f_tilde / float(_finit(np.array([x]))[0])])

        def score_from_moments(xx, h, m, theta):
            return np.array([m[0] / theta[0]])

        def effective_support(theta):
            if normal_params is None:
                return None
            mu, sig = normal_params
            return (mu - 16.0 * sig, mu + 16.0 * sig)

        names, logs, moment_order = ("theta",), (True,), 0
    else:

        def density(t, theta):
            dt = np.asarray(t, dtype=float) - x
            return _finit(t) * theta[0] * np.exp(theta[1] * dt)

        def log_density(t, theta):
            dt = np.asarray(t, dtype=float) - x
            return np.log(_finit(t)) + math.log(theta[0]) + theta[1] * dt

        def score(t, theta):
            dt = np.asarray(t, dtype=float) - x
            return np.vstack([np.full_like(dt, 1.0 / theta[0]), dt])

        def init_guess(stats, h):
            f0 = float(_finit(np.array([x]))[0])
            step = 1e-5 * (1.0 + abs(x))
            dlog = (
                math.log(float(_finit(np.array([x + step]))[0]))
                - math.log(float(_finit(np.array([x - step]))[0]))
            ) / (2.0 * step)
            return np.array([stats.f_tilde / f0, stats.q_tilde - dlog])

        def score_from_moments(xx, h, m, theta):
            return np.array([m[0] / theta[0], m[1]])

        def effective_support(theta):
            if normal_params is None:
                return None
            mu, sig = normal_params
            shift = theta[1] * sig * sig
            return (mu + shift - 16.0 * sig, mu + shift + 16.0 * sig)

        names, logs, moment_order = ("a", "b"), (True, False), 1

    def model_curvature(at, theta):
        return _curv_generic(density, at, theta)

    if order == 2:

        def transport(theta, x_old, x_new):
            return np.array(
                [theta[0] * math.exp(theta[1] * (x_new - x_old)), theta[1]]
            )

    else:
        transport = None

    return LocalFamily(
        name=f"mult{order}",
        p=order,
        center=x,
        density=density,
        log_density=log_density,
        score=score,
        param_names=names,
        log_scale=logs,
        is_log_concave_in_params=True,
        init_guess=init_guess,
        param_scales=lambda h: np.ones(order) if order == 1 else np.array([1.0, h]),
        effective_support=effective_support,
        score_moment_order=moment_order,
        score_from_moments=score_from_moments,
        model_curvature=model_curvature,
        recenter=lambda xx: family_mult_correction(f_init, order, xx),
        transport=transport,
    )


def _curv_generic(density, at, theta, rel_step: float = 1e-4):
    """Second t-derivative of the model density by central differences."""
    step = rel_step * (1.0 + abs(at))
    t = np.array([at - step, at, at + step])
    f = np.asarray(density(t, theta), dtype=float)
    return float((f[0] - 2.0 * f[1] + f[2]) / step**2)


@dataclass(frozen=True)
class WeightScheme:
    """Weight functions v_j(x, t, theta) of the estimating equations.

    ``weight`` returns shape (p, len(t)); ``weight_param_jacobian`` the
    (p, p, len(t)) array of derivatives with respect to the raw
    parameters.  ``theta_free`` marks weights that do not depend on
    theta; ``from_moments`` (with ``moment_order``) expresses the
    data-side sum through kernel moment sums when available.
    """

    kind: str
    p: int
    weight: Callable
    weight_param_jacobian: Callable
    theta_free: bool = False
    moment_order: Optional[int] = None
    from_moments: Optional[Callable] = None


def _fd_weight_jacobian(weight_fn, p):
    def jac(x, t, theta):
        theta = np.asarray(theta, dtype=float)
        m = np.size(t)
        out = np.empty((p, p, m))
        for k in range(p):
            step = 1e-6 * (1.0 + abs(theta[k]))
            tp = theta.copy()
            tp[k] += step
            tm = theta.copy()
            tm[k] -= step
            out[:, k, :] = (weight_fn(x, t, tp) - weight_fn(x, t, tm)) / (2.0 * step)
        return out

    return jac


def weights_make(kind: str, family: LocalFamily) -> WeightScheme:
    """Build the score, powers, or L2 weight scheme for a family."""
    p = family.p
    if kind == "score":

        def weight(x, t, theta):
            return family.score(t, theta)

        theta_free = family.name.startswith("polyexp")
        return WeightScheme(
            kind="score",
            p=p,
            weight=weight,
            weight_param_jacobian=(
                (lambda x, t, theta: np.zeros((p, p, np.size(t))))
                if theta_free
                else _fd_weight_jacobian(weight, p)
            ),
            theta_free=theta_free,
            moment_order=family.score_moment_order,
            from_moments=family.score_from_moments,
        )
    if kind == "powers":
        if p > 4:
            raise ValueError("powers weights support at most 4 parameters")

        def weight(x, t, theta):
            dt = np.asarray(t, dtype=float) - x
            return np.vander(dt, p, increasing=True).T

        return WeightScheme(
            kind="powers",
            p=p,
            weight=weight,
            weight_param_jacobian=lambda x, t, theta: np.zeros((p, p, np.size(t))),
            theta_free=True,
            moment_order=p - 1,
            from_moments=lambda x, h, m, theta: np.array(m[:p]),
        )
    if kind == "l2":

        def weight(x, t, theta):
            return family.density(t, theta)[None, :] * family.score(t, theta)

        return WeightScheme(
            kind="l2",
            p=p,
            weight=weight,
            weight_param_jacobian=_fd_weight_jacobian(weight, p),
            theta_free=False,
        )
    raise ValueError(f"unknown weight scheme {kind!r}; use score, powers, or l2")
