"""Local log-likelihood, estimating equations, Newton fits, grid sweeps."""

import math

import numpy as np
import pytest
from scipy.optimize import fsolve

from lpdens import kernels as kk
from lpdens import models as mm
from lpdens import solver as sv

G = kk.get_kernel("gaussian")
U = kk.get_kernel("uniform")
EP = kk.get_kernel("epanechnikov")


class TestLocalLoglik:
    def test_constant_model_plugin_value(self, normal200):
        # at theta = log f~ the likelihood is f~ log f~ - f~ (the model
        # integral reduces to e^theta by kernel normalization)
        st = kk.classic_estimate(G, 0.4, normal200, 0.3)
        fam = mm.family_polyexp(1, 0.3)
        got = sv.local_loglik(fam, G, 0.4, normal200, 0.3, [math.log(st.f_tilde)])
        assert got == pytest.approx(
            st.f_tilde * math.log(st.f_tilde) - st.f_tilde, abs=1e-12
        )
        # reference point: mass 0.2 gives 0.2 log 0.2 - 0.2
        assert 0.2 * math.log(0.2) - 0.2 == pytest.approx(-0.5218876, abs=5e-8)

    def test_large_h_approaches_global_loglik(self, normal200):
        # L_n ~ K(0) h^{-1} (n^{-1} sum log f(x_i) - 1) once h dwarfs the
        # data and the model mass
        fam = mm.family_normal()
        theta = np.array([0.3, 1.2])
        h = 1e4
        got = sv.local_loglik(fam, G, h, normal200, 0.7, theta)
        target = float(np.mean(fam.log_density(normal200, theta))) - 1.0
        assert got * h / kk.kernel_eval(G, 0.0) == pytest.approx(target, abs=1e-6)

    def test_uniform_kernel_window_form(self, normal500):
        # with a box kernel the likelihood is the windowed sum minus the
        # model probability of the window, scaled by 1/h
        fam = mm.family_normal()
        theta = np.array([0.2, 1.1])
        h, x = 0.8, 0.25
        got = sv.local_loglik(fam, U, h, normal500, x, theta)
        inside = np.abs(normal500 - x) <= h / 2
        s = float(np.sum(fam.log_density(normal500[inside], theta))) / normal500.size
        prob = float(
            fam.cdf(np.array([x + h / 2]), theta)[0]
            - fam.cdf(np.array([x - h / 2]), theta)[0]
        )
        assert got == pytest.approx((s - prob) / h, abs=1e-9)

    def test_rejects_nonfinite_logdensity(self, normal200):
        fam = mm.family_linear(0.0)
        with pytest.raises(ValueError):
            # a line that goes negative inside the window
            sv.local_loglik(fam, G, 0.5, normal200, 0.0, [0.1, 5.0])

    def test_input_validation(self, normal200):
        fam = mm.family_polyexp(1, 0.0)
        with pytest.raises(ValueError):
            sv.local_loglik(fam, G, -1.0, normal200, 0.0, [0.0])
        with pytest.raises(ValueError):
            sv.local_loglik(fam, G, 1.0, np.empty(0), 0.0, [0.0])


class TestEstimatingEqs:
    def test_constant_model_identity(self, normal200):
        st = kk.classic_estimate(G, 0.4, normal200, 0.3)
        fam = mm.family_polyexp(1, 0.3)
        sch = mm.weights_make("score", fam)
        v = sv.estimating_eqs(fam, sch, G, 0.4, normal200, 0.3, [math.log(st.f_tilde)])
        assert v[0] == pytest.approx(0.0, abs=1e-12)
        v2 = sv.estimating_eqs(fam, sch, G, 0.4, normal200, 0.3, [math.log(0.3)])
        assert v2[0] == pytest.approx(st.f_tilde - 0.3, abs=1e-12)

    def test_zero_at_converged_theta(self, normal200):
        fam = mm.family_polyexp(2, 0.3)
        sch = mm.weights_make("score", fam)
        res = sv.fit_at(fam, sch, G, 0.4, normal200, 0.3)
        assert res.status is sv.FitStatus.CONVERGED
        v = sv.estimating_eqs(
            fam, sch, G, 0.4, normal200, 0.3, fam.decode(res.theta_hat.values)
        )
        assert np.max(np.abs(v)) <= 1e-10

    def test_score_equations_are_loglik_gradient(self, normal200):
        fam = mm.family_polyexp(2, 0.3)
        sch = mm.weights_make("score", fam)
        theta = np.array([math.log(0.25), 0.1])
        v = sv.estimating_eqs(fam, sch, G, 0.4, normal200, 0.3, theta)
        for j in range(2):
            eps = 1e-6
            tp, tm = theta.copy(), theta.copy()
            tp[j] += eps
            tm[j] -= eps
            fd = (
                sv.local_loglik(fam, G, 0.4, normal200, 0.3, tp)
                - sv.local_loglik(fam, G, 0.4, normal200, 0.3, tm)
            ) / (2 * eps)
            assert v[j] == pytest.approx(fd, abs=1e-8)


class TestFitAt:
    @pytest.mark.parametrize("kernel", (G, EP))
    def test_constant_model_is_classic(self, normal200, kernel):
        st = kk.classic_estimate(kernel, 0.4, normal200, 0.3)
        fam = mm.family_polyexp(1, 0.3)
        res = sv.fit_at(fam, mm.weights_make("score", fam), kernel, 0.4, normal200, 0.3)
        assert res.status is sv.FitStatus.CONVERGED
        assert res.f_hat == pytest.approx(st.f_tilde, abs=1e-10)

    def test_loglinear_matches_closed_form(self, normal200):
        st = kk.classic_estimate(G, 0.4, normal200, 0.3)
        b = st.f_tilde_d1 / st.f_tilde
        cf = st.f_tilde * math.exp(-0.5 * 0.16 * b * b)
        fam = mm.family_polyexp(2, 0.3)
        res = sv.fit_at(fam, mm.weights_make("score", fam), G, 0.4, normal200, 0.3)
        assert res.f_hat == pytest.approx(cf, rel=1e-8)

    def test_normal_family_large_h_is_global_mle(self):
        data = np.array([-1.0, 1.0])
        fam = mm.family_normal()
        sch = mm.weights_make("score", fam)
        for x in (-3.0, 0.0, 4.5):
            res = sv.fit_at(fam, sch, G, 1e6, data, x)
            assert res.status is sv.FitStatus.CONVERGED
            mu, sig = fam.decode(res.theta_hat.values)
            assert mu == pytest.approx(0.0, abs=1e-4)
            assert sig == pytest.approx(1.0, abs=1e-4)

    def test_converged_invariants(self, normal200):
        fam = mm.family_polyexp(2, 0.3)
        res = sv.fit_at(fam, mm.weights_make("score", fam), G, 0.4, normal200, 0.3)
        assert res.status is sv.FitStatus.CONVERGED
        assert res.grad_norm <= sv.DEFAULT_CONFIG.grad_tol
        theta = fam.decode(res.theta_hat.values)
        assert res.f_hat == pytest.approx(
            float(fam.density(np.array([0.3]), theta)[0])
        )
        assert res.f_hat >= 0
        assert math.isfinite(res.local_loglik)

    def test_skip_rule_outside_data_mass(self, normal200):
        fam = mm.family_polyexp(1, 40.0)
        res = sv.fit_at(fam, mm.weights_make("score", fam), EP, 0.4, normal200, 40.0)
        assert res.status is sv.FitStatus.SKIPPED
        assert res.f_hat == 0.0
        assert res.theta_hat is None

    def test_max_iter_status_reported(self, normal200):
        fam = mm.family_polyexp(2, 0.3)
        cfg = sv.FitConfig(max_iter=0)
        res = sv.fit_at(fam, mm.weights_make("score", fam), G, 0.4, normal200, 0.3, cfg)
        assert res.status is sv.FitStatus.MAX_ITER
        assert res.f_hat >= 0  # diagnostics still returned

    def test_explicit_init_is_honored(self, normal200):
        fam = mm.family_polyexp(2, 0.3)
        sch = mm.weights_make("score", fam)
        res = sv.fit_at(fam, sch, G, 0.4, normal200, 0.3, theta_init=[-1.0, 0.0])
        ref = sv.fit_at(fam, sch, G, 0.4, normal200, 0.3)
        assert res.f_hat == pytest.approx(ref.f_hat, abs=1e-9)


class TestFitGrid:
    def test_constant_trace_equals_classic(self, normal200):
        fam = mm.family_polyexp(1, 0.0)
        sch = mm.weights_make("score", fam)
        grid = np.linspace(-2, 2, 21)
        est = sv.fit_grid(fam, sch, G, 0.4, normal200, grid)
        classic = np.array(
            [kk.classic_estimate(G, 0.4, normal200, x).f_tilde for x in grid]
        )
        np.testing.assert_allclose(est.f_hat, classic, atol=1e-10)

    def test_warm_start_equivalence(self, normal200):
        fam = mm.family_polyexp(2, 0.0)
        sch = mm.weights_make("score", fam)
        grid = np.linspace(-2, 2, 31)
        warm = sv.fit_grid(fam, sch, G, 0.4, normal200, grid)
        cold = sv.fit_grid(
            fam, sch, G, 0.4, normal200, grid, sv.FitConfig(warm_start=False)
        )
        np.testing.assert_allclose(warm.f_hat, cold.f_hat, atol=1e-8)

    def test_threaded_sweep_matches_sequential(self, normal200):
        fam = mm.family_polyexp(2, 0.0)
        sch = mm.weights_make("score", fam)
        grid = np.linspace(-2, 2, 17)
        cfg = sv.FitConfig(warm_start=False)
        a = sv.fit_grid(fam, sch, G, 0.4, normal200, grid, cfg, threads=1)
        b = sv.fit_grid(fam, sch, G, 0.4, normal200, grid, cfg, threads=4)
        np.testing.assert_array_equal(a.f_hat, b.f_hat)

    def test_skipped_points_do_not_abort(self, normal200):
        fam = mm.family_polyexp(1, 0.0)
        sch = mm.weights_make("score", fam)
        grid = np.linspace(-30, 30, 13)  # mostly empty windows
        est = sv.fit_grid(fam, sch, EP, 0.4, normal200, grid)
        assert sv.FitStatus.SKIPPED in est.statuses
        assert sv.FitStatus.CONVERGED in est.statuses
        assert len(est.f_hat) == len(grid)

    def test_grid_must_increase(self, normal200):
        fam = mm.family_polyexp(1, 0.0)
        sch = mm.weights_make("score", fam)
        with pytest.raises(ValueError):
            sv.fit_grid(fam, sch, G, 0.4, normal200, np.array([0.0, 0.0, 1.0]))


class TestSolverProperties:
    def test_score_fit_is_local_maximum(self, normal200):
        rng = np.random.default_rng(31)
        for p in (1, 2, 3):
            fam = mm.family_polyexp(p, 0.3)
            sch = mm.weights_make("score", fam)
            res = sv.fit_at(fam, sch, G, 0.5, normal200, 0.3)
            theta = fam.decode(res.theta_hat.values)
            base = sv.local_loglik(fam, G, 0.5, normal200, 0.3, theta)
            for _ in range(20):
                delta = rng.normal(size=p)
                delta *= 1e-3 / np.linalg.norm(delta)
                assert base >= sv.local_loglik(
                    fam, G, 0.5, normal200, 0.3, theta + delta
                )

    def test_large_h_score_limit_is_mle(self, normal500):
        fam = mm.family_normal()
        sch = mm.weights_make("score", fam)
        res = sv.fit_at(fam, sch, G, 1e4, normal500, 0.9)
        mu, sig = fam.decode(res.theta_hat.values)
        mu_mle, sig_mle = mm.fit_normal_global(normal500)
        assert mu == pytest.approx(mu_mle, abs=1e-4)
        assert sig == pytest.approx(sig_mle, abs=1e-4)

    def test_large_h_l2_limit_is_moment_estimator(self, normal500):
        # theta-dependent weights: the limit solves
        # n^{-1} sum v(x_i, theta) = E_theta v(X, theta) with v = f u
        fam = mm.family_normal()
        sch = mm.weights_make("l2", fam)
        res = sv.fit_at(fam, sch, G, 1e4, normal500, 0.9)
        assert res.status is sv.FitStatus.CONVERGED
        mu, sig = fam.decode(res.theta_hat.values)

        def moment_eqs(theta):
            m, s = theta
            th = np.array([m, s])
            v = fam.density(normal500, th) * fam.score(normal500, th)
            lhs = v.mean(axis=1)
            rhs = np.array([0.0, -1.0 / (4.0 * math.sqrt(math.pi) * s * s)])
            return lhs - rhs

        root = fsolve(moment_eqs, mm.fit_normal_global(normal500), xtol=1e-12)
        assert np.max(np.abs(moment_eqs(root))) < 1e-10
        assert mu == pytest.approx(root[0], abs=1e-4)
        assert sig == pytest.approx(root[1], abs=1e-4)

    def test_location_scale_equivariance(self, normal200):
        a, b = 2.5, -1.3
        h, x = 0.4, 0.3
        fam = mm.family_polyexp(2, x)
        sch = mm.weights_make("score", fam)
        base = sv.fit_at(fam, sch, G, h, normal200, x)
        fam2 = mm.family_polyexp(2, a * x + b)
        sch2 = mm.weights_make("score", fam2)
        moved = sv.fit_at(fam2, sch2, G, a * h, a * normal200 + b, a * x + b)
        assert moved.f_hat == pytest.approx(base.f_hat / a, abs=1e-9)
