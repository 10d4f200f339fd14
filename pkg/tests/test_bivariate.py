"""Product-kernel bivariate estimator and the bivariate local fits."""

import math

import numpy as np
import pytest

from lpdens import bivariate as bv
from lpdens import kernels as kk
from lpdens.analysis import mixture_density, normal_density, polar_normal
from lpdens.solver import FitStatus

G = kk.get_kernel("gaussian")
PHI0 = 0.3989422804014327


@pytest.fixture(scope="module")
def sample2d():
    rng = np.random.default_rng(77)
    return np.column_stack([polar_normal(rng, 400), polar_normal(rng, 400)])


class TestClassic2D:
    def test_point_mass(self):
        got = bv.classic2d(G, G, 1.0, 1.0, np.array([[0.0, 0.0]]), (0.0, 0.0))
        assert got == pytest.approx(PHI0**2, abs=1e-12)
        assert got == pytest.approx(0.1591549, abs=5e-8)

    def test_separability_on_product_sample(self):
        a = np.array([-0.7, 0.4])
        b = np.array([0.1, 1.3])
        data = np.array([[x, y] for x in a for y in b])
        x = (0.2, 0.5)
        got = bv.classic2d(G, G, 0.6, 0.8, data, x)
        f1 = kk.classic_estimate(G, 0.6, a, x[0]).f_tilde
        f2 = kk.classic_estimate(G, 0.8, b, x[1]).f_tilde
        assert got == pytest.approx(f1 * f2, rel=1e-12)

    def test_reflection_symmetry(self):
        data = np.array([[-1.0, 0.0], [1.0, 0.0]])
        for x1 in (0.3, 0.9):
            fa = bv.classic2d(G, G, 0.7, 0.7, data, (x1, 0.2))
            fb = bv.classic2d(G, G, 0.7, 0.7, data, (-x1, 0.2))
            assert fa == pytest.approx(fb, rel=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            bv.classic2d(G, G, 0.5, 0.5, np.array([[1.0]]), (0.0, 0.0))
        with pytest.raises(ValueError):
            bv.classic2d(G, G, -0.5, 0.5, np.array([[0.0, 0.0]]), (0.0, 0.0))


class TestCfBilinear2D:
    def test_zero_partials(self):
        st = bv.Stats2D(x=(0.0, 0.0), f_tilde=0.2, f_tilde_d1=0.0, f_tilde_d2=0.0)
        assert bv.cf_bilinear2d(st, 0.5, 0.7) == pytest.approx(0.2)

    def test_reference_value(self):
        st = bv.Stats2D(x=(0.0, 0.0), f_tilde=0.1, f_tilde_d1=0.05, f_tilde_d2=-0.02)
        got = bv.cf_bilinear2d(st, 0.5, 0.5)
        assert got == pytest.approx(0.1 * math.exp(-0.5 * 0.25 * (0.25 + 0.04)), rel=1e-14)
        assert got == pytest.approx(0.0964399, abs=5e-8)

    def test_symmetric_sample_center(self):
        data = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        st = bv.classic2d_stats(G, G, 0.8, 0.8, data, (0.0, 0.0))
        assert st.f_tilde_d1 == pytest.approx(0.0, abs=1e-15)
        assert bv.cf_bilinear2d(st, 0.8, 0.8) == pytest.approx(st.f_tilde)


class TestFit2D:
    def test_local_constant_is_classic(self, sample2d):
        x = (0.4, -0.3)
        fam = bv.family_logpoly2d("const", x)
        sch = bv.weights_make2d("score", fam)
        res = bv.fit2d(fam, sch, G, G, 0.5, 0.5, sample2d, x)
        assert res.status is FitStatus.CONVERGED
        assert res.f_hat == pytest.approx(
            bv.classic2d(G, G, 0.5, 0.5, sample2d, x), abs=1e-9
        )

    def test_loglinear_matches_closed_form(self, sample2d):
        for x in ((0.0, 0.0), (0.6, -0.8)):
            fam = bv.family_logpoly2d("linear", x)
            sch = bv.weights_make2d("score", fam)
            res = bv.fit2d(fam, sch, G, G, 0.5, 0.6, sample2d, x)
            st = bv.classic2d_stats(G, G, 0.5, 0.6, sample2d, x)
            assert res.f_hat == pytest.approx(
                bv.cf_bilinear2d(st, 0.5, 0.6), rel=1e-6
            )

    def test_product_normal_large_h_is_global_mle(self, sample2d):
        fam = bv.family_binormal_product()
        sch = bv.weights_make2d("score", fam)
        res = bv.fit2d(fam, sch, G, G, 1e4, 1e4, sample2d, (0.2, -0.1))
        assert res.status is FitStatus.CONVERGED
        m1, s1, m2, s2 = fam.decode(res.theta_hat.values)
        assert m1 == pytest.approx(float(np.mean(sample2d[:, 0])), abs=1e-3)
        assert s1 == pytest.approx(float(np.std(sample2d[:, 0])), abs=1e-3)
        assert m2 == pytest.approx(float(np.mean(sample2d[:, 1])), abs=1e-3)
        assert s2 == pytest.approx(float(np.std(sample2d[:, 1])), abs=1e-3)

    def test_logquad_family_converges(self, sample2d):
        x = (0.2, 0.1)
        fam = bv.family_logpoly2d("quad", x)
        sch = bv.weights_make2d("score", fam)
        res = bv.fit2d(fam, sch, G, G, 0.7, 0.7, sample2d, x)
        assert res.status is FitStatus.CONVERGED
        assert res.f_hat > 0

    def test_grid_sweep(self, sample2d):
        fam = bv.family_logpoly2d("linear", (0.0, 0.0))
        sch = bv.weights_make2d("score", fam)
        g1 = np.linspace(-1, 1, 5)
        g2 = np.linspace(-1, 1, 4)
        est = bv.fit2d_grid(fam, sch, G, G, 0.5, 0.5, sample2d, g1, g2)
        assert est.f_hat.shape == (5, 4)
        assert all(s is FitStatus.CONVERGED for row in est.statuses for s in row)


class TestBivariateBiasLaw:
    def test_population_bias_follows_sum_of_curvature_gaps(self):
        # population version of the bivariate log-linear fit against a
        # known product density: bias ~ sum_i h_i^2 (f_ii'' - f0_ii'')/2
        mix = mixture_density([0.5, 0.5], [0.0, 3.0], [1.0, 1.0])
        nd = normal_density(0.0, 1.0)
        x = (0.5, 0.3)

        def f_true(t1, t2, d1=0, d2=0):
            return mix(t1, d1) * nd(t2, d2)

        def pop_fit(h):
            fam = bv.family_logpoly2d("linear", x)
            t, w = kk.gauss_legendre_nodes(x[0] - 8 * h, x[0] + 8 * h)
            u, v = kk.gauss_legendre_nodes(x[1] - 8 * h, x[1] + 8 * h)
            t1 = np.repeat(t, u.size)
            t2 = np.tile(u, t.size)
            ww = np.repeat(w * G.eval((t - x[0]) / h), u.size) * np.tile(
                v * G.eval((u - x[1]) / h), t.size
            ) / (h * h)
            ftv = f_true(t1, t2)
            basis = fam.score(t1, t2, np.zeros(3))
            target = basis @ (ww * ftv)
            theta = np.array(
                [math.log(f_true(*x)), 0.0, 0.0]
            )
            for _ in range(60):
                dens = fam.density(t1, t2, theta)
                resid = target - basis @ (ww * dens)
                if np.max(np.abs(resid)) < 1e-13:
                    break
                jac = -(basis * (ww * dens)) @ basis.T
                theta = theta + np.linalg.solve(jac, -resid)
            return math.exp(theta[0])

        fx = f_true(*x)
        gap = (
            mix(np.array([x[0]]), 2)[0] * nd(np.array([x[1]]))[0]
            - mix(np.array([x[0]]), 1)[0] ** 2 / mix(np.array([x[0]]))[0] * nd(np.array([x[1]]))[0]
        ) + (
            mix(np.array([x[0]]))[0] * nd(np.array([x[1]]), 2)[0]
            - mix(np.array([x[0]]))[0] * nd(np.array([x[1]]), 1)[0] ** 2 / nd(np.array([x[1]]))[0]
        )
        for h in (0.2, 0.1):
            bias = pop_fit(h) - fx
            assert bias / (0.5 * h * h) == pytest.approx(gap, rel=0.10)


class TestBivariateMcVariance:
    def test_variance_matches_product_formula(self):
        # closed-form bivariate log-linear fit at the origin of a standard
        # binormal: empirical variance within 15% of
        # R(K)^2 f / (n h^2) - f^2 / n
        n, reps, h = 4000, 300, 0.4
        x = (0.0, 0.0)
        vals = np.empty(reps)
        for r in range(reps):
            rng = np.random.default_rng((1234, r))
            data = np.column_stack([polar_normal(rng, n), polar_normal(rng, n)])
            st = bv.classic2d_stats(G, G, h, h, data, x)
            vals[r] = bv.cf_bilinear2d(st, h, h)
        f = PHI0**2
        rk = kk.kernel_roughness(G)
        theory = rk * rk * f / (n * h * h) - f * f / n
        assert float(np.var(vals)) == pytest.approx(theory, rel=0.15)
