"""Kernels: moments, roughness, mgf, the classic smoother, and
kernel-weighted quadrature."""

import math

import numpy as np
import pytest

from lpdens import kernels as kk

ALL_KERNELS = sorted(kk.KERNELS)
PHI0 = 0.3989422804014327
PHI1 = 0.24197072451914337
R_GAUSS = 0.28209479177387814


def phi(t):
    return np.exp(-0.5 * np.square(t)) / math.sqrt(2 * math.pi)


def _gauss_eval_copy(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2 * math.pi)


class TestKernelEval:
    def test_gaussian_at_zero(self):
        assert kk.kernel_eval(kk.get_kernel("gaussian"), 0.0) == pytest.approx(
            PHI0, abs=1e-12
        )

    def test_uniform_inside(self):
        assert kk.kernel_eval(kk.get_kernel("uniform"), 0.25) == 1.0

    def test_epanechnikov_outside_support(self):
        assert kk.kernel_eval(kk.get_kernel("epanechnikov"), 0.6) == 0.0
        # quarter-width point: K0(z) = 1.5 (1 - 4 z^2)
        assert kk.kernel_eval(kk.get_kernel("epanechnikov"), 0.25) == pytest.approx(
            1.5 * 0.75
        )

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_symmetry_and_nonnegativity(self, name):
        k = kk.get_kernel(name)
        z = np.linspace(-3, 3, 401)
        np.testing.assert_allclose(k.eval(z), k.eval(-z), atol=1e-15)
        assert np.all(k.eval(z) >= 0)

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_zero_outside_finite_support(self, name):
        k = kk.get_kernel(name)
        if math.isfinite(k.support_radius):
            z = np.array([-k.support_radius - 1e-9, k.support_radius + 1e-9, 5.0])
            np.testing.assert_array_equal(k.eval(z), 0.0)


class TestMoments:
    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_normalization(self, name):
        assert kk.quad_moment(kk.get_kernel(name), 0) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_odd_moments_zero(self, name):
        k = kk.get_kernel(name)
        for j in (1, 3, 5):
            assert kk.kernel_moment(k, j) == 0.0

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_analytic_table_matches_quadrature(self, name):
        k = kk.get_kernel(name)
        for j in range(7):
            assert abs(kk.kernel_moment(k, j) - kk.quad_moment(k, j)) <= 1e-9

    def test_known_second_moments(self):
        assert kk.kernel_moment(kk.get_kernel("gaussian"), 2) == pytest.approx(1.0)
        assert kk.kernel_moment(kk.get_kernel("epanechnikov"), 2) == pytest.approx(0.05)
        assert kk.kernel_moment(kk.get_kernel("uniform"), 2) == pytest.approx(1 / 12)

    def test_order_out_of_range(self):
        with pytest.raises(ValueError):
            kk.kernel_moment(kk.get_kernel("gaussian"), 7)

    def test_positive_variance(self):
        for name in ALL_KERNELS:
            assert kk.get_kernel(name).sigma2 > 0


class TestRoughness:
    def test_values(self):
        assert kk.kernel_roughness(kk.get_kernel("gaussian")) == pytest.approx(
            R_GAUSS, abs=1e-7
        )
        assert kk.kernel_roughness(kk.get_kernel("uniform")) == 1.0
        assert kk.kernel_roughness(kk.get_kernel("epanechnikov")) == pytest.approx(1.2)

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_table_matches_quadrature(self, name):
        k = kk.get_kernel(name)
        s = k.trunc_radius()
        t, w = kk.gauss_legendre_nodes(-s, s, panels=2)
        quad = float(np.sum(w * k.eval(t) ** 2))
        assert kk.kernel_roughness(k) == pytest.approx(quad, abs=1e-10)


class TestMgf:
    def test_gaussian_closed_form(self):
        assert kk.kernel_mgf(kk.get_kernel("gaussian"), 1.0) == pytest.approx(
            1.6487212707001282, abs=1e-12
        )

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_at_zero(self, name):
        assert kk.kernel_mgf(kk.get_kernel(name), 0.0) == pytest.approx(1.0, abs=1e-10)

    def test_uniform_value(self):
        # 2 sinh(u/2) / u at u=2 is sinh(1)
        assert kk.kernel_mgf(kk.get_kernel("uniform"), 2.0) == pytest.approx(
            1.1752011936438014, abs=1e-9
        )

    @pytest.mark.parametrize("name", ("epanechnikov", "biweight", "uniform1"))
    def test_quadrature_path(self, name):
        k = kk.get_kernel(name)
        s = k.support_radius
        t, w = kk.gauss_legendre_nodes(-s, s, panels=2)
        for u in (-1.5, 0.7, 3.0):
            direct = float(np.sum(w * np.exp(u * t) * k.eval(t)))
            assert kk.kernel_mgf(k, u) == pytest.approx(direct, rel=1e-12)


class TestClassicEstimate:
    def test_single_point(self):
        st = kk.classic_estimate(kk.get_kernel("gaussian"), 1.0, np.array([0.0]), 0.0)
        assert st.f_tilde == pytest.approx(PHI0, abs=1e-12)

    def test_symmetric_pair(self):
        st = kk.classic_estimate(
            kk.get_kernel("gaussian"), 1.0, np.array([-1.0, 1.0]), 0.0
        )
        assert st.f_tilde == pytest.approx(PHI1, abs=1e-12)
        assert st.f_tilde_d1 == pytest.approx(0.0, abs=1e-15)
        assert st.g_tilde == pytest.approx(0.0, abs=1e-15)

    def test_first_moment_identity(self):
        st = kk.classic_estimate(kk.get_kernel("gaussian"), 1.0, np.array([1.0]), 0.0)
        assert st.g_tilde == pytest.approx(PHI1, abs=1e-12)
        assert st.g_tilde == pytest.approx(st.f_tilde_d1, abs=1e-12)

    @pytest.mark.parametrize("h", (0.3, 1.0, 2.5))
    def test_gaussian_moment_identities(self, normal200, h):
        # g~ = h^2 f~' and g2~ = h^2 f~ + h^4 f~'' for the Gaussian kernel
        st = kk.classic_estimate(kk.get_kernel("gaussian"), h, normal200, 0.4)
        assert st.g_tilde == pytest.approx(h * h * st.f_tilde_d1, abs=1e-10)
        assert st.g2_tilde == pytest.approx(
            h * h * st.f_tilde + h**4 * st.f_tilde_d2, abs=1e-10
        )

    def test_undefined_ratios_without_mass(self):
        st = kk.classic_estimate(
            kk.get_kernel("uniform"), 0.5, np.array([100.0]), 0.0
        )
        assert st.f_tilde == 0.0
        assert st.q_tilde is None and st.d_hat is None

    def test_input_validation(self):
        g = kk.get_kernel("gaussian")
        with pytest.raises(ValueError):
            kk.classic_estimate(g, 0.5, np.empty(0), 0.0)
        with pytest.raises(ValueError):
            kk.classic_estimate(g, -0.5, np.array([1.0]), 0.0)

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_matches_direct_sum(self, name, normal200):
        k = kk.get_kernel(name)
        h, x = 0.7, 0.3
        st = kk.classic_estimate(k, h, normal200, x)
        direct = float(np.mean(k.eval((normal200 - x) / h))) / h
        assert st.f_tilde == pytest.approx(direct, rel=1e-13)

    def test_central_difference_fallback(self, normal200):
        # a kernel registered without analytic derivatives goes through
        # the generic path with finite-difference smoother derivatives
        bare = kk.Kernel(name="bare", support_radius=math.inf, eval=_gauss_eval_copy)
        st_fd = kk.classic_estimate(bare, 0.6, normal200, 0.3)
        st = kk.classic_estimate(kk.get_kernel("gaussian"), 0.6, normal200, 0.3)
        assert st_fd.f_tilde == pytest.approx(st.f_tilde, rel=1e-12)
        assert st_fd.f_tilde_d1 == pytest.approx(st.f_tilde_d1, rel=1e-6)
        assert st_fd.f_tilde_d2 == pytest.approx(st.f_tilde_d2, rel=1e-4)


class TestKernelConvolve:
    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_constant(self, name):
        k = kk.get_kernel(name)
        assert kk.kernel_convolve(k, 0.5, 0.3, lambda t: np.ones_like(t)) == (
            pytest.approx(1.0, abs=1e-10)
        )

    def test_normal_convolution(self):
        got = kk.kernel_convolve(kk.get_kernel("gaussian"), 1.0, 0.0, phi)
        assert got == pytest.approx(R_GAUSS, abs=1e-10)  # N(0,2) density at 0

    @pytest.mark.parametrize("name", ALL_KERNELS)
    def test_quadratic_moment_identity(self, name):
        k = kk.get_kernel(name)
        h = 0.5
        got = kk.kernel_convolve(k, h, 0.0, lambda t: t * t)
        assert got == pytest.approx(h * h * kk.kernel_moment(k, 2), abs=1e-12)

    def test_gaussian_quadratic_value(self):
        got = kk.kernel_convolve(kk.get_kernel("gaussian"), 0.5, 0.0, lambda t: t * t)
        assert got == pytest.approx(0.25, abs=1e-10)

    def test_nonfinite_integrand_rejected(self):
        with pytest.raises(ValueError):
            kk.kernel_convolve(
                kk.get_kernel("gaussian"), 0.5, 0.0, lambda t: np.where(t > 0, np.inf, 1.0)
            )

    @pytest.mark.parametrize("name", ("gaussian", "epanechnikov"))
    def test_taylor_expansion_residual_order(self, name):
        # (K_h * g)(x) - g(x) - k2 h^2 g''(x)/2 shrinks like h^4 for smooth g
        k = kk.get_kernel(name)
        x = 0.3
        hs = np.array([0.4, 0.2, 0.1, 0.05])
        k2 = kk.kernel_moment(k, 2)
        resid = []
        for h in hs:
            conv = kk.kernel_convolve(k, h, x, np.cos)
            resid.append(abs(conv - (math.cos(x) - 0.5 * k2 * h * h * math.cos(x))))
        slope = np.polyfit(np.log(hs), np.log(resid), 1)[0]
        assert slope == pytest.approx(4.0, abs=0.3)

    def test_population_form_of_classic_bias(self):
        # with the data sum replaced by the convolution against a true
        # density, the classic estimate shows the k2 h^2 f''/2 bias law
        k = kk.get_kernel("gaussian")
        x = 0.4
        f, fdd = phi(x), (x * x - 1.0) * phi(x)
        hs = np.array([0.2, 0.1, 0.05, 0.025])
        resid = [
            abs(kk.kernel_convolve(k, h, x, phi) - f - 0.5 * h * h * fdd) for h in hs
        ]
        slope = np.polyfit(np.log(hs), np.log(resid), 1)[0]
        assert slope == pytest.approx(4.0, abs=0.3)


def test_unknown_kernel_name():
    with pytest.raises(ValueError):
        kk.get_kernel("triangular")
