"""Locally parametric kernel density estimation.

Fits a parametric family locally at each evaluation point through
kernel-weighted likelihood or estimating equations, with closed-form
special cases for the Gaussian kernel, boundary diagnostics, bandwidth
selection, and a deterministic/Monte-Carlo verification layer.
"""

from .backend import BACKEND
from .bandwidth import (
    AmiseReport,
    BandwidthSelection,
    amise,
    lscv_score,
    optimal_h,
    roughness_functional,
    select_h_lscv,
    select_h_plugin_ratio,
)
from .bivariate import (
    Estimate2D,
    classic2d,
    classic2d_stats,
    cf_bilinear2d,
    family_binormal_product,
    family_logpoly2d,
    fit2d,
    fit2d_grid,
    weights_make2d,
)
from .boundary import (
    BoundaryMoments,
    boundary_bias_diag,
    boundary_kernel,
    boundary_moments,
)
from .closedform import (
    ClosedFormResult,
    cf_hjort_glad,
    cf_loglinear,
    cf_logquad,
    cf_mult_const,
    cf_mult_loglinear_normal,
    cf_running_normal,
)
from .analysis import (
    AsymptoticFactors,
    EstimatorSpec,
    McReport,
    PopulationFit,
    TrueDensity,
    bias_factor,
    exponential_density,
    fourth_order_equivalent,
    kl_local_distance,
    mc_experiment,
    mixture_density,
    normal_density,
    population_bias_curve,
    population_theta0,
    tau_squared,
)
from .kernels import (
    KERNELS,
    Kernel,
    SmootherStats,
    classic_estimate,
    get_kernel,
    kernel_convolve,
    kernel_eval,
    kernel_mgf,
    kernel_moment,
    kernel_roughness,
)
from .models import (
    LocalFamily,
    ParamVector,
    WeightScheme,
    family_linear,
    family_mult_correction,
    family_normal,
    family_polyexp,
    fit_normal_global,
    normal_pdf,
    weights_make,
)
from .solver import (
    DensityEstimate,
    FitConfig,
    FitStatus,
    LocalFitResult,
    estimating_eqs,
    fit_at,
    fit_grid,
    local_loglik,
)

__version__ = "0.1.0"
