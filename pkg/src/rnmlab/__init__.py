"""Numerical laboratory for planar eigenvalue ensembles.

Exact polynomial reproducing kernels, droplet potential theory, exact and
Markov-chain samplers, and the limit formulas for fluctuations of linear
statistics, verified against each other at desk scale.
"""

__version__ = "0.1.0"

from .errors import RnmError
from .fieldops import (
    BoundaryFourier,
    ComplexField,
    TestFunction,
    boundary_fourier,
    cauchy_transform_sigma,
    dirichlet_form,
    dn_field,
    fluctuation_mean_limit,
    harmonic_extension,
    neumann_jump,
    perturbation_shift,
    variance_limit,
)
from .kernel import (
    ApproxKernel,
    KernelModel,
    berezin,
    build_kernel,
    correlation2,
    eval_approx_kernel,
    eval_weighted_kernel,
    heat_kernel,
    one_point,
)
from .numerics import (
    Dual2,
    QuadratureRule,
    circle_fft,
    dual_eval,
    find_root,
    hermitian_factor,
    integrate,
    make_polar_quadrature,
    make_radial_quadrature,
)
from .potential import (
    Droplet,
    ObstacleFunction,
    Potential,
    eval_potential,
    log_laplacian_fields,
    obstacle,
    polarize,
    solve_droplet,
)
from .sampler import (
    ChainConfig,
    Configuration,
    hamiltonian,
    load_configurations,
    sample_dpp,
    sample_mcmc,
    save_configurations,
)
from .stats import (
    CltReport,
    FluctuationReport,
    WardReport,
    clt_test,
    fluctuation_mean,
    linear_statistic,
    mc_fluctuation,
    ward_check_kernel,
    ward_decomposition_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
