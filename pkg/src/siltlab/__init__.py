"""Numerical laboratory for intersection local times of symmetric stable processes."""

__version__ = "0.1.0"

from .stable import (
    GateError,
    PathSample,
    StableSpec,
    c_psi,
    density_at_zero,
    psi_eval,
    sample_path,
    substream,
)
from .silt import (
    DyadicCell,
    DyadicDecomposition,
    EpsExtrapolation,
    Mollifier,
    ResolutionWarning,
    dyadic_decompose,
    expected_mutual_ilt,
    expected_self_ilt,
    extrapolate_epsilon,
    gamma_on_cell,
    gamma_regularized,
    mutual_ilt,
    mutual_ilt_limit,
    self_ilt_raw,
)
from .variational import (
    ConvergenceError,
    SpectralGrid,
    VariationalSolution,
    a_psi,
    default_grid,
    energy,
    kappa_from_M,
    maximize_M,
)
from .mc import (
    Ensemble,
    MeanCheck,
    RunPlan,
    ScalingReport,
    TailFit,
    TrajectoryReport,
    ensemble_csv,
    lil_trajectory,
    lower_tail_fit,
    mean_check_alpha,
    parse_ensemble_csv,
    run_gamma_ensemble,
    scaling_test,
    tail_quantile_witness,
    upper_tail_fit,
)
from .cli import ExperimentConfig, parse_config, run

__all__ = [
    "GateError",
    "PathSample",
    "StableSpec",
    "c_psi",
    "density_at_zero",
    "psi_eval",
    "sample_path",
    "substream",
    "DyadicCell",
    "DyadicDecomposition",
    "EpsExtrapolation",
    "Mollifier",
    "ResolutionWarning",
    "dyadic_decompose",
    "expected_mutual_ilt",
    "expected_self_ilt",
    "extrapolate_epsilon",
    "gamma_on_cell",
    "gamma_regularized",
    "mutual_ilt",
    "mutual_ilt_limit",
    "self_ilt_raw",
    "ConvergenceError",
    "SpectralGrid",
    "VariationalSolution",
    "a_psi",
    "default_grid",
    "energy",
    "kappa_from_M",
    "maximize_M",
    "Ensemble",
    "MeanCheck",
    "RunPlan",
    "ScalingReport",
    "TailFit",
    "TrajectoryReport",
    "ensemble_csv",
    "lil_trajectory",
    "lower_tail_fit",
    "mean_check_alpha",
    "parse_ensemble_csv",
    "run_gamma_ensemble",
    "scaling_test",
    "tail_quantile_witness",
    "upper_tail_fit",
    "ExperimentConfig",
    "parse_config",
    "run",
    "__version__",
]
