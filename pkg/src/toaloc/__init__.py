"""Outlier-robust time-of-arrival source localization.

An ADMM solver for robustified range fitting, Gauss-Newton and IRLS
baselines, an alpha-stable noise simulator and a reproducible Monte-Carlo
benchmark harness.  The ADMM inner loop runs in a compiled extension when
built, with a pure-NumPy fallback selected at import (see ``backend``).
"""

from .admm import (
    AdmmConfig,
    AdmmState,
    AdmmTrace,
    KktReport,
    SolveResult,
    augmented_lagrangian,
    kkt_residuals,
    solve,
)
from .backend import BACKEND, HAS_COMPILED
from .baselines import BaselineConfig, BaselineKind, solve_gn_l2, solve_irls_lp
from .experiments import (
    EstimatorSpec,
    ExperimentConfig,
    FixedParams,
    GeometrySpec,
    SweepSpec,
    convergence_trace,
    rmse,
    run_sweep,
    timing_report,
)
from .loss import LossKind, LossSpec, eval_loss, lp_root, prox
from .model import (
    Measurements,
    Scenario,
    StableParams,
    fixed_perimeter_scenario,
    gamma_for_gsnr,
    gsnr,
    measure,
    random_square_scenario,
    sample_stable,
    true_ranges,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AdmmTrace",
    "BACKEND",
    "BaselineConfig",
    "BaselineKind",
    "EstimatorSpec",
    "ExperimentConfig",
    "FixedParams",
    "GeometrySpec",
    "HAS_COMPILED",
    "KktReport",
    "LossKind",
    "LossSpec",
    "Measurements",
    "Scenario",
    "SolveResult",
    "StableParams",
    "SweepSpec",
    "augmented_lagrangian",
    "convergence_trace",
    "eval_loss",
    "fixed_perimeter_scenario",
    "gamma_for_gsnr",
    "gsnr",
    "kkt_residuals",
    "lp_root",
    "measure",
    "prox",
    "random_square_scenario",
    "rmse",
    "run_sweep",
    "sample_stable",
    "solve",
    "solve_gn_l2",
    "solve_irls_lp",
    "timing_report",
    "true_ranges",
]
