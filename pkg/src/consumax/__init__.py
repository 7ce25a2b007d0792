"""Positivity-preserving simulation of a chemotaxis-consumption system with
measure-valued initial data, plus diagnostics for its a priori estimates."""

from .errors import (
    CFLViolation, ConsumaxError, HypothesisViolation, InputError, NumericalError, SmallnessViolated,
)
from .functionals import (
    DiagnosticsSeries, PhiParams, TestFunction, beta_of, continuity_moduli, dissipation, energy,
    phi, phi1, phi2, taxis_l1, time_weighted,
)
from .grid import Field, GridSpec, MeasureSpec, integrate, lp_norm, pair_with_test_function
from .operators import gradient_sq, laplacian, taxis_divergence
from .regularize import heat_step, mollify_measure, smooth_v0
from .stepper import ProbeConfig, SimParams, SimState, cfl_dt, geometric_ladder, run, step
from .verifier import (
    PointwiseReport, SmallnessInput, select_delta, smallness_threshold, verify_phi_identities,
    verify_pointwise,
)

__version__ = "0.1.0"

__all__ = [
    "CFLViolation", "ConsumaxError", "DiagnosticsSeries", "Field", "GridSpec", "HypothesisViolation",
    "InputError", "MeasureSpec", "NumericalError", "PhiParams", "PointwiseReport", "ProbeConfig",
    "SimParams", "SimState", "SmallnessInput", "SmallnessViolated", "TestFunction", "beta_of",
    "cfl_dt", "continuity_moduli", "dissipation", "energy", "geometric_ladder", "gradient_sq",
    "heat_step", "integrate", "laplacian", "lp_norm", "mollify_measure", "pair_with_test_function",
    "phi", "phi1", "phi2", "run", "select_delta", "smallness_threshold", "smooth_v0", "step",
    "taxis_divergence", "taxis_l1", "time_weighted", "verify_phi_identities", "verify_pointwise",
]
