"""kernellab: a numerical laboratory for heat-kernel bounds of
drift-diffusion operators with singular form-bounded drift.

Submodules:
    fields     catalog of diffusion matrices and drift fields
    grids      radial and box grids
    quadform   form-bound / Kato estimators and named inequalities
    mollify    heat-semigroup mollifier with preservation checks
    evolve     positivity-preserving Cauchy solver and kernel estimation
    kernelfit  Gaussian envelope fitting and pointwise comparisons
    nashlab    entropy/moment/G-function diagnostics
    constants  proof-constant ledger and extrapolation arithmetic
    scenarios  experiment configuration, validation, and persistence
"""

__version__ = "0.1.0"

from .constants import ConstantLedger, coulhon_raynaud, critical_exponent, proof_constants
from .fields import (DiffusionMatrix, DriftField, ScalarField, hardy_drift,
                     make_matrix, numeric_divergence, parse_field, parse_matrix)
from .grids import BoxGrid, RadialGrid, centered_box, grid_from_config
from .kernelfit import (BoundFit, WeightProfile, domination_check, fit_bound,
                        fit_weight_exponent, gaussian_kernel, sandwich_check)
from .mollify import MollifiedField, claim1_sup_bound, mollify, verify_preservation
from .evolve import (HeatKernelEstimate, ParabolicProblem, SolverConfig,
                     estimate_kernel, lp_decay_check, mollifier_consistency, solve)
from .nashlab import NashDiagnostics, entropy, entropy_moment_check, g_function, moment, nash_series
from .quadform import (FormBoundEstimate, KatoEstimate, birman_formbound_from_kato,
                       check_inequality, estimate_form_bound, estimate_kato_norm,
                       resolvent_kernel)
from .scenarios import RunManifest, Scenario, run, run_file, run_many, validate

__all__ = [
    "BoundFit", "BoxGrid", "ConstantLedger", "DiffusionMatrix", "DriftField",
    "FormBoundEstimate", "HeatKernelEstimate", "KatoEstimate", "MollifiedField",
    "NashDiagnostics", "ParabolicProblem", "RadialGrid", "RunManifest",
    "ScalarField", "Scenario", "SolverConfig", "WeightProfile",
    "birman_formbound_from_kato", "centered_box", "check_inequality",
    "claim1_sup_bound", "coulhon_raynaud", "critical_exponent",
    "domination_check", "entropy", "entropy_moment_check", "estimate_form_bound",
    "estimate_kato_norm", "estimate_kernel", "fit_bound", "fit_weight_exponent",
    "g_function", "gaussian_kernel", "grid_from_config", "hardy_drift",
    "lp_decay_check", "make_matrix", "moment", "mollifier_consistency",
    "mollify", "nash_series", "numeric_divergence", "parse_field",
    "parse_matrix", "proof_constants", "resolvent_kernel", "run", "run_file",
    "run_many", "sandwich_check", "solve", "validate", "verify_preservation",
]
