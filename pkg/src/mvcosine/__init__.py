"""Particle simulation of second-order mean-field stochastic equations with jumps."""

from .averaging import (
    AveragedCoefficients,
    AveragingReport,
    averaging_sweep,
    check_time_averages,
    make_averaging_model,
    solve_averaged,
    solve_standard,
)
from .coefficients import CoefficientSet, Modulus, check_growth_lipschitz, check_modulus, make_linear_model, modulus_beta
from .cosine_family import (
    CosineFamily,
    SpectralGenerator,
    a_sine_apply,
    cosine_apply,
    identity_residuals,
    scalar_family,
    sine_apply,
)
from .exceptions import ConfigError, ContractError, MVCosineError, SolverDivergence, UnsupportedError
from .grid import TimeGrid
from .inequalities import (
    BihariProblem,
    bihari_bound,
    bihari_check,
    gronwall_check,
    kunita_p2_check,
    power_inequality_check,
)
from .measure import EmpiricalMeasure, w2_entropic, w2_exact, w2_quantile_1d
from .noise import JumpSpec, QWienerSpec, sample_ensemble
from .solver import (
    InitialLaw,
    ParticleEnsemble,
    SolveConfig,
    cauchy_diagnostic,
    increment_diagnostic,
    picard_reference,
    solve,
    solve_caratheodory,
    solve_euler_mild,
    uniform_bound_diagnostic,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedCoefficients",
    "AveragingReport",
    "BihariProblem",
    "CoefficientSet",
    "ConfigError",
    "ContractError",
    "CosineFamily",
    "EmpiricalMeasure",
    "InitialLaw",
    "JumpSpec",
    "MVCosineError",
    "Modulus",
    "ParticleEnsemble",
    "QWienerSpec",
    "SolveConfig",
    "SolverDivergence",
    "SpectralGenerator",
    "TimeGrid",
    "UnsupportedError",
    "a_sine_apply",
    "averaging_sweep",
    "bihari_bound",
    "bihari_check",
    "cauchy_diagnostic",
    "check_growth_lipschitz",
    "check_modulus",
    "check_time_averages",
    "cosine_apply",
    "gronwall_check",
    "identity_residuals",
    "increment_diagnostic",
    "kunita_p2_check",
    "make_averaging_model",
    "make_linear_model",
    "modulus_beta",
    "picard_reference",
    "power_inequality_check",
    "sample_ensemble",
    "scalar_family",
    "sine_apply",
    "solve",
    "solve_averaged",
    "solve_caratheodory",
    "solve_euler_mild",
    "solve_standard",
    "uniform_bound_diagnostic",
    "w2_entropic",
    "w2_exact",
    "w2_quantile_1d",
]
