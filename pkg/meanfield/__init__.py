"""
Numerical library for mean-field games with common noise.

Covers the N-player particle system, the McKean–Vlasov SPDE (Itô stepping and
stochastic characteristics), variational-derivative sensitivities, exact
generator decompositions, and the MFG consistency loop.
"""

from .characteristics import (
    FlowTable,
    build_flow,
    flow_Y,
    pushforward,
    transformed_coeffs,
)
from .generators import (
    CylinderFunctional,
    apply_AN_fd,
    apply_lambda_corr,
    apply_lambda_lim,
    decomposition_residual,
)
from .grid import (
    EmpiricalMeasure,
    Grid1D,
    GridMeasure,
    diff1,
    diff2,
    empirical_to_grid,
    mollified_delta,
    pair,
)
from .model import ModelCoefficients, build_model, drift
from .moments import MomentFunctional, moment_value, moment_vd1, moment_vd2
from .particles import (
    InitialLaw,
    NoiseBundle,
    ParticleEnsemble,
    generate_noise,
    payoff_tagged,
    simulate_ensemble,
    simulate_limit_ensemble,
    simulate_tagged_frozen,
    simulate_tagged_limit,
    simulate_tagged_pair,
    step_particles,
)
from .policies import ConstantPolicy, LinearFeedbackPolicy, ZeroPolicy
from .spde import MeasurePath, apply_L_prime, solve_spde, step_characteristics, step_ito
from .sensitivity import SensitivityPath, solve_eta, solve_xi, xi_fd_oracle

__version__ = "0.1.0"

__all__ = [
    # Grid
    "Grid1D",
    "GridMeasure",
    "EmpiricalMeasure",
    "pair",
    "mollified_delta",
    "diff1",
    "diff2",
    "empirical_to_grid",
    # Model
    "ModelCoefficients",
    "build_model",
    "drift",
    "MomentFunctional",
    "moment_value",
    "moment_vd1",
    "moment_vd2",
    # Characteristics
    "FlowTable",
    "build_flow",
    "flow_Y",
    "pushforward",
    "transformed_coeffs",
    # Particles
    "NoiseBundle",
    "ParticleEnsemble",
    "InitialLaw",
    "generate_noise",
    "step_particles",
    "simulate_ensemble",
    "simulate_tagged_pair",
    "simulate_tagged_frozen",
    "simulate_limit_ensemble",
    "simulate_tagged_limit",
    "payoff_tagged",
    # Policies
    "ZeroPolicy",
    "ConstantPolicy",
    "LinearFeedbackPolicy",
    # SPDE
    "MeasurePath",
    "apply_L_prime",
    "step_ito",
    "step_characteristics",
    "solve_spde",
    # Sensitivity
    "SensitivityPath",
    "solve_xi",
    "solve_eta",
    "xi_fd_oracle",
    # Generators
    "CylinderFunctional",
    "apply_AN_fd",
    "apply_lambda_lim",
    "apply_lambda_corr",
    "decomposition_residual",
]
