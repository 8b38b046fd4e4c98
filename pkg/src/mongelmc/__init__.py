"""Lagrangian Monte Carlo with the rank-one Monge metric and a Euclidean HMC baseline."""

__version__ = "0.1.0"

from mongelmc.errors import (
    DegenerateDenominator,
    DegenerateDeterminant,
    DivergenceError,
    EmptyRange,
    InitialPointInvalid,
    NonFiniteEnergy,
    NonFiniteEvaluation,
    NonPositiveDefinite,
    OriginSingularity,
    ZeroVariance,
)
from mongelmc.metric import DifferentiablePoint, MongeConfig, evaluate_point
from mongelmc.integrator import IntegratorConfig, PhaseState, integrate_trajectory
from mongelmc.samplers import (
    Chain,
    SamplerConfig,
    hmc_euclidean_sample,
    lmc_monge_sample,
)
from mongelmc.diagnostics import effective_sample_size, histogram_kl, summarize

__all__ = [
    "Chain",
    "DegenerateDenominator",
    "DegenerateDeterminant",
    "DifferentiablePoint",
    "DivergenceError",
    "EmptyRange",
    "InitialPointInvalid",
    "IntegratorConfig",
    "MongeConfig",
    "NonFiniteEnergy",
    "NonFiniteEvaluation",
    "NonPositiveDefinite",
    "OriginSingularity",
    "PhaseState",
    "SamplerConfig",
    "ZeroVariance",
    "effective_sample_size",
    "evaluate_point",
    "histogram_kl",
    "hmc_euclidean_sample",
    "integrate_trajectory",
    "lmc_monge_sample",
    "summarize",
]
