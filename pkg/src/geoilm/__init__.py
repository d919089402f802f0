"""Discrete-time spatial epidemic models with area-level random effects.

Simulation of epidemics over individuals embedded in an areal adjacency
structure, exact likelihood evaluation, Bayesian fitting by random-walk
Metropolis-Hastings with a conjugate variance update, and posterior
summaries: risk maps and distance-kernel probability curves.
"""

__version__ = "0.1.0"

from .errors import BudgetError, GeoilmError, NumericalError, ValidationError
from .likelihood import (EpidemicHistory, LikelihoodEvaluator, load_epidemic,
                         log_likelihood, write_epidemic)
from .mcmc import (ChainOutput, McmcConfig, PriorSpec, gibbs_sigma2,
                   log_posterior, run_chain, run_chains, summarize)
from .model import (ModelConfig, ModelParams, infection_probability,
                    infectivity_rate, kernel, susceptibility)
from .population import (Area, AreaGraph, DistanceCache, Individual, Population,
                         build_distance_cache, contactable_set, distance,
                         load_population)
from .postprocess import KernelCurve, RiskMap, kernel_curve, risk_map
from .simulate import SimConfig, run_scenario, run_simulation, simulate_epidemic
from .synthetic import default_initial_infectives, make_synthetic_population

__all__ = [
    "Area", "AreaGraph", "BudgetError", "ChainOutput", "DistanceCache",
    "EpidemicHistory", "GeoilmError", "Individual", "KernelCurve",
    "LikelihoodEvaluator", "McmcConfig", "ModelConfig", "ModelParams",
    "NumericalError", "Population", "PriorSpec", "RiskMap", "SimConfig",
    "ValidationError", "build_distance_cache", "contactable_set",
    "default_initial_infectives", "distance", "gibbs_sigma2",
    "infection_probability", "infectivity_rate", "kernel", "kernel_curve",
    "load_epidemic", "load_population", "log_likelihood", "log_posterior",
    "make_synthetic_population", "risk_map", "run_chain", "run_chains",
    "run_scenario", "run_simulation", "simulate_epidemic", "summarize",
    "susceptibility", "write_epidemic",
]
