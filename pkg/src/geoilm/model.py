"""Infection-pressure model: susceptibility predictor, distance kernel, and
per-step infection probability.

The rate of infectivity felt by a susceptible individual i in area k at
discrete time t is

    rate(i,k,t) = exp(alpha + X_i'a1 + X_k'a2 + X_{k,t-rho}'a3 + phi_k)
                  * sum_{j infectious & contactable} d_ij^(-delta)

and the one-step infection probability is 1 - exp(-(rate + epsilon)).
Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .population import DEFAULT_DISTANCE_FLOOR, Population, distance

SI = "SI"
SIR = "SIR"

_LOG_HALF = float(np.log(0.5))


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector, plus the fixed sparks constant and covariate lag."""

    alpha: float = 0.0
    alpha1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha3: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta: float = 1.0
    lam: float = 0.0
    sigma2: float = 1.0
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    epsilon: float = 0.0
    rho: int = 0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "phi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if not self.delta > 0:
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be > 0, got {self.sigma2}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.rho < 0 or int(self.rho) != self.rho:
            raise ValidationError(f"rho must be a nonnegative integer, got {self.rho}")

    def with_(self, **kwargs):
        return replace(self, **kwargs)

    def check_population(self, pop: Population):
        """Dimension agreement with a population; raises on mismatch."""
        if self.alpha1.size != pop.n_ind_covariates:
            raise ValidationError(
                f"alpha1 has {self.alpha1.size} components, population has "
                f"{pop.n_ind_covariates} individual covariates")
        if self.alpha2.size != pop.n_area_covariates:
            raise ValidationError(
                f"alpha2 has {self.alpha2.size} components, population has "
                f"{pop.n_area_covariates} area covariates")
        if self.alpha3.size != pop.n_time_covariates:
            raise ValidationError(
                f"alpha3 has {self.alpha3.size} components, population has "
                f"{pop.n_time_covariates} time-varying covariates")
        if self.phi.size != pop.K:
            raise ValidationError(f"phi has length {self.phi.size}, expected K={pop.K}")


@dataclass(frozen=True)
class ModelConfig:
    """Transmission scope, compartmental framework and which effects are estimated."""

    restricted: bool = True
    framework: str = SIR
    gamma: int | None = None
    include_alpha: bool = True

    def __post_init__(self):
        if self.framework not in (SI, SIR):
            raise ValidationError(f"framework must be {SI!r} or {SIR!r}, got {self.framework!r}")
        if self.framework == SIR:
            if self.gamma is None or self.gamma < 1:
                raise ValidationError("SIR framework requires an infectious period gamma >= 1")
        elif self.gamma is not None:
            raise ValidationError("gamma is only meaningful under the SIR framework")


def log_predictor_fixed(pop: Population, params: ModelParams) -> np.ndarray:
    """Per-individual time-constant part of the log susceptibility predictor.

    Excludes the lagged environmental term; add time_predictor(...) for it.
    """
    lp = np.full(pop.n, params.alpha, dtype=float)
    if params.alpha1.size:
        lp += pop.X_ind @ params.alpha1
    if params.alpha2.size:
        lp += (pop.X_area @ params.alpha2)[pop.area_index]
    lp += params.phi[pop.area_index]
    return lp


def time_predictor(pop: Population, params: ModelParams, t: int) -> np.ndarray:
    """Per-area lagged environmental contribution at time t (zeros when unused)."""
    if params.alpha3.size == 0:
        return np.zeros(pop.K)
    if pop.X_time is None:
        raise ValidationError("alpha3 is nonempty but the population has no time covariates")
    s = t - params.rho
    if s < 1 or s > pop.X_time.shape[1]:
        raise ValidationError(
            f"time covariate needed at t-rho={s} but tables cover 1..{pop.X_time.shape[1]}")
    return pop.X_time[:, s - 1, :] @ params.alpha3


def susceptibility(pop: Population, i: int, t: int, params: ModelParams) -> float:
    """Susceptibility multiplier of individual index ``i`` at time ``t``; always > 0."""
    lp = params.alpha + params.phi[pop.area_index[i]]
    if params.alpha1.size:
        lp += float(pop.X_ind[i] @ params.alpha1)
    if params.alpha2.size:
        lp += float(pop.X_area[pop.area_index[i]] @ params.alpha2)
    if params.alpha3.size:
        lp += float(time_predictor(pop, params, t)[pop.area_index[i]])
    return float(np.exp(lp))


def kernel(d, delta: float):
    """Power-law distance kernel d**(-delta); strictly decreasing in d for delta > 0."""
    d = np.asarray(d, dtype=float)
    if not delta > 0:
        raise ValidationError(f"kernel decay delta must be > 0, got {delta}")
    if np.any(d <= 0):
        raise ValidationError("kernel distance must be positive (apply the distance floor first)")
    out = d ** (-delta)
    return float(out) if out.ndim == 0 else out


def infectivity_rate(pop: Population, i: int, t: int, infectious: np.ndarray,
                     params: ModelParams, cfg: ModelConfig,
                     d_min: float = DEFAULT_DISTANCE_FLOOR) -> float:
    """Rate of infectivity on susceptible index ``i`` from the given infectious indices.

    ``infectious`` holds the individual indices infectious at time t; only
    those within the contactable scope of i's area contribute.
    """
    infectious = np.asarray(infectious, dtype=np.intp)
    if infectious.size == 0:
        return 0.0
    k = pop.area_index[i]
    mask = pop.contact_individual_mask(k, cfg.restricted)
    contacts = infectious[mask[infectious]]
    contacts = contacts[contacts != i]
    if contacts.size == 0:
        return 0.0
    ds = np.array([distance(pop.individuals[i], pop.individuals[j], d_min)
                   for j in contacts])
    return susceptibility(pop, i, t, params) * float(np.sum(kernel(ds, params.delta)))


def infection_probability(pop: Population, i: int, t: int, infectious: np.ndarray,
                          params: ModelParams, cfg: ModelConfig,
                          d_min: float = DEFAULT_DISTANCE_FLOOR) -> float:
    """One-step probability that susceptible ``i`` becomes infectious at t+1."""
    rate = infectivity_rate(pop, i, t, infectious, params, cfg, d_min=d_min)
    return prob_from_rate(rate + params.epsilon)


def prob_from_rate(x):
    """Map a nonnegative infection rate to a probability, 1 - exp(-x), stably."""
    return -np.expm1(-np.asarray(x, dtype=float))


def log_prob_from_rate(x):
    """log(1 - exp(-x)) for x >= 0, elementwise, -inf at x = 0.

    Splits at log 2: log(-expm1(-x)) is accurate for small x, log1p(-exp(-x))
    for large x.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = x <= -_LOG_HALF
    with np.errstate(divide="ignore"):
        out[small] = np.log(-np.expm1(-x[small]))
    out[~small] = np.log1p(-np.exp(-x[~small]))
    return float(out[0]) if scalar else out
