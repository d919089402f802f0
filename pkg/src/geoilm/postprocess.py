"""Posterior-predictive artifacts: area-level risk maps and distance-kernel
probability curves.

Risk maps average the infectivity rate felt by each susceptible individual
over posterior draws, then over the susceptibles of each area.  Kernel
curves show the one-step infection probability of a median-covariate
susceptible in an area against the distance to a single infectious
individual.  Output is plot-ready tabular data; no plotting engine here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .likelihood import EpidemicHistory
from .mcmc import ChainOutput
from .model import ModelConfig, ModelParams
from .population import DistanceCache, Population, build_distance_cache


def params_from_row(columns, row, pop: Population,
                    epsilon: float = 0.0, rho: int = 0) -> ModelParams:
    """Rebuild a parameter vector from one retained draw row; a pinned
    constant-infectivity term reads back as zero."""
    get = dict(zip(columns, row))
    p = pop.n_ind_covariates
    r = pop.n_area_covariates
    q = pop.n_time_covariates
    return ModelParams(
        alpha=float(get.get("alpha", 0.0)),
        alpha1=np.array([get[f"alpha1_{j + 1}"] for j in range(p)]),
        alpha2=np.array([get[f"alpha2_{j + 1}"] for j in range(r)]),
        alpha3=np.array([get[f"alpha3_{j + 1}"] for j in range(q)]),
        delta=float(get["delta"]),
        lam=float(get["lambda"]),
        sigma2=float(get["sigma2"]),
        phi=np.array([get[f"phi_{a}"] for a in pop.graph.area_ids]),
        epsilon=epsilon, rho=rho,
    )


def posterior_mean_params(chain: ChainOutput, pop: Population,
                          epsilon: float = 0.0, rho: int = 0) -> ModelParams:
    return params_from_row(chain.columns, chain.draws.mean(axis=0), pop,
                           epsilon=epsilon, rho=rho)


@dataclass
class RiskMap:
    """Average infectivity rate per (area, time); cells with no susceptible
    individuals are absent rather than zero."""

    entries: list        # (area_id, t, rate)
    times: list
    plug_in: bool

    def rate(self, area_id, t):
        for a, s, r in self.entries:
            if a == area_id and s == t:
                return r
        return None


@dataclass
class KernelCurve:
    """Per-draw and posterior-mean infection probability against distance."""

    area_id: str
    distances: np.ndarray       # (n_d,)
    draw_indices: np.ndarray    # (n_draws,), indices into the retained draws
    draw_probs: np.ndarray      # (n_draws, n_d)
    mean_probs: np.ndarray      # (n_d,) at the parameter posterior means


def _draw_rows(chain: ChainOutput, n_samples, seed):
    if chain.n_retained == 0:
        raise ValidationError("chain has no retained draws")
    if n_samples is None or n_samples >= chain.n_retained:
        return np.arange(chain.n_retained)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(chain.n_retained, size=n_samples, replace=False))


def risk_map(chain: ChainOutput, history: EpidemicHistory, pop: Population,
             cfg: ModelConfig, times, epsilon: float = 0.0, rho: int = 0,
             n_samples: int = None, seed: int = 0, plug_in: bool = False,
             cache: DistanceCache = None) -> RiskMap:
    """Average posterior infectivity rate over the susceptibles of each area.

    The default averages the rate itself over draws (then over
    susceptibles); ``plug_in`` instead evaluates the rate once at the
    parameter posterior means.
    """
    if cache is None or cache.restricted != cfg.restricted:
        cache = build_distance_cache(pop, cfg.restricted)
    times = [int(t) for t in times]
    for t in times:
        if not 1 <= t <= history.T:
            raise ValidationError(f"requested time {t} outside 1..T={history.T}")

    if plug_in:
        rows = chain.draws.mean(axis=0, keepdims=True)
        draw_rows = [0]
        columns = chain.columns
        draws_matrix = rows
    else:
        draw_rows = _draw_rows(chain, n_samples, seed)
        columns = chain.columns
        draws_matrix = chain.draws[draw_rows]

    params_list = [params_from_row(columns, row, pop, epsilon=epsilon, rho=rho)
                   for row in draws_matrix]

    entries = []
    for t in times:
        sus = np.flatnonzero(history.susceptible_mask(t))
        if sus.size == 0:
            continue
        inf_idx = history.infectious_indices(t)
        sub = cache.matrix[np.ix_(sus, inf_idx)] if inf_idx.size else None
        mean_rate = np.zeros(sus.size)
        for params in params_list:
            if sub is not None:
                ksum = (sub ** -params.delta).sum(axis=1)
            else:
                ksum = np.zeros(sus.size)
            lp = _log_susceptibility(pop, params, sus, t)
            with np.errstate(invalid="ignore", over="ignore"):
                mean_rate += np.where(ksum > 0.0, np.exp(lp) * ksum, 0.0) + epsilon
        mean_rate /= len(params_list)
        for k in range(pop.K):
            in_k = pop.area_index[sus] == k
            if np.any(in_k):
                entries.append((pop.graph.area_ids[k], t, float(mean_rate[in_k].mean())))
    return RiskMap(entries=entries, times=times, plug_in=plug_in)


def _log_susceptibility(pop, params, idx, t):
    from .model import time_predictor

    lp = np.full(idx.size, params.alpha)
    if params.alpha1.size:
        lp += pop.X_ind[idx] @ params.alpha1
    if params.alpha2.size:
        lp += (pop.X_area @ params.alpha2)[pop.area_index[idx]]
    if params.alpha3.size:
        lp += time_predictor(pop, params, t)[pop.area_index[idx]]
    lp += params.phi[pop.area_index[idx]]
    return lp


def kernel_curve(chain: ChainOutput, pop: Population, area_id, d_grid,
                 n_samples: int = 1000, seed: int = 0,
                 time_covariate_values=None) -> KernelCurve:
    """Infection probability against distance for a median-covariate
    susceptible of the area facing a single infectious individual.

    One curve per sampled draw plus the curve at the parameter posterior
    means.  Lagged environmental covariates contribute zero unless explicit
    values are supplied, since a distance curve carries no time index.
    """
    d_grid = np.asarray(d_grid, dtype=float)
    if d_grid.size == 0 or np.any(d_grid <= 0) or np.any(np.diff(d_grid) <= 0):
        raise ValidationError("distance grid must be positive and strictly increasing")
    if area_id not in pop.graph.index:
        raise ValidationError(f"unknown area {area_id!r}")
    k = pop.graph.index[area_id]
    members = pop.area_members[k]
    if members.size == 0:
        raise ValidationError(f"area {area_id!r} has no individuals")

    x_med = np.median(pop.X_ind[members], axis=0) if pop.n_ind_covariates else np.zeros(0)
    x_area = pop.X_area[k]
    tvals = (np.asarray(time_covariate_values, dtype=float)
             if time_covariate_values is not None
             else np.zeros(pop.n_time_covariates))

    def curve(params: ModelParams):
        lp = params.alpha + float(x_med @ params.alpha1) + float(x_area @ params.alpha2)
        if params.alpha3.size:
            lp += float(tvals @ params.alpha3)
        lp += params.phi[k]
        with np.errstate(over="ignore"):
            rate = np.exp(lp) * d_grid ** -params.delta
        return -np.expm1(-rate)

    draw_rows = _draw_rows(chain, n_samples, seed)
    probs = np.empty((draw_rows.size, d_grid.size))
    for r, row in enumerate(draw_rows):
        probs[r] = curve(params_from_row(chain.columns, chain.draws[row], pop))
    return KernelCurve(area_id=area_id, distances=d_grid, draw_indices=draw_rows,
                       draw_probs=probs,
                       mean_probs=curve(posterior_mean_params(chain, pop)))
