"""Posterior sampling by random-walk Metropolis-Hastings with a conjugate
Gibbs update for the random-effect variance.

Sweep order: alpha (when estimated), each alpha1/alpha2/alpha3 component,
delta, each area effect, lambda, then the variance Gibbs step.  Proposal
scales adapt during burn-in only, by +-10% per window whenever the windowed
acceptance rate leaves the target band, and are frozen afterwards.  All
randomness comes from one generator per chain, consumed in a fixed order
(one normal and one uniform per proposal), so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .lcar import PrecisionFactor
from .likelihood import EpidemicHistory, LikelihoodEvaluator
from .model import ModelConfig, ModelParams
from .population import AreaGraph, Population

_LOG_2PI = float(np.log(2.0 * np.pi))

DEFAULT_SCALES = {"alpha": 0.1, "alpha1": 0.1, "alpha2": 0.1, "alpha3": 0.1,
                  "delta": 0.2, "phi": 0.2, "lambda": 0.1}


@dataclass(frozen=True)
class PriorSpec:
    """Weakly informative priors: positive half-normals on the regression
    effects and decay, a Beta law on the dependence weight, and a Gamma law
    on the random-effect precision."""

    alpha_variance: float = 100.0
    alpha1_variance: float = 100.0
    alpha2_variance: float = 100.0
    alpha3_variance: float = 100.0
    delta_variance: float = 100.0
    lambda_a: float = 1.0      # Beta(1, 1) = uniform
    lambda_b: float = 1.0
    tau_shape: float = 0.05
    tau_rate: float = 0.05

    def __post_init__(self):
        for name in ("alpha_variance", "alpha1_variance", "alpha2_variance",
                     "alpha3_variance", "delta_variance", "lambda_a",
                     "lambda_b", "tau_shape", "tau_rate"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"prior hyperparameter {name} must be > 0")

    @classmethod
    def for_dependence(cls, dependence: str, **kwargs) -> "PriorSpec":
        """Dependence-matched Beta prior on lambda used in the recovery studies."""
        ab = {"strong": (4.0, 2.0), "moderate": (2.0, 2.0), "weak": (2.0, 4.0)}
        if dependence not in ab:
            raise ValidationError(f"dependence must be one of {sorted(ab)}")
        a, b = ab[dependence]
        return cls(lambda_a=a, lambda_b=b, **kwargs)


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 300_000
    burn_in: int = 50_000
    thin: int = 10
    seed: int = 0
    chains: int = 1
    adapt_window: int = 50
    accept_low: float = 0.20
    accept_high: float = 0.50
    initial_scales: dict = field(default_factory=dict)
    max_init_retries: int = 100

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if not 0 < self.accept_low < self.accept_high < 1:
            raise ValidationError("acceptance band must satisfy 0 < low < high < 1")
        unknown = set(self.initial_scales) - set(DEFAULT_SCALES)
        if unknown:
            raise ValidationError(f"unknown proposal-scale keys: {sorted(unknown)}")

    def scale_for(self, kind: str) -> float:
        return float(self.initial_scales.get(kind, DEFAULT_SCALES[kind]))

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


@dataclass
class ChainOutput:
    columns: list
    draws: np.ndarray           # retained rows x parameters
    log_posterior: np.ndarray   # retained rows
    acceptance: dict            # per block: proposals/accepts/rate, post burn-in
    scales: dict                # final (frozen) proposal scales per block
    manifest: dict

    @property
    def n_retained(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, self.columns.index(name)]


# -- prior log-densities (hand-rolled for the hot loop; scipy checks them in tests)

def half_normal_logpdf(x: float, variance: float) -> float:
    """Positive half-normal with mode 0; ``variance`` is that of the
    underlying normal before truncation."""
    if x < 0:
        return -np.inf
    return math.log(2.0) - 0.5 * (_LOG_2PI + math.log(variance)) - x * x / (2.0 * variance)


def beta_logpdf(x: float, a: float, b: float) -> float:
    if not 0.0 < x < 1.0:
        return -np.inf
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) \
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - math.lgamma(shape) \
        + (shape - 1.0) * math.log(x) - rate * x


def variance_logprior(sigma2: float, shape: float, rate: float) -> float:
    """Prior of the variance implied by the Gamma law on the precision,
    expressed on the variance scale (includes the change-of-variables term)."""
    if sigma2 <= 0:
        return -np.inf
    tau = 1.0 / sigma2
    return gamma_logpdf(tau, shape, rate) + 2.0 * math.log(tau)


def lcar_logdensity(params: ModelParams, pf: PrecisionFactor) -> float:
    """Joint log-density of the area effects at the cached factorization."""
    K = pf.K
    return 0.5 * (pf.logdet - K * math.log(params.sigma2)) \
        - 0.5 * K * _LOG_2PI - pf.quad_form(params.phi) / (2.0 * params.sigma2)


def prior_logdensity(params: ModelParams, priors: PriorSpec,
                     cfg: ModelConfig) -> float:
    """Sum of the independent prior terms, excluding the area-effects prior."""
    total = 0.0
    if cfg.include_alpha:
        total += half_normal_logpdf(params.alpha, priors.alpha_variance)
    for v in params.alpha1:
        total += half_normal_logpdf(v, priors.alpha1_variance)
    for v in params.alpha2:
        total += half_normal_logpdf(v, priors.alpha2_variance)
    for v in params.alpha3:
        total += half_normal_logpdf(v, priors.alpha3_variance)
    total += half_normal_logpdf(params.delta, priors.delta_variance)
    total += beta_logpdf(params.lam, priors.lambda_a, priors.lambda_b)
    total += variance_logprior(params.sigma2, priors.tau_shape, priors.tau_rate)
    return total


def accept_decision(log_ratio: float, u: float) -> bool:
    """Metropolis rule for a symmetric proposal: accept iff u < min(1, e^ratio)."""
    if math.isnan(log_ratio):
        return False
    if log_ratio >= 0.0:
        return True
    if u == 0.0:
        return log_ratio > -np.inf
    return math.log(u) < log_ratio


def gibbs_sigma2(phi: np.ndarray, lam: float, graph: AreaGraph,
                 prior: tuple, rng: np.random.Generator,
                 precision: PrecisionFactor = None) -> float:
    """Conjugate draw of the random-effect variance given the effects.

    The precision tau is Gamma(shape + K/2, rate + q/2) where q is the
    quadratic form of the effects under the unscaled precision matrix; the
    returned value is 1/tau.
    """
    a, b = prior
    pf = precision if precision is not None and precision.lam == lam \
        else PrecisionFactor(graph, lam)
    q = pf.quad_form(np.asarray(phi, dtype=float))
    tau = rng.gamma(shape=a + pf.K / 2.0, scale=1.0 / (b + q / 2.0))
    return 1.0 / tau


# -- parameter blocks ----------------------------------------------------------

@dataclass
class _Block:
    kind: str       # alpha | alpha1 | alpha2 | alpha3 | delta | phi | lambda
    index: int      # component / area index, -1 for scalars
    name: str
    scale: float
    proposals: int = 0
    accepts: int = 0
    window_proposals: int = 0
    window_accepts: int = 0


def _build_blocks(pop: Population, cfg: ModelConfig, mcmc: McmcConfig):
    blocks = []
    if cfg.include_alpha:
        blocks.append(_Block("alpha", -1, "alpha", mcmc.scale_for("alpha")))
    for j in range(pop.n_ind_covariates):
        blocks.append(_Block("alpha1", j, f"alpha1_{j + 1}", mcmc.scale_for("alpha1")))
    for j in range(pop.n_area_covariates):
        blocks.append(_Block("alpha2", j, f"alpha2_{j + 1}", mcmc.scale_for("alpha2")))
    for j in range(pop.n_time_covariates):
        blocks.append(_Block("alpha3", j, f"alpha3_{j + 1}", mcmc.scale_for("alpha3")))
    blocks.append(_Block("delta", -1, "delta", mcmc.scale_for("delta")))
    for k in range(pop.K):
        blocks.append(_Block("phi", k, f"phi_{pop.graph.area_ids[k]}",
                             mcmc.scale_for("phi")))
    blocks.append(_Block("lambda", -1, "lambda", mcmc.scale_for("lambda")))
    return blocks


def draw_columns(pop: Population, cfg: ModelConfig):
    cols = (["alpha"] if cfg.include_alpha else [])
    cols += [f"alpha1_{j + 1}" for j in range(pop.n_ind_covariates)]
    cols += [f"alpha2_{j + 1}" for j in range(pop.n_area_covariates)]
    cols += [f"alpha3_{j + 1}" for j in range(pop.n_time_covariates)]
    cols += ["delta", "lambda", "sigma2"]
    cols += [f"phi_{a}" for a in pop.graph.area_ids]
    return cols


def params_row(params: ModelParams, cfg: ModelConfig):
    row = ([params.alpha] if cfg.include_alpha else [])
    row += list(params.alpha1) + list(params.alpha2) + list(params.alpha3)
    row += [params.delta, params.lam, params.sigma2]
    row += list(params.phi)
    return row


class Chain:
    """One MCMC chain owning its likelihood evaluator and caches."""

    _SUPPORT_POSITIVE = frozenset({"alpha", "alpha1", "alpha2", "alpha3", "delta"})

    def __init__(self, history: EpidemicHistory, pop: Population,
                 priors: PriorSpec, mcmc: McmcConfig, cfg: ModelConfig,
                 rng: np.random.Generator, epsilon: float = 0.0, rho: int = 0,
                 init_params: ModelParams = None,
                 evaluator: LikelihoodEvaluator = None):
        self.pop = pop
        self.priors = priors
        self.mcmc = mcmc
        self.cfg = cfg
        self.rng = rng
        self.graph = pop.graph
        self.epsilon = float(epsilon)
        self.rho = int(rho)
        self.evaluator = evaluator if evaluator is not None \
            else LikelihoodEvaluator(history, pop, cfg)
        self.blocks = _build_blocks(pop, cfg, mcmc)
        self._init(init_params)

    # -- initialization --------------------------------------------------------

    def draw_from_priors(self):
        """One parameter draw from the joint prior; None when degenerate."""
        pr, rng = self.priors, self.rng
        alpha = abs(rng.normal(0.0, math.sqrt(pr.alpha_variance))) \
            if self.cfg.include_alpha else 0.0
        alpha1 = np.abs(rng.normal(0.0, math.sqrt(pr.alpha1_variance),
                                   self.pop.n_ind_covariates))
        alpha2 = np.abs(rng.normal(0.0, math.sqrt(pr.alpha2_variance),
                                   self.pop.n_area_covariates))
        alpha3 = np.abs(rng.normal(0.0, math.sqrt(pr.alpha3_variance),
                                   self.pop.n_time_covariates))
        delta = abs(rng.normal(0.0, math.sqrt(pr.delta_variance)))
        lam = min(float(rng.beta(pr.lambda_a, pr.lambda_b)), np.nextafter(1.0, 0.0))
        tau = rng.gamma(shape=pr.tau_shape, scale=1.0 / pr.tau_rate)
        if not (delta > 0 and tau > 0 and np.isfinite(1.0 / tau)):
            return None
        sigma2 = 1.0 / tau
        phi = PrecisionFactor(self.graph, lam).sample(sigma2, rng)
        if not np.all(np.isfinite(phi)):
            return None
        return ModelParams(alpha=alpha, alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
                           delta=delta, lam=lam, sigma2=sigma2, phi=phi,
                           epsilon=self.epsilon, rho=self.rho)

    def _init(self, init_params):
        if init_params is not None:
            candidates = [init_params.with_(epsilon=self.epsilon, rho=self.rho)]
        else:
            candidates = (self.draw_from_priors()
                          for _ in range(self.mcmc.max_init_retries))
        for params in candidates:
            if params is None:
                continue
            state = self.evaluator.evaluate(params)
            pf = PrecisionFactor(self.graph, params.lam)
            if np.isfinite(self.log_posterior_from(state.loglik, params, pf)):
                self.params = params
                self.state = state
                self.pf = pf
                return
        detail = ""
        if self.evaluator.impossible_events and self.epsilon == 0.0:
            ev = self.evaluator.impossible_events[:5]
            detail = (f"; {len(self.evaluator.impossible_events)} observed infection(s) "
                      f"have no contactable infectious source (first: {ev}), so the "
                      "likelihood is zero for every parameter value under epsilon = 0")
        raise NumericalError(
            "could not find a finite log-posterior initialization"
            f" after {self.mcmc.max_init_retries} attempt(s){detail}")

    # -- posterior pieces --------------------------------------------------------

    def _log_prior_block(self, params: ModelParams, block: _Block) -> float:
        pr = self.priors
        if block.kind == "alpha":
            return half_normal_logpdf(params.alpha, pr.alpha_variance)
        if block.kind == "alpha1":
            return half_normal_logpdf(params.alpha1[block.index], pr.alpha1_variance)
        if block.kind == "alpha2":
            return half_normal_logpdf(params.alpha2[block.index], pr.alpha2_variance)
        if block.kind == "alpha3":
            return half_normal_logpdf(params.alpha3[block.index], pr.alpha3_variance)
        if block.kind == "delta":
            return half_normal_logpdf(params.delta, pr.delta_variance)
        if block.kind == "lambda":
            return beta_logpdf(params.lam, pr.lambda_a, pr.lambda_b)
        raise ValidationError(f"block {block.kind!r} has no individual prior term")

    def log_posterior_from(self, loglik: float, params: ModelParams,
                           pf: PrecisionFactor) -> float:
        prior = prior_logdensity(params, self.priors, self.cfg)
        if not np.isfinite(prior):
            return -np.inf
        return loglik + prior + lcar_logdensity(params, pf)

    # -- single RWMH update -------------------------------------------------------

    def _proposed_params(self, block: _Block, value: float) -> ModelParams:
        p = self.params
        if block.kind == "alpha":
            return p.with_(alpha=value)
        if block.kind == "delta":
            return p.with_(delta=value)
        if block.kind == "lambda":
            return p.with_(lam=value)
        if block.kind == "phi":
            phi = p.phi.copy()
            phi[block.index] = value
            return p.with_(phi=phi)
        vec = getattr(p, block.kind).copy()
        vec[block.index] = value
        return p.with_(**{block.kind: vec})

    def _current_value(self, block: _Block) -> float:
        p = self.params
        if block.kind == "alpha":
            return p.alpha
        if block.kind == "delta":
            return p.delta
        if block.kind == "lambda":
            return p.lam
        if block.kind == "phi":
            return p.phi[block.index]
        return getattr(p, block.kind)[block.index]

    def step(self, block: _Block) -> bool:
        """One symmetric random-walk proposal for the block; True if accepted.

        Exactly one standard normal and one uniform are consumed per call,
        whether or not the proposal is in support.
        """
        z = self.rng.standard_normal()
        u = self.rng.random()
        block.proposals += 1
        block.window_proposals += 1
        value = self._current_value(block) + block.scale * z

        # out-of-support proposals are auto-rejected without likelihood work
        if block.kind in self._SUPPORT_POSITIVE and value <= 0:
            return False
        if block.kind == "lambda" and not 0.0 <= value < 1.0:
            return False

        cand = self._proposed_params(block, value)
        if block.kind == "lambda":
            pf_cand = PrecisionFactor(self.graph, value)
            cand_state = self.evaluator.evaluate(cand, prev=self.state, changed="lambda")
            log_ratio = (lcar_logdensity(cand, pf_cand)
                         - lcar_logdensity(self.params, self.pf)
                         + self._log_prior_block(cand, block)
                         - self._log_prior_block(self.params, block))
        elif block.kind == "phi":
            pf_cand = self.pf
            cand_state = self.evaluator.evaluate(cand, prev=self.state,
                                                 changed="phi", area=block.index)
            log_ratio = (cand_state.loglik - self.state.loglik
                         + lcar_logdensity(cand, self.pf)
                         - lcar_logdensity(self.params, self.pf))
        else:
            pf_cand = self.pf
            cand_state = self.evaluator.evaluate(cand, prev=self.state,
                                                 changed=block.kind)
            log_ratio = (cand_state.loglik - self.state.loglik
                         + self._log_prior_block(cand, block)
                         - self._log_prior_block(self.params, block))

        accept = accept_decision(log_ratio, u)
        if accept:
            self.params = cand
            self.state = cand_state
            self.pf = pf_cand
            block.accepts += 1
            block.window_accepts += 1
        return accept

    def gibbs_variance(self):
        sigma2 = gibbs_sigma2(self.params.phi, self.params.lam, self.graph,
                              (self.priors.tau_shape, self.priors.tau_rate),
                              self.rng, precision=self.pf)
        self.params = self.params.with_(sigma2=sigma2)
        self.state = self.evaluator.evaluate(self.params, prev=self.state,
                                             changed="sigma2")

    def _adapt(self, block: _Block):
        if block.window_proposals < self.mcmc.adapt_window:
            return
        rate = block.window_accepts / block.window_proposals
        if rate > self.mcmc.accept_high:
            block.scale *= 1.1
        elif rate < self.mcmc.accept_low:
            block.scale *= 0.9
        block.window_proposals = 0
        block.window_accepts = 0

    def sweep(self, adapting: bool):
        for block in self.blocks:
            self.step(block)
            if adapting:
                self._adapt(block)
        self.gibbs_variance()

    def log_posterior(self) -> float:
        return self.log_posterior_from(self.state.loglik, self.params, self.pf)

    def run(self) -> ChainOutput:
        mc = self.mcmc
        rows = np.empty((mc.n_retained, len(draw_columns(self.pop, self.cfg))))
        logpost = np.empty(mc.n_retained)
        r = 0
        for it in range(mc.iterations):
            burning = it < mc.burn_in
            if it == mc.burn_in:
                for b in self.blocks:  # freeze adaptation; restart counters
                    b.proposals = b.accepts = 0
                    b.window_proposals = b.window_accepts = 0
            self.sweep(adapting=burning)
            if not burning and (it - mc.burn_in) % mc.thin == 0:
                rows[r] = params_row(self.params, self.cfg)
                logpost[r] = self.log_posterior()
                r += 1
        acceptance = {
            b.name: {"proposals": b.proposals, "accepts": b.accepts,
                     "rate": (b.accepts / b.proposals) if b.proposals else 0.0}
            for b in self.blocks
        }
        scales = {b.name: b.scale for b in self.blocks}
        manifest = {
            "iterations": mc.iterations, "burn_in": mc.burn_in, "thin": mc.thin,
            "retained": int(r), "final_scales": dict(scales),
        }
        return ChainOutput(columns=draw_columns(self.pop, self.cfg),
                           draws=rows[:r], log_posterior=logpost[:r],
                           acceptance=acceptance, scales=scales,
                           manifest=manifest)


def log_posterior(params: ModelParams, history: EpidemicHistory, pop: Population,
                  priors: PriorSpec, cfg: ModelConfig,
                  evaluator: LikelihoodEvaluator = None) -> float:
    """Joint log-posterior up to the normalizing constant; -inf out of support.

    Sum of the epidemic log-likelihood, the independent parameter priors
    (with the variance prior expressed on the variance scale), and the
    area-effects joint log-density.
    """
    prior = prior_logdensity(params, priors, cfg)
    if not np.isfinite(prior):
        return -np.inf
    try:
        pf = PrecisionFactor(pop.graph, params.lam)
    except ValidationError:
        return -np.inf
    if evaluator is None:
        evaluator = LikelihoodEvaluator(history, pop, cfg)
    loglik = evaluator.evaluate(params).loglik
    return loglik + prior + lcar_logdensity(params, pf)


def run_chain(history: EpidemicHistory, pop: Population, priors: PriorSpec,
              mcmc: McmcConfig, cfg: ModelConfig, epsilon: float = 0.0,
              rho: int = 0, init_params: ModelParams = None,
              seed_sequence=None, evaluator: LikelihoodEvaluator = None,
              cache=None) -> ChainOutput:
    """Run one chain end to end and return its retained draws."""
    if seed_sequence is None:
        from .simulate import seed_for
        seed_sequence = seed_for(mcmc.seed, "chain-0")
    rng = np.random.Generator(np.random.PCG64(seed_sequence))
    if evaluator is None:
        evaluator = LikelihoodEvaluator(history, pop, cfg, cache=cache)
    chain = Chain(history, pop, priors, mcmc, cfg, rng, epsilon=epsilon, rho=rho,
                  init_params=init_params, evaluator=evaluator)
    return chain.run()


def run_chains(history: EpidemicHistory, pop: Population, priors: PriorSpec,
               mcmc: McmcConfig, cfg: ModelConfig, epsilon: float = 0.0,
               rho: int = 0, init_params: ModelParams = None, cache=None):
    """Run the configured number of chains with independent named substreams."""
    from .simulate import seed_for

    outputs = []
    evaluator = LikelihoodEvaluator(history, pop, cfg, cache=cache)
    for c in range(mcmc.chains):
        outputs.append(run_chain(history, pop, priors, mcmc, cfg,
                                 epsilon=epsilon, rho=rho, init_params=init_params,
                                 seed_sequence=seed_for(mcmc.seed, f"chain-{c}"),
                                 evaluator=evaluator))
    return outputs


def summarize(chain: ChainOutput, prob: float = 0.95):
    """Per-parameter posterior mean and equal-tailed credible interval.

    Quantiles use the linear-interpolation sample quantile.  Returns a list
    of (name, mean, lower, upper) rows in column order.
    """
    if chain.n_retained == 0:
        raise ValidationError("cannot summarize an empty chain")
    if not 0 < prob < 1:
        raise ValidationError(f"prob must lie in (0, 1), got {prob}")
    lo, hi = (1.0 - prob) / 2.0, 1.0 - (1.0 - prob) / 2.0
    out = []
    for j, name in enumerate(chain.columns):
        col = chain.draws[:, j]
        out.append((name, float(col.mean()),
                    float(np.quantile(col, lo)), float(np.quantile(col, hi))))
    return out
