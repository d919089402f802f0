"""Command-line entry points: validate, simulate, fit, summarize, riskmap,
kernelcurve, and the synthetic recovery study.

One YAML config file carries the model/prior/sampler/simulation settings
(schema documented in the README); all randomness flows from its single
seed through named substreams.  Every output directory gets a manifest with
the config, the seed and sha256 hashes of the input files, sufficient to
regenerate the outputs bit-exactly.  Logs go to stderr, data to files.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import GeoilmError, NumericalError, ValidationError
from .likelihood import load_epidemic, write_epidemic
from .mcmc import (ChainOutput, McmcConfig, PriorSpec, run_chain, run_chains,
                   summarize)
from .model import ModelConfig, ModelParams
from .population import (Population, ValidationReport, build_distance_cache,
                         load_population)
from .postprocess import kernel_curve, risk_map
from .simulate import (DEPENDENCE_LAMBDA, SimConfig, run_scenario,
                       run_simulation, scenario_config, seed_for)
from .synthetic import default_initial_infectives, make_synthetic_population

log = logging.getLogger("geoilm")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

CONFIG_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Config file
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Parsed configuration file; cross-field consistency enforced here."""

    seed: int = 0
    model: ModelConfig = field(default_factory=lambda: ModelConfig(gamma=3))
    epsilon: float = 0.0
    rho: int = 0
    d_min: float = 0.01
    priors: PriorSpec = field(default_factory=PriorSpec)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    sim: dict = field(default_factory=dict)
    recovery: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: cannot parse config: {exc}") from exc
        return cls.from_dict(data, source=str(path))

    @classmethod
    def from_dict(cls, data: dict, source="<config>") -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError(f"{source}: config must be a mapping")
        version = data.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValidationError(
                f"{source}: unsupported schema_version {version}, "
                f"expected {CONFIG_SCHEMA_VERSION}")
        known = {"schema_version", "seed", "model", "priors", "mcmc", "sim",
                 "recovery"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"{source}: unknown config keys {sorted(unknown)}")

        m = dict(data.get("model") or {})
        framework = m.pop("framework", "SIR")
        model = ModelConfig(
            restricted=bool(m.pop("restricted", True)),
            framework=framework,
            gamma=m.pop("gamma", 3 if framework == "SIR" else None),
            include_alpha=bool(m.pop("include_alpha", True)),
        )
        epsilon = float(m.pop("epsilon", 0.0))
        rho = int(m.pop("rho", 0))
        d_min = float(m.pop("d_min", 0.01))
        if m:
            raise ValidationError(f"{source}: unknown model keys {sorted(m)}")
        if epsilon < 0:
            raise ValidationError(f"{source}: epsilon must be >= 0")

        p = dict(data.get("priors") or {})
        lam_prior = p.pop("lambda_prior", None)
        kwargs = {}
        for key in ("alpha_variance", "alpha1_variance", "alpha2_variance",
                    "alpha3_variance", "delta_variance", "tau_shape", "tau_rate"):
            if key in p:
                kwargs[key] = float(p.pop(key))
        if lam_prior is not None:
            if lam_prior == "uniform":
                kwargs["lambda_a"], kwargs["lambda_b"] = 1.0, 1.0
            elif isinstance(lam_prior, dict) and {"a", "b"} >= set(lam_prior):
                kwargs["lambda_a"] = float(lam_prior.get("a", 1.0))
                kwargs["lambda_b"] = float(lam_prior.get("b", 1.0))
            elif isinstance(lam_prior, str) and lam_prior in DEPENDENCE_LAMBDA:
                ab = {"strong": (4.0, 2.0), "moderate": (2.0, 2.0),
                      "weak": (2.0, 4.0)}[lam_prior]
                kwargs["lambda_a"], kwargs["lambda_b"] = ab
            else:
                raise ValidationError(
                    f"{source}: lambda_prior must be 'uniform', a dependence "
                    f"name, or a mapping with keys a and b")
        if p:
            raise ValidationError(f"{source}: unknown prior keys {sorted(p)}")
        priors = PriorSpec(**kwargs)

        mc = dict(data.get("mcmc") or {})
        mcmc = McmcConfig(
            iterations=int(mc.pop("iterations", 300_000)),
            burn_in=int(mc.pop("burn_in", 50_000)),
            thin=int(mc.pop("thin", 10)),
            seed=int(data.get("seed", 0)),
            chains=int(mc.pop("chains", 1)),
            adapt_window=int(mc.pop("adapt_window", 50)),
            accept_low=float(mc.pop("accept_low", 0.20)),
            accept_high=float(mc.pop("accept_high", 0.50)),
            initial_scales=dict(mc.pop("initial_scales", {}) or {}),
        )
        if mc:
            raise ValidationError(f"{source}: unknown mcmc keys {sorted(mc)}")

        return cls(seed=int(data.get("seed", 0)), model=model, epsilon=epsilon,
                   rho=rho, d_min=d_min, priors=priors, mcmc=mcmc,
                   sim=dict(data.get("sim") or {}),
                   recovery=dict(data.get("recovery") or {}), raw=dict(data))


def _sim_config(cfg: RunConfig, pop: Population) -> SimConfig:
    """Build the simulation request from the config's sim section."""
    s = dict(cfg.sim)
    scenario = s.pop("scenario", None)
    if scenario is not None:
        dependence = s.pop("dependence", "strong")
        initials = s.pop("initial_infectives", None)
        if initials is None and scenario in ("S1", "S2"):
            initials = default_initial_infectives(pop)
        simcfg = scenario_config(scenario, dependence, pop,
                                 n_replicates=int(s.pop("replicates", 10)),
                                 seed=cfg.seed,
                                 initial_infectives=initials,
                                 redraw_phi=bool(s.pop("redraw_phi", False)))
        if s:
            raise ValidationError(f"unknown sim keys {sorted(s)}")
        return simcfg

    pdict = dict(s.pop("params", None) or {})
    params = ModelParams(
        alpha=float(pdict.pop("alpha", 0.0)),
        alpha1=np.asarray(pdict.pop("alpha1", []), dtype=float),
        alpha2=np.asarray(pdict.pop("alpha2", []), dtype=float),
        alpha3=np.asarray(pdict.pop("alpha3", []), dtype=float),
        delta=float(pdict.pop("delta", 1.0)),
        lam=float(pdict.pop("lambda", 0.0)),
        sigma2=float(pdict.pop("sigma2", 1.0)),
        phi=np.asarray(pdict.pop("phi", []), dtype=float),
        epsilon=cfg.epsilon, rho=cfg.rho,
    )
    if pdict:
        raise ValidationError(f"unknown sim params keys {sorted(pdict)}")
    simcfg = SimConfig(
        params=params, cfg=cfg.model, T=int(s.pop("T", 20)),
        initial_infectives=s.pop("initial_infectives", "random:1"),
        n_replicates=int(s.pop("replicates", 1)), seed=cfg.seed,
        redraw_phi=bool(s.pop("redraw_phi", False)),
    )
    if s:
        raise ValidationError(f"unknown sim keys {sorted(s)}")
    return simcfg


# ---------------------------------------------------------------------------
# Manifests and file helpers
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, inputs: dict,
                   extra: dict = None):
    manifest = {
        "tool": "geoilm",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.raw,
        "config_hash": hashlib.sha256(
            json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest(),
        "input_hashes": {name: sha256_file(path) for name, path in inputs.items()
                         if path},
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_draws_csv(path, chain: ChainOutput):
    """Retained draws with repr-formatted floats: byte-identical across runs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(chain.columns)
        for row in chain.draws:
            writer.writerow([repr(float(v)) for v in row])


def read_draws_csv(path) -> ChainOutput:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValidationError(f"{path}: empty draws file")
    columns = rows[0]
    try:
        draws = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: cannot parse draws: {exc}") from exc
    if draws.ndim != 2 or (draws.size and draws.shape[1] != len(columns)):
        raise ValidationError(f"{path}: ragged draws file")
    return ChainOutput(columns=columns, draws=draws,
                       log_posterior=np.zeros(draws.shape[0]),
                       acceptance={}, scales={}, manifest={})


def write_trace_csv(path, chain: ChainOutput):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "log_posterior"])
        for i, v in enumerate(chain.log_posterior):
            writer.writerow([i, repr(float(v))])


def _load_pop(args, report=None, strict=True) -> Population:
    return load_population(args.population, args.adjacency, areas_path=args.areas,
                           time_covariates_path=args.time_covariates,
                           report=report, strict=strict)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    report = ValidationReport()
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    pop = None
    try:
        pop = _load_pop(args, report=report, strict=False)
    except GeoilmError as exc:
        report.add(args.population, 0, "load-failure", str(exc))
    if args.epidemic and pop is not None:
        try:
            T = int(cfg.sim.get("T", 20)) if cfg.sim else 20
            load_epidemic(args.epidemic, pop, cfg.model, T=T,
                          report=report, strict=False)
        except GeoilmError as exc:
            report.add(args.epidemic, 0, "load-failure", str(exc))
    payload = {
        "ok": report.ok,
        "violations": [v.as_dict() for v in report.violations],
        "notes": report.notes,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    pop = _load_pop(args)
    simcfg = _sim_config(cfg, pop)
    cache = build_distance_cache(pop, simcfg.cfg.restricted, d_min=cfg.d_min)
    histories, phis, initials = run_simulation(pop, simcfg, cache=cache)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for r, history in enumerate(histories):
        path = out / f"epidemic_{r:03d}.csv"
        write_epidemic(path, history, pop)
        files.append(path.name)
        log.info("replicate %d: attack rate %.1f%%, written to %s",
                 r, 100 * history.attack_rate(), path)
    write_manifest(out, "simulate", cfg,
                   {"population": args.population, "adjacency": args.adjacency,
                    "areas": args.areas, "time_covariates": args.time_covariates},
                   extra={
                       "replicates": files,
                       "phi": [list(map(float, p)) for p in phis],
                       "initial_infectives": [[pop.individuals[i].id for i in init]
                                              for init in initials],
                       "params": _params_dict(simcfg.params),
                       "T": simcfg.T,
                   })
    return EXIT_OK


def _params_dict(params: ModelParams) -> dict:
    return {
        "alpha": params.alpha, "alpha1": list(params.alpha1),
        "alpha2": list(params.alpha2), "alpha3": list(params.alpha3),
        "delta": params.delta, "lambda": params.lam, "sigma2": params.sigma2,
        "phi": list(params.phi), "epsilon": params.epsilon, "rho": params.rho,
    }


def cmd_fit(args) -> int:
    cfg = RunConfig.from_file(args.config)
    pop = _load_pop(args)
    T = args.horizon if args.horizon else cfg.sim.get("T")
    if T is None:
        raise ValidationError(
            "the observation horizon is required: set sim.T in the config or "
            "pass --horizon")
    history = load_epidemic(args.epidemic, pop, cfg.model, T=int(T))
    cache = build_distance_cache(pop, cfg.model.restricted, d_min=cfg.d_min)
    outputs = run_chains(history, pop, cfg.priors, cfg.mcmc, cfg.model,
                         epsilon=cfg.epsilon, rho=cfg.rho, cache=cache)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chain_files = {}
    for c, chain in enumerate(outputs):
        stem = "draws" if len(outputs) == 1 else f"draws_chain{c}"
        write_draws_csv(out / f"{stem}.csv", chain)
        write_trace_csv(out / f"{stem.replace('draws', 'trace')}.csv", chain)
        chain_files[stem] = {
            "acceptance": chain.acceptance,
            "final_scales": chain.scales,
            "retained": chain.n_retained,
        }
        log.info("chain %d: %d retained draws", c, chain.n_retained)
    with open(out / "acceptance.json", "w") as fh:
        json.dump(chain_files, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "fit", cfg,
                   {"population": args.population, "adjacency": args.adjacency,
                    "areas": args.areas, "time_covariates": args.time_covariates,
                    "epidemic": args.epidemic},
                   extra={"T": T, "chains": len(outputs)})
    return EXIT_OK


def cmd_summarize(args) -> int:
    chain = read_draws_csv(args.draws)
    rows = summarize(chain, prob=args.prob)
    out_fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out_fh, lineterminator="\n")
        writer.writerow(["parameter", "mean", "lower", "upper"])
        for name, mean, lo, hi in rows:
            writer.writerow([name, repr(mean), repr(lo), repr(hi)])
    finally:
        if args.out:
            out_fh.close()
    return EXIT_OK


def cmd_riskmap(args) -> int:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    pop = _load_pop(args)
    chain = read_draws_csv(args.draws)
    t_lo, _, t_hi = args.times.partition("..")
    times = range(int(t_lo), int(t_hi or t_lo) + 1)
    T = max(int(cfg.sim.get("T", 20)), max(times))
    history = load_epidemic(args.epidemic, pop, cfg.model, T=T)
    cache = build_distance_cache(pop, cfg.model.restricted, d_min=cfg.d_min)
    rm = risk_map(chain, history, pop, cfg.model, times, epsilon=cfg.epsilon,
                  rho=cfg.rho, n_samples=args.samples, seed=cfg.seed,
                  plug_in=args.plug_in, cache=cache)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["area_id", "t", "mean_rate"])
        for area_id, t, rate in rm.entries:
            writer.writerow([area_id, t, repr(rate)])
    return EXIT_OK


def cmd_kernelcurve(args) -> int:
    pop = _load_pop(args)
    chain = read_draws_csv(args.draws)
    d_grid = np.linspace(args.dmin, args.dmax, args.points)
    kc = kernel_curve(chain, pop, args.area, d_grid, n_samples=args.samples,
                      seed=args.seed)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["d", "draw_index", "probability"])
        for r, row_idx in enumerate(kc.draw_indices):
            for j, d in enumerate(kc.distances):
                writer.writerow([repr(float(d)), int(row_idx),
                                 repr(float(kc.draw_probs[r, j]))])
        for j, d in enumerate(kc.distances):
            writer.writerow([repr(float(d)), "mean", repr(float(kc.mean_probs[j]))])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Recovery study
# ---------------------------------------------------------------------------

@dataclass
class ReplicateResult:
    replicate: int
    summary: list              # (name, mean, lower, upper)
    acceptance: dict
    attack_rate: float


@dataclass
class RecoveryReport:
    scenario: str
    dependence: str
    truth: dict                # parameter -> true value
    replicates: list           # ReplicateResult
    coverage: dict             # parameter -> covered count

    @property
    def n_replicates(self):
        return len(self.replicates)


def _fit_one(payload):
    """Worker for one replicate fit (runs in a separate process)."""
    (r, history, pop, priors, mcmc, fit_model, epsilon, rho) = payload
    out = run_chain(history, pop, priors, mcmc, fit_model, epsilon=epsilon,
                    rho=rho, seed_sequence=seed_for(mcmc.seed, f"replicate-{r}-chain"))
    return r, summarize(out), out.acceptance, out


def recovery_study(pop: Population, scenario: str, dependence: str,
                   n_replicates: int, seed: int, mcmc: McmcConfig,
                   initial_infectives=None, fit_restricted: bool = True,
                   jobs: int = 1, keep_chains: bool = False):
    """Simulate -> fit -> summarize for each replicate; coverage vs truth.

    Epidemics come from the requested scenario generator; the fit always
    uses the region-restricted model (matching the study design, where the
    mismatch cases S2/S3 probe the restricted fit against globally generated
    data) unless ``fit_restricted`` is False.
    """
    simcfg, histories, phis, _ = run_scenario(
        pop, scenario, dependence, n_replicates, seed,
        initial_infectives=initial_infectives)
    truth = {
        "alpha": simcfg.params.alpha,
        "alpha1_1": float(simcfg.params.alpha1[0]),
        "delta": simcfg.params.delta,
        "lambda": simcfg.params.lam,
        "sigma2": simcfg.params.sigma2,
    }
    if phis:
        truth.update({f"phi_{a}": float(v)
                      for a, v in zip(pop.graph.area_ids, phis[0])})
    fit_model = ModelConfig(restricted=fit_restricted, framework="SIR",
                            gamma=simcfg.cfg.gamma, include_alpha=True)
    priors = PriorSpec.for_dependence(dependence)

    payloads = [(r, histories[r], pop, priors, mcmc, fit_model, 0.0, 0)
                for r in range(n_replicates)]
    results = []
    chains = {}
    if jobs > 1 and n_replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r, summ, acc, out in pool.map(_fit_one, payloads):
                results.append(ReplicateResult(r, summ, acc,
                                               histories[r].attack_rate()))
                if keep_chains:
                    chains[r] = out
    else:
        for payload in payloads:
            r, summ, acc, out = _fit_one(payload)
            results.append(ReplicateResult(r, summ, acc,
                                           histories[r].attack_rate()))
            if keep_chains:
                chains[r] = out
    results.sort(key=lambda x: x.replicate)

    coverage = {}
    for name, value in truth.items():
        n_cov = 0
        for res in results:
            for pname, _, lo, hi in res.summary:
                if pname == name and lo <= value <= hi:
                    n_cov += 1
        coverage[name] = n_cov
    report = RecoveryReport(scenario=scenario, dependence=dependence, truth=truth,
                            replicates=results, coverage=coverage)
    return (report, chains, histories) if keep_chains else report


def cmd_recovery(args) -> int:
    cfg = RunConfig.from_file(args.config)
    rec = dict(cfg.recovery)
    scenario = rec.pop("scenario", "S1")
    dependence = rec.pop("dependence", "strong")
    n_replicates = int(rec.pop("replicates", 10))
    jobs = int(rec.pop("jobs", args.jobs))
    n_individuals = int(rec.pop("n_individuals", 300))
    if rec:
        raise ValidationError(f"unknown recovery keys {sorted(rec)}")

    pop = make_synthetic_population(n_individuals=n_individuals, seed=cfg.seed)
    initials = default_initial_infectives(pop) if scenario in ("S1", "S2") else None
    report = recovery_study(pop, scenario, dependence, n_replicates, cfg.seed,
                            cfg.mcmc, initial_infectives=initials, jobs=jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "coverage.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter", "truth", "covered", "replicates"])
        for name, value in report.truth.items():
            writer.writerow([name, repr(float(value)), report.coverage[name],
                             report.n_replicates])
    with open(out / "estimates.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["replicate", "parameter", "post_mean", "lower", "upper"])
        for res in report.replicates:
            for name, mean, lo, hi in res.summary:
                writer.writerow([res.replicate, name, repr(mean), repr(lo), repr(hi)])
    write_manifest(out, "recovery", cfg, {},
                   extra={"scenario": scenario, "dependence": dependence,
                          "replicates": n_replicates,
                          "coverage": report.coverage,
                          "truth": report.truth})
    for name in ("alpha", "alpha1_1", "delta"):
        log.info("coverage %s: %d/%d", name, report.coverage[name],
                 report.n_replicates)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------

def _add_pop_args(sub, epidemic=False):
    sub.add_argument("--population", required=True,
                     help="individuals CSV: id,x,y,area_id,cov_1..")
    sub.add_argument("--adjacency", required=True,
                     help="undirected area edge list CSV: area_a,area_b")
    sub.add_argument("--areas", default=None,
                     help="optional area covariates CSV: area_id,acov_1..")
    sub.add_argument("--time-covariates", default=None, dest="time_covariates",
                     help="optional CSV: area_id,t,tcov_1..")
    if epidemic:
        sub.add_argument("--epidemic", required=True,
                         help="epidemic CSV: id,infection_time,removal_time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoilm",
        description="Spatial epidemic simulation and Bayesian fitting over "
                    "areal adjacency structures.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("validate", help="validate input files, report violations")
    _add_pop_args(s)
    s.add_argument("--epidemic", default=None)
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None, help="also write the JSON report here")
    s.set_defaults(func=cmd_validate)

    s = subs.add_parser("simulate", help="simulate epidemics from the config")
    _add_pop_args(s)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = subs.add_parser("fit", help="sample the posterior for an observed epidemic")
    _add_pop_args(s, epidemic=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--horizon", type=int, default=None,
                   help="override the epidemic horizon T")
    s.set_defaults(func=cmd_fit)

    s = subs.add_parser("summarize", help="posterior means and credible intervals")
    s.add_argument("--draws", required=True)
    s.add_argument("--prob", type=float, default=0.95)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_summarize)

    s = subs.add_parser("riskmap", help="average infectivity rate per area and time")
    _add_pop_args(s, epidemic=True)
    s.add_argument("--draws", required=True)
    s.add_argument("--times", required=True, help="t1..t2 (inclusive) or a single t")
    s.add_argument("--samples", type=int, default=None,
                   help="posterior draws to use (default: all)")
    s.add_argument("--plug-in", action="store_true", dest="plug_in",
                   help="evaluate at parameter posterior means instead of "
                        "averaging over draws")
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_riskmap)

    s = subs.add_parser("kernelcurve",
                        help="infection probability against distance for one area")
    _add_pop_args(s)
    s.add_argument("--draws", required=True)
    s.add_argument("--area", required=True)
    s.add_argument("--dmin", type=float, default=0.1)
    s.add_argument("--dmax", type=float, default=10.0)
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kernelcurve)

    s = subs.add_parser("recovery",
                        help="synthetic-geography parameter recovery study")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1, help="parallel replicate fits")
    s.set_defaults(func=cmd_recovery)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except ValidationError as exc:
        log.error("validation failure: %s", exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
