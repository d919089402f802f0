"""Exact log-likelihood of an observed epidemic under the spatial model.

The likelihood is a product over discrete steps t = 1..T-1 of per-individual
Bernoulli terms: individuals newly infectious at t+1 contribute
log P(i, t) and individuals still susceptible at t+1 contribute
log(1 - P(i, t)) = -(rate + epsilon).  Individuals infectious at t = 1 are
initial conditions and contribute no infection-event term.

Two evaluation paths are provided: ``log_likelihood`` recomputes everything
from the distance cache (the reference), and ``LikelihoodEvaluator`` keeps
flattened per-area term arrays plus kernel sums cached on the decay
parameter so MCMC block updates touch only what changed.  An observed
infection with zero probability (possible when epsilon = 0) yields -inf
rather than an error, so Metropolis proposals that create impossibility are
rejected naturally.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import (SI, SIR, ModelConfig, ModelParams, log_predictor_fixed,
                    log_prob_from_rate, time_predictor)
from .population import DistanceCache, Population, build_distance_cache

NEVER = np.inf


@dataclass(frozen=True)
class EpidemicHistory:
    """Per-individual infection and removal times over steps 1..T.

    Times are floats with +inf meaning "never"; status at any t is derived:
    susceptible while t < infection_time, infectious while
    infection_time <= t < removal_time, removed afterwards.
    """

    infection_time: np.ndarray
    removal_time: np.ndarray
    T: int

    def __post_init__(self):
        inf_t = np.asarray(self.infection_time, dtype=float)
        rem_t = np.asarray(self.removal_time, dtype=float)
        object.__setattr__(self, "infection_time", inf_t)
        object.__setattr__(self, "removal_time", rem_t)
        if inf_t.shape != rem_t.shape:
            raise ValidationError("infection_time and removal_time lengths differ")
        if self.T < 1:
            raise ValidationError(f"horizon T must be >= 1, got {self.T}")
        infected = np.isfinite(inf_t)
        if np.any(inf_t[infected] < 1) or np.any(inf_t[infected] > self.T):
            raise ValidationError("infection times must lie in [1, T]")
        both = infected & np.isfinite(rem_t)
        if np.any(rem_t[both] <= inf_t[both]):
            raise ValidationError("removal before or at infection")
        if np.any(np.isfinite(rem_t) & ~infected):
            raise ValidationError("removal time present for a never-infected individual")

    @property
    def n(self):
        return self.infection_time.size

    def susceptible_mask(self, t):
        return t < self.infection_time

    def infectious_mask(self, t):
        return (self.infection_time <= t) & (t < self.removal_time)

    def removed_mask(self, t):
        return t >= self.removal_time

    def newly_infected_mask(self, t):
        return self.infection_time == t

    def infectious_indices(self, t):
        return np.flatnonzero(self.infectious_mask(t))

    def n_ever_infected(self):
        return int(np.count_nonzero(np.isfinite(self.infection_time)))

    def attack_rate(self):
        return self.n_ever_infected() / self.n if self.n else 0.0

    def check_framework(self, cfg: ModelConfig):
        """Consistency with the compartmental framework; raises on breach."""
        infected = np.isfinite(self.infection_time)
        if cfg.framework == SIR:
            expected = self.infection_time[infected] + cfg.gamma
            if not np.array_equal(self.removal_time[infected], expected):
                raise ValidationError(
                    "SIR history must remove each infected individual exactly "
                    f"gamma={cfg.gamma} steps after infection")
        else:
            if np.any(np.isfinite(self.removal_time)):
                raise ValidationError("SI history must not contain removal times")


def history_from_times(infection_time, cfg: ModelConfig, T: int) -> EpidemicHistory:
    """Build a framework-consistent history from infection times alone."""
    inf_t = np.asarray(infection_time, dtype=float)
    if cfg.framework == SIR:
        rem_t = inf_t + cfg.gamma
    else:
        rem_t = np.full_like(inf_t, NEVER)
    return EpidemicHistory(inf_t, rem_t, T)


# ---------------------------------------------------------------------------
# Reference evaluation
# ---------------------------------------------------------------------------

def log_likelihood(history: EpidemicHistory, pop: Population, params: ModelParams,
                   cfg: ModelConfig, cache: DistanceCache = None) -> float:
    """Log-likelihood of the observed epidemic; -inf for impossible data.

    This is a direct per-step evaluation from the distance cache, kept free
    of the incremental machinery so the two paths can check each other.
    """
    params.check_population(pop)
    history.check_framework(cfg)
    if history.n != pop.n:
        raise ValidationError(f"history covers {history.n} individuals, population has {pop.n}")
    if cache is None or cache.restricted != cfg.restricted:
        cache = build_distance_cache(pop, cfg.restricted)

    lp_fixed = log_predictor_fixed(pop, params)
    eps = params.epsilon
    total = 0.0
    for t in range(1, history.T):
        sus = np.flatnonzero(history.susceptible_mask(t))
        if sus.size == 0:
            continue
        inf_idx = history.infectious_indices(t)
        if inf_idx.size:
            sub = cache.matrix[np.ix_(sus, inf_idx)]
            ksum = (sub ** -params.delta).sum(axis=1)
        else:
            ksum = np.zeros(sus.size)
        lp = lp_fixed[sus]
        if params.alpha3.size:
            lp = lp + time_predictor(pop, params, t)[pop.area_index[sus]]
        with np.errstate(invalid="ignore", over="ignore"):
            rate = np.where(ksum > 0.0, np.exp(lp) * ksum, 0.0) + eps
        new = history.infection_time[sus] == t + 1
        total -= float(rate[~new].sum())
        if np.any(new):
            total += float(log_prob_from_rate(rate[new]).sum())
        if total == -np.inf:
            return -np.inf
    return total


# ---------------------------------------------------------------------------
# Incremental evaluation for the sampler
# ---------------------------------------------------------------------------

@dataclass
class LikelihoodState:
    """One parameter point's cached pieces; produced and consumed by the evaluator."""

    params: ModelParams
    lp_fixed: np.ndarray          # (n,) predictor w/o phi and time part
    tp: np.ndarray | None         # (K, T) lagged environmental predictor
    ksum_ev: np.ndarray           # kernel sums per active event term
    ksum_sv: np.ndarray           # kernel sums per active survival term
    contrib: np.ndarray           # (K,) per-area log-likelihood contributions
    loglik: float


class _TermGroup:
    """Flattened (individual, time) likelihood terms of one kind, sorted by area."""

    def __init__(self, ind, t, area, contact_logd, contact_counts, K):
        order = np.argsort(area, kind="stable")
        self.ind = ind[order]
        self.t = t[order]
        self.area = area[order]
        counts = contact_counts[order]
        # split contact entries per original term, then re-concatenate in area order
        bounds = np.concatenate([[0], np.cumsum(contact_counts)])
        self.logd = np.concatenate(
            [contact_logd[bounds[i]:bounds[i + 1]] for i in order]) \
            if contact_logd.size else contact_logd
        self.starts = np.concatenate([[0], np.cumsum(counts)])[:-1]
        self.ends = np.concatenate([[0], np.cumsum(counts)])[1:]
        # contiguous slice of terms per area
        self.area_term_slice = []
        self.area_contact_slice = []
        for k in range(K):
            lo = int(np.searchsorted(self.area, k, side="left"))
            hi = int(np.searchsorted(self.area, k, side="right"))
            self.area_term_slice.append((lo, hi))
            clo = int(self.starts[lo]) if lo < hi else 0
            chi = int(self.ends[hi - 1]) if lo < hi else 0
            self.area_contact_slice.append((clo, chi))
        self.n_terms = self.ind.size

    def kernel_sums(self, delta):
        """Per-term kernel sums at the given decay; safe for empty segments."""
        vals = np.exp(-delta * self.logd)
        csum = np.concatenate([[0.0], np.cumsum(vals)])
        return csum[self.ends] - csum[self.starts]


class LikelihoodEvaluator:
    """Incremental log-likelihood evaluation with per-area recomputation.

    Precomputes which (individual, time) terms exist, their infectious
    contacts and log-distances, and per-area slices.  ``evaluate`` builds a
    new LikelihoodState either from scratch or by reusing an earlier state's
    caches given which parameter block changed.  One evaluator instance is
    owned by exactly one chain at a time.
    """

    FULL_BLOCKS = frozenset({"alpha", "alpha1", "alpha2", "alpha3", "delta"})
    PRIOR_ONLY_BLOCKS = frozenset({"lambda", "sigma2"})

    def __init__(self, history: EpidemicHistory, pop: Population, cfg: ModelConfig,
                 cache: DistanceCache = None):
        history.check_framework(cfg)
        if history.n != pop.n:
            raise ValidationError(
                f"history covers {history.n} individuals, population has {pop.n}")
        if cache is None or cache.restricted != cfg.restricted:
            cache = build_distance_cache(pop, cfg.restricted)
        self.history = history
        self.pop = pop
        self.cfg = cfg
        self.K = pop.K

        ev_parts = {"ind": [], "t": [], "area": [], "logd": [], "counts": []}
        sv_parts = {"ind": [], "t": [], "area": [], "logd": [], "counts": []}
        inact_sv = np.zeros(pop.K, dtype=np.intp)
        inact_ev = np.zeros(pop.K, dtype=np.intp)
        self.impossible_events = []  # (individual index, t) with no possible contact

        for t in range(1, history.T):
            sus = np.flatnonzero(history.susceptible_mask(t))
            if sus.size == 0:
                continue
            inf_idx = history.infectious_indices(t)
            new = history.infection_time[sus] == t + 1
            if inf_idx.size:
                sub = cache.matrix[np.ix_(sus, inf_idx)]
                finite = np.isfinite(sub)
                counts = finite.sum(axis=1)
            else:
                counts = np.zeros(sus.size, dtype=np.intp)
            for parts, sel in ((ev_parts, new), (sv_parts, ~new)):
                idx = np.flatnonzero(sel & (counts > 0))
                if idx.size:
                    parts["ind"].append(sus[idx])
                    parts["t"].append(np.full(idx.size, t, dtype=np.intp))
                    parts["area"].append(pop.area_index[sus[idx]])
                    parts["counts"].append(counts[idx])
                    rows = sub[idx]
                    parts["logd"].append(np.log(rows[np.isfinite(rows)]))
            dead = np.flatnonzero(counts == 0)
            for i in dead:
                k = pop.area_index[sus[i]]
                if new[i]:
                    inact_ev[k] += 1
                    self.impossible_events.append((int(sus[i]), t))
                else:
                    inact_sv[k] += 1

        def _group(parts):
            if parts["ind"]:
                return _TermGroup(
                    np.concatenate(parts["ind"]), np.concatenate(parts["t"]),
                    np.concatenate(parts["area"]), np.concatenate(parts["logd"]),
                    np.concatenate(parts["counts"]), pop.K)
            return _TermGroup(np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp),
                              np.zeros(0, dtype=np.intp), np.zeros(0),
                              np.zeros(0, dtype=np.intp), pop.K)

        self.events = _group(ev_parts)
        self.survivals = _group(sv_parts)
        self.n_inactive_sv = inact_sv
        self.n_inactive_ev = inact_ev

    # -- per-area contribution -------------------------------------------------

    def _area_contrib(self, k, lp_fixed, tp, phi_k, ksum_ev, ksum_sv, eps):
        # inf * 0 can arise when the predictor overflows while a kernel sum
        # underflows; such absurd parameter points get the impossible value
        c = 0.0
        with np.errstate(invalid="ignore", over="ignore"):
            lo, hi = self.survivals.area_term_slice[k]
            if hi > lo:
                x = lp_fixed[self.survivals.ind[lo:hi]] + phi_k
                if tp is not None:
                    x = x + tp[k, self.survivals.t[lo:hi]]
                c -= float(np.exp(x) @ ksum_sv[lo:hi])
            c -= eps * (hi - lo + self.n_inactive_sv[k])
            lo, hi = self.events.area_term_slice[k]
            if hi > lo:
                x = lp_fixed[self.events.ind[lo:hi]] + phi_k
                if tp is not None:
                    x = x + tp[k, self.events.t[lo:hi]]
                rate = np.exp(x) * ksum_ev[lo:hi] + eps
                c += float(np.sum(log_prob_from_rate(rate)))
            if self.n_inactive_ev[k]:
                c += self.n_inactive_ev[k] * log_prob_from_rate(eps)
        return c if c == c else -np.inf

    def _time_table(self, params):
        if params.alpha3.size == 0:
            return None
        return np.stack([time_predictor(self.pop, params, t)
                         for t in range(1, self.history.T)], axis=1) \
            if self.history.T > 1 else np.zeros((self.K, 0))

    def _lp_fixed(self, params):
        lp = np.full(self.pop.n, params.alpha, dtype=float)
        if params.alpha1.size:
            lp += self.pop.X_ind @ params.alpha1
        if params.alpha2.size:
            lp += (self.pop.X_area @ params.alpha2)[self.pop.area_index]
        return lp

    def _tp_lookup(self, tp):
        # term arrays index t from 1; tp columns are t = 1..T-1
        return None if tp is None else np.concatenate(
            [np.full((self.K, 1), np.nan), tp], axis=1)

    # -- public API --------------------------------------------------------------

    def evaluate(self, params: ModelParams, prev: LikelihoodState = None,
                 changed: str = None, area: int = None) -> LikelihoodState:
        """LikelihoodState at ``params``.

        With ``prev`` and ``changed`` naming the single parameter block that
        differs, only the affected caches are rebuilt: a phi update
        recomputes one area, lambda/sigma2 touch nothing, and alpha-type
        updates reuse the kernel sums.  The result is bit-identical to a
        full evaluation.
        """
        if prev is not None and changed is None:
            raise ValidationError("delta evaluation requires the changed block name")
        if prev is not None and changed not in self.FULL_BLOCKS \
                and changed != "phi" and changed not in self.PRIOR_ONLY_BLOCKS:
            raise ValidationError(f"unknown changed block {changed!r}")

        if prev is not None and changed in self.PRIOR_ONLY_BLOCKS:
            return LikelihoodState(params, prev.lp_fixed, prev.tp, prev.ksum_ev,
                                   prev.ksum_sv, prev.contrib, prev.loglik)

        if prev is not None and changed == "phi":
            if area is None:
                raise ValidationError("phi delta evaluation requires the area index")
            contrib = prev.contrib.copy()
            contrib[area] = self._area_contrib(
                area, prev.lp_fixed, self._tp_lookup(prev.tp), params.phi[area],
                prev.ksum_ev, prev.ksum_sv, params.epsilon)
            return LikelihoodState(params, prev.lp_fixed, prev.tp, prev.ksum_ev,
                                   prev.ksum_sv, contrib, float(np.sum(contrib)))

        # full predictor recompute; kernel sums reused when delta is unchanged
        if prev is not None and changed != "delta" and prev.params.delta == params.delta:
            ksum_ev, ksum_sv = prev.ksum_ev, prev.ksum_sv
        else:
            ksum_ev = self.events.kernel_sums(params.delta)
            ksum_sv = self.survivals.kernel_sums(params.delta)
        lp_fixed = self._lp_fixed(params)
        tp = self._time_table(params)
        tpl = self._tp_lookup(tp)
        contrib = np.array([
            self._area_contrib(k, lp_fixed, tpl, params.phi[k], ksum_ev, ksum_sv,
                               params.epsilon)
            for k in range(self.K)
        ]) if self.K else np.zeros(0)
        return LikelihoodState(params, lp_fixed, tp, ksum_ev, ksum_sv,
                               contrib, float(np.sum(contrib)))

    def log_likelihood(self, params: ModelParams) -> float:
        params.check_population(self.pop)
        return self.evaluate(params).loglik


def log_likelihood_delta(evaluator: LikelihoodEvaluator, prev: LikelihoodState,
                         params: ModelParams, changed: str,
                         area: int = None) -> LikelihoodState:
    """Recompute the log-likelihood after a single-block parameter change."""
    return evaluator.evaluate(params, prev=prev, changed=changed, area=area)


# ---------------------------------------------------------------------------
# Epidemic file I/O: id,infection_time,removal_time (empty = never / absent)
# ---------------------------------------------------------------------------

def read_epidemic(path, report):
    from .population import _read_rows, _parse_float  # shared CSV helpers

    rows = _read_rows(path)
    header_line, header = rows[0]
    if header[:3] != ["id", "infection_time", "removal_time"]:
        report.add(path, header_line, "bad-header",
                   f"expected header id,infection_time,removal_time, got {','.join(header)}")
        return {}
    out = {}
    for lineno, row in rows[1:]:
        if len(row) != 3:
            report.add(path, lineno, "bad-row", f"expected 3 fields, got {len(row)}")
            continue
        ind_id = row[0]
        if ind_id in out:
            report.add(path, lineno, "duplicate-id", f"id {ind_id!r} repeated")
            continue
        inf_t = NEVER if row[1] == "" else _parse_float(row[1], path, lineno, report,
                                                        "infection_time")
        rem_t = NEVER if row[2] == "" else _parse_float(row[2], path, lineno, report,
                                                        "removal_time")
        if np.isfinite(rem_t) and not np.isfinite(inf_t):
            report.add(path, lineno, "removal-without-infection",
                       f"id {ind_id!r} has a removal time but no infection time")
            continue
        if np.isfinite(rem_t) and rem_t <= inf_t:
            report.add(path, lineno, "removal-before-infection",
                       f"id {ind_id!r}: removal_time {rem_t} <= infection_time {inf_t}")
            continue
        out[ind_id] = (inf_t, rem_t)
    return out


def load_epidemic(path, pop: Population, cfg: ModelConfig, T: int,
                  report=None, strict=True) -> EpidemicHistory:
    """Load an epidemic CSV aligned to the population's canonical order.

    Under SI the removal column is ignored (infection is absorbing); under
    SIR a missing removal time is derived as infection + gamma and a present
    one must match it.
    """
    from .population import ValidationReport

    own_report = report is None
    if own_report:
        report = ValidationReport()
    times = read_epidemic(path, report)
    for ind_id in times:
        if ind_id not in pop.id_index:
            report.add(path, 0, "unknown-id", f"id {ind_id!r} not in the population")
    inf_t = np.full(pop.n, NEVER)
    rem_t = np.full(pop.n, NEVER)
    for ind_id, (i_t, r_t) in times.items():
        if ind_id not in pop.id_index:
            continue
        i = pop.id_index[ind_id]
        inf_t[i] = i_t
        if cfg.framework == SIR and np.isfinite(i_t):
            expected = i_t + cfg.gamma
            if np.isfinite(r_t) and r_t != expected:
                report.add(path, 0, "bad-removal",
                           f"id {ind_id!r}: removal {r_t} != infection + gamma = {expected}")
            rem_t[i] = expected
        elif cfg.framework == SI and np.isfinite(r_t):
            report.note(f"{path}: removal times ignored under the SI framework")
    if len(times) != pop.n:
        report.note(f"{path}: {pop.n - len(times)} individuals absent from the file "
                    "are treated as never infected")
    finite = np.isfinite(inf_t)
    if np.any(inf_t[finite] < 1) or np.any(inf_t[finite] > T):
        report.add(path, 0, "time-out-of-range",
                   f"infection times must lie in [1, T={T}]")
    if strict and not report.ok:
        raise ValidationError(str(report))
    history = EpidemicHistory(inf_t, rem_t, T)
    if own_report and not report.ok:
        raise ValidationError(str(report))
    return history


def write_epidemic(path, history: EpidemicHistory, pop: Population):
    def fmt(x):
        return "" if not np.isfinite(x) else repr(int(x)) if float(x).is_integer() else repr(x)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "infection_time", "removal_time"])
        for i, ind in enumerate(pop.individuals):
            writer.writerow([ind.id, fmt(history.infection_time[i]),
                             fmt(history.removal_time[i])])
