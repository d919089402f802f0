import numpy as np
import pytest

from geoilm.errors import ValidationError
from geoilm.likelihood import LikelihoodEvaluator
from geoilm.model import infection_probability
from geoilm.simulate import (SimConfig, resolve_initial_infectives,
                             run_scenario, seed_for, simulate_epidemic)
from geoilm.synthetic import default_initial_infectives, make_synthetic_population

from conftest import build_population, default_params, si_config, sir_config


def rng_for(seed=0):
    return np.random.default_rng(seed)


class TestSimulateEpidemic:
    def test_explosive_predictor_infects_everyone_at_once(self):
        pop = make_synthetic_population(n_individuals=40, cell_km=2.0, seed=1)
        params = default_params(pop, alpha=20.0)
        cfg = si_config(restricted=False)
        h = simulate_epidemic(pop, params, cfg, T=4, initial=np.array([0]),
                              rng=rng_for())
        others = np.delete(np.arange(pop.n), 0)
        assert np.all(h.infection_time[others] == 2.0)

    def test_steep_kernel_no_secondary_infections(self):
        # all pairwise distances > 1 km, kernel effectively zero
        pop = build_population({
            "areas": ["1"], "edges": [],
            "individuals": [("a", 0.0, 0.0, "1", None), ("b", 5.0, 0.0, "1", None),
                            ("c", 10.0, 0.0, "1", None)],
        })
        params = default_params(pop, delta=50.0)
        h = simulate_epidemic(pop, params, si_config(), T=10,
                              initial=np.array([0]), rng=rng_for())
        assert np.all(np.isinf(h.infection_time[1:]))

    def test_monte_carlo_matches_closed_form(self, pair_population):
        # single susceptible at 1 km from one infective
        params = default_params(pair_population, alpha=0.4, delta=3.0)
        cfg = si_config()
        p_exact = infection_probability(pair_population, 1, 1, np.array([0]),
                                        params, cfg)
        n = 2000
        rng = rng_for(3)
        hits = sum(
            simulate_epidemic(pair_population, params, cfg, T=2,
                              initial=np.array([0]), rng=rng).infection_time[1] == 2.0
            for _ in range(n))
        se = np.sqrt(p_exact * (1 - p_exact) / n)
        assert abs(hits / n - p_exact) < 3 * se

    def test_determinism_from_seed(self):
        pop = make_synthetic_population(n_individuals=50, cell_km=8.0, seed=2)
        params = default_params(pop, alpha=0.3, delta=4.0)
        cfg = sir_config(gamma=3)
        h1 = simulate_epidemic(pop, params, cfg, T=10, initial=np.array([0, 5]),
                               rng=rng_for(9))
        h2 = simulate_epidemic(pop, params, cfg, T=10, initial=np.array([0, 5]),
                               rng=rng_for(9))
        assert np.array_equal(h1.infection_time, h2.infection_time)
        assert np.array_equal(h1.removal_time, h2.removal_time)

    def test_sir_state_sequences(self):
        pop = make_synthetic_population(n_individuals=60, cell_km=6.0, seed=4)
        params = default_params(pop, alpha=0.5, delta=3.0)
        gamma = 2
        h = simulate_epidemic(pop, params, sir_config(gamma=gamma), T=12,
                              initial=np.array([0]), rng=rng_for(5))
        infected = np.isfinite(h.infection_time)
        assert np.array_equal(h.removal_time[infected],
                              h.infection_time[infected] + gamma)
        # S..S I(gamma) R..R for each individual, and compartment counts sum to n
        for t in range(1, h.T + 1):
            s = h.susceptible_mask(t)
            i = h.infectious_mask(t)
            r = h.removed_mask(t)
            assert np.all(s.astype(int) + i.astype(int) + r.astype(int) == 1)
        for ind in np.flatnonzero(infected):
            states = ["".join(
                "S" if h.susceptible_mask(t)[ind] else
                "I" if h.infectious_mask(t)[ind] else "R")
                for t in range(1, h.T + 1)]
            seq = "".join(states)
            assert seq.lstrip("S").rstrip("R").strip("I") == ""
            assert seq.count("I") <= gamma

    def test_si_infection_absorbing(self):
        pop = make_synthetic_population(n_individuals=60, cell_km=6.0, seed=4)
        params = default_params(pop, alpha=0.5, delta=3.0)
        h = simulate_epidemic(pop, params, si_config(), T=12,
                              initial=np.array([0]), rng=rng_for(5))
        assert np.all(np.isinf(h.removal_time))
        infected = np.isfinite(h.infection_time)
        for t in range(1, h.T + 1):
            assert not np.any(h.removed_mask(t))
        assert np.all(h.infectious_mask(h.T)[infected])

    def test_restricted_quiet_area_never_infected_without_sparks(self):
        # areas 1-2-3 in a path; infection seeded in area 1 cannot reach
        # area 3 at the first step (only via area 2 later)
        pop = build_population({
            "areas": ["1", "2", "3"], "edges": [("1", "2"), ("2", "3")],
            "individuals": [("a", 0.0, 0.0, "1", None),
                            ("b", 0.2, 0.0, "2", None),
                            ("c", 0.4, 0.0, "3", None)],
        })
        params = default_params(pop, alpha=5.0, delta=1.0)
        cfg = si_config(restricted=True)
        for seed in range(20):
            h = simulate_epidemic(pop, params, cfg, T=2, initial=np.array([0]),
                                  rng=rng_for(seed))
            assert not np.isfinite(h.infection_time[2])  # c untouched at t=2


class TestSimConfig:
    def test_horizon_validated(self, pair_population):
        with pytest.raises(ValidationError):
            SimConfig(params=default_params(pair_population), cfg=si_config(),
                      T=1, initial_infectives=["a"])

    def test_random_directive_validated(self, pair_population):
        with pytest.raises(ValidationError):
            SimConfig(params=default_params(pair_population), cfg=si_config(),
                      T=5, initial_infectives="random:zero")

    def test_resolve_ids(self, path3_population):
        idx = resolve_initial_infectives(path3_population, ["b", "a"], rng_for())
        assert list(idx) == [0, 1]

    def test_resolve_unknown_id(self, path3_population):
        with pytest.raises(ValidationError):
            resolve_initial_infectives(path3_population, ["zz"], rng_for())

    def test_resolve_random(self, path3_population):
        idx = resolve_initial_infectives(path3_population, "random:2", rng_for())
        assert len(idx) == 2

    def test_duplicate_initials_rejected(self, path3_population):
        with pytest.raises(ValidationError):
            resolve_initial_infectives(path3_population, ["a", "a"], rng_for())


@pytest.fixture(scope="module")
def small_pop():
    return make_synthetic_population(n_individuals=80, cell_km=8.0, seed=6)


class TestScenarios:

    def test_s1_nine_initials(self, small_pop):
        inits = default_initial_infectives(small_pop, cell_km=8.0)
        _, hists, _, _ = run_scenario(small_pop, "S1", "strong", 3, seed=5,
                                      initial_infectives=inits)
        assert len(hists) == 3
        for h in hists:
            assert int(np.sum(h.infection_time == 1.0)) == 9

    def test_s3_single_random_initial(self, small_pop):
        _, hists, _, _ = run_scenario(small_pop, "S3", "weak", 2, seed=5)
        for h in hists:
            assert int(np.sum(h.infection_time == 1.0)) == 1

    def test_s1_requires_initials(self, small_pop):
        with pytest.raises(ValidationError, match="9"):
            run_scenario(small_pop, "S1", "strong", 1, seed=5)

    def test_wrong_initial_count_rejected(self, small_pop):
        with pytest.raises(ValidationError, match="9"):
            run_scenario(small_pop, "S2", "strong", 1, seed=5,
                         initial_infectives=["1", "2"])

    def test_seed_reproducibility(self, small_pop):
        inits = default_initial_infectives(small_pop, cell_km=8.0)
        _, h1, p1, _ = run_scenario(small_pop, "S2", "moderate", 2, seed=77,
                                    initial_infectives=inits)
        _, h2, p2, _ = run_scenario(small_pop, "S2", "moderate", 2, seed=77,
                                    initial_infectives=inits)
        for a, b in zip(h1, h2):
            assert np.array_equal(a.infection_time, b.infection_time)
        assert np.array_equal(p1[0], p2[0])

    def test_phi_fixed_per_batch_by_default(self, small_pop):
        inits = default_initial_infectives(small_pop, cell_km=8.0)
        _, _, phis, _ = run_scenario(small_pop, "S1", "strong", 3, seed=5,
                                     initial_infectives=inits)
        assert np.array_equal(phis[0], phis[1])
        assert np.array_equal(phis[1], phis[2])

    def test_phi_redraw_flag(self, small_pop):
        inits = default_initial_infectives(small_pop, cell_km=8.0)
        _, _, phis, _ = run_scenario(small_pop, "S1", "strong", 3, seed=5,
                                     initial_infectives=inits, redraw_phi=True)
        assert not np.array_equal(phis[0], phis[1])

    def test_scenario_parameter_values(self, small_pop):
        inits = default_initial_infectives(small_pop, cell_km=8.0)
        simcfg, _, _, _ = run_scenario(small_pop, "S1", "moderate", 1, seed=5,
                                       initial_infectives=inits)
        assert simcfg.params.alpha == 0.30
        assert simcfg.params.alpha1[0] == 0.40
        assert simcfg.params.delta == 4.0
        assert simcfg.params.sigma2 == pytest.approx(0.36)
        assert simcfg.params.lam == 0.50
        assert simcfg.cfg.gamma == 3
        assert simcfg.T == 20
        assert simcfg.cfg.restricted  # S1 generates region-restricted
        simcfg2, _, _, _ = run_scenario(small_pop, "S2", "weak", 1, seed=5,
                                        initial_infectives=inits)
        assert not simcfg2.cfg.restricted
        assert simcfg2.params.lam == 0.30

    def test_bad_scenario_names(self, small_pop):
        with pytest.raises(ValidationError):
            run_scenario(small_pop, "S9", "strong", 1, seed=5)
        with pytest.raises(ValidationError):
            run_scenario(small_pop, "S1", "extreme", 1, seed=5)


class TestSeedStreams:
    def test_named_streams_differ(self):
        a = np.random.Generator(np.random.PCG64(seed_for(1, "simulate")))
        b = np.random.Generator(np.random.PCG64(seed_for(1, "chain-0")))
        assert a.random() != b.random()

    def test_named_streams_reproducible(self):
        a = np.random.Generator(np.random.PCG64(seed_for(1, "x")))
        b = np.random.Generator(np.random.PCG64(seed_for(1, "x")))
        assert a.random() == b.random()

    def test_simulation_events_consistent_with_likelihood_structure(self):
        # simulated histories must always be likelihood-feasible under the
        # same scope they were generated with
        pop = make_synthetic_population(n_individuals=80, cell_km=8.0, seed=6)
        params = default_params(pop, alpha=0.3, alpha1=np.zeros(1), delta=4.0)
        cfg = sir_config(gamma=3)
        for seed in range(5):
            h = simulate_epidemic(pop, params, cfg, T=12,
                                  initial=np.array([0, 40]), rng=rng_for(seed))
            ev = LikelihoodEvaluator(h, pop, cfg)
            assert ev.impossible_events == []
