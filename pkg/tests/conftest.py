import numpy as np
import pytest

from geoilm.model import ModelConfig, ModelParams
from geoilm.population import Area, AreaGraph, Individual, Population


def build_population(spec, ind_cov_dim=0, area_covs=None, time_covs=None):
    """Population from a compact spec: list of (id, x, y, area_id, covs) plus
    an edge list under key 'edges' and area ids under 'areas'."""
    graph = AreaGraph(spec["areas"], spec.get("edges", []))
    individuals = [
        Individual(i, float(x), float(y), a,
                   np.asarray(c if c is not None else np.zeros(ind_cov_dim),
                              dtype=float))
        for (i, x, y, a, c) in spec["individuals"]
    ]
    area_covs = area_covs or {}
    time_covs = time_covs or {}
    areas = [Area(a, np.asarray(area_covs.get(a, np.zeros(0)), dtype=float),
                  time_covs.get(a), graph.neighbor_ids(a))
             for a in spec["areas"]]
    return Population(individuals, areas, graph)


@pytest.fixture
def path3_population():
    """Three areas in a path 1-2-3, one individual per area at 0, 1, 3 km."""
    return build_population({
        "areas": ["1", "2", "3"],
        "edges": [("1", "2"), ("2", "3")],
        "individuals": [
            ("a", 0.0, 0.0, "1", [1.0]),
            ("b", 1.0, 0.0, "2", [0.0]),
            ("c", 3.0, 0.0, "3", [-1.0]),
        ],
    }, ind_cov_dim=1)


@pytest.fixture
def pair_population():
    """Two individuals 1 km apart in one area, no covariates."""
    return build_population({
        "areas": ["1"],
        "edges": [],
        "individuals": [("a", 0.0, 0.0, "1", []), ("b", 1.0, 0.0, "1", [])],
    })


@pytest.fixture
def toy_population():
    """Three individuals in two adjacent areas (the normalization fixture)."""
    return build_population({
        "areas": ["1", "2"],
        "edges": [("1", "2")],
        "individuals": [
            ("a", 0.0, 0.0, "1", []),
            ("b", 0.8, 0.0, "1", []),
            ("c", 1.5, 0.6, "2", []),
        ],
    })


def default_params(pop, **kwargs):
    base = dict(alpha=0.0, alpha1=np.zeros(pop.n_ind_covariates),
                alpha2=np.zeros(pop.n_area_covariates),
                alpha3=np.zeros(pop.n_time_covariates),
                delta=4.0, lam=0.0, sigma2=1.0, phi=np.zeros(pop.K))
    base.update(kwargs)
    return ModelParams(**base)


def si_config(restricted=True, include_alpha=True):
    return ModelConfig(restricted=restricted, framework="SI", gamma=None,
                       include_alpha=include_alpha)


def sir_config(gamma=1, restricted=True, include_alpha=True):
    return ModelConfig(restricted=restricted, framework="SIR", gamma=gamma,
                       include_alpha=include_alpha)


def random_graph(rng, K):
    """Random undirected graph over K areas; isolated areas permitted."""
    area_ids = [str(k + 1) for k in range(K)]
    edges = []
    for i in range(K):
        for j in range(i + 1, K):
            if rng.random() < 0.4:
                edges.append((area_ids[i], area_ids[j]))
    return AreaGraph(area_ids, edges)


# ---------------------------------------------------------------------------
# Brute-force epidemic enumeration, written from first principles so it can
# serve as an independent oracle for the likelihood.
# ---------------------------------------------------------------------------

def step_probability_direct(pop, params, cfg, infection_time, removal_time, i, t):
    """P(individual i infected during [t, t+1)), computed directly."""
    k = pop.area_index[i]
    if cfg.restricted:
        contact_areas = {k} | set(int(j) for j in pop.graph.neighbors[k])
    else:
        contact_areas = set(range(pop.K))
    rate = 0.0
    for j in range(pop.n):
        if j == i or pop.area_index[j] not in contact_areas:
            continue
        if not (infection_time[j] <= t < removal_time[j]):
            continue
        d = max(np.sqrt((pop.coords[i, 0] - pop.coords[j, 0]) ** 2
                        + (pop.coords[i, 1] - pop.coords[j, 1]) ** 2), 0.01)
        rate += d ** (-params.delta)
    lp = params.alpha + params.phi[k]
    if params.alpha1.size:
        lp += float(pop.X_ind[i] @ params.alpha1)
    if params.alpha2.size:
        lp += float(pop.X_area[k] @ params.alpha2)
    rate *= np.exp(lp)
    return 1.0 - np.exp(-(rate + params.epsilon))


def enumerate_epidemics(pop, params, cfg, T, initial_indices):
    """Every possible epidemic over steps 1..T with its exact probability.

    Yields (infection_time array, probability).  Branches over every subset
    of the susceptibles at each step, so only usable at toy scale.
    """
    import itertools

    gamma = cfg.gamma if cfg.framework == "SIR" else None

    def removal(inf_t):
        return inf_t + gamma if gamma is not None else np.full_like(inf_t, np.inf)

    def recurse(inf_t, t, prob):
        if t >= T or prob == 0.0:
            yield inf_t.copy(), prob
            return
        rem_t = removal(inf_t)
        sus = [i for i in range(pop.n) if inf_t[i] > t]
        if not sus:
            yield inf_t.copy(), prob
            return
        p = [step_probability_direct(pop, params, cfg, inf_t, rem_t, i, t)
             for i in sus]
        for hits in itertools.product([False, True], repeat=len(sus)):
            branch = prob
            nxt = inf_t.copy()
            for i, hit, pi in zip(sus, hits, p):
                branch *= pi if hit else (1.0 - pi)
                if hit:
                    nxt[i] = t + 1
            yield from recurse(nxt, t + 1, branch)

    inf_t = np.full(pop.n, np.inf)
    inf_t[list(initial_indices)] = 1.0
    yield from recurse(inf_t, 1, 1.0)
