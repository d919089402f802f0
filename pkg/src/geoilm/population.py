"""Spatial data model: individuals, areas, adjacency, and distance precomputations.

Individuals live at planar (x, y) coordinates in kilometres and belong to
exactly one area.  Areas carry covariates and a first-order adjacency
structure (shared-boundary neighbours, supplied as an explicit edge list).
Everything here is immutable after construction and safe for concurrent
reads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import BudgetError, ValidationError

# Coincident coordinates would make the power-law kernel infinite; distances
# are clamped below by this floor (km) unless the caller overrides it.
DEFAULT_DISTANCE_FLOOR = 0.01

DEFAULT_CACHE_BUDGET_BYTES = 1 << 30


@dataclass(frozen=True)
class Individual:
    """One unit between which disease spreads."""

    id: str
    x: float
    y: float
    area_id: str
    covariates: np.ndarray  # individual-level susceptibility covariates

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValidationError(f"individual {self.id!r}: non-finite coordinates")


@dataclass(frozen=True)
class Area:
    """An areal unit carrying covariates and its adjacent-area set."""

    id: str
    covariates: np.ndarray                 # static area-level covariates
    time_covariates: np.ndarray | None     # (T, q), lag applied at evaluation
    neighbor_ids: frozenset


class AreaGraph:
    """First-order adjacency between the K areas.

    Adjacency is symmetric with no self-edges; areas with zero neighbours
    (islands) are legal.
    """

    def __init__(self, area_ids, edges):
        self.area_ids = list(area_ids)
        self.K = len(self.area_ids)
        self.index = {a: k for k, a in enumerate(self.area_ids)}
        if len(self.index) != self.K:
            raise ValidationError("duplicate area ids in graph")
        nbrs = [set() for _ in range(self.K)]
        for a, b in edges:
            if a not in self.index or b not in self.index:
                raise ValidationError(f"adjacency edge ({a!r}, {b!r}) references unknown area")
            if a == b:
                raise ValidationError(f"self-adjacency on area {a!r}")
            ka, kb = self.index[a], self.index[b]
            nbrs[ka].add(kb)
            nbrs[kb].add(ka)
        self.neighbors = [np.array(sorted(s), dtype=np.intp) for s in nbrs]
        self.m = np.array([len(s) for s in self.neighbors], dtype=np.intp)

    def neighbor_ids(self, area_id):
        """Adjacent area ids of ``area_id``."""
        k = self.index[area_id]
        return frozenset(self.area_ids[j] for j in self.neighbors[k])

    def edge_list(self):
        """Sorted unique undirected edges as (id, id) pairs."""
        out = []
        for k in range(self.K):
            for j in self.neighbors[k]:
                if j > k:
                    out.append((self.area_ids[k], self.area_ids[int(j)]))
        return out


def _canonical_sort(ids):
    """Sort ids numerically when every id parses as an integer, else lexically."""
    try:
        return sorted(ids, key=lambda s: int(s))
    except (TypeError, ValueError):
        return sorted(ids, key=str)


class Population:
    """Immutable container of individuals, areas and their adjacency.

    Individuals and areas are kept in a canonical id-sorted order so that
    downstream results do not depend on input file row order.
    """

    def __init__(self, individuals, areas, graph):
        order = _canonical_sort([ind.id for ind in individuals])
        by_id = {ind.id: ind for ind in individuals}
        if len(by_id) != len(individuals):
            raise ValidationError("duplicate individual ids")
        self.individuals = tuple(by_id[i] for i in order)
        self.graph = graph
        area_by_id = {a.id: a for a in areas}
        self.areas = tuple(area_by_id[a] for a in graph.area_ids)
        self.n = len(self.individuals)
        self.K = graph.K
        self.id_index = {ind.id: i for i, ind in enumerate(self.individuals)}

        self.coords = np.array([(ind.x, ind.y) for ind in self.individuals], dtype=float)
        self.coords = self.coords.reshape(self.n, 2)
        try:
            self.area_index = np.array(
                [graph.index[ind.area_id] for ind in self.individuals], dtype=np.intp
            )
        except KeyError as exc:
            raise ValidationError(f"individual references unknown area {exc.args[0]!r}") from None

        p_dims = {ind.covariates.shape for ind in self.individuals}
        if len(p_dims) > 1:
            raise ValidationError(f"inconsistent individual covariate dimensions: {sorted(p_dims)}")
        self.X_ind = (
            np.array([ind.covariates for ind in self.individuals], dtype=float)
            if self.n else np.zeros((0, 0))
        )
        if self.X_ind.ndim == 1:
            self.X_ind = self.X_ind.reshape(self.n, 0)

        r_dims = {a.covariates.shape for a in self.areas}
        if len(r_dims) > 1:
            raise ValidationError(f"inconsistent area covariate dimensions: {sorted(r_dims)}")
        self.X_area = np.array([a.covariates for a in self.areas], dtype=float)
        if self.X_area.ndim == 1:
            self.X_area = self.X_area.reshape(self.K, 0)

        tshapes = {a.time_covariates.shape for a in self.areas if a.time_covariates is not None}
        if len(tshapes) > 1:
            raise ValidationError(f"inconsistent time-covariate shapes across areas: {sorted(tshapes)}")
        if tshapes:
            if any(a.time_covariates is None for a in self.areas):
                raise ValidationError("time covariates supplied for some areas but not all")
            self.X_time = np.stack([a.time_covariates for a in self.areas])  # (K, T, q)
        else:
            self.X_time = None

        self.area_members = [
            np.flatnonzero(self.area_index == k) for k in range(self.K)
        ]

    @property
    def n_ind_covariates(self):
        return self.X_ind.shape[1]

    @property
    def n_area_covariates(self):
        return self.X_area.shape[1]

    @property
    def n_time_covariates(self):
        return 0 if self.X_time is None else self.X_time.shape[2]

    def contact_area_mask(self, k, restricted):
        """Boolean mask over areas whose individuals can infect area ``k``."""
        if not 0 <= k < self.K:
            raise ValidationError(f"area index {k} out of range")
        if not restricted:
            return np.ones(self.K, dtype=bool)
        mask = np.zeros(self.K, dtype=bool)
        mask[k] = True
        mask[self.graph.neighbors[k]] = True
        return mask

    def contact_individual_mask(self, k, restricted):
        """Boolean mask over individuals contactable from area ``k``."""
        return self.contact_area_mask(k, restricted)[self.area_index]


def distance(a: Individual, b: Individual, d_min: float = DEFAULT_DISTANCE_FLOOR) -> float:
    """Euclidean distance in km between two distinct individuals, clamped below by d_min."""
    if a.id == b.id:
        raise ValidationError(f"distance requested between individual {a.id!r} and itself")
    # same expression as the cache's cdist so the two agree bit-for-bit
    d = float(np.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2))
    return max(d, d_min)


def contactable_set(pop: Population, area_id, restricted: bool) -> frozenset:
    """Ids of individuals that can transmit to a susceptible in ``area_id``.

    Restricted transmission covers the area itself plus its adjacent areas;
    the global model covers the whole population.
    """
    k = pop.graph.index[area_id]
    mask = pop.contact_individual_mask(k, restricted)
    return frozenset(pop.individuals[i].id for i in np.flatnonzero(mask))


class DistanceCache:
    """Pairwise distances for every pair that can interact under the chosen scope.

    Entries for non-contactable pairs (and the diagonal) are +inf, which the
    power-law kernel maps to exactly zero, so kernel sums need no masking.
    """

    def __init__(self, pop: Population, restricted: bool,
                 d_min: float = DEFAULT_DISTANCE_FLOOR,
                 max_bytes: int = DEFAULT_CACHE_BUDGET_BYTES):
        n = pop.n
        needed = n * n * 8
        contact = np.zeros((n, n), dtype=bool)
        for k in range(pop.K):
            members = pop.area_members[k]
            if members.size:
                contact[np.ix_(members, pop.contact_individual_mask(k, restricted))] = True
        np.fill_diagonal(contact, False)
        n_pairs = int(np.count_nonzero(np.triu(contact, k=1)))
        if needed > max_bytes:
            raise BudgetError(
                f"distance cache needs {needed} bytes for {n_pairs} contactable pairs, "
                f"budget is {max_bytes}"
            )
        mat = cdist(pop.coords, pop.coords)
        np.maximum(mat, d_min, out=mat)
        mat[~contact] = np.inf
        self.matrix = mat
        self.restricted = restricted
        self.d_min = d_min
        self.n_pairs = n_pairs

    def get(self, i, j):
        """Cached distance between individual indices i and j (inf if non-contactable)."""
        return float(self.matrix[i, j])


def build_distance_cache(pop: Population, restricted: bool,
                         d_min: float = DEFAULT_DISTANCE_FLOOR,
                         max_bytes: int = DEFAULT_CACHE_BUDGET_BYTES) -> DistanceCache:
    return DistanceCache(pop, restricted, d_min=d_min, max_bytes=max_bytes)


# ---------------------------------------------------------------------------
# File ingestion
#
# Individuals file: id,x,y,area_id,cov_1..cov_p
# Areas file:       area_id,acov_1..acov_r
# Time covariates:  area_id,t,tcov_1..tcov_q       (t = 1..T, complete per area)
# Adjacency file:   area_a,area_b                  (undirected edge list)
# ---------------------------------------------------------------------------

@dataclass
class Violation:
    file: str
    line: int
    code: str
    message: str

    def as_dict(self):
        return {"file": self.file, "line": self.line, "code": self.code,
                "message": self.message}


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, file, line, code, message):
        self.violations.append(Violation(file, line, code, message))

    def note(self, message):
        self.notes.append(message)

    def __str__(self):
        lines = [f"{v.file}:{v.line}: [{v.code}] {v.message}" for v in self.violations]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) if lines else "ok"


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [(lineno, [c.strip() for c in row])
                for lineno, row in enumerate(reader, start=1)
                if row and any(c.strip() for c in row)]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    return rows


def _parse_float(text, path, line, report, what):
    try:
        return float(text)
    except ValueError:
        report.add(path, line, "bad-number", f"{what}: cannot parse {text!r} as a number")
        return np.nan


def read_individuals(path, report):
    """Parse the individuals CSV into (id, x, y, area_id, cov-vector) tuples."""
    rows = _read_rows(path)
    header_line, header = rows[0]
    if header[:4] != ["id", "x", "y", "area_id"]:
        report.add(path, header_line, "bad-header",
                   f"expected header id,x,y,area_id,cov_1.., got {','.join(header)}")
        return [], []
    cov_names = header[4:]
    out = []
    seen = {}
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            report.add(path, lineno, "bad-row",
                       f"expected {len(header)} fields, got {len(row)}")
            continue
        ind_id = row[0]
        if ind_id in seen:
            report.add(path, lineno, "duplicate-id",
                       f"individual id {ind_id!r} already defined at line {seen[ind_id]}")
            continue
        seen[ind_id] = lineno
        x = _parse_float(row[1], path, lineno, report, "x")
        y = _parse_float(row[2], path, lineno, report, "y")
        covs = np.array([_parse_float(c, path, lineno, report, "covariate")
                         for c in row[4:]], dtype=float)
        if not (np.isfinite(x) and np.isfinite(y)):
            report.add(path, lineno, "bad-coordinates", "coordinates must be finite")
            continue
        out.append((ind_id, x, y, row[3], covs))
    return out, cov_names


def read_areas(path, report):
    rows = _read_rows(path)
    header_line, header = rows[0]
    if not header or header[0] != "area_id":
        report.add(path, header_line, "bad-header",
                   f"expected header area_id,acov_1.., got {','.join(header)}")
        return {}, []
    cov_names = header[1:]
    out = {}
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            report.add(path, lineno, "bad-row",
                       f"expected {len(header)} fields, got {len(row)}")
            continue
        if row[0] in out:
            report.add(path, lineno, "duplicate-id", f"area id {row[0]!r} repeated")
            continue
        out[row[0]] = np.array([_parse_float(c, path, lineno, report, "area covariate")
                                for c in row[1:]], dtype=float)
    return out, cov_names


def read_time_covariates(path, report):
    """Parse area_id,t,tcov_1.. rows into {area_id: {t: vector}}."""
    rows = _read_rows(path)
    header_line, header = rows[0]
    if header[:2] != ["area_id", "t"]:
        report.add(path, header_line, "bad-header",
                   f"expected header area_id,t,tcov_1.., got {','.join(header)}")
        return {}, []
    cov_names = header[2:]
    out = {}
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            report.add(path, lineno, "bad-row",
                       f"expected {len(header)} fields, got {len(row)}")
            continue
        try:
            t = int(row[1])
        except ValueError:
            report.add(path, lineno, "bad-number", f"t: cannot parse {row[1]!r} as integer")
            continue
        per_area = out.setdefault(row[0], {})
        if t in per_area:
            report.add(path, lineno, "duplicate-time",
                       f"time covariate for area {row[0]!r} at t={t} repeated")
            continue
        per_area[t] = np.array([_parse_float(c, path, lineno, report, "time covariate")
                                for c in row[2:]], dtype=float)
    return out, cov_names


def read_adjacency(path, report):
    """Parse the undirected edge list; duplicates and reversed repeats are deduplicated."""
    rows = _read_rows(path)
    header_line, header = rows[0]
    if header[:2] != ["area_a", "area_b"]:
        report.add(path, header_line, "bad-header",
                   f"expected header area_a,area_b, got {','.join(header)}")
        return []
    edges = set()
    n_rows = 0
    for lineno, row in rows[1:]:
        if len(row) < 2:
            report.add(path, lineno, "bad-row", "expected two fields")
            continue
        a, b = row[0], row[1]
        if a == b:
            report.add(path, lineno, "self-edge", f"area {a!r} adjacent to itself")
            continue
        n_rows += 1
        edges.add((min(a, b), max(a, b)))
    if n_rows != len(edges):
        report.note(f"{path}: {n_rows} edge rows deduplicated/symmetrized to "
                    f"{len(edges)} undirected edges")
    return sorted(edges)


def load_population(individuals_path, adjacency_path, areas_path=None,
                    time_covariates_path=None, report=None, strict=True):
    """Load a Population from CSV files.

    Area set is taken from the areas file when given, otherwise from the
    union of areas seen in the individuals and adjacency files.  With
    ``strict`` the accumulated report is raised as a ValidationError on any
    violation; otherwise the (possibly partial) population and report are
    both returned to the caller via ``report``.
    """
    own_report = report is None
    if own_report:
        report = ValidationReport()

    ind_rows, _ = read_individuals(individuals_path, report)
    edges = read_adjacency(adjacency_path, report)
    area_covs, _ = read_areas(areas_path, report) if areas_path else ({}, [])
    time_covs, _ = (read_time_covariates(time_covariates_path, report)
                    if time_covariates_path else ({}, []))

    if areas_path:
        area_ids = set(area_covs)
    else:
        area_ids = {r[3] for r in ind_rows} | {a for e in edges for a in e}
    for r in ind_rows:
        if r[3] not in area_ids:
            report.add(individuals_path, 0, "unknown-area",
                       f"individual {r[0]!r} references area {r[3]!r} not in the area set")
    kept_edges = []
    for e in edges:
        if e[0] in area_ids and e[1] in area_ids:
            kept_edges.append(e)
        else:
            report.add(adjacency_path, 0, "unknown-area",
                       f"edge {e} references an area outside the area set")
    edges = kept_edges

    # Time covariates must form a complete 1..T grid per area.
    tdims = None
    time_tables = {}
    for aid, per_t in time_covs.items():
        if aid not in area_ids:
            report.add(time_covariates_path, 0, "unknown-area",
                       f"time covariates given for unknown area {aid!r}")
            continue
        ts = sorted(per_t)
        if ts != list(range(1, len(ts) + 1)):
            report.add(time_covariates_path, 0, "incomplete-times",
                       f"area {aid!r}: time covariates must cover t=1..T, got {ts}")
            continue
        tab = np.array([per_t[t] for t in ts], dtype=float)
        if tdims is None:
            tdims = tab.shape
        elif tab.shape != tdims:
            report.add(time_covariates_path, 0, "ragged-times",
                       f"area {aid!r}: time covariate table {tab.shape} != {tdims}")
            continue
        time_tables[aid] = tab
    if time_tables and set(time_tables) != area_ids:
        missing = sorted(area_ids - set(time_tables))
        report.add(time_covariates_path or "", 0, "missing-times",
                   f"areas without time covariates: {missing}")

    if strict and not report.ok:
        raise ValidationError(str(report))

    sorted_areas = _canonical_sort(area_ids)
    graph = AreaGraph(sorted_areas, edges)
    r = len(next(iter(area_covs.values()))) if area_covs else 0
    areas = [
        Area(
            id=aid,
            covariates=area_covs.get(aid, np.zeros(r)),
            time_covariates=time_tables.get(aid),
            neighbor_ids=graph.neighbor_ids(aid),
        )
        for aid in sorted_areas
    ]
    individuals = [Individual(i, x, y, a, c) for i, x, y, a, c in ind_rows
                   if a in area_ids]
    pop = Population(individuals, areas, graph)
    if own_report and not report.ok:
        raise ValidationError(str(report))
    return pop


def write_individuals(path, pop: Population):
    """Inverse of read_individuals, in canonical order."""
    p = pop.n_ind_covariates
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "x", "y", "area_id"] + [f"cov_{j + 1}" for j in range(p)])
        for ind in pop.individuals:
            writer.writerow([ind.id, repr(ind.x), repr(ind.y), ind.area_id]
                            + [repr(float(c)) for c in ind.covariates])


def write_adjacency(path, graph: AreaGraph):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["area_a", "area_b"])
        for a, b in graph.edge_list():
            writer.writerow([a, b])
