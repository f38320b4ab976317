"""Site percolation combinatorics on {0,1}^d at desk dimension.

Bernoulli configurations on a hypercube, large components (atoms),
the ubiquitous component and its uniqueness, the five-cell seed event
on the slab, a 2-d crossing scan over seed outcomes, and a marginal
check that interlacement traces dominate Bernoulli occupation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConsistencyError, GuardError
from .interlace import (WindowSpec, make_window, sample_occupancy_bank,
                        window_indices, bank_bits)
from .potential import GreenTable, box_capacity, escape_probability_hypercube
from .rng import RNGStream
from .stats import ExperimentEstimate, wilson_interval

DMAX = 24          # 2^24 occupancy bools, memory guard
ATOM_DEFAULT = None  # resolved to d*d at call time

HC_CSV_HEADER = "d,p,found,closure,seed"


@dataclass(frozen=True)
class HypercubeConfig:
    d: int
    occupancy: np.ndarray   # bool, length 2^d, vertex index = coordinate bits

    def __post_init__(self):
        if not 2 <= self.d <= DMAX:
            raise GuardError(f"dimension must be in [2, {DMAX}]")
        if self.occupancy.shape != (1 << self.d,):
            raise GuardError("occupancy length must be 2^d")

    @property
    def n(self) -> int:
        return 1 << self.d

    def count(self) -> int:
        return int(self.occupancy.sum())


def bernoulli_hypercube(d: int, p: float, rng: RNGStream) -> HypercubeConfig:
    if not 0.0 <= p <= 1.0:
        raise GuardError("p outside [0,1]")
    gen = rng.generator()
    occ = gen.random(1 << d) < p
    return HypercubeConfig(d, occ)


def _labels(config: HypercubeConfig):
    """Component label per occupied vertex; -1 elsewhere.

    Edges v ~ v^bit collected per axis; isolated occupied vertices are
    their own components.
    """
    occ = config.occupancy
    n = config.n
    vs = np.nonzero(occ)[0]
    if vs.size == 0:
        return np.full(n, -1, dtype=np.int64), 0
    rows = []
    cols = []
    for k in range(config.d):
        nb = vs ^ (1 << k)
        m = occ[nb]
        rows.append(vs[m])
        cols.append(nb[m])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    sub = np.full(n, -1, dtype=np.int64)
    sub[vs] = np.arange(vs.size)
    g = coo_matrix((np.ones(rows.size, dtype=np.int8),
                    (sub[rows], sub[cols])), shape=(vs.size, vs.size))
    ncomp, lab = connected_components(g, directed=False)
    labels = np.full(n, -1, dtype=np.int64)
    labels[vs] = lab
    return labels, ncomp


def atoms(config: HypercubeConfig, threshold: int | None = None) -> list:
    """Components with size strictly above the threshold (default d^2).

    The asymptotic d^100 filter is vacuous at desk d, so the cutoff is
    a parameter; callers report the value used.
    """
    t = (config.d ** 2) if threshold is None else threshold
    if t < 1:
        raise GuardError("threshold must be >= 1")
    labels, ncomp = _labels(config)
    if ncomp == 0:
        return []
    sizes = np.bincount(labels[labels >= 0], minlength=ncomp)
    out = []
    for c in np.nonzero(sizes > t)[0]:
        out.append(np.nonzero(labels == c)[0])
    out.sort(key=lambda a: (-a.size, a[0]))
    return out


def _closure_size(config: HypercubeConfig, comp: np.ndarray) -> int:
    cl = np.zeros(config.n, dtype=bool)
    cl[comp] = True
    for k in range(config.d):
        cl[comp ^ (1 << k)] = True
    return int(cl.sum())


@dataclass
class UbiquityReport:
    found: bool
    d: int
    component: np.ndarray | None = None
    closure: int = 0

    @property
    def threshold(self) -> float:
        return (1.0 - 1.0 / self.d ** 2) * (1 << self.d)


def ubiquitous(config: HypercubeConfig) -> UbiquityReport:
    """The unique component whose closure exceeds (1 - 1/d^2) 2^d.

    Uniqueness is structural for d >= 2: a second qualifying component B
    avoids the first's closure, so |B| < n/d^2 and |closure(B)| <=
    (d+1)|B| < (1 - 1/d^2) n. Two hits mean the labeling is broken.
    """
    labels, ncomp = _labels(config)
    thr = (1.0 - 1.0 / config.d ** 2) * config.n
    hits = []
    for c in range(ncomp):
        comp = np.nonzero(labels == c)[0]
        cl = _closure_size(config, comp)
        if cl > thr:
            hits.append((comp, cl))
    if len(hits) > 1:
        raise ConsistencyError(
            f"{len(hits)} qualifying components; closure counting "
            "guarantees at most one")
    if not hits:
        return UbiquityReport(False, config.d)
    comp, cl = hits[0]
    return UbiquityReport(True, config.d, comp, cl)


def ubiquity_csv_row(d: int, p: float, report: UbiquityReport,
                     seed: int) -> str:
    return f"{d},{p},{int(report.found)},{report.closure},{seed}"


# five-cell geometry: cells tile the slab plane in the first two
# coordinates; cell at plane offset (ox, oy) holds local vertex v at
# global point (ox + v&1, oy + (v>>1)&1, v>>2). Global points are coded
# as gx | gy<<2 | z<<4 with gx = x+1, gy = y+1 in [0,4).
CELL_OFFSETS = (("center", (0, 0)), ("east", (1, 0)), ("west", (-1, 0)),
                ("north", (0, 1)), ("south", (0, -1)))


def _cell_codes(d: int, ox: int, oy: int) -> np.ndarray:
    vs = np.arange(1 << d, dtype=np.int64)
    gx = ox + 1 + (vs & 1)
    gy = oy + 1 + ((vs >> 1) & 1)
    return gx | (gy << 2) | ((vs >> 2) << 4)


@dataclass(frozen=True)
class FiveCellConfig:
    d: int
    global_occ: np.ndarray   # bool over the 2^(d+2) code space

    def cell(self, name: str) -> HypercubeConfig:
        off = dict(CELL_OFFSETS)[name]
        return HypercubeConfig(self.d, self.global_occ[_cell_codes(self.d, *off)])


def sample_five_cell(d: int, p: float, rng: RNGStream) -> FiveCellConfig:
    """One Bernoulli draw over the union region; facet agreement between
    neighboring cells holds by construction."""
    if not 0.0 <= p <= 1.0:
        raise GuardError("p outside [0,1]")
    if not 2 <= d <= DMAX - 2:
        raise GuardError(f"dimension must be in [2, {DMAX - 2}]")
    gen = rng.generator()
    gocc = np.zeros(1 << (d + 2), dtype=bool)
    region = np.zeros(1 << (d + 2), dtype=bool)
    for _, off in CELL_OFFSETS:
        region[_cell_codes(d, *off)] = True
    idx = np.nonzero(region)[0]
    gocc[idx] = gen.random(idx.size) < p
    return FiveCellConfig(d, gocc)


def five_from_cells(cells: dict, d: int) -> FiveCellConfig:
    """Assemble an explicit five-cell layout, checking the shared facets
    agree vertex by vertex."""
    gval = np.full(1 << (d + 2), -1, dtype=np.int8)
    for name, off in CELL_OFFSETS:
        cfg = cells[name]
        if cfg.d != d:
            raise GuardError("cell dimension mismatch")
        codes = _cell_codes(d, *off)
        vals = cfg.occupancy.astype(np.int8)
        seen = gval[codes] >= 0
        if np.any(gval[codes][seen] != vals[seen]):
            raise ConsistencyError(f"facet disagreement at cell {name}")
        gval[codes] = vals
    return FiveCellConfig(d, gval == 1)


def _union_labels(five: FiveCellConfig):
    occ = five.global_occ
    vs = np.nonzero(occ)[0]
    if vs.size == 0:
        return np.full(occ.size, -1, dtype=np.int64)
    gx = vs & 3
    gy = (vs >> 2) & 3
    rows = []
    cols = []
    # plane steps are +-1 on a 2-bit field: arithmetic, not xor
    for step, coordv, hi in ((1, gx, 3), (4, gy, 3)):
        m = coordv < hi
        nb = vs[m] + step
        mm = occ[nb]
        rows.append(vs[m][mm])
        cols.append(nb[mm])
    for k in range(five.d - 2):
        nb = vs ^ (1 << (4 + k))
        m = occ[nb]
        rows.append(vs[m])
        cols.append(nb[m])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    sub = np.full(occ.size, -1, dtype=np.int64)
    sub[vs] = np.arange(vs.size)
    g = coo_matrix((np.ones(rows.size, dtype=np.int8),
                    (sub[rows], sub[cols])), shape=(vs.size, vs.size))
    _, lab = connected_components(g, directed=False)
    labels = np.full(occ.size, -1, dtype=np.int64)
    labels[vs] = lab
    return labels


def five_cell_seed(five: FiveCellConfig) -> bool:
    """All five cells carry a ubiquitous component and the center's is
    connected to each neighbor's inside the union occupancy."""
    reports = {}
    for name, _ in CELL_OFFSETS:
        rep = ubiquitous(five.cell(name))
        if not rep.found:
            return False
        reports[name] = rep
    labels = _union_labels(five)
    reps = {}
    for name, off in CELL_OFFSETS:
        codes = _cell_codes(five.d, *off)
        v = codes[reports[name].component[0]]
        reps[name] = labels[v]
    return all(reps[name] == reps["center"] for name, _ in CELL_OFFSETS)


def slab_scan(cell_field: np.ndarray) -> bool:
    """Left-right crossing of good cells in a 2-d window, nearest
    neighbor adjacency."""
    f = np.asarray(cell_field, dtype=bool)
    if f.ndim != 2 or f.size == 0:
        raise GuardError("cell field must be a nonempty 2-d grid")
    lab, n = ndimage.label(f, structure=ndimage.generate_binary_structure(2, 1))
    if n == 0:
        return False
    left = np.unique(lab[:, 0])
    right = np.unique(lab[:, -1])
    return bool(np.intersect1d(left[left > 0], right[right > 0]).size)


@dataclass
class DominationReport:
    d: int
    S: tuple
    trials: int
    successes: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    bound: float
    p_esc: float
    bias_bound: float
    margin: float
    holds: bool
    seed: int
    stream: tuple
    note: str = ""

    def to_json(self) -> str:
        out = dict(self.__dict__)
        out["S"] = [list(x) for x in self.S]
        out["stream"] = list(self.stream)
        return json.dumps(out, sort_keys=True)


def domination_margin_check(d: int, S, trials: int, rng: RNGStream,
                            window: WindowSpec | None = None,
                            greens: GreenTable | None = None) -> DominationReport:
    """Check P[S in the level-1 trace] >= (1 - e^{-p_esc^2})^|S| - 3 SE - bias.

    The bound is the independent-excursion floor with the escape
    probability computed for the working dimension; truncation can only
    lose occupancy, so the declared bias is subtracted from the bound.
    """
    S = tuple(tuple(int(c) for c in x) for x in S)
    if len(S) > 4:
        raise GuardError("at most 4 vertices")
    if not 3 <= d <= 6:
        raise GuardError("dimension must be in [3, 6]")
    for x in S:
        if len(x) != d or any(c not in (0, 1) for c in x):
            raise GuardError("vertices must lie in {0,1}^d")
    esc = escape_probability_hypercube(d)
    bound = (1.0 - math.exp(-esc.p_esc ** 2)) ** len(S)
    if not S:
        return DominationReport(d, S, trials, trials, 1.0, 0.0, 1.0, 1.0,
                                bound, esc.p_esc, 0.0, 0.0, True,
                                rng.seed, rng.key, "empty set, exact")
    if window is None:
        # unit-box capacity grows quickly with d; scale the truncation
        # tolerance down so the declared bias stays ~0.02 per check
        cap1 = box_capacity(1, d=d, greens=greens).capacity
        window = make_window(1, d=d, delta=min(0.01, 0.02 / cap1),
                             greens=greens)
    occ, _, counts = sample_occupancy_bank(window, 1.0, trials, rng,
                                           greens=greens)
    idx = window_indices(window, np.array(S, dtype=np.int64))
    succ = int(bank_bits(occ, idx).all(axis=1).sum())
    est = succ / trials
    se = math.sqrt(max(est * (1.0 - est), 1.0 / trials) / trials)
    lo, hi = wilson_interval(succ, trials)
    bias = min(1.0, float(counts.mean()) * window.delta)
    margin = est - (bound - 3.0 * se - bias)
    return DominationReport(
        d, S, trials, succ, est, se, float(lo), float(hi), bound,
        esc.p_esc, bias, float(margin), bool(margin >= 0.0),
        rng.seed, rng.key,
        "c1 instantiated as computed escape probability")
