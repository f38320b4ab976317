"""Intersection and vacant-set geometry of a pair of window samples.

Builds K (both samples occupy) and V (its complement) from two samples
on the same window, labels connected components, evaluates crossing and
one-arm events, and the coarse-graining seed events on subboxes of side
2 L0. Component labels are deterministic: each component is named by the
smallest row-major index it contains.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from .errors import ConsistencyError, GuardError
from .interlace import InterlacementSample, WindowSpec, vacant_bits
from .potential import GreenTable, capacity


@dataclass
class PairConfiguration:
    window: WindowSpec
    occ1: np.ndarray            # bool grid (side,)*d
    occ2: np.ndarray
    occ_K: np.ndarray           # occ1 & occ2
    occ_V: np.ndarray           # complement of occ_K
    edges1: np.ndarray | None = None   # (m, 2) window-index pairs of sample1
    u1: float = 0.0
    u2: float = 0.0


def build_pair(sample1: InterlacementSample,
               sample2: InterlacementSample) -> PairConfiguration:
    if sample1.window != sample2.window:
        raise GuardError("pair construction needs identical windows")
    o1 = sample1.occupancy_bool()
    o2 = sample2.occupancy_bool()
    k = o1 & o2
    v = ~k
    if (k & v).any() or not (k | v).all():
        raise ConsistencyError("K and V fail to partition the window")
    edges1 = sample1.edge_pairs() if sample1.edges is not None else None
    return PairConfiguration(sample1.window, o1, o2, k, v, edges1,
                             sample1.u, sample2.u)


def _structure(d: int, mode: str) -> np.ndarray:
    if mode == "nearest":
        return ndimage.generate_binary_structure(d, 1)
    if mode == "star":
        return np.ones((3,) * d, dtype=bool)
    raise GuardError(f"unknown adjacency mode {mode!r}")


@dataclass
class ClusterReport:
    mode: str
    labels: np.ndarray      # int64 grid; -1 where empty, else the component's
                            # minimal row-major flat index
    sizes: np.ndarray       # descending
    n_components: int

    def size_of(self, flat_index: int) -> int:
        lab = self.labels.reshape(-1)[flat_index]
        if lab < 0:
            return 0
        return int((self.labels == lab).sum())


def components(occupancy: np.ndarray, mode: str = "nearest") -> ClusterReport:
    """Connected components of a bool grid under the requested adjacency."""
    occ = np.asarray(occupancy, dtype=bool)
    raw, n = ndimage.label(occ, structure=_structure(occ.ndim, mode))
    flat = raw.reshape(-1)
    labels = np.full(flat.shape, -1, dtype=np.int64)
    if n:
        occ_idx = np.flatnonzero(flat)
        # np.unique walks the flat order, so the first hit per raw label
        # is that component's minimal row-major vertex
        raw_occ = flat[occ_idx]
        uniq, first, counts = np.unique(raw_occ, return_index=True,
                                        return_counts=True)
        roots = np.empty(n + 1, dtype=np.int64)
        roots[uniq] = occ_idx[first]
        labels[occ_idx] = roots[raw_occ]
        sizes = np.sort(counts)[::-1].astype(np.int64)
    else:
        sizes = np.zeros(0, dtype=np.int64)
    return ClusterReport(mode, labels.reshape(occ.shape), sizes, int(n))


def components_brute(occupancy: np.ndarray, mode: str = "nearest") -> ClusterReport:
    """Flood-fill reference implementation used by the tests."""
    occ = np.asarray(occupancy, dtype=bool)
    shape = occ.shape
    offsets = []
    for off in np.ndindex(*([3] * occ.ndim)):
        delta = tuple(o - 1 for o in off)
        if all(v == 0 for v in delta):
            continue
        if mode == "nearest" and sum(abs(v) for v in delta) != 1:
            continue
        offsets.append(delta)
    labels = np.full(shape, -1, dtype=np.int64)
    sizes = []
    for start in np.ndindex(*shape):
        if not occ[start] or labels[start] >= 0:
            continue
        root = int(np.ravel_multi_index(start, shape))
        stack = [start]
        labels[start] = root
        count = 0
        while stack:
            cur = stack.pop()
            count += 1
            for delta in offsets:
                nxt = tuple(c + v for c, v in zip(cur, delta))
                if any(not 0 <= c < s for c, s in zip(nxt, shape)):
                    continue
                if occ[nxt] and labels[nxt] < 0:
                    labels[nxt] = root
                    stack.append(nxt)
        sizes.append(count)
    sizes = np.sort(np.array(sizes, dtype=np.int64))[::-1]
    return ClusterReport(mode, labels, sizes, len(sizes))


def two_largest(report: ClusterReport) -> tuple:
    s = report.sizes
    return (int(s[0]) if s.size else 0, int(s[1]) if s.size > 1 else 0)


def _center_slices(grid_shape, N: int, L: int):
    c = tuple(s // 2 for s in grid_shape)
    return tuple(slice(ci - L, ci + L + 1) for ci in c)


def crossing_event(occupancy: np.ndarray, L: int, mode: str = "nearest") -> bool:
    """True iff an occupied path joins B(0,L) to the inner shell of B(0,2L).

    Any such path must pass through B(0,2L), so the search restricts to
    that box.
    """
    occ = np.asarray(occupancy, dtype=bool)
    N = (occ.shape[0] - 1) // 2
    if N < 2 * L or L < 1:
        raise GuardError("crossing event needs window radius >= 2L, L >= 1")
    sub = occ[_center_slices(occ.shape, N, 2 * L)]
    raw, n = ndimage.label(sub, structure=_structure(occ.ndim, mode))
    if not n:
        return False
    side = 4 * L + 1
    coord = np.abs(np.arange(side) - 2 * L)
    rad = coord
    for _ in range(occ.ndim - 1):
        rad = np.maximum(rad[..., None], coord)
    inner = raw[rad <= L]
    shell = raw[rad == 2 * L]
    inner_ids = np.unique(inner[inner > 0])
    if not inner_ids.size:
        return False
    shell_ids = np.unique(shell[shell > 0])
    return bool(np.intersect1d(inner_ids, shell_ids, assume_unique=True).size)


def one_arm_event(occupancy: np.ndarray, L: int, mode: str = "nearest") -> bool:
    """True iff the origin's occupied component reaches the shell of B(0,L)."""
    occ = np.asarray(occupancy, dtype=bool)
    N = (occ.shape[0] - 1) // 2
    if N < L or L < 1:
        raise GuardError("one-arm event needs L <= window radius, L >= 1")
    sub = occ[_center_slices(occ.shape, N, L)]
    center = (L,) * occ.ndim
    if not sub[center]:
        return False
    raw, n = ndimage.label(sub, structure=_structure(occ.ndim, mode))
    side = 2 * L + 1
    coord = np.abs(np.arange(side) - L)
    rad = coord
    for _ in range(occ.ndim - 1):
        rad = np.maximum(rad[..., None], coord)
    cid = raw[center]
    return bool((raw[rad == L] == cid).any())


@dataclass(frozen=True)
class SeedEventParams:
    L0: int
    u1: float
    m_u1: float

    def __post_init__(self):
        if self.L0 < 1:
            raise GuardError("L0 must be >= 1")
        if not 0.0 < self.m_u1 < 1.0:
            raise GuardError("target density must lie in (0,1)")


def seed_params(L0: int, u1: float, greens: GreenTable | None = None) -> SeedEventParams:
    """Target density m(u1) = 1 - exp(-u1 cap({0}))."""
    if greens is None:
        greens = GreenTable(3)
    cap0 = capacity([(0, 0, 0)], greens).capacity
    return SeedEventParams(L0, u1, float(1.0 - np.exp(-u1 * cap0)))


def _box_guard(window: WindowSpec, x, L0: int):
    x = tuple(int(c) for c in x)
    if len(x) != window.d:
        raise GuardError("corner dimension mismatch")
    for c in x:
        if c < -window.N or c + 2 * L0 - 1 > window.N:
            raise GuardError("box x + [0,2L0)^d leaves the window")
    return x


def _grid_index(window: WindowSpec, pts: np.ndarray) -> np.ndarray:
    idx = np.zeros(pts.shape[0], dtype=np.int64)
    for j in range(window.d):
        idx = idx * window.side + (pts[:, j] + window.N)
    return idx


def _edge_components(window: WindowSpec, occ: np.ndarray, edges: np.ndarray,
                     lo, hi) -> tuple:
    """Components of the edge graph induced on the box lo <= coord < hi.

    Returns (vertex flat indices inside the box, their component labels).
    Isolated occupied vertices count as their own components.
    """
    side = window.side
    N = window.N
    flat = np.flatnonzero(occ.reshape(-1))
    coords = np.empty((flat.size, window.d), dtype=np.int64)
    rem = flat
    for j in range(window.d - 1, -1, -1):
        coords[:, j] = rem % side - N
        rem = rem // side
    inbox = np.ones(flat.size, dtype=bool)
    for j in range(window.d):
        inbox &= (coords[:, j] >= lo[j]) & (coords[:, j] < hi[j])
    verts = flat[inbox]
    if not verts.size:
        return verts, np.zeros(0, dtype=np.int64)
    pos = {int(v): i for i, v in enumerate(verts)}
    if edges.size:
        keep = np.ones(edges.shape[0], dtype=bool)
        for col in (0, 1):
            c = edges[:, col]
            cc = np.empty((c.size, window.d), dtype=np.int64)
            rem = c.copy()
            for j in range(window.d - 1, -1, -1):
                cc[:, j] = rem % side - N
                rem = rem // side
            for j in range(window.d):
                keep &= (cc[:, j] >= lo[j]) & (cc[:, j] < hi[j])
        sub = edges[keep]
    else:
        sub = edges.reshape(0, 2)
    n = verts.size
    if sub.size:
        rows = np.array([pos[int(a)] for a in sub[:, 0]], dtype=np.int64)
        cols = np.array([pos[int(b)] for b in sub[:, 1]], dtype=np.int64)
        g = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)),
                       shape=(n, n))
        _, labels = _cc(g, directed=False)
    else:
        labels = np.arange(n, dtype=np.int64)
    return verts, labels


def _vertex_components(window: WindowSpec, occ: np.ndarray, lo, hi) -> tuple:
    """Nearest-neighbor components on the same box, for sensitivity checks."""
    sl = tuple(slice(lo[j] + window.N, hi[j] + window.N) for j in range(window.d))
    sub = occ[sl]
    raw, _ = ndimage.label(sub, structure=_structure(window.d, "nearest"))
    flat_local = np.flatnonzero(sub.reshape(-1))
    labels = raw.reshape(-1)[flat_local]
    coords_local = np.stack(np.unravel_index(flat_local, sub.shape), axis=1)
    coords = coords_local + np.array([lo[j] + window.N for j in range(window.d)])
    verts = np.zeros(coords.shape[0], dtype=np.int64)
    for j in range(window.d):
        verts = verts * window.side + coords[:, j]
    return verts, labels.astype(np.int64)


def _seed_E_impl(window: WindowSpec, occ: np.ndarray, edges, x,
                 params: SeedEventParams, use_edge_graph: bool) -> bool:
    L0 = params.L0
    need = 0.75 * params.m_u1 * L0 ** window.d
    qualifying = []
    for e in np.ndindex(*([2] * window.d)):
        lo = tuple(x[j] + e[j] * L0 for j in range(window.d))
        hi = tuple(c + L0 for c in lo)
        if use_edge_graph:
            verts, labels = _edge_components(window, occ, edges, lo, hi)
        else:
            verts, labels = _vertex_components(window, occ, lo, hi)
        if not verts.size:
            return False
        ids, counts = np.unique(labels, return_counts=True)
        big = ids[counts >= need]
        if not big.size:
            return False
        for b in big:
            qualifying.append(verts[labels == b])
    lo = x
    hi = tuple(c + 2 * L0 for c in x)
    if use_edge_graph:
        verts, labels = _edge_components(window, occ, edges, lo, hi)
    else:
        verts, labels = _vertex_components(window, occ, lo, hi)
    lab_of = dict(zip(verts.tolist(), labels.tolist()))
    target = None
    for grp in qualifying:
        lab = lab_of[int(grp[0])]
        if any(lab_of[int(v)] != lab for v in grp[1:]):
            raise ConsistencyError("subbox component split in the doubled box")
        if target is None:
            target = lab
        elif lab != target:
            return False
    return True


def seed_E(sample: InterlacementSample, x, params: SeedEventParams,
           use_edge_graph: bool = True) -> bool:
    """Dense well-connected box event for the first sample.

    Every subbox x + e L0 + [0,L0)^d must hold a component of the
    induced graph with at least (3/4) m(u1) L0^d vertices, and all
    qualifying components (every subbox, every large-enough component)
    must merge into one component of the graph on the doubled box.
    """
    window = sample.window
    x = _box_guard(window, x, params.L0)
    if use_edge_graph and sample.edges is None:
        raise GuardError("seed event needs a sample with recorded edges")
    occ = sample.occupancy_bool()
    edges = sample.edge_pairs() if use_edge_graph else None
    return _seed_E_impl(window, occ, edges, x, params, use_edge_graph)


def _seed_F_impl(window: WindowSpec, occ: np.ndarray, x,
                 params: SeedEventParams) -> bool:
    L0 = params.L0
    cap_count = 1.25 * params.m_u1 * L0 ** window.d
    for e in np.ndindex(*([2] * window.d)):
        sl = tuple(slice(x[j] + e[j] * L0 + window.N,
                         x[j] + e[j] * L0 + L0 + window.N)
                   for j in range(window.d))
        if int(occ[sl].sum()) > cap_count:
            return False
    return True


def seed_F(sample: InterlacementSample, x, params: SeedEventParams) -> bool:
    """True iff no subbox is overfull: count <= (5/4) m(u1) L0^d each."""
    window = sample.window
    x = _box_guard(window, x, params.L0)
    return _seed_F_impl(window, sample.occupancy_bool(), x, params)


def _seed_G_impl(window: WindowSpec, occ: np.ndarray, x, L0: int) -> bool:
    sl = tuple(slice(x[j] + window.N, x[j] + 2 * L0 + window.N)
               for j in range(window.d))
    return bool(occ[sl].all())


def seed_G_empty(sample2: InterlacementSample, x, L0: int) -> bool:
    """True iff the second sample occupies every site of x + [0,2L0)^d."""
    window = sample2.window
    x = _box_guard(window, x, L0)
    return _seed_G_impl(window, sample2.occupancy_bool(), x, L0)


@dataclass
class GoodVertexField:
    stride: int
    corners: np.ndarray     # (k,)*d grid of lattice corners along axis 0 only
    grid: np.ndarray        # bool (k,)*d; grid[i] = E & F & G at corner x_i
    crossing: bool          # good-vertex nearest path spans axis 0


def good_vertex_field(pair: PairConfiguration,
                      params: SeedEventParams) -> GoodVertexField:
    """E & F & G over the corners x in L0 Z^d whose doubled box fits.

    E and F read the first sample, G the second. The companion scan
    checks for a nearest-neighbor path of good corners joining the
    smallest and largest axis-0 layers of the grid.
    """
    window = pair.window
    if pair.edges1 is None:
        raise GuardError("good-vertex field needs sample1 edges in the pair")
    L0 = params.L0
    lo_mult = -(window.N // L0)
    corners_1d = []
    for m in range(lo_mult, window.N // L0 + 1):
        c = m * L0
        if c >= -window.N and c + 2 * L0 - 1 <= window.N:
            corners_1d.append(c)
    if not corners_1d:
        raise GuardError("window cannot host a single doubled box")
    k = len(corners_1d)
    grid = np.zeros((k,) * window.d, dtype=bool)
    for idx in np.ndindex(*([k] * window.d)):
        x = tuple(corners_1d[i] for i in idx)
        grid[idx] = (_seed_E_impl(window, pair.occ1, pair.edges1, x, params, True)
                     and _seed_F_impl(window, pair.occ1, x, params)
                     and _seed_G_impl(window, pair.occ2, x, L0))
    raw, n = ndimage.label(grid, structure=_structure(window.d, "nearest"))
    crossing = False
    if n:
        left = raw[0]
        right = raw[-1]
        li = np.unique(left[left > 0])
        ri = np.unique(right[right > 0])
        crossing = bool(np.intersect1d(li, ri, assume_unique=True).size)
    return GoodVertexField(L0, np.array(corners_1d, dtype=np.int64),
                           grid, crossing)


def intersection_crossing_witness(pair: PairConfiguration,
                                  field: GoodVertexField) -> bool:
    """When good corners span axis 0, K should carry a path through them.

    Restricts K to the union of the doubled boxes of a spanning good
    component and asks for a nearest-neighbor K component touching both
    the first-layer and last-layer boxes of that component.
    """
    if not field.crossing:
        raise GuardError("witness is only defined when the good field crosses")
    window = pair.window
    L0 = field.stride
    raw, n = ndimage.label(field.grid, structure=_structure(window.d, "nearest"))
    left = np.unique(raw[0][raw[0] > 0])
    right = np.unique(raw[-1][raw[-1] > 0])
    spanning = np.intersect1d(left, right, assume_unique=True)
    k = field.grid.shape[0]
    for comp in spanning:
        mask = np.zeros_like(pair.occ_K)
        first_layer = np.zeros_like(pair.occ_K)
        last_layer = np.zeros_like(pair.occ_K)
        for idx in zip(*np.nonzero(raw == comp)):
            x = tuple(int(field.corners[i]) for i in idx)
            sl = tuple(slice(x[j] + window.N, x[j] + 2 * L0 + window.N)
                       for j in range(window.d))
            mask[sl] = True
            if idx[0] == 0:
                first_layer[sl] = True
            if idx[0] == k - 1:
                last_layer[sl] = True
        sub = pair.occ_K & mask
        rep = components(sub, "nearest")
        lab = rep.labels
        fids = np.unique(lab[(lab >= 0) & first_layer])
        lids = np.unique(lab[(lab >= 0) & last_layer])
        if np.intersect1d(fids, lids).size:
            return True
    return False


def pair_csv_row(seed: int, pair: PairConfiguration, L: int) -> str:
    """One observation row: events on V and K plus size statistics."""
    repK = components(pair.occ_K, "nearest")
    repV = components(pair.occ_V, "nearest")
    k1, k2 = two_largest(repK)
    cross_V = crossing_event(pair.occ_V, L)
    cross_K = crossing_event(pair.occ_K, L)
    return ",".join(str(v) for v in (
        seed, pair.u1, pair.u2, L, int(cross_V), int(cross_K), k1, k2,
        repV.sizes[0] if repV.sizes.size else 0,
        repV.sizes[1] if repV.sizes.size > 1 else 0))


PAIR_CSV_HEADER = "seed,u1,u2,L,crossing_V,crossing_K,K_size1,K_size2,V_size1,V_size2"
