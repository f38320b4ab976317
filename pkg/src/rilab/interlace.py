"""Window sampling of the interlacement occupancy at level u.

The occupied set inside a finite box B(0,N) is generated from its exact
marginal description: a Poisson(u * cap(B(0,N))) number of trajectories,
each started on the inner boundary with the normalized equilibrium
weights. The forward side is a free walk killed on leaving B(0,rkill);
the backward side is conditioned to never re-enter the box, so it puts
no point into the window beyond the start and no window edge, and the
fast occupancy mode skips simulating it. Trajectory-recording mode runs
the conditioned side by rejection anyway so its law is exercised.

Truncating the forward side at rkill can only lose window visits; the
per-trajectory loss probability is bounded by the window spec's delta.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import ConsistencyError, GuardError, RejectionBudgetError
from .potential import (CapacityResult, GreenTable, box_capacity, capacity,
                        green_upper_envelope, kill_radius_for_bias)
from .rng import RNGStream, kernel_state_array
from .stats import ExperimentEstimate

KMIN_DEFAULT = 8
MAX_ITER = 2_000_000_000
BACKWARD_BUDGET = 10_000
MAGIC = b"RIW1"


@dataclass(frozen=True)
class WindowSpec:
    """Sampling window B(0,N) with its kill radius and declared bias.

    delta bounds the probability that a single truncated trajectory
    misses a window visit it would have made. relaxed_bias marks specs
    whose delta exceeds the default budget of 0.01; they are only
    produced on explicit request.
    """
    d: int
    N: int
    rkill: int
    delta: float
    relaxed_bias: bool = False

    def __post_init__(self):
        if self.d < 3:
            raise GuardError("transient dimensions only (d >= 3)")
        if self.N < 1:
            raise GuardError("window radius must be >= 1")
        if self.rkill < max(4 * self.N, self.N + 2):
            raise GuardError("kill radius must be >= max(4N, N+2)")
        if not self.relaxed_bias and not self.delta <= 0.01:
            raise GuardError(f"declared bias {self.delta:.3g} exceeds 0.01; "
                             "pass relaxed_bias to accept it")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def nsites(self) -> int:
        return self.side ** self.d

    @property
    def occ_words(self) -> int:
        return (self.nsites + 63) // 64

    @property
    def edge_words(self) -> int:
        return (self.d * self.nsites + 63) // 64


def make_window(N: int, d: int = 3, delta: float = 0.01,
                relaxed_bias: bool = False,
                greens: GreenTable | None = None) -> WindowSpec:
    """Size the kill radius for the requested per-trajectory bias.

    With relaxed_bias the kill radius is fixed at 4N and the true
    (larger) bias of that truncation is declared instead.
    """
    if greens is None:
        greens = GreenTable(d)
    capv = box_capacity(N, d, greens).capacity
    if relaxed_bias:
        rkill = max(4 * N, N + 2)
        true_delta = capv * green_upper_envelope(rkill - N, d)
        return WindowSpec(d, N, rkill, true_delta, relaxed_bias=True)
    rkill = kill_radius_for_bias(capv, N, delta, d)
    true_delta = capv * green_upper_envelope(rkill - N, d)
    return WindowSpec(d, N, rkill, true_delta)


@dataclass
class TrajectoryRecord:
    start: tuple
    forward_visits: np.ndarray   # first visits inside the window, (k, d)
    backward_visits: np.ndarray  # (1, d): the start; the side avoids the box
    backward_proposals: int


@dataclass
class InterlacementSample:
    window: WindowSpec
    u: float
    n_traj: int
    occupancy: np.ndarray              # uint64 bitset, row-major window index
    edges: np.ndarray | None = None    # uint64 bitset, d * nsites bits
    trajectories: list | None = None
    seed: int = 0
    stream: tuple = ()

    def occupancy_bool(self) -> np.ndarray:
        """Window occupancy as a bool array of shape (side,)*d."""
        w = self.window
        bits = np.unpackbits(self.occupancy.view(np.uint8), bitorder="little")
        return bits[:w.nsites].astype(bool).reshape((w.side,) * w.d)

    def points(self) -> np.ndarray:
        """Occupied sites as an (n, d) int array of lattice coordinates."""
        w = self.window
        flat = np.flatnonzero(self.occupancy_bool().reshape(-1))
        out = np.empty((flat.size, w.d), dtype=np.int64)
        rem = flat
        for j in range(w.d - 1, -1, -1):
            out[:, j] = rem % w.side - w.N
            rem = rem // w.side
        return out

    def count(self) -> int:
        return int(sum(int(w).bit_count() for w in self.occupancy))

    def edge_pairs(self) -> np.ndarray:
        """Traversed window edges as index pairs (m, 2), both endpoints inside."""
        if self.edges is None:
            raise GuardError("sample carries no edge record")
        w = self.window
        bits = np.unpackbits(self.edges.view(np.uint8), bitorder="little")
        eidx = np.flatnonzero(bits[:w.d * w.nsites])
        widx = eidx // w.d
        axis = eidx % w.d
        strides = np.array([w.side ** (w.d - 1 - j) for j in range(w.d)],
                           dtype=np.int64)
        return np.stack([widx, widx + strides[axis]], axis=1)


_EQ_CACHE: dict = {}


def window_equilibrium(window: WindowSpec,
                       greens: GreenTable | None = None) -> CapacityResult:
    key = (window.d, window.N)
    res = _EQ_CACHE.get(key)
    if res is None:
        if greens is None:
            greens = GreenTable(window.d)
        res = box_capacity(window.N, window.d, greens)
        _EQ_CACHE[key] = res
    return res


def _draw_starts(gen, boundary: np.ndarray, prob: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return np.empty((0, boundary.shape[1]), dtype=np.int64)
    idx = gen.choice(boundary.shape[0], size=n, p=prob)
    return boundary[idx]


def sample_interlacement(window: WindowSpec, u: float, rng: RNGStream,
                         mode: str = "occupancy", want_edges: bool = False,
                         greens: GreenTable | None = None) -> InterlacementSample:
    """Draw one window sample of the occupied set at level u.

    mode "occupancy" records the occupancy bitset (and traversed edges
    when want_edges); mode "trajectories" additionally keeps per-path
    first-visit lists and runs the box-avoiding side by rejection.
    """
    if u < 0:
        raise GuardError("u must be >= 0")
    if mode not in ("occupancy", "trajectories"):
        raise GuardError(f"unknown mode {mode!r}")
    if window.d != 3 and (want_edges or mode == "trajectories"):
        raise GuardError("edge and trajectory recording are d=3 only")
    eq = window_equilibrium(window, greens)
    boundary = np.asarray(eq.points, dtype=np.int64)
    prob = eq.weights / eq.capacity
    gen = rng.child(0).generator()
    ntraj = int(gen.poisson(u * eq.capacity))
    starts = _draw_starts(gen, boundary, prob, ntraj)
    occ = np.zeros(window.occ_words, dtype=np.uint64)
    edges = np.zeros(window.edge_words, dtype=np.uint64) if want_edges else None
    trajs = [] if mode == "trajectories" else None
    state, inc = rng.child(1).kernel_state()
    if mode == "occupancy":
        offs = np.array([0, ntraj], dtype=np.int64)
        occ_mat = occ.reshape(1, -1)
        if window.d == 3:
            edge_mat = edges.reshape(1, -1) if want_edges else \
                np.zeros((1, 1), dtype=np.uint64)
            bad = _k._occupancy_bank3(
                np.array([state], dtype=np.uint64), np.array([inc], dtype=np.uint64),
                starts, offs, window.N, window.rkill, KMIN_DEFAULT,
                occ_mat, edge_mat, 1 if want_edges else 0, MAX_ITER)
        else:
            bad = _k._occupancy_bank_gen(
                window.d, np.array([state], dtype=np.uint64),
                np.array([inc], dtype=np.uint64),
                starts, offs, window.N, window.rkill, KMIN_DEFAULT,
                occ_mat, MAX_ITER)
        if bad >= 0:
            raise ConsistencyError("trajectory exceeded the iteration budget")
        return InterlacementSample(window, u, ntraj, occ, edges,
                                   seed=rng.seed, stream=rng.key)
    dummy_edges = np.zeros(1, dtype=np.uint64)
    visits = np.empty((window.nsites, 3), dtype=np.int64)
    for t in range(ntraj):
        x, y, z = (int(c) for c in starts[t])
        state, nvis, status = _k._flight3(
            state, inc, np.int64(x), np.int64(y), np.int64(z),
            window.N, window.rkill, KMIN_DEFAULT, occ,
            edges if want_edges else dummy_edges, 1 if want_edges else 0,
            1, visits, 0, MAX_ITER)
        state = np.uint64(state)
        if status != 0:
            raise ConsistencyError("forward side exceeded a buffer or budget")
        state, nprop, bstatus = _k._backward_accept3(
            state, inc, np.int64(x), np.int64(y), np.int64(z),
            window.N, window.rkill, KMIN_DEFAULT, BACKWARD_BUDGET, MAX_ITER)
        state = np.uint64(state)
        if bstatus == 3:
            raise RejectionBudgetError(
                f"box-avoiding side not accepted in {BACKWARD_BUDGET} proposals")
        if bstatus != 0:
            raise ConsistencyError("box-avoiding side exceeded the iteration budget")
        trajs.append(TrajectoryRecord(
            start=(x, y, z),
            forward_visits=visits[:nvis].copy(),
            backward_visits=np.array([[x, y, z]], dtype=np.int64),
            backward_proposals=int(nprop)))
    return InterlacementSample(window, u, ntraj, occ, edges, trajs,
                               seed=rng.seed, stream=rng.key)


def sample_occupancy_bank(window: WindowSpec, u: float, nsamples: int,
                          rng: RNGStream, want_edges: bool = False,
                          greens: GreenTable | None = None):
    """Occupancy bitsets for nsamples independent samples, one row each.

    Per-sample draws come from rng.child(0, i) (trajectory count and
    starts) and rng.child(1) spawn i (walk bytes), so row i is a pure
    function of the stream and i regardless of batching.
    """
    if u < 0:
        raise GuardError("u must be >= 0")
    if nsamples <= 0:
        raise GuardError("nsamples must be positive")
    if window.d != 3 and want_edges:
        raise GuardError("edge recording is d=3 only")
    eq = window_equilibrium(window, greens)
    boundary = np.asarray(eq.points, dtype=np.int64)
    prob = eq.weights / eq.capacity
    lam = u * eq.capacity
    counts = np.empty(nsamples, dtype=np.int64)
    chunks = []
    for i in range(nsamples):
        gen = rng.child(0, i).generator()
        n = int(gen.poisson(lam))
        counts[i] = n
        chunks.append(_draw_starts(gen, boundary, prob, n))
    starts = np.concatenate(chunks, axis=0) if chunks else \
        np.empty((0, window.d), dtype=np.int64)
    offs = np.zeros(nsamples + 1, dtype=np.int64)
    np.cumsum(counts, out=offs[1:])
    states, incs = kernel_state_array(rng.child(1), nsamples)
    occ_mat = np.zeros((nsamples, window.occ_words), dtype=np.uint64)
    if window.d == 3:
        edge_mat = np.zeros((nsamples, window.edge_words), dtype=np.uint64) \
            if want_edges else np.zeros((1, 1), dtype=np.uint64)
        bad = _k._occupancy_bank3(states, incs, starts, offs,
                                  window.N, window.rkill, KMIN_DEFAULT,
                                  occ_mat, edge_mat, 1 if want_edges else 0,
                                  MAX_ITER)
    else:
        edge_mat = None
        bad = _k._occupancy_bank_gen(window.d, states, incs, starts, offs,
                                     window.N, window.rkill, KMIN_DEFAULT,
                                     occ_mat, MAX_ITER)
    if bad >= 0:
        raise ConsistencyError(f"sample {bad} exceeded the iteration budget")
    return occ_mat, (edge_mat if want_edges else None), counts


def window_indices(window: WindowSpec, points) -> np.ndarray:
    """Row-major window indices of the given lattice points."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, window.d)
    if np.abs(pts).max(initial=0) > window.N:
        raise GuardError("point outside the window")
    idx = np.zeros(pts.shape[0], dtype=np.int64)
    for j in range(window.d):
        idx = idx * window.side + (pts[:, j] + window.N)
    return idx


def bank_bits(occ_mat: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """bool (nsamples, npoints): occupancy bit per sample and queried site."""
    words = indices // 64
    shifts = np.uint64(1) << (indices % 64).astype(np.uint64)
    return (occ_mat[:, words] & shifts[None, :]) != 0


def vacuum_probability_test(A, u: float, nsamples: int, rng: RNGStream,
                            window: WindowSpec | None = None,
                            greens: GreenTable | None = None) -> ExperimentEstimate:
    """Empirical P[occupied set misses A] against exp(-u cap(A)).

    The window must extend at least 2 rad(A) + 2 so the equilibrium
    description of the window box, not A itself, drives the sampling.
    Truncation only loses visits, so the bias is one-sided upward; a
    lost visit flips the event only if the walk would have hit A, so
    the declared bound is u cap(B(0,N)) cap(A) Ghat(rkill - rad(A)).
    """
    pts = np.asarray(A, dtype=np.int64).reshape(-1, 3)
    rad = int(np.abs(pts).max())
    if greens is None:
        greens = GreenTable(3)
    if window is None:
        window = make_window(max(2 * rad + 2, 2), greens=greens)
    if window.N < 2 * rad + 2:
        raise GuardError("window radius below 2 rad(A) + 2")
    occ_mat, _, counts = sample_occupancy_bank(window, u, nsamples, rng,
                                               greens=greens)
    hit = bank_bits(occ_mat, window_indices(window, pts)).any(axis=1)
    succ = int(nsamples - hit.sum())
    cap_A = capacity([tuple(p) for p in pts], greens).capacity
    expected = float(np.exp(-u * cap_A))
    eq = window_equilibrium(window, greens)
    bias = u * eq.capacity * cap_A * green_upper_envelope(window.rkill - rad, 3)
    est = ExperimentEstimate.from_counts(
        "vacuum_probability",
        {"A_size": pts.shape[0], "rad_A": rad, "u": u, "N": window.N},
        succ, nsamples,
        bias_bound=bias,
        seed=rng.seed, stream=rng.key,
        notes="upward one-sided truncation bias; expected = exp(-u cap(A))")
    est.extra["expected"] = expected
    est.extra["cap_A"] = cap_A
    est.extra["mean_trajectories"] = float(counts.mean())
    return est


def intersection_bits(occ1: np.ndarray, occ2: np.ndarray) -> np.ndarray:
    return occ1 & occ2


def vacant_bits(window: WindowSpec, occ1: np.ndarray, occ2: np.ndarray) -> np.ndarray:
    """Bitset of the joint vacant set: complement of the intersection.

    A site is vacant when at least one of the two samples misses it.
    """
    v = ~(occ1 & occ2)
    # mask the tail bits beyond nsites
    tail = window.occ_words * 64 - window.nsites
    if tail:
        v[-1] &= np.uint64((1 << (64 - tail)) - 1)
    return v


def merge_occupancy(samples) -> np.ndarray:
    """Union occupancy bitset across samples on one window.

    Superposition diagnostic: independent levels u1, u2 merged this way
    follow the law at level u1 + u2.
    """
    samples = list(samples)
    if not samples:
        return np.zeros(0, dtype=np.uint64)
    w = samples[0].window
    out = samples[0].occupancy.copy()
    for s in samples[1:]:
        if s.window != w:
            raise GuardError("samples on different windows")
        out |= s.occupancy
    return out


def save_sample(path: str, sample: InterlacementSample) -> dict:
    """Binary container: magic, header length, JSON header, bit payloads.

    Written atomically (temp file + rename). Returns the header dict.
    """
    w = sample.window
    header = {
        "format": 1,
        "kind": "interlacement_sample",
        "d": w.d, "N": w.N, "rkill": w.rkill, "delta": w.delta,
        "relaxed_bias": w.relaxed_bias,
        "u": sample.u, "n_traj": sample.n_traj,
        "seed": sample.seed, "stream": list(sample.stream),
        "occ_words": int(sample.occupancy.size),
        "edge_words": int(sample.edges.size) if sample.edges is not None else 0,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = sample.occupancy.astype("<u8").tobytes()
    if sample.edges is not None:
        payload += sample.edges.astype("<u8").tobytes()
    data = MAGIC + np.uint32(len(blob)).astype("<u4").tobytes() + blob + payload
    dirn = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirn, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return header


def load_sample(path: str) -> InterlacementSample:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise GuardError("not a sample container (bad magic)")
    hlen = int(np.frombuffer(data[4:8], dtype="<u4")[0])
    header = json.loads(data[8:8 + hlen].decode())
    if header.get("format") != 1:
        raise GuardError(f"unsupported container format {header.get('format')}")
    w = WindowSpec(header["d"], header["N"], header["rkill"], header["delta"],
                   header["relaxed_bias"])
    off = 8 + hlen
    now = header["occ_words"]
    occ = np.frombuffer(data[off:off + 8 * now], dtype="<u8").astype(np.uint64)
    off += 8 * now
    edges = None
    if header["edge_words"]:
        new = header["edge_words"]
        edges = np.frombuffer(data[off:off + 8 * new], dtype="<u8").astype(np.uint64)
    return InterlacementSample(w, header["u"], header["n_traj"], occ, edges,
                               seed=header["seed"], stream=tuple(header["stream"]))


def dump_sample_json(sample: InterlacementSample, max_sites: int = 200_000) -> dict:
    """Plain-JSON view of a sample; guarded against huge windows."""
    w = sample.window
    if w.nsites > max_sites:
        raise GuardError(f"window has {w.nsites} sites; JSON dump capped at {max_sites}")
    out = {
        "d": w.d, "N": w.N, "rkill": w.rkill, "delta": w.delta,
        "u": sample.u, "n_traj": sample.n_traj,
        "seed": sample.seed, "stream": list(sample.stream),
        "points": sample.points().tolist(),
    }
    if sample.edges is not None:
        out["edges"] = sample.edge_pairs().tolist()
    return out
