"""Simple-random-walk simulation and the d=3 / d=5 path experiments.

Covers first-exit walks, cut times, the two-walk shell intersection
probability, quarter-square occupation, and the Green-weighted
functional D_M. Infinite-horizon events are truncated at kill radii
with the truncation bias quantified per experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels as _k
from .errors import ConsistencyError, GuardError
from .potential import (CapacityResult, GreenTable, capacity,
                        green_upper_envelope, hitting_probability)
from .rng import RNGStream, kernel_state_array
from .stats import ExperimentEstimate, Z95, wilson_interval

KMIN_DEFAULT = 8
MAX_ITER = 2_000_000_000


class Termination(Enum):
    exited_radius = "exited_radius"
    step_budget = "step_budget"
    rejected = "rejected"


@dataclass
class Trajectory:
    start: tuple
    steps: np.ndarray  # (n, d) int64, steps[0] = start
    termination: Termination
    radius: int | None = None

    def __len__(self):
        return self.steps.shape[0]


def simulate_walk(start, stop, rng: RNGStream, d: int | None = None) -> Trajectory:
    """Walk from start until exit of B(0,R) or for an exact step budget.

    stop is ("exit_radius", R) or ("step_budget", n). Under exit_radius
    the final point is the first outside B(0,R); all earlier points are
    inside.
    """
    start = tuple(int(c) for c in start)
    if d is None:
        d = len(start)
    if len(start) != d:
        raise GuardError("start dimension mismatch")
    mode, value = stop
    if value < 0:
        raise GuardError("stop parameter must be >= 0")
    state, inc = rng.kernel_state()
    s = np.asarray(start, dtype=np.int64)
    if mode == "step_budget":
        path = np.empty((value + 1, d), dtype=np.int64)
        _, n, status = _k._record_walk(state, inc, s, 0, 0, value, path, MAX_ITER)
        return Trajectory(start=start, steps=path[:n], termination=Termination.step_budget)
    if mode != "exit_radius":
        raise GuardError(f"unknown stop mode {mode!r}")
    cap_guess = max(64, 8 * (value + 1) ** 2)
    while True:
        path = np.empty((cap_guess, d), dtype=np.int64)
        _, n, status = _k._record_walk(state, inc, s, 1, value, 0, path, MAX_ITER)
        if status == 0:
            return Trajectory(start=start, steps=path[:n],
                              termination=Termination.exited_radius, radius=value)
        if status == 2:
            raise ConsistencyError("walk exceeded the iteration budget")
        cap_guess *= 4  # same state replays the same walk into a bigger buffer


def cut_times(t: Trajectory, guard: int) -> list[int]:
    """Times n with X[0,n] disjoint from X(n, end], for n <= length - guard.

    A site visited first at time a and last at time b blocks every
    n in [a, b); sweeping those intervals gives the cut set in O(n).
    """
    npts = t.steps.shape[0]
    if guard > npts:
        raise GuardError("guard exceeds trajectory length")
    # first/last visit time per distinct site
    order = np.lexsort(t.steps.T[::-1])
    pts = t.steps[order]
    newgrp = np.empty(npts, dtype=bool)
    newgrp[0] = True
    newgrp[1:] = (pts[1:] != pts[:-1]).any(axis=1)
    gids = np.cumsum(newgrp) - 1
    times = np.arange(npts, dtype=np.int64)[order]
    ngroups = int(gids[-1]) + 1
    first = np.full(ngroups, npts, dtype=np.int64)
    last = np.full(ngroups, -1, dtype=np.int64)
    np.minimum.at(first, gids, times)
    np.maximum.at(last, gids, times)
    cover = np.zeros(npts + 1, dtype=np.int64)
    span = first < last
    np.add.at(cover, first[span], 1)
    np.add.at(cover, last[span], -1)
    blocked = np.cumsum(cover[:-1]) > 0
    hi = npts - 1 - guard  # eligible times n <= length - guard
    return [int(n) for n in range(0, hi + 1) if not blocked[n]]


def cut_times_brute(t: Trajectory, guard: int) -> list[int]:
    """Quadratic reference used by the tests."""
    npts = t.steps.shape[0]
    if guard > npts:
        raise GuardError("guard exceeds trajectory length")
    out = []
    pts = [tuple(p) for p in t.steps]
    for n in range(0, npts - guard):
        past = set(pts[:n + 1])
        if not past.intersection(pts[n + 1:]):
            out.append(n)
    return out


def _shell_points(radius: int) -> np.ndarray:
    side = 2 * radius + 1
    g = np.stack(np.meshgrid(*([np.arange(-radius, radius + 1)] * 3),
                             indexing="ij"), axis=-1).reshape(-1, 3)
    return np.ascontiguousarray(g[np.abs(g).max(axis=1) == radius])


def annulus_intersection_estimate(M: int, trials: int, rng: RNGStream, d: int = 3,
                                  greens: GreenTable | None = None) -> ExperimentEstimate:
    """P[two independent walks from the 2M shell meet on the M shell].

    Both walks start uniformly on the inner boundary of B(0,2M) and die
    on exiting B(0, 32M). Truncation only discards shell visits after
    that exit, so the bias is one-sided downward; the declared bound is
    the per-walk revisit probability cap(B(0,M)) * sup G over the kill
    sphere, doubled for the pair.
    """
    if d != 3:
        raise GuardError("the shell intersection experiment is d=3 only")
    if M < 2:
        raise GuardError("M must be >= 2")
    if trials <= 0:
        raise GuardError("trials must be positive")
    rkill = M * 32
    shell = _shell_points(2 * M)
    statesA, incsA = kernel_state_array(rng.child(1), trials)
    statesB, incsB = kernel_state_array(rng.child(2), trials)
    gen = rng.child(0).generator()
    ia = gen.integers(0, shell.shape[0], size=trials)
    ib = gen.integers(0, shell.shape[0], size=trials)
    startsA = shell[ia]
    startsB = shell[ib]
    side = 2 * M + 1
    stamp = np.zeros(side ** 3, dtype=np.uint32)
    hits = np.zeros(trials, dtype=np.int64)
    bad = _k._annulus_batch(statesA, incsA, statesB, incsB, startsA, startsB,
                            M, rkill, KMIN_DEFAULT, stamp, hits, MAX_ITER)
    if bad >= 0:
        raise ConsistencyError(f"shell walk exceeded iteration budget at trial {bad}")
    succ = int(hits.sum())
    # two walks, each able to revisit the M shell after the kill exit
    bias = 2.0 * _shell_return_bias(M, d, greens)
    return ExperimentEstimate.from_counts(
        "annulus_intersection", {"M": M, "kill_radius": rkill}, succ, trials,
        bias_bound=bias, seed=rng.seed, stream=rng.key,
        notes="one-sided downward; bound = 2 * P[revisit the M shell from the kill sphere]")


_SHELL_BIAS_CACHE: dict = {}


def _shell_return_bias(M: int, d: int, greens: GreenTable | None) -> float:
    """Revisit probability of the M shell from |y|oo = 32M, capacity bound."""
    key = (d, M)
    v = _SHELL_BIAS_CACHE.get(key)
    if v is None:
        if M <= 8:
            if greens is None:
                greens = GreenTable(d)
            from .potential import box_capacity
            capv = box_capacity(M, d, greens).capacity
        else:
            # measured cap(B(0,N))/N stays below 2.79 through N=16
            capv = 2.9 * M
        v = min(1.0, capv * green_upper_envelope(32 * M - M, d))
        _SHELL_BIAS_CACHE[key] = v
    return v


def quarter_disc_occupation(M: int, trials: int, rng: RNGStream, d: int = 3,
                            eps: float = 0.05, nstarts: int = 8) -> ExperimentEstimate:
    """Worst-start estimate of P[quarter-square occupation before exit > eps*M].

    The quarter square is {0 <= x,y <= 2M, z = 0}; occupation counts walk
    times strictly before the first exit of B(0,2M). Starts are sampled
    uniformly from B(0, M+1); the reported estimate is the minimum over
    the sampled start set, each start getting trials/nstarts walks.
    """
    if d != 3:
        raise GuardError("quarter-square occupation is d=3 only")
    if M < 4:
        raise GuardError("M must be >= 4")
    if trials <= 0:
        raise GuardError("trials must be positive")
    nstarts = max(1, min(nstarts, trials))
    per = trials // nstarts
    gen = rng.child(0).generator()
    start_set = gen.integers(-(M + 1), M + 2, size=(nstarts, 3))
    thresh = eps * M
    worst = None
    total_succ = 0
    total_n = 0
    for si in range(nstarts):
        states, incs = kernel_state_array(rng.child(1, si), per)
        starts = np.tile(start_set[si].astype(np.int64), (per, 1))
        counts = np.zeros(per, dtype=np.int64)
        bad = _k._qdisc_batch(states, incs, starts, 2 * M, counts, MAX_ITER)
        if bad >= 0:
            raise ConsistencyError(f"occupation walk exceeded budget at trial {bad}")
        succ = int((counts > thresh).sum())
        total_succ += succ
        total_n += per
        est = ExperimentEstimate.from_counts(
            "quarter_disc_occupation",
            {"M": M, "eps": eps, "start": tuple(int(c) for c in start_set[si])},
            succ, per, seed=rng.seed, stream=rng.key)
        if worst is None or est.estimate < worst.estimate:
            worst = est
    worst.extra["pooled_estimate"] = total_succ / total_n
    worst.extra["nstarts"] = nstarts
    worst.notes = "worst start of the sampled start set; pooled estimate in extra"
    return worst


def green_weighted_functional(M: int, trials: int, rng: RNGStream,
                              greens: GreenTable, d: int = 3,
                              eps: float = 0.02) -> ExperimentEstimate:
    """P[D_M >= eps*log M] with D_M = sum_i G(0,X_i) 1{X_i in quarter square}.

    The walk starts at the origin and dies on exiting B(0, M^2); visits
    to the quarter square of halfwidth M after that exit are dropped,
    which removes O(1/M) of the functional (bias note attached).
    """
    if d != 3:
        raise GuardError("the Green-weighted functional is d=3 only")
    if M < 8:
        raise GuardError("M must be >= 8")
    if trials <= 0:
        raise GuardError("trials must be positive")
    gq = np.empty((M + 1) * (M + 1))
    for x in range(M + 1):
        for y in range(M + 1):
            gq[x * (M + 1) + y] = greens.value((x, y, 0))
    states, incs = kernel_state_array(rng.child(1), trials)
    sums = np.zeros(trials)
    bad = _k._disc_sum_batch(states, incs, M, gq, M * M, KMIN_DEFAULT, sums, MAX_ITER)
    if bad >= 0:
        raise ConsistencyError(f"functional walk exceeded budget at trial {bad}")
    thresh = eps * math.log(M)
    succ = int((sums >= thresh).sum())
    est = ExperimentEstimate.from_counts(
        "green_weighted_functional", {"M": M, "eps": eps, "kill_radius": M * M},
        succ, trials, seed=rng.seed, stream=rng.key,
        notes="visits after exiting B(0,M^2) dropped; O(1/M) of the functional")
    est.extra["mean_D"] = float(sums.mean())
    est.extra["se_D"] = float(sums.std(ddof=1) / math.sqrt(trials))
    return est


def mc_escape_probability(d: int, trials: int, rng: RNGStream,
                          kill_radius: int = 1000,
                          cap_H: CapacityResult | None = None,
                          greens: GreenTable | None = None):
    """Monte Carlo escape probability from the hypercube {0,1}^d.

    Returns (corrected, raw) estimates. A walk reaching the kill sphere
    at y would still return to the cube with probability
    sum_h G(y,h) e_H(h); scoring the exact last-exit weight
    1 - cap(H) C_d / |y - center|_2 (multipole form, relative error
    O(|y|^-2)) removes the truncation bias from the corrected estimate.
    The raw escape frequency keeps that bias and declares it.
    """
    if trials <= 0:
        raise GuardError("trials must be positive")
    if greens is None:
        greens = GreenTable(d)
    if cap_H is None:
        cube = [tuple(b) for b in np.ndindex(*([2] * d))]
        cap_H = capacity(cube, greens)
    from .potential import green_asymptotic_constant
    capC = cap_H.capacity * green_asymptotic_constant(d)
    states, incs = kernel_state_array(rng.child(1), trials)
    w = np.zeros(trials)
    bad = _k._escape_batch(d, states, incs, kill_radius, KMIN_DEFAULT, capC, w, MAX_ITER)
    if bad >= 0:
        raise ConsistencyError(f"escape walk exceeded budget at trial {bad}")
    reached = w > 0.0
    raw_succ = int(reached.sum())
    raw = ExperimentEstimate.from_counts(
        "mc_escape_raw", {"d": d, "kill_radius": kill_radius}, raw_succ, trials,
        bias_bound=cap_H.capacity * green_upper_envelope(kill_radius - 1, d),
        seed=rng.seed, stream=rng.key,
        notes="raw escape-to-kill-sphere frequency; biased up by the return probability")
    mean = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(trials))
    corrected = ExperimentEstimate(
        kind="mc_escape_corrected", params={"d": d, "kill_radius": kill_radius},
        trials=trials, successes=raw_succ, estimate=mean, se=se,
        ci_low=mean - Z95 * se, ci_high=mean + Z95 * se, bias_bound=0.0,
        seed=rng.seed, stream=rng.key,
        notes="last-exit weighted at the kill sphere; unbiased up to O(R^-2) multipole error")
    return corrected, raw


def mc_green_at_origin(trials: int, rng: RNGStream, kill_radius: int = 128) -> ExperimentEstimate:
    """Mean visits to the origin of a d=3 walk killed at the given radius.

    Estimates G(0,0) from below; the deficiency is the expected visits
    after the kill time, about G(kill_radius).
    """
    if trials <= 0:
        raise GuardError("trials must be positive")
    states, incs = kernel_state_array(rng.child(1), trials)
    counts = np.zeros(trials, dtype=np.int64)
    bad = _k._origin_visits_batch(states, incs, kill_radius, KMIN_DEFAULT, counts, MAX_ITER)
    if bad >= 0:
        raise ConsistencyError(f"visit-count walk exceeded budget at trial {bad}")
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(trials))
    est = ExperimentEstimate(
        kind="mc_green_origin", params={"kill_radius": kill_radius},
        trials=trials, successes=int((counts > 1).sum()), estimate=mean, se=se,
        ci_low=mean - Z95 * se, ci_high=mean + Z95 * se,
        bias_bound=green_upper_envelope(kill_radius - 1, 3),
        seed=rng.seed, stream=rng.key,
        notes="mean visit count underestimates G(0,0) by ~G(R)")
    return est


CSV_COLUMNS = ["kind", "trials", "estimate", "ci_low", "ci_high", "bias_bound", "seed"]


def estimate_csv_header(param_names: list[str]) -> str:
    return ",".join(param_names + CSV_COLUMNS)


def estimate_csv_row(est: ExperimentEstimate, param_names: list[str]) -> str:
    return est.csv_row(param_names + CSV_COLUMNS)
