"""Crossing-probability maps over the two levels (u1, u2).

Grid scans and bisection along one level estimate where the
intersection set K or the joint vacant set V stops crossing an annulus
at scale L. Everything is a finite-window frequency with a Wilson CI;
outputs are labeled as empirical finite-size curves, never as the
infinite-volume thresholds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clusters import crossing_event
from .errors import GuardError
from .interlace import (WindowSpec, make_window, sample_occupancy_bank,
                        vacant_bits)
from .potential import GreenTable
from .rng import RNGStream
from .stats import ExperimentEstimate, fmt17

SELECTORS = ("K", "V")
CSV_HEADER = "u1,u2,selector,L,trials,estimate,ci_low,ci_high,seed"


def _phase_window(L: int, greens: GreenTable | None = None) -> WindowSpec:
    """Window of radius 2L; the honest-bias kill radius is far out of
    desk reach at these sizes, so the relaxed truncation is used and its
    true per-trajectory bias declared."""
    return make_window(2 * L, relaxed_bias=True, greens=greens)


def _exact_cell(u1: float, u2: float, selector: str, L: int, trials: int,
                rng: RNGStream, value: float, why: str) -> ExperimentEstimate:
    return ExperimentEstimate(
        kind="phase_cell",
        params={"u1": u1, "u2": u2, "selector": selector, "L": L},
        trials=trials, successes=int(round(value * trials)),
        estimate=value, se=0.0, ci_low=value, ci_high=value,
        bias_bound=0.0, seed=rng.seed, stream=rng.key, notes=why)


def estimate_cell(u1: float, u2: float, selector: str, L: int, trials: int,
                  rng: RNGStream, window: WindowSpec | None = None,
                  greens: GreenTable | None = None) -> ExperimentEstimate:
    """Crossing frequency of the selected set over fresh pair samples.

    Each trial draws an independent pair; trial i reads its own child
    streams, so the result is a pure function of (inputs, rng).
    """
    if selector not in SELECTORS:
        raise GuardError(f"selector must be one of {SELECTORS}")
    if trials < 1:
        raise GuardError("trials must be >= 1")
    if u1 < 0 or u2 < 0:
        raise GuardError("levels must be >= 0")
    if selector == "K" and (u1 == 0.0 or u2 == 0.0):
        return _exact_cell(u1, u2, selector, L, trials, rng, 0.0,
                           "one factor empty, intersection empty, exact")
    if selector == "V" and u1 == 0.0 and u2 == 0.0:
        return _exact_cell(u1, u2, selector, L, trials, rng, 1.0,
                           "both samples empty, vacant set full, exact")
    if window is None:
        window = _phase_window(L, greens)
    if window.N < 2 * L:
        raise GuardError("window radius below 2L")
    occ1, _, _ = sample_occupancy_bank(window, u1, trials, rng.child(0),
                                       greens=greens)
    occ2, _, _ = sample_occupancy_bank(window, u2, trials, rng.child(1),
                                       greens=greens)
    shape = (window.side,) * window.d
    succ = 0
    for i in range(trials):
        if selector == "K":
            words = occ1[i] & occ2[i]
        else:
            words = vacant_bits(window, occ1[i], occ2[i])
        bits = np.unpackbits(words.view(np.uint8), bitorder="little")
        occ = bits[:window.nsites].astype(bool).reshape(shape)
        succ += crossing_event(occ, L)
    return ExperimentEstimate.from_counts(
        "phase_cell", {"u1": u1, "u2": u2, "selector": selector, "L": L},
        succ, trials, seed=rng.seed, stream=rng.key)


@dataclass(frozen=True)
class PhaseGridSpec:
    u1_values: tuple
    u2_values: tuple
    L: int
    trials: int
    seed: int

    def __post_init__(self):
        for name, vals in (("u1", self.u1_values), ("u2", self.u2_values)):
            if not vals:
                raise GuardError(f"{name} grid is empty")
            if any(v < 0 for v in vals):
                raise GuardError(f"{name} values must be >= 0")
            if list(vals) != sorted(vals):
                raise GuardError(f"{name} values must be sorted")
        if self.L < 1 or self.trials < 1:
            raise GuardError("L and trials must be positive")


def scan_grid(spec: PhaseGridSpec, selector: str,
              greens: GreenTable | None = None) -> tuple:
    """One estimate per (u1, u2) cell; returns (estimates, csv_text).

    The cell's stream index is its row-major position in the grid, so
    the table is reproducible byte for byte from (spec, selector).
    """
    if selector not in SELECTORS:
        raise GuardError(f"selector must be one of {SELECTORS}")
    window = _phase_window(spec.L, greens)
    root = RNGStream(spec.seed, (SELECTORS.index(selector),))
    rows = [CSV_HEADER]
    out = []
    cell = 0
    for u1 in spec.u1_values:
        for u2 in spec.u2_values:
            est = estimate_cell(u1, u2, selector, spec.L, spec.trials,
                                root.child(cell), window, greens)
            out.append(est)
            rows.append(",".join([
                fmt17(u1), fmt17(u2), selector, str(spec.L), str(spec.trials),
                fmt17(est.estimate), fmt17(est.ci_low), fmt17(est.ci_high),
                str(spec.seed)]))
            cell += 1
    return out, "\n".join(rows) + "\n"


@dataclass
class PhaseCurveEstimate:
    selector: str
    u1: float
    p_star: float
    bracket: tuple          # (lo, hi) in u2
    trials: int
    status: str             # bracketed | no_crossing_in_range | degenerate_low
    L: int
    u2_star: float | None = None
    ambiguous: bool = False  # a boundary probe's CI straddles p_star
    probes: list = field(default_factory=list)

    def to_json(self) -> str:
        # an unbounded bracket end becomes null: Infinity is not JSON
        bracket = [None if math.isinf(b) else b for b in self.bracket]
        out = {
            "u1": self.u1, "selector": self.selector, "p_star": self.p_star,
            "bracket": bracket, "trials": self.trials,
            "status": self.status, "L": self.L, "u2_star": self.u2_star,
            "ambiguous": self.ambiguous,
            "probes": [{"u2": u, "estimate": e.estimate,
                        "ci": [e.ci_low, e.ci_high]} for u, e in self.probes],
        }
        return json.dumps(out, sort_keys=True)


def curve_bisect(u1: float, selector: str, rng: RNGStream,
                 p_star: float = 0.5, tol: float = 0.25, trials: int = 400,
                 L: int = 8, u2_init: float = 1.0, max_doublings: int = 8,
                 greens: GreenTable | None = None) -> PhaseCurveEstimate:
    """Bracket the level where the crossing frequency passes p_star.

    V crossing falls along u2, K crossing rises; a doubling search finds
    a sign-changing bracket, then bisection narrows it to width <= tol.
    The answer is always the bracket; the midpoint is attached only as a
    convenience, and the ambiguity flag is set when a boundary probe's
    CI straddles p_star.
    """
    if selector not in SELECTORS:
        raise GuardError(f"selector must be one of {SELECTORS}")
    if not 0.0 <= p_star <= 1.0:
        raise GuardError("p_star outside [0,1]")
    if tol <= 0 or u2_init <= 0:
        raise GuardError("tol and u2_init must be positive")
    window = _phase_window(L, greens)
    probes = []
    counter = [0]

    def probe(u2: float) -> ExperimentEstimate:
        est = estimate_cell(u1, u2, selector, L, trials,
                            rng.child(counter[0]), window, greens)
        counter[0] += 1
        probes.append((u2, est))
        return est

    # "above" means on the small-u2 side of the curve for the selector:
    # V crossing starts high and falls; K starts low and rises
    def is_low_side(est: ExperimentEstimate) -> bool:
        return est.estimate > p_star if selector == "V" else est.estimate < p_star

    e0 = probe(u2_init)
    lo, hi = None, None
    e_lo = e_hi = None
    if is_low_side(e0):
        lo, e_lo = u2_init, e0
        u2 = u2_init
        for _ in range(max_doublings):
            u2 *= 2.0
            e = probe(u2)
            if not is_low_side(e):
                hi, e_hi = u2, e
                break
            lo, e_lo = u2, e
        if hi is None:
            return PhaseCurveEstimate(selector, u1, p_star, (lo, math.inf),
                                      trials, "no_crossing_in_range", L,
                                      probes=probes)
    else:
        hi, e_hi = u2_init, e0
        u2 = u2_init
        for _ in range(max_doublings):
            u2 *= 0.5
            e = probe(u2)
            if is_low_side(e):
                lo, e_lo = u2, e
                break
            hi, e_hi = u2, e
        if lo is None:
            # the low side is unreachable: for V with p_star = 1 no
            # frequency can strictly exceed the target
            status = "degenerate_low" if p_star >= 1.0 or selector == "V" \
                else "no_crossing_in_range"
            return PhaseCurveEstimate(selector, u1, p_star, (0.0, hi),
                                      trials, status, L, probes=probes)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        e = probe(mid)
        if is_low_side(e):
            lo, e_lo = mid, e
        else:
            hi, e_hi = mid, e
    amb = any(e.ci_low <= p_star <= e.ci_high for e in (e_lo, e_hi) if e is not None)
    return PhaseCurveEstimate(selector, u1, p_star, (lo, hi), trials,
                              "bracketed", L, u2_star=0.5 * (lo + hi),
                              ambiguous=amb, probes=probes)
