"""Multi-scale machinery: geometric scales, hierarchical bad events,
the decoupling error term, and induction trigger certificates.

Everything here is deterministic arithmetic or exact combinatorics on
lattice grids; randomness only enters through the configurations the
caller evaluates events on.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GuardError


@dataclass(frozen=True)
class RenormScheme:
    L0: int
    l0: int
    d: int = 3

    def __post_init__(self):
        if self.L0 < 1:
            raise GuardError("L0 must be a positive integer")
        if self.l0 < 2:
            raise GuardError("l0 must be an integer >= 2")
        if self.d < 1:
            raise GuardError("d must be positive")

    def L(self, n: int) -> int:
        if n < 0:
            raise GuardError("scale index must be >= 0")
        return self.L0 * self.l0 ** n

    def lattice_points(self, x, n: int) -> np.ndarray:
        """(L_{n-1} Z^d) intersected with B(x, L_n), as an (m, d) array."""
        if n < 1:
            raise GuardError("lattice_points is defined for n >= 1")
        x = tuple(int(c) for c in x)
        if len(x) != self.d:
            raise GuardError("center dimension mismatch")
        step = self.L(n - 1)
        R = self.L(n)
        axes = []
        for c in x:
            kmin = -((-(c - R)) // step)   # ceil((c-R)/step)
            kmax = (c + R) // step
            axes.append(np.arange(kmin, kmax + 1, dtype=np.int64) * step)
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def lattice_count(self, x, n: int) -> int:
        x = tuple(int(c) for c in x)
        step = self.L(n - 1)
        R = self.L(n)
        total = 1
        for c in x:
            kmin = -((-(c - R)) // step)
            kmax = (c + R) // step
            total *= max(0, kmax - kmin + 1)
        return total


def epsilon_error(u: float, L0: int, l0: int, d: int = 3) -> float:
    """Sprinkling error 2 e^{-t} / (1 - e^{-t}), t = u L0^{d-2} l0^{(d-2)/2}."""
    if u <= 0:
        raise GuardError("u must be positive")
    if L0 < 1 or l0 < 2:
        raise GuardError("need L0 >= 1 and l0 >= 2")
    t = u * float(L0) ** (d - 2) * float(l0) ** ((d - 2) / 2.0)
    if t <= 0:
        raise GuardError("nonpositive exponent")
    em = math.exp(-t)
    return 2.0 * em / (1.0 - em)


def decoupling_log_rhs(p_seed: float, n: int, l0: int, eps1: float,
                       eps2: float, d: int = 3) -> float:
    """log of (2 l0 + 1)^{d 2^{n+1}} (p + eps1 + eps2)^{2^n}.

    Returned in log space: the doubling makes the plain value overflow
    or underflow almost immediately. -inf when the base sum is zero.
    """
    for v, name in ((p_seed, "p_seed"), (eps1, "eps1"), (eps2, "eps2")):
        if not 0.0 <= v <= 1.0:
            raise GuardError(f"{name} outside [0,1]")
    s = p_seed + eps1 + eps2
    if s == 0.0:
        return -math.inf
    # 2^n * base keeps the exponent identity rhs(n) = rhs(0)^(2^n) exact
    base = 2.0 * d * math.log(2 * l0 + 1) + math.log(s)
    return math.ldexp(base, n)


def decoupling_rhs(p_seed: float, n: int, l0: int, eps1: float,
                   eps2: float, d: int = 3) -> float:
    """Plain-value wrapper; underflows to 0 / overflows to inf as floats do."""
    lr = decoupling_log_rhs(p_seed, n, l0, eps1, eps2, d)
    if lr > 709.0:
        return math.inf
    return math.exp(lr)


CONDITIONALITY_NOTE = ("valid conditional on l0 >= A(d, eps); the scale "
                       "threshold A is asserted to exist but never quantified, "
                       "so it is recorded, not enforced")


@dataclass
class TriggerReport:
    p_hat_upper: float
    eps1: float
    eps2: float
    l0: int
    d: int
    lhs: float
    verdict: str                  # "PASS" | "FAIL"
    confidence: float
    successes: int
    trials: int
    implied_log2_bounds: list = field(default_factory=list)
    note: str = CONDITIONALITY_NOTE

    def to_json(self) -> str:
        out = {
            "p_hat_upper": self.p_hat_upper,
            "eps1": self.eps1, "eps2": self.eps2,
            "l0": self.l0, "d": self.d,
            "lhs": self.lhs, "verdict": self.verdict,
            "confidence": None if math.isnan(self.confidence) else self.confidence,
            "successes": self.successes, "trials": self.trials,
            "implied_log2_bounds": self.implied_log2_bounds,
            "note": self.note,
        }
        return json.dumps(out, sort_keys=True)


def trigger_certificate(p_hat_upper: float, l0: int, eps1: float, eps2: float,
                        d: int = 3, confidence: float = float("nan"),
                        max_level: int = 8) -> TriggerReport:
    """Induction trigger from an upper confidence bound on the seed event.

    p_hat_upper must be an upper confidence limit, never a point
    estimate; the confidence it was computed at is recorded in the
    report. PASS iff (2 l0 + 1)^{2d} (p_upper + eps1 + eps2) < 1/2
    strictly; a PASS implies rhs(n) <= 2^{-2^n} at every level, and the
    report lists the first few bounds as log2 values.
    """
    if not 0.0 <= p_hat_upper <= 1.0:
        raise GuardError("p_hat_upper outside [0,1]")
    for v, name in ((eps1, "eps1"), (eps2, "eps2")):
        if not 0.0 <= v <= 1.0:
            raise GuardError(f"{name} outside [0,1]")
    lhs = (2 * l0 + 1) ** (2 * d) * (p_hat_upper + eps1 + eps2)
    verdict = "PASS" if lhs < 0.5 else "FAIL"
    bounds = [-float(2 ** n) for n in range(max_level + 1)] \
        if verdict == "PASS" else []
    return TriggerReport(p_hat_upper, eps1, eps2, l0, d, lhs, verdict,
                         confidence, -1, -1, bounds)


def trigger_from_counts(successes: int, trials: int, l0: int,
                        eps1: float, eps2: float, d: int = 3,
                        confidence: float = 0.95,
                        max_level: int = 8) -> TriggerReport:
    """Counts convenience: Wilson upper limit, then the certificate."""
    from .stats import wilson_upper
    if trials <= 0 or not 0 <= successes <= trials:
        raise GuardError("bad count inputs")
    p_up = wilson_upper(successes, trials, confidence)
    rep = trigger_certificate(p_up, l0, eps1, eps2, d, confidence, max_level)
    rep.successes = successes
    rep.trials = trials
    return rep


def hierarchical_event(seed_eval, x, n: int, scheme: RenormScheme,
                       _memo: dict | None = None) -> bool:
    """Dyadic bad event: two well-separated children both bad one level down.

    n = 0 defers to the seed predicate. n >= 1 asks for x1, x2 in the
    child lattice of B(x, L_n) with 100 |x1 - x2|_oo > L_n (exact
    integer comparison) and the event at level n-1 at both.
    """
    x = tuple(int(c) for c in x)
    if _memo is None:
        _memo = {}
    key = (x, n)
    hit = _memo.get(key)
    if hit is not None:
        return hit
    if n == 0:
        out = bool(seed_eval(x))
        _memo[key] = out
        return out
    Ln = scheme.L(n)
    pts = scheme.lattice_points(x, n)
    good = [tuple(int(c) for c in p) for p in pts
            if hierarchical_event(seed_eval, tuple(int(c) for c in p),
                                  n - 1, scheme, _memo)]
    out = False
    if len(good) >= 2:
        arr = np.asarray(good, dtype=np.int64)
        spread = int((arr.max(axis=0) - arr.min(axis=0)).max())
        out = 100 * spread > Ln
    _memo[key] = out
    return out


def hierarchical_event_brute(seed_eval, x, n: int, scheme: RenormScheme) -> bool:
    """Literal double loop over child pairs; the test oracle."""
    if n == 0:
        return bool(seed_eval(tuple(int(c) for c in x)))
    Ln = scheme.L(n)
    pts = [tuple(int(c) for c in p) for p in scheme.lattice_points(x, n)]
    for x1, x2 in itertools.combinations(pts, 2):
        sep = max(abs(a - b) for a, b in zip(x1, x2))
        if 100 * sep > Ln:
            if hierarchical_event_brute(seed_eval, x1, n - 1, scheme) and \
               hierarchical_event_brute(seed_eval, x2, n - 1, scheme):
                return True
    return False


def crossing_seed(occupancy: np.ndarray, scheme: RenormScheme):
    """Seed predicate: occupancy joins B(x, L0) to the shell of B(x, 2L0).

    Evaluated on the subgrid B(x, 2L0); any joining path must enter it.
    """
    occ = np.asarray(occupancy, dtype=bool)
    N = (occ.shape[0] - 1) // 2
    L0 = scheme.L0
    side = 4 * L0 + 1
    coord = np.abs(np.arange(side) - 2 * L0)
    rad = coord
    for _ in range(occ.ndim - 1):
        rad = np.maximum(rad[..., None], coord)
    inner = rad <= L0
    shell = rad == 2 * L0
    struct = ndimage.generate_binary_structure(occ.ndim, 1)

    def seed(x):
        for c in x:
            if abs(c) + 2 * L0 > N:
                raise GuardError("seed box leaves the window")
        sl = tuple(slice(c + N - 2 * L0, c + N + 2 * L0 + 1) for c in x)
        raw, cnt = ndimage.label(occ[sl], structure=struct)
        if not cnt:
            return False
        iid = np.unique(raw[inner & (raw > 0)])
        if not iid.size:
            return False
        sid = np.unique(raw[shell & (raw > 0)])
        return bool(np.intersect1d(iid, sid, assume_unique=True).size)

    return seed


@dataclass
class ImplicationResult:
    holds: bool
    crossed: bool
    event: bool
    witness: dict | None = None


def path_implies_hierarchical(occupancy: np.ndarray, n: int,
                              scheme: RenormScheme) -> ImplicationResult:
    """Check "0 reaches the shell of B(0, 2 L_n) => bad event at (0, n)".

    The premise is evaluated with the origin's nearest-neighbor
    component; the conclusion uses the crossing seed at scale L0. On a
    violation the result carries the component's farthest site as the
    witness.
    """
    occ = np.asarray(occupancy, dtype=bool)
    N = (occ.shape[0] - 1) // 2
    Ln = scheme.L(n)
    if N < 2 * Ln:
        raise GuardError("window radius below 2 L_n")
    # premise: origin's component reaches the shell of B(0, 2 L_n)
    side = 4 * Ln + 1
    c0 = N
    sl = tuple(slice(c0 - 2 * Ln, c0 + 2 * Ln + 1) for _ in range(occ.ndim))
    sub = occ[sl]
    center = (2 * Ln,) * occ.ndim
    crossed = False
    if sub[center]:
        raw, _ = ndimage.label(
            sub, structure=ndimage.generate_binary_structure(occ.ndim, 1))
        cid = raw[center]
        coord = np.abs(np.arange(side) - 2 * Ln)
        rad = coord
        for _ in range(occ.ndim - 1):
            rad = np.maximum(rad[..., None], coord)
        crossed = bool((raw[rad == 2 * Ln] == cid).any())
    if not crossed:
        return ImplicationResult(True, False, False)
    seed = crossing_seed(occ, scheme)
    event = hierarchical_event(seed, (0,) * occ.ndim, n, scheme)
    if event:
        return ImplicationResult(True, True, True)
    comp_mask = raw == cid
    far = np.argmax(rad * comp_mask)
    witness = {
        "component_size": int(comp_mask.sum()),
        "farthest_site": [int(v) - 2 * Ln for v in
                          np.unravel_index(far, raw.shape)],
    }
    return ImplicationResult(False, True, False, witness)
