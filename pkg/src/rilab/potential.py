"""Discrete potential theory on Z^d.

Green function values come from the Bessel integral representation
G(0,x) = int_0^inf e^{-u} prod_i I_{x_i}(u/d) du, evaluated with
exponentially scaled Bessel factors so the integrand never overflows.
Equilibrium measures and capacities solve the last-exit system
sum_y G(x,y) e(y) = 1 on the inner boundary. The hypercube escape
probability uses the 1-D reduction d * int Z(u)^d du with
Z(u) = (I_0(u) + I_1(u)) e^{-u}.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve as lin_solve
from scipy.special import ive

from .errors import ConsistencyError, GuardError, QuadratureError, SolveError
from .lattice import Point, inner_boundary

DEFAULT_TOL = 1e-10


def canonical_displacement(x) -> tuple[int, ...]:
    """Representative of x under coordinate sign flips and permutations."""
    return tuple(sorted((abs(int(c)) for c in x), reverse=True))


def _green_integrand(u: float, ax: tuple[int, ...], d: int) -> float:
    # ive(n, z) = I_n(z) e^{-z}; the product over d coordinates absorbs e^{-u}
    val = 1.0
    z = u / d
    for c in ax:
        val *= ive(c, z)
    return val


def green(x, d: int = 3, tol: float = DEFAULT_TOL) -> float:
    """G(0,x): expected visits to x by the walk from 0 (x = 0 included)."""
    if d < 3:
        raise GuardError(f"green requires d >= 3, got {d}")
    if tol <= 0:
        raise GuardError("tol must be positive")
    ax = canonical_displacement(x)
    if len(ax) != d:
        raise GuardError(f"point has {len(ax)} coordinates, expected {d}")
    # the integrand peaks near u ~ d|x|^2/2; split there for the adaptive rule
    peak = max(30.0, 2.0 * float(sum(c * c for c in ax)))
    head, e1 = quad(_green_integrand, 0.0, peak, args=(ax, d),
                    epsabs=tol * 0.25, epsrel=1e-13, limit=400)
    tail, e2 = quad(_green_integrand, peak, np.inf, args=(ax, d),
                    epsabs=tol * 0.25, epsrel=1e-13, limit=400)
    if e1 + e2 > tol:
        raise QuadratureError(
            f"green quadrature error {e1 + e2:.3e} exceeds tol {tol:.3e} at x={tuple(x)}")
    return head + tail


def green_asymptotic_constant(d: int) -> float:
    """C_d in G(0,x) ~ C_d |x|_2^{2-d}."""
    return (d / 2.0) * math.gamma(d / 2.0 - 1.0) / math.pi ** (d / 2.0)


def green_upper_envelope(r: float, d: int = 3) -> float:
    """Upper bound on G(0,x) over |x|_inf >= r, for truncation-bias budgets.

    The (1 + 8/r) factor covers lattice corrections at moderate r; checked
    against quadrature values on axis and diagonal points in the tests.
    """
    if r <= 0:
        raise GuardError("envelope needs r > 0")
    return green_asymptotic_constant(d) * (1.0 + 8.0 / r) / r ** (d - 2)


class GreenTable:
    """Cache of Green values keyed by canonical displacement.

    A table loaded from JSON is frozen: lookups outside its key set raise
    instead of silently running fresh quadratures, so persisted experiment
    configurations fail loudly when under-provisioned.
    """

    def __init__(self, d: int = 3, tol: float = DEFAULT_TOL, frozen: bool = False):
        if d < 3:
            raise GuardError(f"GreenTable requires d >= 3, got {d}")
        self.d = d
        self.tol = tol
        self.frozen = frozen
        self._values: dict[tuple[int, ...], float] = {}

    def value(self, x) -> float:
        key = canonical_displacement(x)
        v = self._values.get(key)
        if v is None:
            if self.frozen:
                raise GuardError(f"frozen GreenTable has no entry for {key}")
            v = green(key, self.d, self.tol)
            self._values[key] = v
        return v

    def __len__(self):
        return len(self._values)

    def ensure(self, points) -> None:
        for p in points:
            self.value(p)

    def bulk_fill_box(self, span: int) -> None:
        """Precompute every displacement with coordinates in [-span, span]."""
        grid = green_grid(self.d, span, self.tol)
        it = np.ndindex(*([span + 1] * self.d))
        for idx in it:
            key = tuple(sorted(idx, reverse=True))
            if key not in self._values:
                self._values[key] = float(grid[key])

    def harmonic_residual(self, x) -> float:
        """G(0,x) - 1{x=0} - (1/2d) sum_e G(0,x+e)."""
        x = tuple(int(c) for c in x)
        acc = 0.0
        for j in range(self.d):
            for s in (-1, 1):
                y = list(x)
                y[j] += s
                acc += self.value(y)
        ind = 1.0 if all(c == 0 for c in x) else 0.0
        return self.value(x) - ind - acc / (2.0 * self.d)

    def to_json(self) -> str:
        items = sorted(self._values.items())
        return json.dumps({
            "format": 1,
            "d": self.d,
            "tol": self.tol,
            "values": [[list(k), v] for k, v in items],
        })

    @classmethod
    def from_json(cls, text: str, frozen: bool = True) -> "GreenTable":
        obj = json.loads(text)
        if obj.get("format") != 1:
            raise GuardError("unknown GreenTable format")
        t = cls(int(obj["d"]), float(obj["tol"]), frozen=frozen)
        t._values = {tuple(int(c) for c in k): float(v) for k, v in obj["values"]}
        return t


def green_grid(d: int, span: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Dense G(0,x) over x in [0, span]^d by shared-node quadrature.

    All displacements reuse one set of integration nodes: scaled Bessel
    rows ive(n, u/d) for n = 0..span are evaluated once per node and
    combined per point, which is orders of magnitude cheaper than one
    adaptive quadrature per displacement. The infinite tail uses the
    u = t^{-2} substitution that flattens the u^{-d/2} decay.
    """
    if d < 3 or span < 0:
        raise GuardError("green_grid needs d >= 3 and span >= 0")
    body_end = 60.0 + 4.0 * d * span * span
    # geometric panels, 24-point Gauss-Legendre each
    edges = np.geomspace(1.0, body_end + 1.0, 240) - 1.0
    gl_x, gl_w = np.polynomial.legendre.leggauss(24)
    centers = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * (edges[1:] - edges[:-1])
    u_body = (centers[:, None] + halves[:, None] * gl_x[None, :]).ravel()
    w_body = (halves[:, None] * gl_w[None, :]).ravel()
    # tail: int_B^inf f du = int_0^{B^{-1/2}} 2 t^{-3} f(t^{-2}) dt
    tmax = body_end ** -0.5
    t_edges = np.linspace(0.0, tmax, 9)
    tc = 0.5 * (t_edges[:-1] + t_edges[1:])
    th = 0.5 * (t_edges[1:] - t_edges[:-1])
    t_nodes = (tc[:, None] + th[:, None] * gl_x[None, :]).ravel()
    tw = (th[:, None] * gl_w[None, :]).ravel()
    u_tail = t_nodes ** -2.0
    w_tail = 2.0 * tw * t_nodes ** -3.0
    u_all = np.concatenate([u_body, u_tail])
    w_all = np.concatenate([w_body, w_tail])
    rows = np.empty((span + 1, u_all.size))
    z = u_all / d
    huge = z > 1e8  # scipy's ive overflows to nan near z ~ 2e9
    zs = np.where(huge, 1.0, z)
    for n in range(span + 1):
        row = ive(n, zs)
        mu = 4.0 * n * n
        asym = (1.0 - (mu - 1.0) / (8.0 * z) * (1.0 - (mu - 9.0) / (16.0 * z))
                ) / np.sqrt(2.0 * math.pi * z)
        rows[n] = np.where(huge, asym, row)
    out = np.empty([span + 1] * d)
    for idx in np.ndindex(*([span + 1] * d)):
        prod = rows[idx[0]]
        for j in range(1, d):
            prod = prod * rows[idx[j]]
        out[idx] = float(np.dot(prod, w_all))
    # spot-check the shared-node rule against the adaptive reference
    for probe in ((0,) * d, (span,) + (0,) * (d - 1), (span,) * d):
        ref = green(probe, d, tol)
        if not abs(out[probe] - ref) <= 50 * tol:  # also catches nan
            raise QuadratureError(
                f"green_grid node rule off by {abs(out[probe] - ref):.3e} at {probe}")
    return out


@dataclass
class CapacityResult:
    """Equilibrium measure e_K on the inner boundary and its total mass."""

    points: tuple[Point, ...]
    weights: np.ndarray
    capacity: float
    residual: float
    d: int

    def equilibrium(self) -> dict[Point, float]:
        return {p: float(w) for p, w in zip(self.points, self.weights)}

    def weight_of(self, p) -> float:
        p = tuple(int(c) for c in p)
        for q, w in zip(self.points, self.weights):
            if q == p:
                return float(w)
        return 0.0


def capacity(K, greens: GreenTable) -> CapacityResult:
    """Solve the last-exit system on inner_boundary(K).

    Interior points carry no equilibrium mass (they return to K in one
    step), so the unknowns live on the boundary only.
    """
    pts = [tuple(int(c) for c in p) for p in K]
    if not pts:
        raise GuardError("capacity of the empty set is undefined")
    d = greens.d
    if any(len(p) != d for p in pts):
        raise GuardError("point dimension does not match the GreenTable")
    bnd = sorted(inner_boundary(pts))
    n = len(bnd)
    if n > 20000:
        raise GuardError(f"boundary system too large ({n} unknowns)")
    arr = np.asarray(bnd, dtype=np.int64)
    span = int(np.abs(arr[:, None, :] - arr[None, :, :]).max())
    if n * n > 4 * len(greens._values) and n > 64:
        grid = green_grid(d, span, greens.tol)
        diffs = np.abs(arr[:, None, :] - arr[None, :, :])
        diffs = np.sort(diffs, axis=2)[:, :, ::-1]
        G = grid[tuple(diffs[:, :, j] for j in range(d))]
    else:
        G = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                v = greens.value(arr[i] - arr[j])
                G[i, j] = v
                G[j, i] = v
    ones = np.ones(n)
    try:
        e = lin_solve(G, ones, assume_a="pos")
    except np.linalg.LinAlgError:
        try:
            e = lin_solve(G, ones)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"singular last-exit system, cond~{np.linalg.cond(G):.3e}") from exc
    residual = float(np.abs(G @ e - ones).max())
    if residual > 1e-10 * max(1.0, float(np.abs(e).sum())):
        raise SolveError(
            f"last-exit residual {residual:.3e} too large, cond~{np.linalg.cond(G):.3e}")
    if e.min() < -1e-9:
        raise ConsistencyError(f"negative equilibrium mass {e.min():.3e}")
    e = np.clip(e, 0.0, None)
    return CapacityResult(points=tuple(map(tuple, bnd)), weights=e,
                          capacity=float(e.sum()), residual=residual, d=d)


_BOX_CAP_CACHE: dict = {}


def box_capacity(N: int, d: int = 3, greens: GreenTable | None = None) -> CapacityResult:
    """capacity(B(0,N)) with a per-process cache; the N=16 solve is heavy."""
    key = (d, N)
    hit = _BOX_CAP_CACHE.get(key)
    if hit is not None:
        return hit
    if greens is None:
        greens = GreenTable(d)
    pts = [tuple(p) for p in np.stack(np.meshgrid(
        *([np.arange(-N, N + 1)] * d), indexing="ij"), axis=-1).reshape(-1, d)]
    res = capacity(pts, greens)
    _BOX_CAP_CACHE[key] = res
    return res


def hitting_probability(K, x, cap_res: CapacityResult, greens: GreenTable) -> float:
    """P_x[walk ever hits K] = sum_y G(x,y) e_K(y), for x outside K."""
    x = tuple(int(c) for c in x)
    Kset = {tuple(int(c) for c in p) for p in K}
    if x in Kset:
        raise GuardError("hitting_probability expects x outside K")
    acc = 0.0
    for p, w in zip(cap_res.points, cap_res.weights):
        acc += greens.value(np.subtract(x, p)) * float(w)
    if acc < -1e-9 or acc > 1.0 + 1e-9:
        raise ConsistencyError(f"hitting probability {acc} outside [0,1]")
    return min(1.0, max(0.0, acc))


@dataclass
class EscapeResult:
    d: int
    p_esc: float
    green_sum: float


def escape_probability_hypercube(d: int, tol: float = DEFAULT_TOL) -> EscapeResult:
    """P_0[never return to {0,1}^d] via green_sum = d * int Z(u)^d du."""
    if d < 3:
        raise GuardError(f"escape probability needs d >= 3, got {d}")

    def zd(u):
        return (ive(0, u) + ive(1, u)) ** d

    head, e1 = quad(zd, 0.0, 60.0, epsabs=tol * 0.25, epsrel=1e-13, limit=400)
    tail, e2 = quad(zd, 60.0, np.inf, epsabs=tol * 0.25, epsrel=1e-13, limit=400)
    if e1 + e2 > tol:
        raise QuadratureError(f"escape quadrature error {e1 + e2:.3e} exceeds {tol:.3e}")
    gs = d * (head + tail)
    p = 1.0 / gs
    if abs(p * gs - 1.0) > 1e-12:
        raise ConsistencyError("reciprocal identity violated")
    return EscapeResult(d=d, p_esc=p, green_sum=gs)


def kill_radius_for_bias(cap_value: float, N: int, delta: float, d: int = 3) -> int:
    """Smallest kill radius with declared per-trajectory return bias <= delta.

    Bias bound: a walk dying at |y|_inf >= R re-enters B(0,N) with
    probability <= cap(B(0,N)) * sup_{|z|_inf >= R-N} G(z).
    """
    if delta <= 0 or delta > 1:
        raise GuardError("delta must lie in (0, 1]")
    R = max(4 * N, N + 2)
    while cap_value * green_upper_envelope(R - N, d) > delta:
        R += 1 + R // 16
    while R > max(4 * N, N + 2) and cap_value * green_upper_envelope(R - 1 - N, d) <= delta:
        R -= 1
    return R
