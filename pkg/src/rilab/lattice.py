"""Geometry of Z^d: l-infinity boxes, boundaries, neighborhoods, planar discs.

Points are integer tuples at the API; bulk enumerations return int64 arrays
of shape (n, d). Window indexing (the flat site index used by occupancy
bitsets and the sampling kernels) lives here so every module agrees on it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import GuardError

Point = tuple[int, ...]


def _as_point(p) -> Point:
    return tuple(int(c) for c in p)


def neighbors(p, mode: str = "nearest") -> list[Point]:
    """Neighbors of p: 2d under nearest, 3^d - 1 under star adjacency."""
    p = _as_point(p)
    d = len(p)
    if mode == "nearest":
        out = []
        for i in range(d):
            for s in (1, -1):
                q = list(p)
                q[i] += s
                out.append(tuple(q))
        return out
    if mode == "star":
        out = []
        for off in itertools.product((-1, 0, 1), repeat=d):
            if any(off):
                out.append(tuple(a + b for a, b in zip(p, off)))
        return out
    raise GuardError(f"unknown adjacency mode {mode!r}")


@dataclass(frozen=True)
class LatticeBox:
    """Closed l-infinity ball B(center, radius)."""

    center: Point
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise GuardError("box radius must be >= 0")
        object.__setattr__(self, "center", _as_point(self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def size(self) -> int:
        return self.side ** self.d

    def contains(self, p) -> bool:
        return all(abs(int(c) - cc) <= self.radius for c, cc in zip(p, self.center))

    def points(self) -> np.ndarray:
        return box_points(self.center, self.radius)

    def boundary_points(self) -> np.ndarray:
        """Inner boundary of the box: points at l-inf distance exactly radius."""
        pts = self.points()
        if self.radius == 0:
            return pts
        dist = np.abs(pts - np.asarray(self.center, dtype=np.int64)).max(axis=1)
        return pts[dist == self.radius]


def box_points(center, radius: int) -> np.ndarray:
    center = np.asarray(_as_point(center), dtype=np.int64)
    d = center.shape[0]
    ax = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts + center


def inner_boundary(K) -> set[Point]:
    """Points of the finite set K having a nearest neighbor outside K."""
    ks = {_as_point(p) for p in K}
    out = set()
    for p in ks:
        for q in neighbors(p):
            if q not in ks:
                out.add(p)
                break
    return out


def box_inner_boundary_count(N: int, d: int) -> int:
    # (2N+1)^d - (2N-1)^d, the trivial closed form
    if N == 0:
        return 1
    return (2 * N + 1) ** d - (2 * N - 1) ** d


@dataclass(frozen=True)
class DiscSpec:
    """Planar disc in Z^3: {y : y3 = c3, |y1-c1|, |y2-c2| <= halfwidth},
    or its quarter version with 0 <= y_i - c_i <= halfwidth."""

    center: Point
    halfwidth: int
    quarter: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        if len(self.center) != 3:
            raise GuardError("discs are defined for d=3 only")
        if self.halfwidth < 0:
            raise GuardError("disc halfwidth must be >= 0")


def enumerate_disc(spec: DiscSpec) -> np.ndarray:
    c = np.asarray(spec.center, dtype=np.int64)
    lo = 0 if spec.quarter else -spec.halfwidth
    ax = np.arange(lo, spec.halfwidth + 1, dtype=np.int64)
    g1, g2 = np.meshgrid(ax, ax, indexing="ij")
    n = g1.size
    pts = np.empty((n, 3), dtype=np.int64)
    pts[:, 0] = g1.ravel() + c[0]
    pts[:, 1] = g2.ravel() + c[1]
    pts[:, 2] = c[2]
    return pts


def window_index(pts, N: int) -> np.ndarray:
    """Flat row-major index of points inside B(0,N); the kernels use the
    same convention, so bitsets are interchangeable across modules."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
    if np.abs(pts).max(initial=0) > N:
        raise GuardError("point outside window")
    side = 2 * N + 1
    idx = np.zeros(pts.shape[0], dtype=np.int64)
    for j in range(pts.shape[1]):
        idx = idx * side + (pts[:, j] + N)
    return idx


def window_unindex(idx, N: int, d: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    side = 2 * N + 1
    out = np.empty((idx.shape[0], d), dtype=np.int64)
    rem = idx.copy()
    for j in range(d - 1, -1, -1):
        out[:, j] = rem % side - N
        rem //= side
    return out
