import math

import numpy as np
import pytest

from rilab.errors import GuardError
from rilab.lattice import box_points
from rilab.potential import (GreenTable, box_capacity, capacity,
                             escape_probability_hypercube, green,
                             green_asymptotic_constant, green_grid,
                             green_upper_envelope, hitting_probability,
                             kill_radius_for_bias)
from rilab.rng import RNGStream

G00 = 1.5163860591519778


def test_green_origin_frozen():
    assert abs(green((0, 0, 0)) - G00) < 1e-10


def test_green_e1_harmonic_identity():
    # one-step identity at x=0 plus symmetry forces G(e1) = G(0) - 1
    assert abs(green((1, 0, 0)) - (G00 - 1.0)) < 1e-9


def test_green_symmetry(greens3):
    v = greens3.value((1, -2, 0))
    for perm in ((0, 2, -1), (-2, 1, 0), (2, 0, 1)):
        assert greens3.value(perm) == v


def test_green_ray_lower_bound():
    # G(n,0,0)*n decays toward the asymptotic constant from above;
    # fit C from n <= 2 with an 8% decay allowance
    C = 0.92 * 2.0 * green((2, 0, 0))
    assert green((3, 0, 0)) >= C / 3.0


def test_green_envelope_dominates(greens3):
    for x in ((1, 0, 0), (2, 1, 0), (3, 3, 3), (4, 0, 1)):
        r = max(abs(c) for c in x)
        assert greens3.value(x) <= green_upper_envelope(r)


def test_harmonic_residuals(greens3):
    greens3.bulk_fill_box(4)
    for x in np.ndindex(4, 4, 4):
        if max(x) <= 3:
            assert abs(greens3.harmonic_residual(x)) <= 1e-8


def test_green_grid_matches_pointwise(greens3):
    g = green_grid(3, 2)
    for x in ((0, 0, 0), (1, 0, 0), (2, 2, 1), (2, 0, 0)):
        key = tuple(sorted(x, reverse=True))
        assert abs(g[key] - greens3.value(x)) < 1e-9


def test_green_rejects_low_dim():
    with pytest.raises(GuardError):
        green((0, 0), d=2)


def test_capacity_singleton(greens3):
    res = capacity(np.array([[0, 0, 0]]), greens3)
    assert abs(res.capacity - 1.0 / G00) < 1e-10
    assert abs(res.capacity - 0.6594626704490011) < 1e-12
    assert res.residual < 1e-10


def test_capacity_pair_closed_form(greens3):
    res = capacity(np.array([[0, 0, 0], [1, 0, 0]]), greens3)
    assert abs(res.capacity - 2.0 / (2.0 * G00 - 1.0)) < 1e-10
    assert abs(res.capacity - 0.9838781150091229) < 1e-12


def test_capacity_monotone_inclusion(greens3):
    c_small = capacity(np.array([[0, 0, 0]]), greens3).capacity
    c_box = box_capacity(1, greens=greens3).capacity
    assert c_box > c_small
    assert abs(c_box - 3.1562058438739489) < 1e-10


def test_equilibrium_interior_zero(greens3):
    res = box_capacity(2, greens=greens3)
    # only the 98 inner-boundary sites carry mass
    assert len(res.points) == 98
    assert all(w > 0 for w in res.weights)
    assert abs(sum(res.weights) - res.capacity) < 1e-12


def test_capacity_subadditive_random_pairs(greens3):
    gen = RNGStream(2711, (0,)).generator()
    for _ in range(50):
        A = np.unique(gen.integers(-2, 3, size=(3, 3)), axis=0)
        B = np.unique(gen.integers(-2, 3, size=(3, 3)), axis=0)
        U = np.unique(np.vstack([A, B]), axis=0)
        ca = capacity(A, greens3).capacity
        cb = capacity(B, greens3).capacity
        cu = capacity(U, greens3).capacity
        assert cu <= ca + cb + 1e-12


def test_escape_identity_all_dims():
    p3 = escape_probability_hypercube(3)
    assert abs(p3.p_esc * p3.green_sum - 1.0) < 1e-8
    assert abs(p3.p_esc - 0.23145682654100197) < 1e-10
    p16 = escape_probability_hypercube(16)
    assert p16.p_esc > p3.p_esc
    assert abs(p16.p_esc - 0.46651032701597267) < 1e-10
    for d in range(4, 16):
        r = escape_probability_hypercube(d)
        assert abs(r.p_esc * r.green_sum - 1.0) < 1e-8


def test_hitting_probability_values(greens3):
    cap0 = capacity(np.array([[0, 0, 0]]), greens3)
    h = hitting_probability(np.array([[0, 0, 0]]), (1, 0, 0), cap0, greens3)
    assert abs(h - (G00 - 1.0) / G00) < 1e-10
    assert abs(h - 0.3405373295510008) < 1e-12
    prev = 1.0
    for n in (5, 10, 20):
        v = hitting_probability(np.array([[0, 0, 0]]), (n, 0, 0), cap0, greens3)
        assert 0.0 < v < prev
        prev = v


def test_kill_radius_for_bias(greens3):
    cap2 = box_capacity(2, greens=greens3).capacity
    r = kill_radius_for_bias(cap2, 2, 0.01)
    assert r == 290
    assert kill_radius_for_bias(cap2, 2, 0.005) > r


def test_green_table_frozen_roundtrip(greens3):
    text = greens3.to_json()
    loaded = GreenTable.from_json(text)
    assert loaded.value((1, 1, 0)) == greens3.value((1, 1, 0))
    with pytest.raises(GuardError):
        loaded.value((9, 9, 9))
