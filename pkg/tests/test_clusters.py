import math

import numpy as np
import pytest

from rilab.clusters import (PAIR_CSV_HEADER, build_pair, components,
                            components_brute, crossing_event,
                            good_vertex_field, intersection_crossing_witness,
                            one_arm_event, pair_csv_row, seed_E, seed_F,
                            seed_G_empty, seed_params, two_largest,
                            SeedEventParams)
from rilab.errors import GuardError
from rilab.interlace import InterlacementSample, sample_interlacement
from rilab.rng import RNGStream

CAP_SINGLETON = 0.6594626704490011


def _pack(bits: np.ndarray, nwords: int) -> np.ndarray:
    buf = np.zeros(nwords * 64, dtype=np.uint8)
    buf[:bits.size] = bits
    return np.packbits(buf, bitorder="little").view(np.uint64).copy()


def _handmade(window, points, edge_list=None, u=1.0):
    """Sample with an explicit occupied set and edge set."""
    side, N = window.side, window.N
    occ_bits = np.zeros(window.nsites, dtype=np.uint8)
    strides = np.array([side * side, side, 1], dtype=np.int64)

    def widx(p):
        return int(sum((c + N) * s for c, s in zip(p, strides)))

    for p in points:
        occ_bits[widx(p)] = 1
    edges = None
    if edge_list is not None:
        ebits = np.zeros(window.d * window.nsites, dtype=np.uint8)
        for a, b in edge_list:
            d = np.array(b) - np.array(a)
            axis = int(np.flatnonzero(d)[0])
            lower = a if d[axis] > 0 else b
            ebits[3 * widx(lower) + axis] = 1
        edges = _pack(ebits, window.edge_words)
    return InterlacementSample(window, u, len(points), _pack(occ_bits,
                                                            window.occ_words),
                               edges)


def test_components_match_brute():
    r = RNGStream(2712, (0,))
    for i in range(10):
        gen = r.child(i).generator()
        for shape in [(8, 8), (5, 5, 5)]:
            occ = gen.random(shape) < (0.3 if i % 2 else 0.6)
            for mode in ("nearest", "star"):
                fast = components(occ, mode)
                slow = components_brute(occ, mode)
                assert fast.n_components == slow.n_components
                assert np.array_equal(fast.labels, slow.labels)
                assert np.array_equal(fast.sizes, slow.sizes)
                assert (fast.labels[~occ] == -1).all()


def test_components_trivials():
    empty = components(np.zeros((4, 4, 4), dtype=bool))
    assert empty.n_components == 0 and two_largest(empty) == (0, 0)
    full = components(np.ones((3, 3), dtype=bool))
    assert full.n_components == 1
    assert two_largest(full) == (9, 0)
    assert full.size_of(0) == 9
    assert empty.size_of(0) == 0
    with pytest.raises(GuardError):
        components(np.ones((2, 2), dtype=bool), mode="diag")


def test_crossing_explicit_path():
    occ = np.zeros((9, 9, 9), dtype=bool)
    occ[4:, 4, 4] = True  # straight ray from the center to the face
    assert crossing_event(occ, 2)
    assert one_arm_event(occ, 4)
    broken = occ.copy()
    broken[7, 4, 4] = False
    assert not crossing_event(broken, 2)
    assert not one_arm_event(broken, 4)


def test_crossing_trivials_and_guards():
    assert crossing_event(np.ones((9, 9, 9), dtype=bool), 2)
    assert not crossing_event(np.zeros((9, 9, 9), dtype=bool), 2)
    assert not one_arm_event(np.zeros((9, 9, 9), dtype=bool), 4)
    no_origin = np.ones((9, 9, 9), dtype=bool)
    no_origin[4, 4, 4] = False
    assert not one_arm_event(no_origin, 4)
    with pytest.raises(GuardError):
        crossing_event(np.ones((9, 9, 9), dtype=bool), 3)  # needs N >= 2L
    with pytest.raises(GuardError):
        one_arm_event(np.ones((9, 9, 9), dtype=bool), 5)
    with pytest.raises(GuardError):
        crossing_event(np.ones((9, 9, 9), dtype=bool), 0)


def test_adjacency_mode_sensitivity():
    occ = np.zeros((9, 9, 9), dtype=bool)
    for k in range(5):
        occ[4 + k, 4 + k, 4] = True  # diagonal in a plane
    assert one_arm_event(occ, 4, mode="star")
    assert not one_arm_event(occ, 4, mode="nearest")


def test_build_pair_wiring(window2, window4, greens3):
    s1 = sample_interlacement(window2, 1.0, RNGStream(21, (0,)),
                              want_edges=True, greens=greens3)
    s2 = sample_interlacement(window2, 1.0, RNGStream(21, (1,)), greens=greens3)
    pair = build_pair(s1, s2)
    assert np.array_equal(pair.occ_K, pair.occ1 & pair.occ2)
    assert np.array_equal(pair.occ_V, ~pair.occ_K)
    assert pair.edges1 is not None and pair.u1 == 1.0
    s_other = sample_interlacement(window4, 1.0, RNGStream(21, (2,)),
                                   greens=greens3)
    with pytest.raises(GuardError):
        build_pair(s1, s_other)


def test_seed_params(greens3):
    p = seed_params(2, 1.0, greens3)
    assert p.L0 == 2
    assert abs(p.m_u1 - (1.0 - math.exp(-CAP_SINGLETON))) < 1e-12
    with pytest.raises(GuardError):
        SeedEventParams(0, 1.0, 0.5)
    with pytest.raises(GuardError):
        SeedEventParams(2, 1.0, 1.0)
    with pytest.raises(GuardError):
        SeedEventParams(2, 1.0, 0.0)


def test_seed_trivials(window4, greens3):
    all_pts = [(x, y, z)
               for x in range(-4, 5) for y in range(-4, 5)
               for z in range(-4, 5)]
    full = _handmade(window4, all_pts)
    empty = _handmade(window4, [])
    p2 = seed_params(2, 1.0, greens3)       # m ~ 0.48 < 4/5
    assert seed_E(full, (-2, -2, -2), p2, use_edge_graph=False)
    assert not seed_E(empty, (-2, -2, -2), p2, use_edge_graph=False)
    # full box overfills every subbox whenever the target density < 4/5
    assert not seed_F(full, (-2, -2, -2), p2)
    assert seed_F(empty, (-2, -2, -2), p2)
    dense = SeedEventParams(2, 99.0, 0.9)   # 1.25 * 0.9 > 1: cap unreachable
    assert seed_F(full, (-2, -2, -2), dense)
    assert seed_G_empty(full, (-2, -2, -2), 2)
    assert not seed_G_empty(empty, (-2, -2, -2), 2)
    with pytest.raises(GuardError):
        seed_F(full, (4, 4, 4), p2)         # doubled box leaves the window
    with pytest.raises(GuardError):
        seed_E(full, (-2, -2, -2), p2)      # edge graph without edges


def test_seed_edge_graph_sensitivity(window2, greens3):
    cube = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    chain = [((0, 0, 0), (1, 0, 0)), ((1, 0, 0), (1, 1, 0)),
             ((1, 1, 0), (0, 1, 0)), ((0, 1, 0), (0, 1, 1)),
             ((0, 1, 1), (1, 1, 1)), ((1, 1, 1), (1, 0, 1)),
             ((1, 0, 1), (0, 0, 1))]
    p1 = seed_params(1, 1.0, greens3)
    connected = _handmade(window2, cube, chain)
    assert seed_E(connected, (0, 0, 0), p1, use_edge_graph=True)
    assert seed_E(connected, (0, 0, 0), p1, use_edge_graph=False)
    # drop the bridge between the two square faces: the vertex graph
    # still connects the cube, the traversed-edge graph does not
    split = _handmade(window2, cube, chain[:3] + chain[4:])
    assert not seed_E(split, (0, 0, 0), p1, use_edge_graph=True)
    assert seed_E(split, (0, 0, 0), p1, use_edge_graph=False)


def test_seed_rates_scale_trend(window4, greens3):
    """Frozen 200-sample protocol; counts are exact under the stream."""
    r = RNGStream(606, (1,))
    p2 = seed_params(2, 1.0, greens3)
    p4 = seed_params(4, 1.0, greens3)
    cnt = {"E2": 0, "E4": 0, "F2": 0, "F4": 0}
    for i in range(200):
        s = sample_interlacement(window4, 1.0, r.child(0, i), want_edges=True,
                                 greens=greens3)
        cnt["E2"] += seed_E(s, (-2, -2, -2), p2)
        cnt["E4"] += seed_E(s, (-4, -4, -4), p4)
        cnt["F2"] += seed_F(s, (-2, -2, -2), p2)
        cnt["F4"] += seed_F(s, (-4, -4, -4), p4)
    assert cnt == {"E2": 12, "E4": 15, "F2": 27, "F4": 44}
    assert cnt["E4"] >= cnt["E2"] and cnt["F4"] > cnt["F2"]


def test_seed_full_occupancy_rate_increases_with_level(window2, greens3):
    r = RNGStream(606, (1,))
    rates = []
    for j, u2 in enumerate([1.0, 4.0, 12.0]):
        g = sum(seed_G_empty(
            sample_interlacement(window2, u2, r.child(1, j, i), greens=greens3),
            (-2, -2, -2), 2) for i in range(200))
        rates.append(g)
    assert rates == [0, 27, 198]
    assert rates[0] < rates[1] < rates[2]


def test_good_vertex_field_protocol(window4, greens3):
    """100 pairs at u1=4, u2=12, stride 2: every crossing has a K witness."""
    rf = RNGStream(404, (6,))
    pf = seed_params(2, 4.0, greens3)
    nonvac = crossed = violations = 0
    for i in range(100):
        s1 = sample_interlacement(window4, 4.0, rf.child(0, i),
                                  want_edges=True, greens=greens3)
        s2 = sample_interlacement(window4, 12.0, rf.child(1, i),
                                  greens=greens3)
        pair = build_pair(s1, s2)
        field = good_vertex_field(pair, pf)
        nonvac += field.grid.any()
        if field.crossing:
            crossed += 1
            if not intersection_crossing_witness(pair, field):
                violations += 1
    assert violations == 0
    assert (nonvac, crossed) == (88, 48)


def test_vacant_second_component_is_negligible(window4, greens3):
    rf = RNGStream(404, (6,))
    worst = 0.0
    for i in range(200):
        s1 = sample_interlacement(window4, 0.2, rf.child(2, i), greens=greens3)
        s2 = sample_interlacement(window4, 0.2, rf.child(3, i), greens=greens3)
        v1, v2 = two_largest(components(build_pair(s1, s2).occ_V, "nearest"))
        assert v1 > 0
        worst = max(worst, v2 / v1)
    assert worst < 0.2


def test_pair_csv_row(window4, greens3):
    s1 = sample_interlacement(window4, 0.5, RNGStream(23, (0,)), greens=greens3)
    s2 = sample_interlacement(window4, 0.5, RNGStream(23, (1,)), greens=greens3)
    pair = build_pair(s1, s2)
    row = pair_csv_row(7, pair, 2)
    fields = row.split(",")
    assert len(fields) == len(PAIR_CSV_HEADER.split(","))
    assert fields[0] == "7" and fields[3] == "2"
    assert fields[4] in ("0", "1") and fields[5] in ("0", "1")
    assert int(fields[6]) >= int(fields[7])
    assert int(fields[8]) >= int(fields[9])


def test_witness_requires_crossing(window4, greens3):
    s1 = _handmade(window4, [(0, 0, 0)], [])
    s2 = _handmade(window4, [])
    pair = build_pair(s1, s2)
    field = good_vertex_field(pair, seed_params(2, 4.0, greens3))
    assert not field.crossing and not field.grid.any()
    with pytest.raises(GuardError):
        intersection_crossing_witness(pair, field)
