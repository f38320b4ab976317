import json

import numpy as np
import pytest

from rilab.errors import ConsistencyError, GuardError
from rilab.hypercube import (CELL_OFFSETS, HC_CSV_HEADER, HypercubeConfig,
                             atoms, bernoulli_hypercube, domination_margin_check,
                             five_cell_seed, five_from_cells, sample_five_cell,
                             slab_scan, ubiquitous, ubiquity_csv_row)
from rilab.rng import RNGStream


def test_config_guards():
    with pytest.raises(GuardError):
        HypercubeConfig(1, np.zeros(2, dtype=bool))
    with pytest.raises(GuardError):
        HypercubeConfig(25, np.zeros(1 << 25, dtype=bool))
    with pytest.raises(GuardError):
        HypercubeConfig(4, np.zeros(15, dtype=bool))
    with pytest.raises(GuardError):
        bernoulli_hypercube(6, 1.5, RNGStream(1, (0,)))


def test_bernoulli_count():
    cfg = bernoulli_hypercube(10, 0.5, RNGStream(333, (0,)))
    assert cfg.count() == 535
    assert abs(cfg.count() - 512) <= 3 * np.sqrt(1024 * 0.25)


def test_atoms_trivials():
    empty = HypercubeConfig(4, np.zeros(16, dtype=bool))
    assert atoms(empty) == []
    full = HypercubeConfig(4, np.ones(16, dtype=bool))
    assert atoms(full) == []                      # 16 is not > d^2 = 16
    got = atoms(full, threshold=15)
    assert len(got) == 1 and got[0].size == 16
    with pytest.raises(GuardError):
        atoms(full, threshold=0)


def test_atoms_nest_with_threshold():
    r = RNGStream(333, (2,))
    for i in range(10):
        cfg = bernoulli_hypercube(8, 0.55, r.child(i))
        loose = {frozenset(a.tolist()) for a in atoms(cfg, threshold=4)}
        tight = {frozenset(a.tolist()) for a in atoms(cfg, threshold=20)}
        assert tight <= loose
        sizes = [a.size for a in atoms(cfg, threshold=4)]
        assert sizes == sorted(sizes, reverse=True)
        assert all(s > 4 for s in sizes)


def test_ubiquitous_trivials():
    full = ubiquitous(HypercubeConfig(6, np.ones(64, dtype=bool)))
    assert full.found and full.closure == 64
    assert full.component.size == 64
    empty = ubiquitous(HypercubeConfig(6, np.zeros(64, dtype=bool)))
    assert not empty.found and empty.closure == 0
    lone = np.zeros(64, dtype=bool)
    lone[0] = True
    assert not ubiquitous(HypercubeConfig(6, lone)).found
    assert abs(full.threshold - (1 - 1 / 36) * 64) < 1e-12


def test_ubiquitous_dense_example():
    cfg = bernoulli_hypercube(12, 0.9, RNGStream(333, (1,)))
    rep = ubiquitous(cfg)
    assert rep.found
    assert rep.closure > rep.threshold
    row = ubiquity_csv_row(12, 0.9, rep, 333)
    assert len(row.split(",")) == len(HC_CSV_HEADER.split(","))
    assert row.split(",")[2] == "1"


def test_ubiquitous_monotone_under_supersets():
    r = RNGStream(333, (3,))
    for i in range(20):
        base = bernoulli_hypercube(8, 0.8, r.child(0, i))
        extra = bernoulli_hypercube(8, 0.1, r.child(1, i))
        sup = HypercubeConfig(8, base.occupancy | extra.occupancy)
        if ubiquitous(base).found:
            assert ubiquitous(sup).found


def test_uniqueness_stress():
    r = RNGStream(333, (4,))
    ps = (0.05, 0.3, 0.6, 0.88, 0.97)
    found = {p: 0 for p in ps}
    for i in range(200):
        p = ps[i % len(ps)]
        rep = ubiquitous(bernoulli_hypercube(10, p, r.child(i)))
        found[p] += rep.found
    assert found[0.05] == 0
    assert found[0.97] == 40


def test_five_cell_construction_roundtrip():
    five = sample_five_cell(6, 0.7, RNGStream(333, (5,)))
    cells = {name: five.cell(name) for name, _ in CELL_OFFSETS}
    back = five_from_cells(cells, 6)
    assert np.array_equal(back.global_occ, five.global_occ)


def test_five_cell_facet_violation():
    five = sample_five_cell(6, 0.7, RNGStream(333, (6,)))
    cells = {name: five.cell(name) for name, _ in CELL_OFFSETS}
    bad = cells["east"].occupancy.copy()
    bad[0] = not bad[0]          # local vertex 0 sits on the shared facet
    cells["east"] = HypercubeConfig(6, bad)
    with pytest.raises(ConsistencyError):
        five_from_cells(cells, 6)


def test_five_cell_seed_trivials():
    n = 1 << 6
    full = {name: HypercubeConfig(6, np.ones(n, dtype=bool))
            for name, _ in CELL_OFFSETS}
    assert five_cell_seed(five_from_cells(full, 6))
    empty = {name: HypercubeConfig(6, np.zeros(n, dtype=bool))
             for name, _ in CELL_OFFSETS}
    assert not five_cell_seed(five_from_cells(empty, 6))


def test_five_cell_seed_dense():
    r = RNGStream(333, (7,))
    hits = sum(five_cell_seed(sample_five_cell(8, 0.97, r.child(i)))
               for i in range(20))
    assert hits == 20
    assert five_cell_seed(sample_five_cell(10, 0.95, r.child(99)))


def test_slab_trivials_and_guards():
    assert slab_scan(np.ones((5, 5), dtype=bool))
    assert not slab_scan(np.zeros((5, 5), dtype=bool))
    row = np.zeros((5, 5), dtype=bool)
    row[2, :] = True
    assert slab_scan(row)
    row[2, 3] = False
    assert not slab_scan(row)
    col = np.zeros((5, 5), dtype=bool)
    col[:, 2] = True
    assert not slab_scan(col)
    with pytest.raises(GuardError):
        slab_scan(np.ones(5, dtype=bool))
    with pytest.raises(GuardError):
        slab_scan(np.ones((0, 5), dtype=bool))


def test_slab_supercritical():
    r = RNGStream(333, (8,))
    hits = sum(slab_scan(r.child(i).generator().random((20, 20)) < 0.9)
               for i in range(20))
    assert hits == 20


def test_domination_guards():
    r = RNGStream(404, (0,))
    with pytest.raises(GuardError):
        domination_margin_check(3, [(0, 0, 0)] * 5, 10, r)
    with pytest.raises(GuardError):
        domination_margin_check(7, [(0,) * 7], 10, r)
    with pytest.raises(GuardError):
        domination_margin_check(3, [(0, 2, 0)], 10, r)
    with pytest.raises(GuardError):
        domination_margin_check(3, [(0, 0)], 10, r)


def test_domination_empty_set_exact():
    rep = domination_margin_check(4, [], 50, RNGStream(404, (1,)))
    assert rep.estimate == 1.0 and rep.se == 0.0
    assert rep.bound == 1.0 and rep.holds
    assert rep.note == "empty set, exact"


def test_domination_single_vertex(greens3):
    rep = domination_margin_check(3, [(0, 0, 0)], 3000, RNGStream(404, (2,)),
                                  greens=greens3)
    assert rep.holds and rep.margin > 0.2
    assert rep.bias_bound <= 0.03
    assert 0.0 < rep.bound < rep.estimate
    assert rep.ci_low <= rep.estimate <= rep.ci_high


def test_domination_pair_high_dim():
    rep = domination_margin_check(5, [(0,) * 5, (1,) * 5], 2000,
                                  RNGStream(404, (3,)))
    assert rep.holds
    assert rep.bias_bound <= 0.03
    assert rep.p_esc > 0.2


def test_domination_report_json():
    rep = domination_margin_check(4, [(0, 0, 0, 0), (1, 1, 1, 1)], 500,
                                  RNGStream(404, (4,)))
    out = json.loads(rep.to_json())
    assert out["S"] == [[0, 0, 0, 0], [1, 1, 1, 1]]
    assert isinstance(out["holds"], bool)
    assert out["note"] == "c1 instantiated as computed escape probability"
    assert out["trials"] == 500
