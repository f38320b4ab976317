"""End-to-end acceptance checks.

One test per numbered item in the release checklist. Each runs the full
pipeline at its stated sample sizes, prints a single PASS/FAIL line,
and asserts every tolerance plus the wall-clock budget. Tolerances are
never loosened here; a red line means the claim failed at scale.
"""
import itertools
import math
import time

import numpy as np

from rilab.cli import cli_dispatch
from rilab.hypercube import (HypercubeConfig, bernoulli_hypercube,
                             domination_margin_check, ubiquitous)
from rilab.interlace import sample_occupancy_bank, vacuum_probability_test
from rilab.phase import PhaseGridSpec, estimate_cell, scan_grid
from rilab.potential import (box_capacity, capacity,
                             escape_probability_hypercube, green)
from rilab.renorm import (RenormScheme, decoupling_log_rhs, epsilon_error,
                          hierarchical_event, hierarchical_event_brute,
                          path_implies_hierarchical, trigger_certificate)
from rilab.rng import RNGStream
from rilab.stats import fmt17
from rilab.walk import (annulus_intersection_estimate, cut_times,
                        mc_escape_probability, mc_green_at_origin,
                        simulate_walk)

G00 = 1.5163860591519778
P_ESC3 = 0.23145682654100197


def _report(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def _half(est) -> float:
    return 0.5 * (est.ci_high - est.ci_low)


def test_criterion_01_vacuum_law(greens3):
    t0 = time.monotonic()
    ball = list(itertools.product((-1, 0, 1), repeat=3))
    sets = [
        ("origin", [(0, 0, 0)]),
        ("pair", [(0, 0, 0), (1, 0, 0)]),
        ("ball", ball),
    ]
    bad = []
    caps = {}
    i = 0
    for name, pts in sets:
        caps[name] = capacity(np.array(pts), greens3).capacity
        for u in (0.5, 1.0):
            est = vacuum_probability_test(pts, u, 20_000,
                                          RNGStream(777, (i,)),
                                          greens=greens3)
            want = math.exp(-u * caps[name])
            tol = 3.0 * est.se + est.bias_bound
            if not abs(est.estimate - want) <= tol:
                bad.append(f"{name}@u={u}: {est.estimate:.4f} vs {want:.4f}")
            i += 1
    if not abs(caps["origin"] - 1.0 / green((0, 0, 0))) <= 1e-10:
        bad.append("cap(origin) != 1/G(0)")
    if not abs(math.exp(-caps["origin"]) - 0.5172) < 1e-4:
        bad.append("origin reference value")
    if not abs(math.exp(-caps["pair"]) - 0.3739) < 1e-4:
        bad.append("pair reference value")
    dt = time.monotonic() - t0
    _report(1, not bad and dt <= 600,
            f"6 vacuum cells at 2e4 samples, {dt:.1f}s" +
            (f"; {bad}" if bad else ""))
    assert not bad
    assert dt <= 600


def test_criterion_02_green_quadrature():
    t0 = time.monotonic()
    mc = mc_green_at_origin(100_000, RNGStream(1212, (0,)), kill_radius=128)
    diff = abs(mc.estimate - green((0, 0, 0)))
    worst = 0.0
    for x in itertools.product(range(-3, 4), repeat=3):
        nb = sum(green((x[0] + dx, x[1] + dy, x[2] + dz))
                 for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                    (0, -1, 0), (0, 0, 1), (0, 0, -1))) / 6.0
        res = nb - green(x) + (1.0 if x == (0, 0, 0) else 0.0)
        worst = max(worst, abs(res))
    dt = time.monotonic() - t0
    ok = diff <= 1e-2 and worst <= 1e-8 and dt <= 120
    _report(2, ok, f"mc gap {diff:.2e}, harmonic residual {worst:.2e}, "
                   f"{dt:.1f}s")
    assert diff <= 1e-2
    assert worst <= 1e-8
    assert dt <= 120


def test_criterion_03_escape_identity():
    t0 = time.monotonic()
    worst = 0.0
    esc = {}
    for d in range(3, 17):
        e = escape_probability_hypercube(d)
        esc[d] = e.p_esc
        worst = max(worst, abs(e.p_esc * e.green_sum - 1.0))
    corr, _ = mc_escape_probability(3, 20_000, RNGStream(1313, (0,)),
                                    kill_radius=100)
    gap = abs(corr.estimate - esc[3])
    dt = time.monotonic() - t0
    ok = worst <= 1e-8 and esc[16] > esc[3] and gap <= 3 * corr.se \
        and dt <= 180
    _report(3, ok, f"identity residual {worst:.2e}, mc gap {gap:.4f} "
                   f"(3se {3 * corr.se:.4f}), {dt:.1f}s")
    assert worst <= 1e-8
    assert esc[16] > esc[3]
    assert gap <= 3 * corr.se
    assert dt <= 180


def test_criterion_04_annulus_decay(greens3):
    t0 = time.monotonic()
    scales = (8, 16, 32)
    ests = [annulus_intersection_estimate(M, 20_000, RNGStream(1414, (i,)),
                                          greens=greens3)
            for i, M in enumerate(scales)]
    bad = []
    for j in range(len(scales) - 1):
        slack = 2.0 * (_half(ests[j]) + _half(ests[j + 1]))
        if not ests[j + 1].estimate <= ests[j].estimate + slack:
            bad.append(f"increase at M={scales[j + 1]}")
    his = [(e.estimate + 2 * e.se) * math.log(M)
           for e, M in zip(ests, scales)]
    los = [(e.estimate - 2 * e.se) * math.log(M)
           for e, M in zip(ests, scales)]
    ratio = max(his) / min(los)
    if not (min(los) > 0 and ratio <= 4.0):
        bad.append(f"scaled ratio {ratio:.2f}")
    dt = time.monotonic() - t0
    vals = ", ".join(f"{e.estimate:.4f}" for e in ests)
    _report(4, not bad and dt <= 900,
            f"p_hat {vals}, log-scaled ratio {ratio:.2f}, {dt:.1f}s")
    assert not bad
    assert dt <= 900


def test_criterion_05_cut_time_density():
    t0 = time.monotonic()
    horizon, guard, walks = 10_000, 1_000, 1_000
    root = RNGStream(1515, ())
    dens = np.empty(walks)
    for i in range(walks):
        t = simulate_walk((0,) * 5, ("step_budget", horizon),
                          root.child(0, i), d=5)
        dens[i] = len(cut_times(t, guard)) / (t.steps.shape[0] - guard)
    mean = float(dens.mean())
    low = mean - 1.959963984540054 * float(dens.std(ddof=1)) / math.sqrt(walks)
    dt = time.monotonic() - t0
    ok = low > 0.0 and dt <= 300
    _report(5, ok, f"density {mean:.4f}, ci_low {low:.4f}, {dt:.1f}s")
    assert low > 0.0
    assert dt <= 300


def test_criterion_06_decoupling_algebra():
    t0 = time.monotonic()
    eps = epsilon_error(1.0, 1, 4, d=3)
    bad = []
    if not abs(eps - 0.313035) <= 1e-6:
        bad.append(f"epsilon {eps!r}")
    base = decoupling_log_rhs(0.01, 0, 4, 1e-3, 1e-3)
    for n in range(21):
        if decoupling_log_rhs(0.01, n, 4, 1e-3, 1e-3) != math.ldexp(base, n):
            bad.append(f"doubling at n={n}")
    r1 = trigger_certificate(0.0, 4, 1e-6, 1e-6)
    if r1.verdict != "FAIL" or r1.lhs != 1.0628819999999999:
        bad.append("loud-noise example")
    r2 = trigger_certificate(0.0, 4, 1e-8, 1e-8)
    if r2.verdict != "PASS" or \
            r2.implied_log2_bounds != [-float(2 ** n) for n in range(9)]:
        bad.append("quiet-noise example")
    if any(trigger_certificate(0.5, l0, 0.0, 0.0).verdict != "FAIL"
           for l0 in (1, 4, 100)):
        bad.append("half seed example")
    dt = time.monotonic() - t0
    _report(6, not bad and dt <= 1.0,
            f"epsilon {eps:.6f}, doubling exact to n=20, {dt:.3f}s" +
            (f"; {bad}" if bad else ""))
    assert not bad
    assert dt <= 1.0


def test_criterion_07_hierarchy_exactness(window16):
    t0 = time.monotonic()
    scheme = RenormScheme(2, 4, d=3)
    root = RNGStream(909, (0,))
    ps = (0.1, 0.3, 0.5, 0.7, 0.9)
    pts = [tuple(int(c) for c in p)
           for p in scheme.lattice_points((0, 0, 0), 1)]
    mismatches = 0
    for i in range(200):
        gen = root.child(0, i).generator()
        field = {p: bool(v) for p, v in
                 zip(pts, gen.random(len(pts)) < ps[i % len(ps)])}
        seed_eval = lambda x: field[tuple(int(c) for c in x)]
        fast = hierarchical_event(seed_eval, (0, 0, 0), 1, scheme)
        brute = hierarchical_event_brute(seed_eval, (0, 0, 0), 1, scheme)
        mismatches += fast != brute
    shape = (window16.side,) * 3
    violations = 0
    crossed = 0
    n_fields = 0
    for j, u in enumerate((0.3, 0.6, 1.0)):
        rows = 166 if j == 2 else 167
        occ, _, _ = sample_occupancy_bank(window16, u, rows,
                                          RNGStream(909, (2, j)))
        for i in range(rows):
            bits = np.unpackbits(occ[i].view(np.uint8), bitorder="little")
            grid = bits[:window16.nsites].astype(bool).reshape(shape)
            res = path_implies_hierarchical(grid, 1, scheme)
            violations += not res.holds
            crossed += res.crossed
            n_fields += 1
    dt = time.monotonic() - t0
    ok = mismatches == 0 and violations == 0 and 0 < crossed < n_fields \
        and dt <= 600
    _report(7, ok, f"0/200 fast-brute mismatches, {violations}/{n_fields} "
                   f"implication violations, {crossed} crossed, {dt:.1f}s")
    assert mismatches == 0
    assert n_fields == 500 and violations == 0
    assert 0 < crossed < n_fields
    assert dt <= 600


def test_criterion_08_vacant_monotone(greens3):
    t0 = time.monotonic()
    levels = (0.5, 1.0, 2.0, 4.0)
    row, _ = scan_grid(PhaseGridSpec((1.0,), levels, 8, 400, 2828), "V",
                       greens=greens3)
    col, _ = scan_grid(PhaseGridSpec(levels, (1.0,), 8, 400, 2829), "V",
                       greens=greens3)
    bad = []
    for j in range(len(levels) - 1):
        slack = 2.0 * (_half(row[j]) + _half(row[j + 1]))
        if not row[j + 1].estimate <= row[j].estimate + slack:
            bad.append(f"increase at u2={levels[j + 1]}")
    for j in range(len(levels)):
        slack = 2.0 * (_half(row[j]) + _half(col[j]))
        if not abs(row[j].estimate - col[j].estimate) <= slack:
            bad.append(f"asymmetry at level {levels[j]}")
    e1 = estimate_cell(0.0, 0.0, "V", 8, 10, RNGStream(1, (0,)))
    e2 = estimate_cell(0.0, 2.0, "K", 8, 10, RNGStream(1, (1,)))
    if not (e1.estimate == 1.0 and e1.se == 0.0 and "exact" in e1.notes):
        bad.append("vacant endpoint not exact")
    if not (e2.estimate == 0.0 and e2.se == 0.0 and "exact" in e2.notes):
        bad.append("intersection endpoint not exact")
    dt = time.monotonic() - t0
    vals = ", ".join(f"{e.estimate:.3f}" for e in row)
    _report(8, not bad and dt <= 1800,
            f"V along u2 {vals}, transpose agrees, {dt:.1f}s" +
            (f"; {bad}" if bad else ""))
    assert not bad
    assert dt <= 1800


def test_criterion_09_hypercube_battery():
    t0 = time.monotonic()
    bad = []
    root = RNGStream(1919, ())
    ps = (0.05, 0.3, 0.6, 0.88, 0.97)
    for i in range(1000):
        ubiquitous(bernoulli_hypercube(10, ps[i % len(ps)], root.child(0, i)))
    full = ubiquitous(HypercubeConfig(10, np.ones(1024, dtype=bool)))
    empty = ubiquitous(HypercubeConfig(10, np.zeros(1024, dtype=bool)))
    if not (full.found and not empty.found):
        bad.append("full/empty endpoints")
    hits = sum(ubiquitous(bernoulli_hypercube(12, 0.9, root.child(1, i))).found
               for i in range(100))
    if hits < 95:
        bad.append(f"ubiquity rate {hits}/100")
    analytic = {}
    margins = {}
    for d in range(3, 7):
        analytic[d] = 1.0 - math.exp(-1.0 / green((0,) * d, d=d))
        bound = 1.0 - math.exp(-escape_probability_hypercube(d).p_esc ** 2)
        margins[d] = analytic[d] - bound
        if not analytic[d] > bound:
            bad.append(f"domination at d={d}")
    if not abs(analytic[3] - 0.4829) < 1e-3:
        bad.append("d=3 occupation reference")
    dt = time.monotonic() - t0
    _report(9, not bad and dt <= 600,
            f"1000 uniqueness configs clean, ubiquity {hits}/100, "
            f"domination margins {min(margins.values()):.3f}.."
            f"{max(margins.values()):.3f}, {dt:.1f}s" +
            (f"; {bad}" if bad else ""))
    assert not bad
    assert dt <= 600


def test_criterion_10_cli_reproducibility(tmp_path, capsys):
    ok = True
    assert cli_dispatch(["green"]) == 0
    out = capsys.readouterr().out.strip()
    ok &= out == fmt17(G00)
    assert cli_dispatch(["no-such-subcommand"]) == 1
    ok &= capsys.readouterr().err.strip() != ""
    base = ["scan", "--selector", "V", "--u1", "1", "--u2", "0.5,1",
            "--ell", "4", "--trials", "50", "--seed", "4242"]
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_dispatch(base + ["--threads", "1", "--out", str(f1)]) == 0
    assert cli_dispatch(base + ["--threads", "4", "--out", str(f2)]) == 0
    capsys.readouterr()
    ok &= f1.read_bytes() == f2.read_bytes()
    with capsys.disabled():
        _report(10, ok, "green value, usage failure, byte-stable scan")
    assert out == fmt17(G00)
    assert f1.read_bytes() == f2.read_bytes()
    assert ok
