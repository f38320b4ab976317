"""Command line front end and experiment orchestration.

Every subcommand resolves its parameters (flags beat config file), runs
one experiment, writes results to --out when given, and drops a sidecar
manifest with parameter record and output digests next to each output
file. Replicate-indexed streams make --threads a pure speed knob; in
this build the work is sequential and the flag is accepted for
interface stability.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone

import click
import numpy as np

from . import __version__
from .clusters import PAIR_CSV_HEADER, build_pair, crossing_event, pair_csv_row
from .errors import (ConsistencyError, GuardError, QuadratureError,
                     RejectionBudgetError, SolveError)
from .hypercube import (HC_CSV_HEADER, atoms, bernoulli_hypercube,
                        domination_margin_check, five_cell_seed,
                        sample_five_cell, slab_scan, ubiquitous,
                        ubiquity_csv_row)
from .interlace import (dump_sample_json, load_sample, make_window,
                        sample_interlacement, sample_occupancy_bank,
                        save_sample, vacuum_probability_test)
from .phase import PhaseGridSpec, curve_bisect, scan_grid
from .potential import (GreenTable, box_capacity, capacity,
                        escape_probability_hypercube, green)
from .renorm import (CONDITIONALITY_NOTE, decoupling_log_rhs, epsilon_error,
                     trigger_certificate, trigger_from_counts)
from .rng import RNGStream
from .stats import fmt17
from .walk import (cut_times, estimate_csv_header, estimate_csv_row,
                   green_weighted_functional, mc_escape_probability,
                   mc_green_at_origin, annulus_intersection_estimate,
                   quarter_disc_occupation, simulate_walk)

NUMERICAL_ERRORS = (QuadratureError, SolveError, RejectionBudgetError,
                    ConsistencyError)


def _atomic_write(path: str, data: bytes) -> str:
    """Write bytes via rename; returns the sha256 hex digest."""
    parent = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".tmp-cli-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def _emit(ctx, text: str, t0: float) -> None:
    """Print text, and when --out is set also write it there plus the
    sidecar manifest <out>.manifest.json."""
    out = ctx.params.get("out")
    click.echo(text, nl=not text.endswith("\n"))
    if not out:
        return
    data = text.encode() if text.endswith("\n") else (text + "\n").encode()
    digest = _atomic_write(out, data)
    manifest = {
        "tool": "rilab",
        "version": __version__,
        "subcommand": ctx.info_name,
        "params": {k: _jsonable(v) for k, v in sorted(ctx.params.items())},
        "seed": ctx.params.get("seed"),
        "started": datetime.fromtimestamp(t0, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {os.path.basename(out): digest},
    }
    _atomic_write(out + ".manifest.json",
                  (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())


def _config_cb(ctx, param, value):
    if not value:
        return value
    with open(value) as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise click.UsageError("config file must hold a JSON object")
    flat = {str(k).replace("-", "_"): v for k, v in raw.items()}
    ctx.default_map = {**flat, **(ctx.default_map or {})}
    return value


def _common(fn):
    opts = [
        click.option("--dim", type=int, default=3, show_default=True,
                     help="lattice dimension"),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="master seed"),
        click.option("--trials", type=int, default=1000, show_default=True,
                     help="replicate count"),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="output file; sidecar manifest written next to it"),
        click.option("--threads", type=int, default=1, show_default=True,
                     help="worker budget; never changes results"),
        click.option("--config", type=click.Path(exists=True, dir_okay=False),
                     default=None, callback=_config_cb, is_eager=True,
                     expose_value=True,
                     help="JSON file whose keys mirror flags; flags win"),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _parse_point(text: str, d: int) -> tuple:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip() != ""]
    pt = tuple(int(p) for p in parts)
    if len(pt) != d:
        raise click.UsageError(f"point has {len(pt)} coordinates, --dim is {d}")
    return pt


def _parse_points(text: str, d: int) -> np.ndarray:
    pts = [_parse_point(ch, d) for ch in text.split(";") if ch.strip()]
    if not pts:
        raise click.UsageError("empty point list")
    return np.array(pts, dtype=np.int64)


def _set_from_flags(box, points, dim):
    if (box is None) == (points is None):
        raise click.UsageError("give exactly one of --box or --points")
    if box is not None:
        side = np.arange(-box, box + 1)
        g = np.stack(np.meshgrid(*([side] * dim), indexing="ij"), axis=-1)
        return g.reshape(-1, dim).astype(np.int64), f"box:{box}"
    return _parse_points(points, dim), f"points:{points}"


@click.group()
@click.version_option(__version__, prog_name="rilab")
def cli():
    """Interlacement simulation and verification experiments."""


@cli.command("green")
@_common
@click.option("--point", default=None, help="comma separated displacement")
@click.option("--mc-trials", type=int, default=0,
              help="also run the truncated-walk check with this many walks")
def cmd_green(dim, seed, trials, out, threads, config, point, mc_trials):
    """Green function value at a displacement."""
    t0 = time.time()
    pt = _parse_point(point, dim) if point else (0,) * dim
    val = green(pt, d=dim)
    lines = [fmt17(val)]
    payload = {"d": dim, "point": list(pt), "value": val}
    if mc_trials > 0:
        if dim != 3 or any(pt):
            raise GuardError("walk check covers the origin at dim 3 only")
        est = mc_green_at_origin(mc_trials, RNGStream(seed, (0,)))
        payload["mc"] = {"estimate": est.estimate, "se": est.se,
                         "bias_bound": est.bias_bound}
        lines.append(f"mc {fmt17(est.estimate)} se {fmt17(est.se)}")
    ctx = click.get_current_context()
    if out:
        _emit(ctx, json.dumps(payload, sort_keys=True), t0)
    else:
        click.echo("\n".join(lines))


@cli.command("cap")
@_common
@click.option("--box", type=int, default=None, help="radius of a centered box")
@click.option("--points", default=None, help="semicolon separated points")
def cmd_cap(dim, seed, trials, out, threads, config, box, points):
    """Capacity of a finite set, with the equilibrium solve residual."""
    t0 = time.time()
    pts, label = _set_from_flags(box, points, dim)
    if box is not None:
        res = box_capacity(box, d=dim)
    else:
        res = capacity(pts, GreenTable(d=dim))
    payload = {"d": dim, "set": label, "capacity": res.capacity,
               "residual": res.residual, "npoints": len(res.points)}
    ctx = click.get_current_context()
    if out:
        _emit(ctx, json.dumps(payload, sort_keys=True), t0)
    else:
        click.echo(fmt17(res.capacity))


@cli.command("escape")
@_common
@click.option("--mc-trials", type=int, default=0,
              help="also estimate by Monte Carlo with this many walks")
def cmd_escape(dim, seed, trials, out, threads, config, mc_trials):
    """Hypercube escape probability and its Green-sum identity."""
    t0 = time.time()
    esc = escape_probability_hypercube(dim)
    payload = {"d": dim, "p_esc": esc.p_esc, "green_sum": esc.green_sum,
               "identity_residual": esc.p_esc * esc.green_sum - 1.0}
    lines = [f"p_esc {fmt17(esc.p_esc)}",
             f"green_sum {fmt17(esc.green_sum)}"]
    if mc_trials > 0:
        if dim != 3:
            raise GuardError("Monte Carlo escape check is tuned for dim 3")
        corrected, raw = mc_escape_probability(dim, mc_trials,
                                               RNGStream(seed, (0,)),
                                               kill_radius=100)
        payload["mc"] = {"estimate": corrected.estimate, "se": corrected.se,
                         "raw": raw.estimate}
        lines.append(f"mc {fmt17(corrected.estimate)} se {fmt17(corrected.se)}")
    ctx = click.get_current_context()
    if out:
        _emit(ctx, json.dumps(payload, sort_keys=True), t0)
    else:
        click.echo("\n".join(lines))


@cli.command("sample")
@_common
@click.option("--radius", "-n", "nrad", type=int, default=4, show_default=True,
              help="window radius")
@click.option("--u", type=float, default=1.0, show_default=True)
@click.option("--mode", type=click.Choice(["occupancy", "trajectories"]),
              default="occupancy", show_default=True)
@click.option("--edges/--no-edges", default=False)
@click.option("--relaxed", is_flag=True,
              help="allow a loose truncation bias (large windows)")
def cmd_sample(dim, seed, trials, out, threads, config, nrad, u, mode, edges,
               relaxed):
    """Draw one interlacement sample and store the container."""
    t0 = time.time()
    if not out:
        raise click.UsageError("sample requires --out")
    window = make_window(nrad, d=dim, relaxed_bias=relaxed)
    s = sample_interlacement(window, u, RNGStream(seed, (0,)), mode=mode,
                             want_edges=edges)
    save_sample(out, s)
    with open(out, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    manifest = {
        "tool": "rilab", "version": __version__, "subcommand": "sample",
        "params": {"dim": dim, "seed": seed, "radius": nrad, "u": u,
                   "mode": mode, "edges": edges, "relaxed": relaxed},
        "seed": seed,
        "started": datetime.fromtimestamp(t0, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {os.path.basename(out): digest},
    }
    _atomic_write(out + ".manifest.json",
                  (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    click.echo(f"n_traj {s.n_traj} occupied {s.count()} -> {out}")


@cli.command("dump")
@_common
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--max-sites", type=int, default=200_000, show_default=True)
def cmd_dump(dim, seed, trials, out, threads, config, path, max_sites):
    """Decode a stored sample container to JSON."""
    t0 = time.time()
    s = load_sample(path)
    obj = dump_sample_json(s, max_sites=max_sites)
    _emit(click.get_current_context(), json.dumps(obj, sort_keys=True), t0)


@cli.command("vacuum")
@_common
@click.option("--box", type=int, default=None)
@click.option("--points", default=None)
@click.option("--u", type=float, default=1.0, show_default=True)
def cmd_vacuum(dim, seed, trials, out, threads, config, box, points, u):
    """Empirical avoidance frequency against exp(-u cap(A))."""
    t0 = time.time()
    pts, label = _set_from_flags(box, points, dim)
    if dim != 3:
        raise GuardError("vacuum experiment is wired for dim 3")
    est = vacuum_probability_test(pts, u, trials, RNGStream(seed, (0,)))
    est.params["set"] = label
    names = ["set", "u", "expected"]
    text = "\n".join([estimate_csv_header(names), estimate_csv_row(est, names)])
    _emit(click.get_current_context(), text, t0)


@cli.command("intersect")
@_common
@click.option("--radius", "-n", "nrad", type=int, default=4, show_default=True)
@click.option("--u1", type=float, default=1.0, show_default=True)
@click.option("--u2", type=float, default=1.0, show_default=True)
@click.option("--ell", "--L", "ell", type=int, default=2, show_default=True)
@click.option("--relaxed", is_flag=True)
def cmd_intersect(dim, seed, trials, out, threads, config, nrad, u1, u2, ell,
                  relaxed):
    """Replicated pair samples: intersection and joint vacant summaries."""
    t0 = time.time()
    window = make_window(nrad, d=dim, relaxed_bias=relaxed)
    root = RNGStream(seed, ())
    rows = [PAIR_CSV_HEADER]
    for i in range(trials):
        s1 = sample_interlacement(window, u1, root.child(0, i))
        s2 = sample_interlacement(window, u2, root.child(1, i))
        rows.append(pair_csv_row(seed, build_pair(s1, s2), ell))
    _emit(click.get_current_context(), "\n".join(rows), t0)


@cli.command("crossing")
@_common
@click.option("--radius", "-n", "nrad", type=int, default=8, show_default=True)
@click.option("--u", type=float, default=1.0, show_default=True)
@click.option("--ell", "--L", "ell", type=int, default=4, show_default=True)
@click.option("--selector", type=click.Choice(["I", "V"]), default="V",
              show_default=True, help="trace or its vacant complement")
@click.option("--relaxed", is_flag=True)
def cmd_crossing(dim, seed, trials, out, threads, config, nrad, u, ell,
                 selector, relaxed):
    """Crossing frequency for one interlacement trace or its complement."""
    t0 = time.time()
    window = make_window(nrad, d=dim, relaxed_bias=relaxed)
    if window.N < 2 * ell:
        raise GuardError("window radius below 2L")
    occ, _, _ = sample_occupancy_bank(window, u, trials, RNGStream(seed, (0,)))
    shape = (window.side,) * window.d
    succ = 0
    for i in range(trials):
        bits = np.unpackbits(occ[i].view(np.uint8), bitorder="little")
        grid = bits[:window.nsites].astype(bool).reshape(shape)
        if selector == "V":
            grid = ~grid
        succ += crossing_event(grid, ell)
    from .stats import ExperimentEstimate
    est = ExperimentEstimate.from_counts(
        "crossing", {"u": u, "selector": selector, "L": ell}, succ, trials,
        seed=seed, stream=(0,))
    names = ["u", "selector", "L"]
    text = "\n".join([estimate_csv_header(names), estimate_csv_row(est, names)])
    _emit(click.get_current_context(), text, t0)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip() != "")


@cli.command("scan")
@_common
@click.option("--selector", type=click.Choice(["K", "V"]), required=True)
@click.option("--u1", default="1", show_default=True, help="comma list")
@click.option("--u2", default="0.5,1,2", show_default=True, help="comma list")
@click.option("--ell", "--L", "ell", type=int, default=8, show_default=True)
def cmd_scan(dim, seed, trials, out, threads, config, selector, u1, u2, ell):
    """Crossing-probability grid over (u1, u2); CSV per cell."""
    t0 = time.time()
    if dim != 3:
        raise GuardError("phase scans are wired for dim 3")
    spec = PhaseGridSpec(_floats(u1), _floats(u2), ell, trials, seed)
    _, csv_text = scan_grid(spec, selector)
    _emit(click.get_current_context(), csv_text, t0)


@cli.command("curve")
@_common
@click.option("--selector", type=click.Choice(["K", "V"]), required=True)
@click.option("--u1", type=float, default=1.0, show_default=True)
@click.option("--p-star", type=float, default=0.5, show_default=True)
@click.option("--tol", type=float, default=0.25, show_default=True,
              help="bracket width target in u2")
@click.option("--ell", "--L", "ell", type=int, default=8, show_default=True)
@click.option("--u2-init", type=float, default=1.0, show_default=True)
@click.option("--max-doublings", type=int, default=8, show_default=True)
def cmd_curve(dim, seed, trials, out, threads, config, selector, u1, p_star,
              tol, ell, u2_init, max_doublings):
    """Bisect the empirical finite-size curve along u2 at fixed u1."""
    t0 = time.time()
    if dim != 3:
        raise GuardError("phase curves are wired for dim 3")
    res = curve_bisect(u1, selector, RNGStream(seed, (0,)), p_star=p_star,
                       tol=tol, trials=trials, L=ell, u2_init=u2_init,
                       max_doublings=max_doublings)
    _emit(click.get_current_context(), res.to_json(), t0)


@cli.command("cut-density")
@_common
@click.option("--horizon", type=int, default=10_000, show_default=True)
@click.option("--guard", type=int, default=1_000, show_default=True)
def cmd_cut_density(dim, seed, trials, out, threads, config, horizon, guard):
    """Cut-time density of finite walk segments, with a normal CI."""
    t0 = time.time()
    if dim < 5:
        raise GuardError("cut-time density needs dim >= 5")
    root = RNGStream(seed, ())
    dens = np.empty(trials)
    total = 0
    for i in range(trials):
        t = simulate_walk((0,) * dim, ("step_budget", horizon),
                          root.child(0, i), d=dim)
        cuts = cut_times(t, guard)
        eligible = t.steps.shape[0] - guard
        dens[i] = len(cuts) / eligible
        total += len(cuts)
    mean = float(dens.mean())
    half = 1.959963984540054 * float(dens.std(ddof=1)) / np.sqrt(trials)
    payload = {"d": dim, "horizon": horizon, "guard": guard, "walks": trials,
               "density": mean, "ci_low": mean - half, "ci_high": mean + half,
               "total_cuts": total, "seed": seed}
    _emit(click.get_current_context(), json.dumps(payload, sort_keys=True), t0)


@cli.command("annulus")
@_common
@click.option("--radius", "-m", "mrad", type=int, default=8, show_default=True,
              help="inner scale M")
def cmd_annulus(dim, seed, trials, out, threads, config, mrad):
    """Frequency of two-walk trace intersection in a centered annulus."""
    t0 = time.time()
    est = annulus_intersection_estimate(mrad, trials, RNGStream(seed, (0,)),
                                        d=dim)
    names = ["M"]
    text = "\n".join([estimate_csv_header(names), estimate_csv_row(est, names)])
    _emit(click.get_current_context(), text, t0)


@cli.command("disc-functional")
@_common
@click.option("--radius", "-m", "mrad", type=int, default=16, show_default=True)
@click.option("--eps", type=float, default=0.02, show_default=True)
@click.option("--quarter", is_flag=True,
              help="quarter-region occupation instead of the weighted sum")
@click.option("--nstarts", type=int, default=8, show_default=True)
def cmd_disc(dim, seed, trials, out, threads, config, mrad, eps, quarter,
             nstarts):
    """Green-weighted occupation functional on a disc-scale region."""
    t0 = time.time()
    if dim != 3:
        raise GuardError("disc functionals are wired for dim 3")
    r = RNGStream(seed, (0,))
    if quarter:
        est = quarter_disc_occupation(mrad, trials, r, eps=max(eps, 0.05),
                                      nstarts=nstarts)
        names = ["M", "eps"]
    else:
        gt = GreenTable(d=3)
        est = green_weighted_functional(mrad, trials, r, gt, eps=eps)
        names = ["M", "eps"]
    text = "\n".join([estimate_csv_header(names), estimate_csv_row(est, names)])
    _emit(click.get_current_context(), text, t0)


@cli.command("hypercube")
@_common
@click.option("--experiment",
              type=click.Choice(["ubiquity", "atoms", "five-cell", "slab",
                                 "domination"]),
              default="ubiquity", show_default=True)
@click.option("--p", type=float, default=0.9, show_default=True)
@click.option("--threshold", type=int, default=None,
              help="atom size cutoff (default dim^2)")
@click.option("--grid", type=int, default=20, show_default=True,
              help="slab window side")
@click.option("--vertices", default="0,0,0;1,0,0",
              help="domination target set, semicolon separated")
def cmd_hypercube(dim, seed, trials, out, threads, config, experiment, p,
                  threshold, grid, vertices):
    """Hypercube percolation experiments."""
    t0 = time.time()
    root = RNGStream(seed, ())
    ctx = click.get_current_context()
    if experiment == "domination":
        S = [tuple(int(c) for c in ch.split(",")) for ch in vertices.split(";")
             if ch.strip()]
        rep = domination_margin_check(dim, S, trials, root.child(0))
        _emit(ctx, rep.to_json(), t0)
        return
    if experiment == "slab":
        gen = root.child(0).generator()
        rows = ["rows,cols,p,crossing,seed"]
        for i in range(trials):
            field = gen.random((grid, grid)) < p
            rows.append(f"{grid},{grid},{p},{int(slab_scan(field))},{seed}")
        _emit(ctx, "\n".join(rows), t0)
        return
    rows = []
    if experiment == "ubiquity":
        rows.append(HC_CSV_HEADER)
        for i in range(trials):
            rep = ubiquitous(bernoulli_hypercube(dim, p, root.child(0, i)))
            rows.append(ubiquity_csv_row(dim, p, rep, seed))
    elif experiment == "atoms":
        rows.append("d,p,threshold,n_atoms,largest,seed")
        t = threshold if threshold is not None else dim * dim
        for i in range(trials):
            comp = atoms(bernoulli_hypercube(dim, p, root.child(0, i)), t)
            big = comp[0].size if comp else 0
            rows.append(f"{dim},{p},{t},{len(comp)},{big},{seed}")
    else:
        rows.append("d,p,seed_event,seed")
        for i in range(trials):
            ok = five_cell_seed(sample_five_cell(dim, p, root.child(0, i)))
            rows.append(f"{dim},{p},{int(ok)},{seed}")
    _emit(ctx, "\n".join(rows), t0)


@cli.command("trigger")
@_common
@click.option("--p-hat-upper", type=float, default=None,
              help="direct upper confidence bound on the seed probability")
@click.option("--successes", type=int, default=None,
              help="seed event count; Wilson bound from --trials")
@click.option("--l0", type=int, default=4, show_default=True)
@click.option("--eps1", type=float, default=0.0, show_default=True)
@click.option("--eps2", type=float, default=0.0, show_default=True)
def cmd_trigger(dim, seed, trials, out, threads, config, p_hat_upper,
                successes, l0, eps1, eps2):
    """Certificate for launching the doubling induction."""
    t0 = time.time()
    if (p_hat_upper is None) == (successes is None):
        raise click.UsageError("give exactly one of --p-hat-upper or --successes")
    if p_hat_upper is not None:
        rep = trigger_certificate(p_hat_upper, l0, eps1, eps2, d=dim)
    else:
        rep = trigger_from_counts(successes, trials, l0, eps1, eps2, d=dim)
    _emit(click.get_current_context(), rep.to_json(), t0)


@cli.command("renorm-check")
@_common
@click.option("--u", type=float, default=1.0, show_default=True)
@click.option("--l0-base", "--L0", "l0_base", type=int, default=1,
              show_default=True, help="base scale")
@click.option("--l0", type=int, default=4, show_default=True,
              help="scale ratio")
@click.option("--p-seed", type=float, default=0.01, show_default=True)
@click.option("--nmax", type=int, default=20, show_default=True)
def cmd_renorm_check(dim, seed, trials, out, threads, config, u, l0_base, l0,
                     p_seed, nmax):
    """Sprinkling error and the exact doubling identity of the bound."""
    t0 = time.time()
    eps = epsilon_error(u, l0_base, l0, d=dim)
    base = decoupling_log_rhs(p_seed, 0, l0, eps, eps, d=dim)
    worst = 0.0
    for n in range(nmax + 1):
        dev = abs(decoupling_log_rhs(p_seed, n, l0, eps, eps, d=dim)
                  - base * 2.0 ** n)
        worst = max(worst, dev)
    payload = {"d": dim, "u": u, "L0": l0_base, "l0": l0, "epsilon": eps,
               "p_seed": p_seed, "log_rhs_0": base,
               "doubling_identity_max_dev": worst, "nmax": nmax,
               "note": CONDITIONALITY_NOTE}
    _emit(click.get_current_context(), json.dumps(payload, sort_keys=True), t0)


def cli_dispatch(argv) -> int:
    """Run one invocation; exceptions become the documented exit codes."""
    try:
        cli.main(args=list(argv), standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.Abort:
        return 1
    except click.UsageError as e:
        e.show()
        return 1
    except NUMERICAL_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except GuardError as e:
        click.echo(f"guard: {e}", err=True)
        return 3
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
