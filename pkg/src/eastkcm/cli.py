"""Command-line experiment runner.

Every subcommand writes a ``manifest.json`` with the resolved configuration
next to its CSV/JSON/SVG outputs.  Exit codes: 0 success, 2 usage error,
3 resource cap hit, 4 an internal check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import exact, front, plotting, stats, trees
from .engine import (DEFAULT_W_KEEP, CheckFailure, Params, ResourceCapError, UsageError,
                     __version__, _json_default, manifest, write_manifest)

log = logging.getLogger("eastkcm")

OUT_ENV = "EASTKCM_OUT"
EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_CHECK = 0, 2, 3, 4


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "eastkcm-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(p) -> Params:
    try:
        return Params(float(p))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


# -- front --------------------------------------------------------------------

def _trace_chunk(job):
    p, horizon, dt, seed, w_keep, ids = job
    return front.trace_front(Params(p), horizon, dt, seed=seed, w_keep=w_keep, behind_width=1,
                             replica_ids=ids)


def run_traces(params: Params, horizon, dt, replicas, seed, w_keep, jobs):
    """Replicas split over ``jobs`` worker processes, merged in replica order."""
    ids = list(range(replicas))
    if jobs <= 1 or replicas < 2:
        return _trace_chunk((params.p, horizon, dt, seed, w_keep, ids))
    chunks = [ids[i::jobs] for i in range(jobs) if ids[i::jobs]]
    with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
        parts = list(ex.map(_trace_chunk, [(params.p, horizon, dt, seed, w_keep, c) for c in chunks]))
    traces = [tr for part in parts for tr in part]
    return sorted(traces, key=lambda tr: tr.replica)


def cmd_front(args) -> int:
    params = _params(args.p)
    if args.replicas < 2:
        raise UsageError("front needs at least 2 replicas for CIs")
    out = _out_dir(args)
    traces = run_traces(params, args.horizon, args.dt, args.replicas, args.seed, args.w_keep, args.jobs)
    burn = args.burn_in if args.burn_in is not None else args.horizon / 10
    vel = front.estimate_velocity(traces, burn, params)
    max_lag = max(1, min(args.max_lag, int((args.horizon - burn) / args.dt) // 3))
    sig = front.estimate_sigma_star(traces, burn, max_lag=max_lag)
    with open(out / "front_trace.csv", "w") as fh:
        fh.write("replica,t,front\n")
        for tr in traces:
            for t, x in zip(tr.times, tr.X):
                fh.write(f"{tr.replica},{float(t)!r},{int(x)}\n")
    report = {"velocity": vel.to_dict(), "sigma_star_sq": sig.to_dict()}
    X_end = np.array([tr.X[-1] for tr in traces], dtype=np.float64)
    if X_end.size >= 20:
        report["clt"] = front.normality_report(X_end).to_dict()
    _write_json(out / "front_report.json", report)
    if not args.no_plot:
        plotting.front_figure(traces[0].times, np.vstack([tr.X for tr in traces]),
                              out / "front_trajectory.svg", f"p = {params.p:g}")
    write_manifest(out / "manifest.json", manifest(args.seed, params, args.horizon, [],
                                                   command="front", config=_config(args)))
    lo, hi = vel.window
    print(f"v = {vel.v:.5f} +- {vel.half_width:.5f} (window [{lo:.4f}, {hi:.4f}])")
    print(f"sigma*^2: replica {sig.replica:.4f}, covariance sum {sig.covsum:.4f}")
    if vel.ci_hi < lo or vel.ci_lo > hi:
        raise CheckFailure("velocity CI lies outside the admissible window")
    return EXIT_OK


# -- nu -------------------------------------------------------------------------

def cmd_nu(args) -> int:
    if args.w > args.w_keep:
        raise UsageError(f"window {args.w} exceeds w_keep={args.w_keep}")
    out = _out_dir(args)
    times = np.linspace(args.pool_from, args.horizon, args.snapshots)
    rows, curves, summary = [], [], {}
    for i, p in enumerate(args.p):
        params = _params(p)
        rep = front.estimate_nu(params, times, args.w, args.replicas, args.seed + i,
                                w_keep=args.w_keep, pool_from=args.pool_from)
        est = rep.pooled
        for off, f, lo, hi in est.rows():
            rows.append((params.p, off, f, lo, hi))
        curves.append((params.p, np.arange(1, args.w + 1), est.freq, est.ci_lo, est.ci_hi))
        summary[f"{params.p:g}"] = {"q_star": est.q_star, "q_star_hw": est.q_star_hw,
                                    "q": params.q, "tail_mean": float(est.freq[-1]),
                                    "n_snapshots": est.n}
    _write_csv(out / "nu.csv", ["p", "offset", "freq", "ci_lo", "ci_hi"], rows)
    _write_json(out / "nu_report.json", summary)
    if not args.no_plot:
        plotting.nu_figure(curves, out / "nu.svg")
    write_manifest(out / "manifest.json", manifest(args.seed, {"p": list(args.p)}, args.horizon, [],
                                                   command="nu", config=_config(args)))
    for k, v in summary.items():
        print(f"p={k}: q* = {v['q_star']:.4f} +- {v['q_star_hw']:.4f}, freq at -{args.w} = {v['tail_mean']:.4f}")
    return EXIT_OK


# -- cutoff ---------------------------------------------------------------------

def _exact_cutoff(args, params, out) -> int:
    G = exact.build_generator(params, args.L)
    gap = exact.spectral_gap(G)
    eps = [0.05, 0.1, 0.25, 0.5, 0.75]
    rows = []
    for e in eps:
        m = exact.t_mix(G, e, gap=gap)
        rows.append((e, m.t_mix, m.bound, m.holds))
    _write_csv(out / "cutoff_exact.csv", ["eps", "t_mix", "gap_bound", "holds"], rows)
    T = max(r[1] for r in rows) * 1.5
    t = np.linspace(0, T, 101)
    curve = exact.tv_curve(G, t, start="all" if args.L <= exact.ALL_STARTS_MAX_L else "ones")
    _write_csv(out / "tv_curve.csv", ["t", "d"], curve.rows())
    if not args.no_plot:
        plotting.tv_figure([(f"L = {args.L}", t, curve.d)], out / "tv_curve.svg")
    write_manifest(out / "manifest.json", manifest(args.seed, params, None, [], command="cutoff",
                                                   route="exact", gap=gap, config=_config(args)))
    for e, tm, b, ok in rows:
        print(f"eps={e:g}: T_mix = {tm:.6f} (bound {b:.4f})")
    if not all(r[3] for r in rows):
        raise CheckFailure("T_mix exceeds the spectral-gap bound")
    return EXIT_OK


def cmd_cutoff(args) -> int:
    params = _params(args.p)
    out = _out_dir(args)
    if args.L < 100:
        warnings.warn(f"L={args.L} is below the Monte Carlo regime (L >= 100)", stacklevel=1)
        if args.L <= 14:
            return _exact_cutoff(args, params, out)
    v, sigma = args.v, args.sigma
    calib = None
    if v is None or sigma is None:
        log.info("estimating v and sigma* (%d replicas, horizon %g)", args.calib_replicas, args.calib_horizon)
        traces = run_traces(params, args.calib_horizon, 1.0, args.calib_replicas, args.seed + 1,
                            DEFAULT_W_KEEP, args.jobs)
        burn = args.calib_horizon / 10
        vel = front.estimate_velocity(traces, burn, params)
        sig = front.estimate_sigma_star(traces, burn)
        v = vel.v if v is None else v
        sigma = math.sqrt(sig.replica) if sigma is None else sigma
        calib = {"velocity": vel.to_dict(), "sigma_star_sq": sig.to_dict()}
    prof = exact.mc_cutoff_experiment(params, args.L, args.s, args.replicas, v, sigma, seed=args.seed)
    _write_csv(out / "cutoff_profile.csv",
               ["s", "t_star", "d_upper", "d_upper_lo", "d_upper_hi", "d_lower", "d_lower_lo",
                "d_lower_hi", "d_lower_At", "phi"], prof.rows())
    report = {"v": v, "sigma": sigma, "a_L": prof.a_L, "max_deviation": max(pt.deviation for pt in prof.points),
              "bounds_ordered": prof.bounds_ordered(), "calibration": calib}
    _write_json(out / "cutoff_report.json", report)
    if not args.no_plot:
        plotting.cutoff_figure(prof, out / "cutoff_profile.svg")
    write_manifest(out / "manifest.json", manifest(args.seed, params, None, [], command="cutoff",
                                                   route="monte-carlo", config=_config(args)))
    for pt in prof.points:
        print(f"s={pt.s:+g}: P(tau > t*) = {pt.d_upper:.4f}, lower = {pt.d_lower:.4f}, profile = {pt.phi:.4f}")
    if not prof.bounds_ordered():
        raise CheckFailure("lower bound exceeds the upper bound beyond CI")
    return EXIT_OK


# -- exact ------------------------------------------------------------------------

def cmd_exact(args) -> int:
    params = _params(args.p)
    if args.L_max > exact.L_MAX_SPARSE:
        raise ResourceCapError(f"L={args.L_max} exceeds the exact-analysis cap {exact.L_MAX_SPARSE}")
    out = _out_dir(args)
    gaps, tm_rows, failed = [], [], []
    for L in range(1, args.L_max + 1):
        G = exact.build_generator(params, L)
        db, st = G.detailed_balance_error(), G.stationarity_error()
        if db > 1e-12 or st > 1e-12:
            failed.append(f"L={L}: reversibility errors {db:.2e}, {st:.2e}")
        gap = exact.spectral_gap(G)
        gaps.append((L, gap, db, st))
        if L <= args.tmix_max:
            for e in args.eps:
                m = exact.t_mix(G, e, gap=gap)
                tm_rows.append((L, e, m.t_mix, m.bound, m.start, m.holds))
                if not m.holds:
                    failed.append(f"L={L}, eps={e}: T_mix {m.t_mix} > bound {m.bound}")
    _write_csv(out / "gap_table.csv", ["L", "gap", "detailed_balance_err", "stationarity_err"], gaps)
    _write_csv(out / "tmix_table.csv", ["L", "eps", "t_mix", "gap_bound", "start", "holds"], tm_rows)
    G1 = exact.build_generator(params, 1)
    t = np.arange(1, 51) / 10
    d = exact.tv_curve(G1, t, start="ones").d
    closed = {"gap": exact.spectral_gap(G1), "gap_expected": 1.0,
              "tv_max_abs_err": float(np.max(np.abs(d - params.q * np.exp(-t))))}
    if params.q > args.eps[0]:
        m = exact.t_mix(G1, args.eps[0], tol=1e-12)
        closed["t_mix"] = m.t_mix
        closed["t_mix_expected"] = math.log(max(params.p, params.q) / args.eps[0])
    _write_json(out / "l1_check.json", closed)
    if not args.no_plot and tm_rows:
        Ls = sorted({r[0] for r in tm_rows})[-4:]
        tgrid = np.linspace(0.0, 1.5 * max(r[2] for r in tm_rows) + 1.0, 200)
        curves = [(f"L = {L}", tgrid, exact.tv_curve(exact.build_generator(params, L), tgrid).d) for L in Ls]
        plotting.tv_figure(curves, out / "tv_curves.svg")
    if args.dump_coo:
        (out / f"generator_L{args.dump_coo}.coo").write_text(
            exact.build_generator(params, args.dump_coo).coo_text())
    write_manifest(out / "manifest.json", manifest(args.seed, params, None, [], command="exact",
                                                   config=_config(args)))
    print("L=1: " + ", ".join(f"{k}={v:.12g}" for k, v in closed.items()))
    for L, g, *_ in gaps:
        print(f"L={L:2d} gap={g:.8f}")
    if failed:
        raise CheckFailure("; ".join(failed))
    return EXIT_OK


# -- tree ---------------------------------------------------------------------------

def cmd_tree(args) -> int:
    if args.j not in (1, args.k):
        raise UsageError(f"j={args.j} unsupported; only j=1 and j=k={args.k}")
    params = _params(args.p)
    out = _out_dir(args)
    scan = trees.concentration_scan(args.k, args.j, params.p, args.L, args.replicas, args.seed)
    _write_csv(out / "tree_scan.csv", ["L", "t_hit", "t_hit_lo", "t_hit_hi", "mad", "mad_lo", "mad_hi", "replicas"],
               [(r.L, r.t_hit, *r.t_hit_ci, r.mad, *r.mad_ci, r.replicas) for r in scan.rows])
    slope, slope_se = scan.loglog_slope() if len(scan.rows) > 2 else (math.nan, math.nan)
    report = {"windowed_min": scan.windowed_min(), "no_increasing_trend": scan.no_increasing_trend(),
              "loglog_slope": slope, "loglog_slope_se": slope_se,
              "p_c": trees.critical_density(args.k, args.j)}
    failed = None
    if args.dekking_host is not None:
        if args.j != args.k:
            raise UsageError("the Dekking-Host check needs j = k")
        L = args.dekking_host
        a = trees.simulate_tau(trees.TreeModel(args.k, args.j, L, params.p), args.replicas, args.seed + 1)
        b = trees.simulate_tau(trees.TreeModel(args.k, args.j, L + 1, params.p), args.replicas, args.seed + 2)
        dh = trees.dekking_host_check(a, b)
        _write_json(out / "dekking_host.json", dh.to_dict())
        if not dh.passed:
            failed = "Dekking-Host inequalities violated beyond CI"
    if args.pc_grid:
        grid = [{"k": k, "j": j, "p_c": trees.critical_density(k, j)}
                for k in args.pc_grid for j in sorted({1, k})]
        _write_json(out / "pc_grid.json", grid)
    _write_json(out / "tree_report.json", report)
    if not args.no_plot:
        plotting.tree_figure([scan], out / "tree_scan.svg")
    write_manifest(out / "manifest.json", manifest(args.seed, {"k": args.k, "j": args.j, "p": params.p},
                                                   None, [], command="tree", config=_config(args)))
    for r in scan.rows:
        print(f"L={r.L:2d} T_hit={r.t_hit:.3f} E|tau-T|={r.mad:.3f}")
    if failed:
        raise CheckFailure(failed)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s):
    out = []
    for part in s.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eastkcm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./eastkcm-out)")
    common.add_argument("--no-plot", action="store_true")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes for replica runs")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("front", parents=[common], help="front trajectory, velocity, variance rate")
    f.add_argument("--p", type=float, required=True)
    f.add_argument("--horizon", type=float, default=1e4)
    f.add_argument("--replicas", type=int, default=200)
    f.add_argument("--dt", type=float, default=1.0)
    f.add_argument("--burn-in", type=float)
    f.add_argument("--max-lag", type=int, default=50)
    f.add_argument("--w-keep", type=int, default=DEFAULT_W_KEEP)
    f.set_defaults(func=cmd_front)

    n = sub.add_parser("nu", parents=[common], help="law of the configuration behind the front")
    n.add_argument("--p", type=float, nargs="+", required=True)
    n.add_argument("--w", type=int, default=60)
    n.add_argument("--horizon", type=float, default=2000.0)
    n.add_argument("--pool-from", type=float, default=200.0)
    n.add_argument("--snapshots", type=int, default=50)
    n.add_argument("--replicas", type=int, default=100)
    n.add_argument("--w-keep", type=int, default=DEFAULT_W_KEEP)
    n.set_defaults(func=cmd_nu)

    c = sub.add_parser("cutoff", parents=[common], help="cutoff profile of the interval chain")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--L", type=int, required=True)
    c.add_argument("--s", type=_floats, default=[-2.0, -1.0, 0.0, 1.0, 2.0],
                   help="comma-separated grid; write --s=-2,-1,0,1,2 when it starts with a minus")
    c.add_argument("--replicas", type=int, default=5000)
    c.add_argument("--v", type=float)
    c.add_argument("--sigma", type=float, help="sigma* (not squared)")
    c.add_argument("--calib-replicas", type=int, default=300)
    c.add_argument("--calib-horizon", type=float, default=2000.0)
    c.set_defaults(func=cmd_cutoff)

    e = sub.add_parser("exact", parents=[common], help="gap table and mixing times for small L")
    e.add_argument("--p", type=float, default=0.5)
    e.add_argument("--L-max", type=int, default=12)
    e.add_argument("--tmix-max", type=int, default=8)
    e.add_argument("--eps", type=_floats, default=[0.25, 0.5])
    e.add_argument("--dump-coo", type=int, metavar="L")
    e.set_defaults(func=cmd_exact)

    t = sub.add_parser("tree", parents=[common], help="hitting times on k-ary trees")
    t.add_argument("--k", type=int, default=2)
    t.add_argument("--j", type=int, default=2)
    t.add_argument("--p", type=float, default=0.3)
    t.add_argument("--L", type=_ints, default=list(range(4, 11)), help="e.g. 4-12 or 4,6,8")
    t.add_argument("--replicas", type=int, default=1000)
    t.add_argument("--dekking-host", type=int, metavar="L")
    t.add_argument("--pc-grid", type=_ints, metavar="K1,K2,...")
    t.set_defaults(func=cmd_tree)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if getattr(args, "replicas", 1) < 1:
            raise UsageError("replicas must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
