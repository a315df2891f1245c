"""Command-line interface: ``posesync {solve,generate,certify,benchmark}``.

Exit codes: 0 certified, 2 solved but not certified, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from posesync.errors import DisconnectedGraphError, G2OParseError, NotPositiveDefiniteError, PoseSyncError
from posesync.experiments import CubeConfig, evaluate_metrics, generate_cube
from posesync.graph import PRECISION_CONVENTIONS, parse_g2o, read_trajectory, write_g2o, write_trajectory, write_tum
from posesync.pipeline import SCHEMA_VERSION, certify_estimate, solve
from posesync.rounding import align_gauge
from posesync.rtr import RtrConfig, SolveTrace
from posesync.staircase import StaircaseConfig

log = logging.getLogger("posesync")

EXIT_CERTIFIED = 0
EXIT_ERROR = 1
EXIT_UNCERTIFIED = 2

BENCH_PARAMS = {"sigma_r": float, "sigma_t": float, "p_lc": float, "s": int}
BENCH_COLUMNS = ("trial", "param", "value", "seed", "s", "p_lc", "sigma_r", "sigma_t", "objective", "certified",
                 "rel_gap", "lambda_min", "levels", "rotation_error_mean", "translation_rmse", "time_s", "error")


def _emit_json(payload, target):
    text = json.dumps(payload, indent=2)
    if target is None or target == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(target).write_text(text + "\n", encoding="utf-8")


def _load_graph(path, convention):
    return parse_g2o(Path(path), convention=convention)


def _write_trace(levels, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("rank",) + SolveTrace.COLUMNS)
        for lv in levels:
            for row in lv.trace.csv_rows():
                writer.writerow((lv.rank,) + tuple(row))


def cmd_solve(args):
    graph = _load_graph(args.input, args.precision_convention)
    rtr_cfg = RtrConfig(grad_tol=args.grad_tol, max_outer=args.max_iters)
    st_cfg = StaircaseConfig(r0=args.r0, r_max=args.rmax, eig_tol=args.eig_tol, seed=args.seed)
    result = solve(graph, init=args.init, seed=args.seed, rtr_cfg=rtr_cfg, st_cfg=st_cfg,
                   preconditioner=args.preconditioner)
    if args.dump_matrices:
        result.mats.dump(args.dump_matrices)
    payload = result.to_dict()
    payload["input"] = str(args.input)
    _emit_json(payload, args.output)
    if args.trajectory:
        write_trajectory(result.estimate, args.trajectory, graph.ids)
    if args.trace:
        _write_trace(result.levels, args.trace)
    cert = result.certificate
    log.info("objective %.10g, certified %s, rel_gap %.3g", result.objective, cert.is_certified, cert.rel_gap)
    return EXIT_CERTIFIED if cert.is_certified else EXIT_UNCERTIFIED


def _cube_config(args):
    return CubeConfig(s=args.s, p_lc=args.plc, sigma_r=args.sigma_r, sigma_t=args.sigma_t, seed=args.seed,
                      d=args.dim, lc_radius=args.lc_radius)


def cmd_generate(args):
    graph, gt = generate_cube(_cube_config(args))
    out = Path(args.output)
    write_g2o(graph, out)
    gt_path = Path(args.ground_truth) if args.ground_truth else out.with_suffix(".gt.tum")
    write_tum(gt, gt_path, graph.ids)
    log.info("wrote %s (n=%d, m=%d) and %s", out, graph.n, graph.m, gt_path)
    return 0


def cmd_certify(args):
    graph = _load_graph(args.input, args.precision_convention)
    candidate = read_trajectory(args.candidate, graph)
    st_cfg = StaircaseConfig(eig_tol=args.eig_tol, seed=args.seed)
    cert, warnings = certify_estimate(graph, candidate, st_cfg, grad_tol=args.grad_tol)
    for w in warnings:
        log.warning(w)
    payload = {"schema_version": SCHEMA_VERSION, "input": str(args.input), "candidate": str(args.candidate),
               "certificate": cert.to_dict(), "warnings": warnings}
    _emit_json(payload, args.output)
    return EXIT_CERTIFIED if cert.is_certified else EXIT_UNCERTIFIED


def run_trial(task):
    """One benchmark trial; never raises, failures land in the ``error`` column."""
    trial, param, value, base = task
    cfg = dataclasses.replace(base, **{param: value, "seed": base.seed + trial})
    row = dict.fromkeys(BENCH_COLUMNS, "")
    row.update(trial=trial, param=param, value=value, seed=cfg.seed, s=cfg.s, p_lc=cfg.p_lc,
               sigma_r=cfg.sigma_r, sigma_t=cfg.sigma_t)
    t0 = time.perf_counter()
    try:
        graph, gt = generate_cube(cfg)
        result = solve(graph, init="random", seed=cfg.seed)
        metrics = evaluate_metrics(align_gauge(result.estimate, gt), gt)
        cert = result.certificate
        row.update(objective=result.objective, certified=int(cert.is_certified), rel_gap=cert.rel_gap,
                   lambda_min=cert.lambda_min, levels=len(result.levels),
                   rotation_error_mean=metrics["rotation_error_mean"], translation_rmse=metrics["translation_rmse"])
    except Exception as exc:  # recorded per row
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["time_s"] = time.perf_counter() - t0
    return row


def benchmark_rows(param, values, trials, base: CubeConfig, jobs=1):
    tasks = []
    for value in values:
        for t in range(trials):
            tasks.append((t, param, BENCH_PARAMS[param](value), base))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_trial, tasks))
    return [run_trial(task) for task in tasks]


def summarize(rows):
    summary = {}
    for row in rows:
        entry = summary.setdefault(row["value"], {"trials": 0, "certified": 0, "errors": 0})
        entry["trials"] += 1
        entry["certified"] += int(row["certified"] == 1)
        entry["errors"] += int(bool(row["error"]))
    for entry in summary.values():
        entry["rate"] = entry["certified"] / entry["trials"]
    return summary


def cmd_benchmark(args):
    base = CubeConfig(s=args.s, p_lc=args.plc, sigma_r=args.sigma_r, sigma_t=args.sigma_t, seed=args.seed,
                      d=args.dim)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = benchmark_rows(args.param, values, args.trials, base, args.jobs)
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    for value, entry in summarize(rows).items():
        print(f"{args.param}={value}: certified {entry['certified']}/{entry['trials']} "
              f"({100 * entry['rate']:.0f}%), errors {entry['errors']}", file=sys.stderr)
    return 0


def _add_solver_flags(p):
    p.add_argument("--grad-tol", type=float, default=None, help="Riemannian gradient tolerance")
    p.add_argument("--eig-tol", type=float, default=None, help="tolerance on lambda_min(S)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision-convention", choices=PRECISION_CONVENTIONS, default="isotropic",
                   help="how g2o information matrices are reduced to (tau, kappa)")


def _add_cube_flags(p, seed=True):
    p.add_argument("--s", type=int, default=10, help="poses per lattice edge")
    p.add_argument("--plc", type=float, default=0.1, help="loop-closure probability")
    p.add_argument("--sigma-r", type=float, default=0.1, help="rotation noise std (rad)")
    p.add_argument("--sigma-t", type=float, default=0.5, help="translation noise std")
    p.add_argument("--dim", type=int, choices=(2, 3), default=3)
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="posesync", description="Certifiably correct pose-graph optimization.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a g2o instance and certify the result")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", default=None, help="JSON result path (default stdout)")
    p.add_argument("--trajectory", default=None, help="write poses (.g2o gives VERTEX lines, otherwise TUM)")
    p.add_argument("--init", choices=("random", "chordal"), default="random")
    p.add_argument("--r0", type=int, default=None)
    p.add_argument("--rmax", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=RtrConfig.max_outer, help="trust-region iterations per level")
    p.add_argument("--preconditioner", action="store_true", help="block-Jacobi preconditioned tCG")
    p.add_argument("--trace", default=None, help="per-iteration CSV trace")
    p.add_argument("--dump-matrices", default=None, help="directory for Matrix Market dumps")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a synthetic cube instance")
    _add_cube_flags(p)
    p.add_argument("--lc-radius", type=int, default=1)
    p.add_argument("--output", "-o", required=True, help="g2o path")
    p.add_argument("--ground-truth", default=None, help="TUM path (default <output>.gt.tum)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("certify", help="certify an externally supplied estimate")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--candidate", "-c", required=True, help="trajectory in g2o or TUM format")
    p.add_argument("--output", "-o", default=None)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("benchmark", help="sweep one cube parameter over several values")
    p.add_argument("--param", choices=sorted(BENCH_PARAMS), default="sigma_r")
    p.add_argument("--values", required=True, help="comma separated")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", "-o", default=None, help="CSV path (default stdout)")
    _add_cube_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
    except G2OParseError as exc:
        print(f"error: malformed g2o input: {exc}", file=sys.stderr)
    except DisconnectedGraphError as exc:
        print(f"error: measurement graph is disconnected: {exc}", file=sys.stderr)
    except NotPositiveDefiniteError as exc:
        print(f"error: factorization failed: {exc}", file=sys.stderr)
    except (PoseSyncError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
