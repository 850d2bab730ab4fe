"""Command-line entry point: ``run``, ``verify`` and ``mesh-info``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .afem import RunConfig, benchmark_problem, compute_rates, run_afem
from .mesh import MeshError, build_initial_mesh, uniform_refine, write_mesh
from .problem import manufactured_polynomial

CSV_COLUMNS = ("level", "ndof", "eta", "err_sigma", "err_l2", "eff_index", "rate_eta", "rate_err")
BENCHMARKS = ("cooks", "lshape", "square")


class UsageError(Exception):
    """Invalid combination of command-line options."""


def _benchmark(value: str) -> str:
    if value in BENCHMARKS or (value.startswith("mesh=") and len(value) > 5):
        return value
    raise argparse.ArgumentTypeError(f"expected one of {', '.join(BENCHMARKS)} or mesh=<path>")


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hho-elasticity", description="HHO solver for planar linear elasticity")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--benchmark", type=_benchmark, default="lshape")
    run.add_argument("--k", type=_positive_int, default=1)
    run.add_argument("--mode", choices=("adaptive", "uniform"), default="adaptive")
    run.add_argument("--theta", type=float, default=0.5)
    run.add_argument("--E", type=float, default=None, help="Young's modulus (default 1e5)")
    run.add_argument("--nu", type=float, default=None, help="Poisson ratio (default 0.4999)")
    run.add_argument("--lambda", dest="lam", type=float, default=None)
    run.add_argument("--mu", type=float, default=None)
    run.add_argument("--variant", choices=("classic", "tilde", "hdg"), default="classic")
    run.add_argument("--max-ndof", type=_positive_int, default=200_000)
    run.add_argument("--levels", type=_positive_int, default=40, help="maximal number of levels")
    run.add_argument("--max-time", type=float, default=None, help="wall-clock budget in seconds")
    run.add_argument("--full-jumps", action="store_true", help="assign side jumps fully to both neighbours")
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--svg", action="store_true", help="write convergence and mesh plots")
    run.add_argument("--save-mesh", action="store_true", help="write the final mesh")
    run.add_argument("--quiet", action="store_true")

    ver = sub.add_parser("verify", help="run the verification suites")
    ver.add_argument("--suite", choices=("operators", "stabilization", "patch", "all"), default="all")
    ver.add_argument("--k", type=_positive_int, default=None)

    info = sub.add_parser("mesh-info", help="print mesh statistics")
    info.add_argument("--benchmark", type=_benchmark, default="lshape")
    info.add_argument("--refine", type=int, default=0, help="uniform refinements before reporting")
    return parser


def _config(args) -> RunConfig:
    if (args.lam is None) != (args.mu is None):
        raise UsageError("--lambda and --mu must be given together")
    if args.lam is not None and (args.E is not None or args.nu is not None):
        raise UsageError("give either --E/--nu or --lambda/--mu")
    E = 1e5 if args.E is None else args.E
    nu = 0.4999 if args.nu is None else args.nu
    try:
        cfg = RunConfig(benchmark=args.benchmark, k=args.k, variant=args.variant, mode=args.mode,
                        theta=args.theta, E=E, nu=nu, lam=args.lam, mu=args.mu, max_ndof=args.max_ndof,
                        max_levels=args.levels, max_time=args.max_time, full_jumps=args.full_jumps)
        mat = cfg.material()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if mat.mu <= 0 or mat.lam < 0:
        raise UsageError("need mu > 0 and lambda >= 0")
    return cfg


def _setup(benchmark: str, material):
    if benchmark.startswith("mesh="):
        mesh = build_initial_mesh(benchmark[5:])
        return mesh, manufactured_polynomial(3, material)
    name = "unit_square" if benchmark == "square" else benchmark
    return build_initial_mesh(name), benchmark_problem(benchmark, material)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12e}"


def history_rows(history) -> list[dict]:
    """Rows of the CSV table; ``eta`` is the estimator including the Dirichlet oscillation."""
    ndof = history.ndof
    eta = history.column("eta_tilde")
    err = history.column("err_sigma")
    if len(ndof) > 1:
        rate_eta, _ = compute_rates(ndof, eta)
        rate_err, _ = compute_rates(ndof, err)
    else:
        rate_eta = rate_err = np.full(len(ndof), np.nan)
    rows = []
    for i, r in enumerate(history.levels):
        rows.append({"level": r.level, "ndof": r.ndof, "eta": r.eta_tilde, "err_sigma": r.err_sigma,
                     "err_l2": r.err_l2, "eff_index": r.eff_index, "rate_eta": float(rate_eta[i]),
                     "rate_err": float(rate_err[i])})
    return rows


def write_history(history, out: Path) -> tuple[Path, Path]:
    """Write ``history.csv`` and ``history.json`` into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    rows = history_rows(history)
    csv_path = out / "history.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    data = history.as_dict()
    for rec in data["levels"]:
        rec.pop("times", None)
    payload = {"version": __version__, "config": data["config"],
               "columns": list(CSV_COLUMNS),
               "rows": [{c: (None if _fmt(row[c]) == "" else row[c]) for c in CSV_COLUMNS} for row in rows],
               "levels": data["levels"]}
    json_path = out / "history.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return csv_path, json_path


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _cmd_run(args) -> int:
    cfg = _config(args)
    mesh, problem = _setup(cfg.benchmark, cfg.material())

    def report(rec, mesh, res):
        if not args.quiet:
            err = "" if rec.err_sigma is None else f"  err {rec.err_sigma:.4e}  eff {rec.eff_index:.3f}"
            print(f"level {rec.level:3d}  ndof {rec.ndof:8d}  eta {rec.eta_tilde:.4e}{err}", flush=True)

    history = run_afem(cfg, mesh=mesh, problem=problem, keep_meshes=False, callback=report)
    csv_path, json_path = write_history(history, args.out)
    final = history.meshes[-1]
    if args.save_mesh:
        write_mesh(final, args.out / "final_mesh.txt")
    if args.svg:
        from .plotting import plot_convergence, plot_mesh

        plot_convergence(history, args.out / "convergence.svg")
        plot_mesh(final, args.out / "mesh.svg")
    if not args.quiet:
        print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_verify(args) -> int:
    from .verification import run_suite

    results, seconds = run_suite(args.suite, args.k)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed in {seconds:.1f} s")
    return 1 if failed else 0


def _cmd_mesh_info(args) -> int:
    name = args.benchmark
    mesh = build_initial_mesh(name[5:] if name.startswith("mesh=") else ("unit_square" if name == "square" else name))
    if args.refine < 0:
        raise UsageError("--refine must be nonnegative")
    mesh = uniform_refine(mesh, args.refine)
    for key, value in mesh.statistics().items():
        print(f"{key:16s} {value:.6g}" if isinstance(value, float) else f"{key:16s} {value}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "mesh-info": _cmd_mesh_info}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
