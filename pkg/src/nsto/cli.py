"""Command-line entry points.

Subcommands: optimize, multi, simp, infer, export, bench. Exit codes:
0 success, 1 validation error, 2 numerical failure. NSTO_THREADS caps
the numeric libraries' internal thread pools (set before numpy loads).
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _apply_thread_cap():
    cap = os.environ.get("NSTO_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, cap)


_apply_thread_cap()

import numpy as np  # noqa: E402

from . import archive, benchmarks, export, fem, mesh, optimize, report, simp  # noqa: E402
from .errors import ArchiveFormatError, InvalidSpecError, NumericalError, SolverError  # noqa: E402
from .export import DensityField  # noqa: E402
from .problem import FullSpec, parse_problem  # noqa: E402

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def _load_spec(path) -> FullSpec:
    with open(path, encoding="utf-8") as f:
        return parse_problem(f.read())


def _history_writer(path):
    """Streaming history CSV writer; returns (sink, close)."""
    f = open(path, "w", encoding="utf-8", newline="")
    f.write(",".join(optimize.HistoryRecord.FIELDS) + "\n")

    def sink(rec: optimize.HistoryRecord):
        f.write(",".join(
            str(v) if isinstance(v, int) else f"{v:.17g}" for v in rec.row()
        ) + "\n")

    return sink, f.close


def _write_run_outputs(out_dir, model, deltas):
    """Density raw64 + pgm/slice + figures for a finished training run."""
    latents = (
        [model.params.latents[i] for i in range(len(deltas))]
        if model.kind == "dual" else [None]
    )
    for i, z in enumerate(latents):
        rho = optimize.infer(model, 1, z)
        field = DensityField(rho, model.grid.dims, 1)
        tag = f"_{i}" if model.kind == "dual" else ""
        export.write_raw64(field, os.path.join(out_dir, f"density{tag}.raw64"))
        img = field if field.ndim == 2 else export.slice_3d(field)
        export.write_pgm8(img, os.path.join(out_dir, f"density{tag}.pgm"))
        report.density_figure(field, os.path.join(out_dir, f"density{tag}.png"))
    report.convergence_figure(
        model.history, os.path.join(out_dir, "convergence.png"), deltas
    )
    archive.save_weights(model, os.path.join(out_dir, "weights.nstw"))


def cmd_optimize(args) -> int:
    spec = _load_spec(args.config)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    sink, close = _history_writer(os.path.join(out_dir, "history.csv"))
    try:
        model = optimize.train_single(
            spec.problem, spec.network, spec.train, spec.solver,
            history_sink=sink,
        )
    finally:
        close()
    _write_run_outputs(out_dir, model, [spec.problem.volume_fraction])
    r = model.history[-1] if model.history else None
    if r is not None:
        print(f"final compliance {r.compliance:.6g}, V/V0 {r.volume:.4f}, "
              f"converged: {model.converged}")
    return EXIT_OK


def cmd_multi(args) -> int:
    spec = _load_spec(args.config)
    if not spec.is_multi:
        raise InvalidSpecError("config has no subtasks; use `optimize` for single mode")
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    sink, close = _history_writer(os.path.join(out_dir, "history.csv"))
    try:
        model = optimize.train_multi(
            list(spec.subtasks), spec.network, spec.train, spec.solver,
            history_sink=sink,
        )
    finally:
        close()
    _write_run_outputs(out_dir, model, model.subtask_deltas)
    print(f"{len(spec.subtasks)} subtasks trained, converged: {model.converged}")
    return EXIT_OK


def cmd_simp(args) -> int:
    spec = _load_spec(args.config)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    sink, close = _history_writer(os.path.join(out_dir, "history.csv"))
    try:
        rho, history = simp.simp_optimize(
            spec.problem, spec.simp, spec.solver, history_sink=sink
        )
    finally:
        close()
    field = DensityField(rho, spec.problem.grid.dims, 1)
    export.write_raw64(field, os.path.join(out_dir, "density.raw64"))
    img = field if field.ndim == 2 else export.slice_3d(field)
    export.write_pgm8(img, os.path.join(out_dir, "density.pgm"))
    report.density_figure(field, os.path.join(out_dir, "density.png"))
    report.convergence_figure(
        history, os.path.join(out_dir, "convergence.png"),
        [spec.problem.volume_fraction],
    )
    r = history[-1]
    print(f"final compliance {r.compliance:.6g}, V/V0 {r.volume:.4f}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = archive.load_weights(args.weights)
    latent = None
    if model.kind == "dual":
        if args.latent is None:
            print("error: dual-network archive requires --latent", file=sys.stderr)
            return EXIT_INVALID
        latent = np.array([float(v) for v in args.latent.split(",")])
    elif args.latent is not None:
        print("error: single-network archive takes no --latent", file=sys.stderr)
        return EXIT_INVALID
    rho = optimize.infer(model, args.scale, latent)
    dims = tuple(d * args.scale for d in model.grid.dims)
    field = DensityField(rho, dims, args.scale)
    export.write_raw64(field, args.out)
    v = float(rho.mean())
    print(f"wrote {args.out}: dims {dims}, V/V0 {v:.4f}")
    return EXIT_OK


def cmd_export(args) -> int:
    field = export.read_raw64(args.field)
    if args.slice is not None and field.ndim == 3:
        field = export.slice_3d(field, index=args.slice)
    if args.format in ("pgm8", "raw64", "csv"):
        export.export_density(field, args.format, args.out)
    elif args.format == "contour":
        export.export_contour(field, args.threshold, args.out,
                              close_boundary=args.close_boundary)
    elif args.format == "stl":
        if field.ndim != 3:
            print("error: stl export needs a 3D field", file=sys.stderr)
            return EXIT_INVALID
        export.export_contour(field, args.threshold, args.out)
    else:
        print(f"error: unknown format {args.format!r}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    suites = ("mbb", "bridge", "lbracket") if args.suite == "all" else (args.suite,)
    deltas = args.deltas or [0.3, 0.4, 0.5]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for name in suites:
        for delta in deltas:
            problem = benchmarks.by_name(name, delta, small=args.small)
            net, train, solver = benchmarks.training_defaults(
                problem, omega=args.omega, epochs=args.epochs
            )
            t0 = time.perf_counter()
            rho, hist = simp.simp_optimize(
                problem, simp.SimpConfig(max_iterations=args.epochs), solver
            )
            simp_s = time.perf_counter() - t0
            rec = hist[-1]
            rows.append({"benchmark": name, "method": "simp", "omega": "",
                         "delta": delta, "compliance": rec.compliance,
                         "volume": rec.volume, "iterations": rec.epoch + 1,
                         "seconds": simp_s})
            field = DensityField(rho, problem.grid.dims, 1)
            report.density_figure(
                field, os.path.join(args.out, f"{name}_{delta:g}_simp.png"),
                f"{name} δ={delta:g} simp",
            )
            t0 = time.perf_counter()
            model = optimize.train_single(problem, net, train, solver)
            nsto_s = time.perf_counter() - t0
            rec = model.history[-1]
            rows.append({"benchmark": name, "method": "nsto",
                         "omega": args.omega, "delta": delta,
                         "compliance": rec.compliance, "volume": rec.volume,
                         "iterations": rec.epoch + 1, "seconds": nsto_s})
            field = DensityField(optimize.infer(model), problem.grid.dims, 1)
            report.density_figure(
                field, os.path.join(args.out, f"{name}_{delta:g}_nsto.png"),
                f"{name} δ={delta:g} nsto",
            )
            print(f"{name} δ={delta:g}: simp C={rows[-2]['compliance']:.4g} "
                  f"({simp_s:.0f}s), nsto C={rec.compliance:.4g} ({nsto_s:.0f}s)")
    header = ("benchmark", "method", "omega", "delta", "compliance",
              "volume", "iterations", "seconds")
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(
            f"{r[k]:.17g}" if isinstance(r[k], float) else str(r[k])
            for k in header
        ))
    export.atomic_write(os.path.join(args.out, "comparison.csv"),
                        ("\n".join(lines) + "\n").encode())
    report.comparison_figure(rows, os.path.join(args.out, "comparison.png"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nsto",
        description="Neural synthesizing topology optimization toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("optimize", help="train a single-structure model")
    sp.add_argument("config", help="problem config file (YAML)")
    sp.add_argument("--out", default="run", help="output directory")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("multi", help="train a multi-subtask solution space")
    sp.add_argument("config")
    sp.add_argument("--out", default="run")
    sp.set_defaults(func=cmd_multi)

    sp = sub.add_parser("simp", help="run the classical SIMP baseline")
    sp.add_argument("config")
    sp.add_argument("--out", default="run")
    sp.set_defaults(func=cmd_simp)

    sp = sub.add_parser("infer", help="feedforward inference from a weight archive")
    sp.add_argument("weights")
    sp.add_argument("--scale", type=int, default=1,
                    help="super-resolution factor (elements per axis)")
    sp.add_argument("--latent", default=None,
                    help="comma-separated latent code (dual archives)")
    sp.add_argument("--out", default="density.raw64")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("export", help="convert a raw64 density field")
    sp.add_argument("field", help="raw64 input file")
    sp.add_argument("--format", required=True,
                    choices=("pgm8", "raw64", "csv", "contour", "stl"))
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--close-boundary", action="store_true",
                    help="close contours along the domain boundary")
    sp.add_argument("--slice", type=int, default=None,
                    help="z-slice index for 3D fields with 2D formats")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("bench", help="NSTO vs SIMP benchmark comparison")
    sp.add_argument("suite", choices=("mbb", "bridge", "lbracket", "all"))
    sp.add_argument("--deltas", type=float, nargs="*", default=None)
    sp.add_argument("--omega", type=float, default=60.0)
    sp.add_argument("--epochs", type=int, default=80)
    sp.add_argument("--small", action="store_true",
                    help="use reduced grids for quick runs")
    sp.add_argument("--out", default="bench")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidSpecError, ArchiveFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
