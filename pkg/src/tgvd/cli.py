"""Command-line front end: ``tgvd {denoise,benchmark,sweep,traces}``.

Exit codes: 0 success, 1 usage or input error, 2 solver hit ``max_iters``
without reaching the gap tolerance.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import pipeline
from .pgm import PGMFormatError, load_image, save_image
from .problems import MissingParameter
from .solvers import SolverConfig, SolverError

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2

_SOLVERS = {"cp": "CP", "dr": "DR_EXACT", "dr-inexact": "DR_INEXACT"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_solver_flags(p):
    p.add_argument("--solver", choices=sorted(_SOLVERS), default="cp")
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--pcg-iters", type=int, default=2)
    p.add_argument("--no-precond", action="store_true")
    p.add_argument("--gap-tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)


def _add_model_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--delta1", type=float)
    p.add_argument("--delta2", type=float)
    p.add_argument("--c", type=float)


def build_parser():
    parser = _Parser(prog="tgvd", description="Gradient-aware TV/TGV image denoising.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("denoise", help="denoise one PGM image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--method", default="mtgv")
    p.add_argument("--truth", help="ground-truth PGM for a PSNR report")
    p.add_argument("--trace", help="write the gap trace(s) as CSV")
    _add_model_flags(p)
    _add_solver_flags(p)

    p = sub.add_parser("benchmark", help="PSNR/time table over images and noise factors")
    p.add_argument("--methods", type=_names, default=["dgtgv", "mtgv"])
    p.add_argument("--factors", type=_floats, default=[0.05, 0.1, 0.25])
    p.add_argument("--images", type=_names, help="PGM files (default: synthetic set)")
    p.add_argument("--size", type=int, default=128, help="synthetic image size")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--trace", help="directory for per-run gap traces")
    _add_solver_flags(p)

    p = sub.add_parser("sweep", help="best alpha (or c for dgtv) by PSNR")
    p.add_argument("--method", default="dgtgv")
    p.add_argument("--values", type=_floats, default=[0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
    p.add_argument("--factors", type=_floats, default=[0.05, 0.1, 0.25])
    p.add_argument("--images", type=_names)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--out")
    _add_solver_flags(p)

    p = sub.add_parser("traces", help="gap traces of one method under several solvers")
    p.add_argument("input", help="PGM file or synthetic image name")
    p.add_argument("outdir")
    p.add_argument("--method", default="mtgv")
    p.add_argument("--factor", type=float, default=0.1, help="noise added to the input")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--pcg-list", type=lambda s: [int(x) for x in _names(s)], default=[1, 2, 3])
    _add_model_flags(p)
    _add_solver_flags(p)
    return parser


def config_from_args(args):
    return SolverConfig(
        algorithm=_SOLVERS[args.solver], tau=args.tau, sigma=args.sigma, s=args.s,
        t=args.t, rho=args.rho, pcg_iters=args.pcg_iters,
        preconditioner="NONE" if args.no_precond else "ICHOL_BLOCK",
        gap_tol=args.gap_tol, max_iters=args.max_iters)


def _model_params(args):
    return {k: getattr(args, k) for k in ("alpha", "alpha0", "alpha1", "delta1", "delta2", "c")
            if getattr(args, k, None) is not None}


def _load_images(args):
    if not args.images:
        return pipeline.synthetic_set(args.size)
    return {os.path.splitext(os.path.basename(p))[0]: load_image(p) for p in args.images}


def _write_traces(result, path):
    if len(result.reports) == 1:
        pipeline.save_trace(result.reports[0], path)
        return
    root, ext = os.path.splitext(path)
    for k, rep in enumerate(result.reports, 1):
        pipeline.save_trace(rep, f"{root}.stage{k}{ext or '.csv'}")


def cmd_denoise(args):
    u0 = load_image(args.input)
    result = pipeline.denoise(args.method, u0, config_from_args(args), **_model_params(args))
    save_image(result.u, args.output)
    if args.trace:
        _write_traces(result, args.trace)
    gap = result.reports[-1].relative_gap
    line = f"method={result.method} iters={result.iterations} gap={gap:.3e}"
    if args.truth:
        line += f" psnr={pipeline.format_psnr(pipeline.psnr(result.u, load_image(args.truth)))}"
    print(line)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_benchmark(args):
    for m in args.methods:
        if m not in pipeline.METHODS:
            raise UsageError(f"unknown method {m!r}")
    rows = pipeline.run_benchmark(_load_images(args), args.factors, args.methods,
                                  config_from_args(args), seed=args.seed)
    if args.out:
        pipeline.save_csv(rows, args.out)
    else:
        import csv
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(pipeline.CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())
    if args.trace:
        os.makedirs(args.trace, exist_ok=True)
        for r in rows:
            for k, trace in enumerate(r.gap_traces, 1):
                name = f"{r.image}_{r.factor:g}_{r.method}_stage{k}.csv"
                with open(os.path.join(args.trace, name), "w") as fh:
                    fh.write(",".join(pipeline.TRACE_HEADER) + "\n")
                    fh.writelines(f"{it},{rel!r}\n" for it, rel in trace)
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"failed: {r.image}({r.factor}) {r.method}: {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args):
    if args.method not in ("dgtv", "dgtgv", "mtgv", "mtgv_w"):
        raise UsageError(f"sweep supports dgtv, dgtgv, mtgv, mtgv_w; got {args.method!r}")
    results = pipeline.alpha_sweep(args.method, _load_images(args), args.factors,
                                   args.values, config_from_args(args), seed=args.seed)
    key = "c" if args.method == "dgtv" else "alpha"
    lines = [f"image,factor,best_{key},psnr_db"]
    lines += [f"{r.image},{r.factor!r},{r.best:g},{pipeline.format_psnr(r.best_psnr_db)}"
              for r in results]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_traces(args):
    if os.path.exists(args.input):
        u0 = load_image(args.input)
        name = os.path.splitext(os.path.basename(args.input))[0]
    else:
        name = args.input
        u0 = pipeline.add_noise(pipeline.synthetic_image(name, args.size), args.factor,
                                name, args.seed)
    os.makedirs(args.outdir, exist_ok=True)
    base = config_from_args(args)
    runs = [("cp", base.replace(algorithm="CP")), ("dr", base.replace(algorithm="DR_EXACT"))]
    for k in args.pcg_list:
        for pre in ("ICHOL_BLOCK", "NONE"):
            tag = f"dr-pcg{k}" if pre == "ICHOL_BLOCK" else f"dr-cg{k}"
            runs.append((tag, base.replace(algorithm="DR_INEXACT", pcg_iters=k,
                                           preconditioner=pre)))
    status = EXIT_OK
    for tag, cfg in runs:
        try:
            res = pipeline.denoise(args.method, u0, cfg, **_model_params(args))
        except SolverError as exc:
            print(f"{tag}: {exc}")
            continue
        _write_traces(res, os.path.join(args.outdir, f"{name}_{args.method}_{tag}.csv"))
        print(f"{tag}: iters={res.iterations} time={res.wall_time:.3f}s "
              f"gap={res.reports[-1].relative_gap:.3e}")
    return status


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"denoise": cmd_denoise, "benchmark": cmd_benchmark,
                   "sweep": cmd_sweep, "traces": cmd_traces}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"tgvd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PGMFormatError, MissingParameter, ValueError, OSError) as exc:
        print(f"tgvd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"tgvd: solver failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
