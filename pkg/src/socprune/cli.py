"""Command-line front end.

One batch tool, seven subcommands.  ``gen`` writes a synthetic dataset,
``check`` validates one, ``fit``/``cv``/``prune``/``run`` are the pruning
stages at increasing levels of automation, and ``solve`` runs the conic
solver on a raw program file for debugging.  Everything is seeded and
deterministic: the same invocation produces byte-identical output files.

Exit codes: 0 success, 2 invalid input (validation or parse failure),
3 solver did not reach optimality, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as dataio
from .conic import read_cone_program
from .errors import AllCellsFailed, DomainError, FitFailed, IoError, SocpruneError
from .pipeline import (
    VOTE_MAJORITY,
    VOTE_WEIGHTED,
    PruneConfig,
    SyntheticSpec,
    cross_validate,
    fit_weights,
    generate_synthetic_ensemble,
    run_pipeline,
)
from .solver import STATUS_OPTIMAL, SolverSettings, solve

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_OPTIMAL = 3
EXIT_IO = 4

# Single-cell subcommands (fit, prune) default to the grid midpoints.
DEFAULT_ALPHA = 0.3
DEFAULT_LAMBDA = 0.5


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="RNG seed for anything stochastic (default 0)")
    common.add_argument("--alpha", type=float, default=None,
                        help="accuracy/diversity trade-off in [0,1]; for cv/run "
                             "this narrows the grid to a single value")
    common.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="sparsity weight >= 0; for cv/run this narrows the "
                             "grid to a single value")
    thresh = common.add_mutually_exclusive_group()
    thresh.add_argument("--threshold", type=float, default=None,
                        help="fixed pruning threshold h >= 0 on |w_i|")
    thresh.add_argument("--auto-threshold", action="store_true",
                        help="pick h on the validation split (default)")
    common.add_argument("--vote", choices=(VOTE_MAJORITY, VOTE_WEIGHTED),
                        default=VOTE_MAJORITY,
                        help="aggregation rule for ensemble predictions")
    common.add_argument("--simplex", action="store_true",
                        help="constrain weights to the probability simplex")
    common.add_argument("--tol", type=float, default=None,
                        help="solver stopping tolerance (gap and residuals)")
    common.add_argument("--max-iters", type=int, default=None,
                        help="solver iteration cap")
    common.add_argument("--out", default=None,
                        help="output path (default: print to stdout)")
    common.add_argument("--format", choices=dataio.REPORT_FORMATS,
                        default=dataio.FORMAT_JSON,
                        help="report format for prune/run")

    parser = argparse.ArgumentParser(
        prog="socprune",
        description="Ensemble pruning via second-order cone programming.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common],
                       help="write a synthetic prediction dataset")
    p.add_argument("--models", type=int, default=10)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--acc-low", type=float, default=0.5,
                   help="lower end of the per-model accuracy range")
    p.add_argument("--acc-high", type=float, default=0.9,
                   help="upper end of the per-model accuracy range")
    p.add_argument("--correlation", type=float, default=0.3,
                   help="error correlation between models, in [0,1)")
    p.add_argument("--sharpness", type=float, default=4.0,
                   help="confidence of the generated probability rows")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", parents=[common],
                       help="solve one (alpha, lambda) cell and print weights")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", parents=[common],
                       help="grid-search (alpha, lambda) on the validation split")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("prune", parents=[common],
                       help="fit one cell, threshold, vote, report")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("run", parents=[common],
                       help="full pipeline: cv, refit, threshold, vote, report")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[common],
                       help="validate a dataset directory")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", parents=[common],
                       help="solve a cone-program file (solver debugging)")
    p.add_argument("program", help="cone program text file")
    p.add_argument("--verbose", action="store_true",
                   help="print per-iteration solver progress")
    p.set_defaults(func=cmd_solve)

    return parser


def _solver_settings(args, verbose: bool = False) -> SolverSettings | None:
    if args.tol is None and args.max_iters is None and not verbose:
        return None
    kwargs = {}
    if args.tol is not None:
        kwargs.update(tol_gap=args.tol, tol_primal=args.tol, tol_dual=args.tol)
    if args.max_iters is not None:
        kwargs["max_iters"] = args.max_iters
    if verbose:
        kwargs["verbose"] = True
    return SolverSettings(**kwargs)


def _threshold_of(args):
    return args.threshold if args.threshold is not None else "auto"


def _prune_config(args, single_cell: bool = False) -> PruneConfig:
    kwargs = dict(
        threshold=_threshold_of(args),
        seed=args.seed,
        simplex_mode=args.simplex,
        vote_mode=args.vote,
        solver=_solver_settings(args),
    )
    if single_cell:
        alpha = DEFAULT_ALPHA if args.alpha is None else args.alpha
        lam = DEFAULT_LAMBDA if args.lam is None else args.lam
        kwargs.update(alpha_grid=(alpha,), lambda_grid=(lam,))
    else:
        if args.alpha is not None:
            kwargs["alpha_grid"] = (args.alpha,)
        if args.lam is not None:
            kwargs["lambda_grid"] = (args.lam,)
    return PruneConfig(**kwargs)


def _emit(args, text: str) -> None:
    if args.out is not None:
        dataio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict) -> None:
    _emit(args, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def cmd_gen(args) -> int:
    if args.out is None:
        raise DomainError("gen writes a dataset directory; --out is required")
    spec = SyntheticSpec(
        num_models=args.models,
        num_samples=args.samples,
        num_classes=args.classes,
        base_accuracy_range=(args.acc_low, args.acc_high),
        correlation=args.correlation,
        sharpness=args.sharpness,
        seed=args.seed,
    )
    t, y, splits = generate_synthetic_ensemble(spec)
    provenance = (
        f"gen seed={args.seed} models={args.models} samples={args.samples} "
        f"classes={args.classes} acc=[{args.acc_low},{args.acc_high}] "
        f"correlation={args.correlation} sharpness={args.sharpness}"
    )
    dataio.write_predictions(args.out, t, y, splits, provenance=provenance)
    return EXIT_OK


def cmd_fit(args) -> int:
    t, y, splits = dataio.read_predictions(args.data)
    alpha = DEFAULT_ALPHA if args.alpha is None else args.alpha
    lam = DEFAULT_LAMBDA if args.lam is None else args.lam
    w = fit_weights(
        t.subset(splits.train_indices), y.subset(splits.train_indices),
        alpha, lam, simplex=args.simplex, settings=_solver_settings(args),
    )
    _emit_json(args, {
        "kind": "socprune-weights",
        "format_version": 1,
        "alpha": alpha,
        "lambda": lam,
        "simplex": bool(args.simplex),
        "weights": [float(v) for v in w],
    })
    return EXIT_OK


def cmd_cv(args) -> int:
    t, y, splits = dataio.read_predictions(args.data)
    config = _prune_config(args)
    best_alpha, best_lambda, cells = cross_validate(t, y, splits, config)
    _emit_json(args, {
        "kind": "socprune-cv",
        "format_version": 1,
        "best_alpha": best_alpha,
        "best_lambda": best_lambda,
        "cells": [
            {
                "alpha": c.alpha,
                "lam": c.lam,
                "threshold": c.threshold,
                "accuracy": c.accuracy,
                "num_pruned": c.num_pruned,
                "status": c.status,
            }
            for c in cells
        ],
    })
    return EXIT_OK


def cmd_prune(args) -> int:
    t, y, splits = dataio.read_predictions(args.data)
    report = run_pipeline((t, y, splits), _prune_config(args, single_cell=True))
    _emit(args, dataio.render_report(report, args.format))
    return EXIT_OK


def cmd_run(args) -> int:
    t, y, splits = dataio.read_predictions(args.data)
    report = run_pipeline((t, y, splits), _prune_config(args))
    _emit(args, dataio.render_report(report, args.format))
    return EXIT_OK


def cmd_check(args) -> int:
    t, y, splits = dataio.read_predictions(args.data)
    print(
        f"ok: models={t.num_models} samples={t.num_samples} "
        f"classes={t.num_classes} train={splits.train_indices.size} "
        f"valid={splits.valid_indices.size} test={splits.test_indices.size}"
    )
    return EXIT_OK


def cmd_solve(args) -> int:
    program = read_cone_program(args.program)
    sol = solve(program, _solver_settings(args, verbose=args.verbose))
    objective = float(np.dot(np.asarray(program.objective, dtype=np.float64), sol.x))
    _emit_json(args, {
        "kind": "socprune-solution",
        "format_version": 1,
        "status": sol.status,
        "iterations": sol.iterations,
        "objective": objective,
        "gap": sol.gap,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "x": [float(v) for v in sol.x],
        "y": [float(v) for v in sol.y],
        "s": [float(v) for v in sol.s],
    })
    return EXIT_OK if sol.status == STATUS_OPTIMAL else EXIT_NOT_OPTIMAL


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FitFailed, AllCellsFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_OPTIMAL
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SocpruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
