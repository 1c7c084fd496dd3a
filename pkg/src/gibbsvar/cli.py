"""Command line interface: simulate, fit, experiment, summarize."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .geometry import Window, read_pattern, write_pattern
from .harness import (EstimatorSpec, ExperimentPlan, fit_one, run_experiment,
                      summarize)
from .models import load_model
from .sampler import SamplerConfig, simulate


def _parse_window(text: str) -> Window:
    vals = [float(v) for v in text.replace(";", ",").split(",")]
    if len(vals) % 2:
        raise argparse.ArgumentTypeError(
            "window must be lower coords then upper coords, e.g. 0,0,2,2")
    d = len(vals) // 2
    return Window(np.array(vals[:d]), np.array(vals[d:]))


def _cmd_simulate(args) -> int:
    model = load_model(args.model)
    cfg = SamplerConfig(steps=args.steps, seed=args.seed,
                        fixed_n=args.fixed_n)
    config = simulate(model, args.window, cfg)
    write_pattern(config, args.out)
    print(f"wrote {len(config)} points to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    model = load_model(args.model)
    config = read_pattern(args.pattern)
    est = EstimatorSpec(kind=args.estimator, formula=args.formula,
                        cell_side=args.cell_side, border=args.border,
                        covariance=args.covariance, grid_res=args.grid_res,
                        rescale=args.rescale)
    result, _ = fit_one(config, model, est)
    payload = result.to_dict()
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_experiment(args) -> int:
    plan = ExperimentPlan.from_json(args.plan)
    if args.seed is not None:
        plan.seed = args.seed
    report = run_experiment(plan, outdir=args.outdir, workers=args.workers)
    outdir = args.outdir or plan.outdir
    print(json.dumps(report.summary, indent=2))
    if outdir:
        print(f"rows written to {Path(outdir) / 'rows.csv'}", file=sys.stderr)
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize(args.rows, outdir=args.outdir)
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibbsvar",
        description="Simulate pairwise Gibbs point processes and fit their "
                    "parameters with variational and pseudolikelihood "
                    "estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw one realization of a model")
    sim.add_argument("--model", required=True, help="model spec JSON")
    sim.add_argument("--window", type=_parse_window, required=True,
                     help="lower then upper coords, e.g. 0,0,2,2")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--steps", type=int, default=500_000)
    sim.add_argument("--fixed-n", dest="fixed_n", type=int, default=None,
                     help="condition on this point count (moves only)")
    sim.add_argument("--out", required=True, help="pattern CSV path")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="fit parameters to a point pattern")
    fit.add_argument("--pattern", required=True, help="pattern CSV path")
    fit.add_argument("--model", required=True, help="model spec JSON (basis)")
    fit.add_argument("--estimator", default="grid",
                     choices=("invariant", "grid", "mple"))
    fit.add_argument("--formula", default="simplified",
                     choices=("simplified", "raw"))
    fit.add_argument("--cell-side", dest="cell_side", type=float, default=0.2)
    fit.add_argument("--border", type=float, default=0.0,
                     help="erode the outer sums by this margin")
    fit.add_argument("--covariance", action="store_true",
                     help="grid only: attach the sandwich covariance")
    fit.add_argument("--grid-res", dest="grid_res", type=int, default=128,
                     help="mple quadrature resolution")
    fit.add_argument("--rescale", type=float, default=None,
                     help="mple distance unit (default: true sigma)")
    fit.add_argument("--out", default=None, help="write result JSON here")
    fit.set_defaults(func=_cmd_fit)

    exp = sub.add_parser("experiment", help="run a replicated study")
    exp.add_argument("--plan", required=True, help="experiment plan JSON")
    exp.add_argument("--outdir", default=None)
    exp.add_argument("--workers", type=int, default=None)
    exp.add_argument("--seed", type=int, default=None,
                     help="override the plan master seed")
    exp.set_defaults(func=_cmd_experiment)

    summ = sub.add_parser("summarize", help="summary tables from a rows CSV")
    summ.add_argument("--rows", required=True)
    summ.add_argument("--outdir", default=None,
                      help="write summary.json and scatter.csv here")
    summ.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
