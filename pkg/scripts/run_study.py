#!/usr/bin/env python3
"""Desk-scale replication of the Lennard-Jones simulation study.

Four rigidity cases (epsilon = 0.1, 0.5, 1, 2 at sigma = 0.1, z = 100) on
[0,2]^2, fitted with the grid and shift-invariant variational estimators and
the pseudolikelihood baseline. Defaults to 100 replicates per case; the
extreme case mixes slowly and is skipped unless requested.

Usage:
    python scripts/run_study.py --outdir results --replicates 100 \
        --cases low,moderate,high
"""

import argparse
import json
from pathlib import Path

import numpy as np

import gibbsvar as gv

CASES = {
    "low": 0.1,
    "moderate": 0.5,
    "high": 1.0,
    "extreme": 2.0,
}
TRUE_SIGMA = 0.1
Z = 100.0
RANGE = 0.25


def build_plan(case, epsilon, replicates, seed, outdir, steps, grid_res):
    theta = gv.sigma_eps_to_theta(TRUE_SIGMA, epsilon)
    model = {"basis": "lennard-jones", "theta": [float(t) for t in theta],
             "z": Z, "R0": RANGE}
    window = gv.Window(np.zeros(2), np.full(2, 2.0))
    estimators = [
        gv.EstimatorSpec(kind="grid", cell_side=0.2),
        gv.EstimatorSpec(kind="invariant"),
        gv.EstimatorSpec(kind="mple", grid_res=grid_res, rescale=TRUE_SIGMA),
    ]
    return gv.ExperimentPlan(
        model=model, window=window, replicates=replicates,
        estimators=estimators, seed=seed,
        sampler=gv.SamplerConfig(steps=steps),
        outdir=str(Path(outdir) / case))


def fmt_row(label, entry):
    sig = entry.get("sigma")
    eps = entry.get("epsilon")
    if sig is None:
        return f"  {label:<10} (no valid estimates)"
    out = (f"  {label:<10} sigma {sig['mean']:.3f}/{sig['median']:.3f}"
           f"/{sig['sd']:.3f}  eps {eps['mean']:.3f}/{eps['median']:.3f}"
           f"/{eps['sd']:.3f}  invalid {entry['invalid_proportion']:.3f}")
    pooled = entry.get("pooled")
    if pooled and pooled.get("valid"):
        out += f"  pooled sigma {pooled['sigma']:.3f} eps {pooled['epsilon']:.3f}"
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="results")
    parser.add_argument("--replicates", type=int, default=100)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--steps", type=int, default=500_000)
    parser.add_argument("--grid-res", type=int, default=128,
                        help="pseudolikelihood quadrature resolution")
    parser.add_argument("--cases", default="low,moderate,high",
                        help=f"comma list from {sorted(CASES)}; extreme is slow")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    wanted = [c.strip() for c in args.cases.split(",") if c.strip()]
    unknown = set(wanted) - set(CASES)
    if unknown:
        parser.error(f"unknown cases: {sorted(unknown)}")

    all_summaries = {}
    for case in wanted:
        epsilon = CASES[case]
        print(f"== case {case} (epsilon={epsilon}) ==")
        plan = build_plan(case, epsilon, args.replicates,
                          gv.child_seed(args.seed, sorted(CASES).index(case)),
                          args.outdir, args.steps, args.grid_res)
        report = gv.run_experiment(plan, workers=args.workers)
        all_summaries[case] = report.summary
        print(f"  true: sigma {TRUE_SIGMA} eps {epsilon}   "
              f"(mean/median/sd below)")
        for label in ("grid", "invariant", "mple"):
            entry = report.summary["estimators"].get(label)
            if entry:
                print(fmt_row(label, entry))
        mean_sim = (np.mean(report.sim_seconds)
                    if report.sim_seconds else float("nan"))
        print(f"  mean simulation time {mean_sim:.2f}s per replicate")

    combined = Path(args.outdir) / "study_summary.json"
    combined.parent.mkdir(parents=True, exist_ok=True)
    combined.write_text(json.dumps(all_summaries, indent=2) + "\n")
    print(f"\nwrote {combined}")


if __name__ == "__main__":
    main()
