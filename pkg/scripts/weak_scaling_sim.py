#!/usr/bin/env python3
"""Weak-scaling sweep on the simulated backend.

Runs the molecular-dynamics-shaped ensemble at a range of pipeline counts,
holding cores per pipeline fixed, and reports whether execution time stays
flat as the ensemble widens. Writes trials.csv, summary.csv, and
gnuplot-ready .dat series under the output directory.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from pilotflow.experiment import ExperimentConfig, run_experiment, write_plot_files


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--pipelines",
        type=int,
        nargs="+",
        default=[2, 4, 8, 16],
        help="ensemble widths to sweep",
    )
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("out/weak_scaling_sim"))
    parser.add_argument(
        "--queue-wait", type=float, default=2.0, help="batch queue wait, seconds"
    )
    parser.add_argument(
        "--pull-latency", type=float, default=0.25, help="per bulk pull, seconds"
    )
    parser.add_argument(
        "--fs-latency", type=float, default=0.125, help="per file operation, seconds"
    )
    args = parser.parse_args()

    config = ExperimentConfig(
        name="weak-scaling-sim",
        workload="SIM",
        pipeline_counts=tuple(args.pipelines),
        trials=args.trials,
        backend={
            "backend": "sim",
            "queue_wait": args.queue_wait,
            "pull_latency": args.pull_latency,
            "fs_latency": args.fs_latency,
        },
        seed=args.seed,
    )
    result = run_experiment(config, args.out)
    plots = write_plot_files(args.out)

    shape = {
        r.pipelines: (r.tasks, r.cores) for r in result.reports
    }
    print(f"{'pipelines':>9}  {'tasks':>5}  {'cores':>5}  {'ttx mean':>9}  {'ttx max':>9}")
    for row in result.aggregates:
        tasks, cores = shape[row.pipelines]
        print(
            f"{row.pipelines:>9}  {tasks:>5}  {cores:>5}  "
            f"{row.ttx_mean:>9.4f}  {row.ttx_max:>9.4f}"
        )
    spread = max(r.ttx_mean for r in result.aggregates) - min(
        r.ttx_mean for r in result.aggregates
    )
    print(f"ttx spread across widths: {spread:.6f}s")
    print(f"wrote {args.out}/trials.csv, {args.out}/summary.csv")
    for path in plots:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
