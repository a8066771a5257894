#!/usr/bin/env python3
"""Engine and runtime overhead on the local process backend.

Runs the ensemble with the null workload (tasks execute instantly) so the
measured time is pure bookkeeping: task translation on the engine side,
bulk pulls and description IO on the runtime side. Sweeping the ensemble
width shows how both overheads grow with task count.
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
    parser.add_argument("--trials", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("out/overhead_local"))
    args = parser.parse_args()

    config = ExperimentConfig(
        name="overhead-local",
        workload="NULL",
        pipeline_counts=tuple(args.pipelines),
        trials=args.trials,
        backend={"backend": "local"},
        seed=args.seed,
        walltime=600.0,
    )
    result = run_experiment(config, args.out)
    plots = write_plot_files(args.out)

    tasks_for = {r.pipelines: r.tasks for r in result.reports}
    print(
        f"{'pipelines':>9}  {'tasks':>5}  {'engine ms':>10}  "
        f"{'runtime ms':>10}  {'ttc ms':>9}"
    )
    for row in result.aggregates:
        print(
            f"{row.pipelines:>9}  {tasks_for[row.pipelines]:>5}  "
            f"{row.engine_overhead_mean * 1e3:>10.3f}  "
            f"{row.runtime_overhead_mean * 1e3:>10.3f}  "
            f"{row.ttc_mean * 1e3:>9.3f}"
        )
    print(f"wrote {args.out}/trials.csv, {args.out}/summary.csv")
    for path in plots:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
