"""Mean time for CHESHIRE to reach an organic-count milestone at increasing budgets.

    python scripts/milestone_sweep.py --budgets 100,300,900 --milestone 500
"""

import argparse
from pathlib import Path

from cheshire.harness import ExperimentConfig, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", default="hierarchical-128")
    parser.add_argument("--budgets", default="100,300,900")
    parser.add_argument("--milestone", type=int, default=500)
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--out-dir", default="results/milestones")
    args = parser.parse_args()
    for budget in (float(b) for b in args.budgets.split(",")):
        config = ExperimentConfig(
            preset=args.preset,
            methods=("cheshire",),
            budget=budget,
            runs=args.runs,
            milestone=args.milestone,
            s=1000.0,
            calibration_runs=4,
            calibration_tol=0.1,
            out_dir=str(Path(args.out_dir) / f"budget_{budget:g}"),
        )
        table = run_experiment(config)
        if "cheshire" in table.failures:
            print(f"budget {budget:g}: {table.failures['cheshire']}")
            continue
        m = table.methods["cheshire"]
        when = "not reached" if m.milestone_mean is None else f"{m.milestone_mean:.4f} +- {m.milestone_stderr:.4f}"
        print(f"budget {budget:g}: milestone {when} ({m.milestone_reached}/{m.runs} runs)")


if __name__ == "__main__":
    main()
