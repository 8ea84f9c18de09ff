"""CHESHIRE against PageRank and degree allocations on two 128-node networks.

    python scripts/baseline_comparison.py --out-dir results/baselines
"""

import argparse
import math
from dataclasses import replace
from pathlib import Path

from cheshire.harness import load_config, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
NETWORKS = ("assortative_128", "hierarchical_128")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results/baselines")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    for name in NETWORKS:
        config = load_config(CONFIGS / f"{name}.yaml")
        config = replace(config, out_dir=str(Path(args.out_dir) / name), threads=args.threads)
        table = run_experiment(config)
        print(f"{name} (budget {config.budget:g})")
        for method, m in table.methods.items():
            print(f"  {method:13s} organic {m.final_mean:9.1f} +- {m.final_stderr:6.1f}  incentivized {m.incentivized_mean:7.1f}")
        best = table.methods["cheshire"]
        for rival in ("prk", "deg"):
            other = table.methods[rival]
            z = (best.final_mean - other.final_mean) / math.hypot(best.final_stderr, other.final_stderr)
            print(f"  cheshire - {rival}: {z:.2f} standard errors")


if __name__ == "__main__":
    main()
