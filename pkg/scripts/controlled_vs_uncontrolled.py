"""Controlled vs uncontrolled activity on the 64-node core-periphery network.

    python scripts/controlled_vs_uncontrolled.py --out-dir results/core_periphery_64
"""

import argparse
from dataclasses import replace
from pathlib import Path

from cheshire.harness import load_config, run_experiment

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "core_periphery_64.yaml"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results/core_periphery_64")
    parser.add_argument("--budget", type=float, default=None)
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    config = replace(load_config(CONFIG), out_dir=args.out_dir)
    for key in ("budget", "runs"):
        if getattr(args, key) is not None:
            config = replace(config, **{key: getattr(args, key)})
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    table = run_experiment(config)
    ctl, unc = table.methods["cheshire"], table.methods["uncontrolled"]
    print(f"incentivized (cheshire): {ctl.incentivized_mean:.1f} +- {ctl.incentivized_stderr:.1f}")
    print(f"organic cheshire:     {ctl.final_mean:.1f} +- {ctl.final_stderr:.1f} (capped runs {ctl.capped_runs})")
    print(f"organic uncontrolled: {unc.final_mean:.1f} +- {unc.final_stderr:.1f}")
    print(f"ratio: {ctl.final_mean / unc.final_mean:.2f}x; report in {args.out_dir}")


if __name__ == "__main__":
    main()
