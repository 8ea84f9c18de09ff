"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 solver or calibration failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .cheshire import calibrate_budget, simulate_controlled
from .errors import CalibrationError, ConfigError, InvalidBoundError, MalformedLogError, SolverDivergenceError
from .estimation import FitConfig, fit_mle
from .harness import NETWORK_PRESETS, RUN_KEY, NetworkPreset, load_config, load_nbar, render_svg, run_experiment
from .hawkes import branching_check, load_log, load_model, save_log, save_model
from .networks import Graph, baseline_policy, degree_scores, load_graph, pagerank, save_graph
from .policy import ControlConfig, build_policy, load_policy, save_policy
from .rng import derive_seed
from .simulation import DEFAULT_EVENT_CAP, simulate_open_loop, simulate_uncontrolled


def _floats(text, count=None):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {text!r}")
    return values


def _pair(text):
    return tuple(_floats(text, 2))


def _weights(text, n):
    """A scalar, or a file with ``n`` comma/newline separated values."""
    try:
        return float(text)
    except ValueError:
        pass
    path = Path(text)
    if not path.is_file():
        raise ConfigError(f"{text!r} is neither a number nor a readable file")
    try:
        values = [float(x) for x in path.read_text().replace("\n", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if len(values) != n:
        raise ConfigError(f"{path}: expected {n} values, got {len(values)}")
    return values


def _out_dir(args):
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_net(args):
    if args.preset:
        preset = NETWORK_PRESETS[args.preset]
    else:
        if args.theta is None:
            raise ConfigError("give --preset or --theta")
        preset = NetworkPreset(
            tuple(args.theta),
            args.k,
            args.a_range,
            args.mu_range,
            args.active,
            args.omega,
            args.max_branching,
        )
    model = preset.generate(args.seed if args.rng_seed is None else args.rng_seed)
    out = Path(args.out) if args.out else _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    save_graph(Graph.from_model(model), out / "graph.txt")
    rho = branching_check(model).spectral_radius
    print(f"n={model.n} edges={len(model.edges())} branching_ratio={rho:.6g} -> {out / 'model.json'}")


def cmd_policy(args):
    model = load_model(args.model)
    q, s, f = (_weights(w, model.n) for w in (args.q, args.s, args.f))
    config = ControlConfig.uniform(model.n, args.t0, args.tf, q, s, f, args.grid_steps)
    if args.budget is not None:
        cal = calibrate_budget(model, config, args.budget, runs=args.calibration_runs, seed=derive_seed(args.seed, 3))
        config = cal.config
        print(f"calibrated s multiplier {cal.multiplier:.6g} (budget estimate {cal.budget_estimate:.6g})")
    policy = build_policy(model, config)
    out = Path(args.out) if args.out else _out_dir(args) / "policy.json"
    save_policy(policy, out)
    print(f"policy on {config.grid_steps + 1} grid points -> {out}")


def cmd_sim(args):
    model = load_model(args.model)
    out = _out_dir(args)
    policy = None
    u = None
    if args.policy:
        policy = load_policy(args.policy)
    elif args.baseline:
        if args.budget is None:
            raise ConfigError("--baseline needs --budget")
        graph = Graph.from_model(model)
        scores = pagerank(graph).scores if args.baseline == "prk" else degree_scores(graph)
        u = baseline_policy(scores, args.budget, (args.t0, args.tf))
    for r in range(args.runs):
        seed = derive_seed(args.seed, RUN_KEY, r)
        if policy is not None:
            res = simulate_controlled(model, policy, args.t0, args.tf, seed, args.cap)
        elif u is not None:
            res = simulate_open_loop(model, u, args.t0, args.tf, seed, args.cap)
        else:
            res = simulate_uncontrolled(model, args.t0, args.tf, seed, args.cap)
        path = out / f"log_{r:03d}.csv"
        save_log(res.log, path)
        flag = " capped" if res.capped else ""
        print(f"run {r}: organic={res.organic_count} incentivized={res.incentivized_count}{flag} -> {path}")


def cmd_run(args):
    config = load_config(args.config)
    overrides = {}
    if args.seed_given:
        overrides["master_seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.milestone is not None:
        overrides["milestone"] = args.milestone
    config = replace(config, **overrides)
    if config.out_dir is None:
        config = replace(config, out_dir=".")
    table = run_experiment(config)
    for name, m in table.methods.items():
        extra = f" milestone={m.milestone_mean:.6g}" if m.milestone_mean is not None else ""
        print(
            f"{name}: organic={m.final_mean:.6g}+-{m.final_stderr:.3g} "
            f"incentivized={m.incentivized_mean:.6g} capped={m.capped_runs}{extra}"
        )
    for name, msg in table.failures.items():
        print(f"{name}: FAILED ({msg})", file=sys.stderr)
    print(f"report -> {config.out_dir}")
    if table.failures:
        return 3
    return 0


def cmd_fit(args):
    graph = load_graph(args.support)
    paths = sorted(glob.glob(args.logs))
    if not paths:
        raise ConfigError(f"no log files match {args.logs!r}")
    horizon = None if args.tf is None else (args.t0, args.tf)
    logs = [load_log(p, graph.n, horizon) for p in paths]
    config = FitConfig(tuple(args.omega_grid), args.l2, args.max_iters)
    result = fit_mle(logs, graph, config, workers=args.threads or 1)
    out = Path(args.out) if args.out else _out_dir(args) / "fitted_model.json"
    save_model(result.model, out)
    status = "converged" if result.converged else "NOT converged"
    print(f"fit on {len(logs)} logs, omega={result.model.omega:g}, {status} after {result.iterations} iterations -> {out}")


def cmd_report(args):
    src = Path(args.input)
    grid, series = load_nbar(src / "nbar.csv")
    out = Path(args.out_dir) if args.out_dir else src
    out.mkdir(parents=True, exist_ok=True)
    (out / "nbar.svg").write_text(render_svg(grid, series))
    print(f"chart -> {out / 'nbar.svg'}")


def build_parser():
    parser = argparse.ArgumentParser(prog="cheshire", description="Steering activity in Hawkes networks.")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=None, help="worker processes")
    parser.add_argument("--out-dir", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-net", help="generate a Kronecker network model")
    p.add_argument("--preset", choices=sorted(NETWORK_PRESETS))
    p.add_argument("--seed-matrix", "--theta", dest="theta", type=lambda t: _floats(t, 4), help="Kronecker seed a,b,c,d")
    p.add_argument("--k", type=int, default=6, help="Kronecker power (n = 2^k)")
    p.add_argument("--a-range", type=_pair, default=(0.0, 10.0))
    p.add_argument("--mu-range", type=_pair, default=(0.0, 10.0))
    p.add_argument("--active", type=float, default=0.2, help="fraction of users with a baseline")
    p.add_argument("--omega", type=float, default=16.0)
    p.add_argument("--max-branching", type=float, default=math.inf, help="redraw until below this")
    p.add_argument("--rng-seed", type=int, default=None, help="network seed (default: --seed)")
    p.add_argument("--out", default=None, help="directory for model.json and graph.txt (default: --out-dir)")
    p.set_defaults(func=cmd_gen_net)

    p = sub.add_parser("policy", help="solve (and optionally calibrate) the feedback policy")
    p.add_argument("--model", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--q", default="1", help="scalar or per-user CSV file")
    p.add_argument("--s", default="1", help="scalar or per-user CSV file")
    p.add_argument("--f", default="0", help="scalar or per-user CSV file")
    p.add_argument("--grid-steps", type=int, default=2000)
    p.add_argument("--budget", type=float, default=None, help="calibrate s to this expected count")
    p.add_argument("--calibration-runs", type=int, default=10)
    p.add_argument("--out", default=None, help=".json or .npz (default <out-dir>/policy.json)")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("sim", help="simulate runs and write event logs")
    p.add_argument("--model", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--cap", type=int, default=DEFAULT_EVENT_CAP)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--policy", help="solved policy file for controlled runs")
    group.add_argument("--baseline", choices=("prk", "deg"))
    p.add_argument("--budget", type=float, default=None)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("--milestone", type=int, default=None, help="organic-count target for milestone times")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="maximum likelihood fit from event logs")
    p.add_argument("--logs", required=True, help="glob of time,user,kind CSV files")
    p.add_argument("--support", required=True, help="edge-list graph file")
    p.add_argument("--omega-grid", type=_floats, default=[1.0])
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, default=None, help="horizon end (default: last event)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="redraw the chart from a results directory")
    p.add_argument("--input", required=True, help="directory containing nbar.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        code = args.func(args)
    except (ConfigError, MalformedLogError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverDivergenceError, CalibrationError, InvalidBoundError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    return 0 if code is None else code


if __name__ == "__main__":
    sys.exit(main())
