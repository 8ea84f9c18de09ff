"""Experiment orchestration: matched-budget comparisons, metrics and reports.

Every run index ``r`` gets one seed ``derive_seed(master_seed, RUN_KEY, r)``
shared by all methods, so each arm sees the same organic random stream (common
random numbers); incentivized actions use that seed's separate control stream.
Aggregation folds results in ``(method, run)`` order, so a worker pool never
changes the output bytes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .cheshire import calibrate_budget, simulate_controlled
from .errors import CalibrationError, ConfigError, SolverDivergenceError
from .hawkes import EventLog, Kind, NetworkModel, branching_check, load_model
from .networks import (
    KRONECKER_PRESETS,
    Graph,
    KroneckerSeed,
    baseline_policy,
    degree_scores,
    kronecker_graph,
    pagerank,
    sample_parameters,
)
from .policy import ControlConfig, build_policy, zero_policy
from .rng import derive_seed, make_rng
from .simulation import DEFAULT_EVENT_CAP, counting_path, simulate_open_loop, simulate_uncontrolled

METHODS = ("cheshire", "prk", "deg", "uncontrolled")
GRID_POINTS = 100
RUN_KEY = 1
NETWORK_KEY = 2
CALIBRATION_KEY = 3


@dataclass(frozen=True)
class NetworkPreset:
    """Kronecker topology plus uniform parameter draws.

    Draws whose branching ratio is not below ``max_branching`` are rejected and
    redrawn from the next network seed.
    """

    theta: tuple
    k: int
    a_range: tuple = (0.0, 10.0)
    mu_range: tuple = (0.0, 10.0)
    active_fraction: float = 0.2
    omega: float = 16.0
    max_branching: float = 1.0
    max_attempts: int = 200

    def generate(self, master_seed):
        seed = KroneckerSeed(self.theta, self.k)
        for attempt in range(self.max_attempts):
            rng = make_rng(master_seed, NETWORK_KEY, attempt)
            graph = kronecker_graph(seed, rng)
            model = sample_parameters(graph, *self.a_range, *self.mu_range, self.active_fraction, self.omega, rng)
            if branching_check(model).spectral_radius < self.max_branching:
                return model
        raise ConfigError(f"no draw with branching ratio below {self.max_branching} in {self.max_attempts} attempts")


NETWORK_PRESETS = {
    "core-periphery-64": NetworkPreset(KRONECKER_PRESETS["core-periphery"], 6),
    # every draw of this family is supercritical; runs end at the event cap
    "dissortative-64": NetworkPreset(KRONECKER_PRESETS["dissortative"], 6, max_branching=math.inf),
    "assortative-128": NetworkPreset(KRONECKER_PRESETS["assortative"], 7, omega=32.0, max_branching=0.9),
    "hierarchical-128": NetworkPreset(KRONECKER_PRESETS["hierarchical"], 7, omega=32.0, max_branching=0.9),
    "core-periphery-128": NetworkPreset(KRONECKER_PRESETS["core-periphery-b"], 7, omega=32.0, max_branching=0.9),
    "random-128": NetworkPreset(KRONECKER_PRESETS["random"], 7, omega=64.0, max_branching=0.9),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One comparison. Exactly one of ``model_file`` and ``preset`` is set.

    ``q``, ``s``, ``f`` are the uniform diagonal weights of the control template;
    calibration rescales ``s`` to hit ``budget``.
    """

    preset: str | None = None
    model_file: str | None = None
    t0: float = 0.0
    tf: float = 5.5
    methods: tuple = METHODS
    budget: float = 0.0
    runs: int = 20
    master_seed: int = 0
    event_cap: int = DEFAULT_EVENT_CAP
    milestone: int | None = None
    out_dir: str | None = None
    q: float = 1.0
    s: float = 1.0
    f: float = 0.0
    grid_steps: int = 2000
    calibration_runs: int = 10
    calibration_tol: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if (self.preset is None) == (self.model_file is None):
            raise ConfigError("set exactly one of 'preset' and 'model_file'")
        if self.preset is not None and self.preset not in NETWORK_PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(NETWORK_PRESETS)}")
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods must not repeat")
        if not methods:
            raise ConfigError("methods list is empty")
        if int(self.runs) < 1:
            raise ConfigError("runs must be >= 1")
        if not (math.isfinite(self.budget) and self.budget >= 0):
            raise ConfigError("budget must be finite and >= 0")
        if not self.tf > self.t0:
            raise ConfigError("horizon must satisfy tf > t0")
        if self.milestone is not None and int(self.milestone) < 1:
            raise ConfigError("milestone must be >= 1")
        if int(self.event_cap) < 1 or int(self.threads) < 1 or int(self.calibration_runs) < 1:
            raise ConfigError("event_cap, threads and calibration_runs must be >= 1")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "runs", int(self.runs))

    def to_dict(self):
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        return doc

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a mapping")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def horizon(self):
        return (float(self.t0), float(self.tf))

    def load_model(self) -> NetworkModel:
        if self.model_file is not None:
            return load_model(self.model_file)
        return NETWORK_PRESETS[self.preset].generate(self.master_seed)

    def control_template(self, n) -> ControlConfig:
        return ControlConfig.uniform(n, self.t0, self.tf, self.q, self.s, self.f, self.grid_steps)


def load_config(path) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return ExperimentConfig.from_dict(doc or {})


def milestone_time(log: EventLog, target):
    """Time of the ``target``-th organic action, ``None`` if it never happens."""
    if int(target) < 1:
        raise ConfigError("milestone target must be >= 1")
    organic = log.times[log.kinds == Kind.ORGANIC]
    if organic.size < target:
        return None
    return float(organic[int(target) - 1])


@dataclass(frozen=True, eq=False)
class RunRecord:
    """What the metrics need from one run (logs are not kept)."""

    organic_path: np.ndarray
    organic_per_user: np.ndarray
    incentivized_per_user: np.ndarray
    capped: bool
    milestone: float | None


@dataclass(frozen=True, eq=False)
class MethodMetrics:
    nbar_mean: np.ndarray
    nbar_stderr: np.ndarray
    incentivized_mean: float
    incentivized_stderr: float
    organic_per_user: np.ndarray
    incentivized_per_user: np.ndarray
    capped_runs: int
    runs: int
    milestone_mean: float | None = None
    milestone_stderr: float | None = None
    milestone_reached: int = 0
    note: str = ""

    @property
    def final_mean(self):
        return float(self.nbar_mean[-1])

    @property
    def final_stderr(self):
        return float(self.nbar_stderr[-1])


@dataclass(frozen=True, eq=False)
class MetricsTable:
    grid: np.ndarray
    methods: dict = field(default_factory=dict)  # name -> MethodMetrics, in config order
    failures: dict = field(default_factory=dict)  # name -> diagnostic of an aborted arm
    budget: float = 0.0
    cheshire_multiplier: float | None = None


def _stderr(values):
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
    return values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def _record(result, grid, milestone):
    log = result.log
    _, organic_path = counting_path(log, grid, Kind.ORGANIC)
    n = log.n
    organic = np.bincount(log.users[log.kinds == Kind.ORGANIC], minlength=n)
    incent = np.bincount(log.users[log.kinds == Kind.INCENTIVIZED], minlength=n)
    stone = None if milestone is None else milestone_time(log, milestone)
    return RunRecord(organic_path, organic, incent, result.capped, stone)


def _run_task(task):
    kind, model, payload, t0, tf, seed, cap, grid, milestone = task
    if kind == "controlled":
        result = simulate_controlled(model, payload, t0, tf, seed, cap, track=False)
    elif kind == "open_loop":
        result = simulate_open_loop(model, payload, t0, tf, seed, cap)
    else:
        result = simulate_uncontrolled(model, t0, tf, seed, cap)
    return _record(result, grid, milestone)


def _aggregate(records, note=""):
    paths = np.array([r.organic_path for r in records], dtype=float)
    incent_totals = np.array([r.incentivized_per_user.sum() for r in records], dtype=float)
    stones = [r.milestone for r in records if r.milestone is not None]
    return MethodMetrics(
        nbar_mean=paths.mean(axis=0),
        nbar_stderr=_stderr(paths),
        incentivized_mean=float(incent_totals.mean()),
        incentivized_stderr=float(_stderr(incent_totals)),
        organic_per_user=np.mean([r.organic_per_user for r in records], axis=0),
        incentivized_per_user=np.mean([r.incentivized_per_user for r in records], axis=0),
        capped_runs=sum(r.capped for r in records),
        runs=len(records),
        milestone_mean=float(np.mean(stones)) if stones else None,
        milestone_stderr=float(_stderr(stones)) if stones else None,
        milestone_reached=len(stones),
        note=note,
    )


def run_experiment(config: ExperimentConfig, model: NetworkModel | None = None, write=True) -> MetricsTable:
    """Run every configured arm and return the metrics; writes the report when ``out_dir`` is set.

    A calibration or solver failure aborts only the cheshire arm and is kept in
    ``table.failures``.
    """
    model = config.load_model() if model is None else model
    t0, tf = config.horizon()
    grid = np.linspace(t0, tf, GRID_POINTS)
    seeds = [derive_seed(config.master_seed, RUN_KEY, r) for r in range(config.runs)]
    graph = Graph.from_model(model)
    tasks = {}
    notes = {}
    failures = {}
    multiplier = None
    for method in config.methods:
        if method == "uncontrolled":
            kind, payload = "uncontrolled", None
        elif method in ("prk", "deg"):
            scores = pagerank(graph).scores if method == "prk" else degree_scores(graph)
            if config.budget == 0:
                u = np.zeros(model.n)
            else:
                u = baseline_policy(scores, config.budget, (t0, tf))
            kind, payload = "open_loop", u
        else:
            if config.budget == 0:
                policy, note = zero_policy(model, t0, tf), "zero budget: no incentives"
            else:
                try:
                    cal = calibrate_budget(
                        model,
                        config.control_template(model.n),
                        config.budget,
                        runs=config.calibration_runs,
                        tol=config.calibration_tol,
                        seed=derive_seed(config.master_seed, CALIBRATION_KEY),
                        cap=config.event_cap,
                    )
                    policy = build_policy(model, cal.config)
                except (CalibrationError, SolverDivergenceError) as exc:
                    failures[method] = str(exc)
                    continue
                multiplier = cal.multiplier
                note = f"s multiplier {cal.multiplier:.6g}; calibration estimate {cal.budget_estimate:.6g}"
            kind, payload = "controlled", policy
            notes[method] = note
        tasks[method] = [
            (kind, model, payload, t0, tf, seed, config.event_cap, grid, config.milestone) for seed in seeds
        ]
    flat = [(m, i) for m in tasks for i in range(len(tasks[m]))]
    jobs = [tasks[m][i] for m, i in flat]
    if config.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(_run_task, jobs))
    else:
        records = [_run_task(job) for job in jobs]
    by_method = {m: [] for m in tasks}
    for (m, _), rec in zip(flat, records):
        by_method[m].append(rec)
    table = MetricsTable(
        grid=grid,
        methods={m: _aggregate(by_method[m], notes.get(m, "")) for m in config.methods if m in by_method},
        failures=failures,
        budget=float(config.budget),
        cheshire_multiplier=multiplier,
    )
    if write and config.out_dir is not None:
        export_report(table, config.out_dir)
    return table


# -- reports -------------------------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


_COLORS = ("#c0392b", "#2471a3", "#229954", "#7d3c98", "#b9770e", "#566573")


def render_svg(grid, series, width=640, height=400, title="N(t)"):
    """Line chart with a standard-error band per series.

    ``series`` maps a label to ``(mean, stderr)`` arrays on ``grid``.
    """
    pad_l, pad_r, pad_t, pad_b = 60, 120, 30, 40
    x0, x1 = float(grid[0]), float(grid[-1])
    top = max((float(np.max(m + s)) for m, s in series.values()), default=1.0)
    top = top if top > 0 else 1.0
    span = x1 - x0 if x1 > x0 else 1.0

    def px(t):
        return pad_l + (t - x0) / span * (width - pad_l - pad_r)

    def py(v):
        return height - pad_b - v / top * (height - pad_t - pad_b)

    def pts(xs, ys):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
        f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
        f'<text x="{pad_l - 5}" y="{py(top) + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="10">{top:.4g}</text>',
        f'<text x="{pad_l - 5}" y="{height - pad_b + 4}" text-anchor="end" font-family="sans-serif" font-size="10">0</text>',
        f'<text x="{pad_l}" y="{height - pad_b + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - pad_r}" y="{height - pad_b + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{x1:.4g}</text>',
    ]
    for idx, (label, (mean, se)) in enumerate(series.items()):
        color = _COLORS[idx % len(_COLORS)]
        upper, lower = mean + se, np.maximum(mean - se, 0.0)
        band = pts(grid, upper) + " " + pts(grid[::-1], lower[::-1])
        out.append(f'<polygon class="band" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline class="mean" points="{pts(grid, mean)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = pad_t + 16 * idx + 10
        out.append(f'<line x1="{width - pad_r + 10}" y1="{ly}" x2="{width - pad_r + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 35}" y="{ly + 4}" font-family="sans-serif" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_report(table: MetricsTable, out_dir) -> list:
    """Write ``nbar.csv``, ``summary.csv``, ``per_user.csv`` and ``nbar.svg``; returns the paths."""
    if not table.methods:
        raise ConfigError("metrics table has no methods to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.asarray(table.grid)
    nbar_rows = []
    for name, m in table.methods.items():
        for t, mean, se in zip(grid.tolist(), m.nbar_mean.tolist(), m.nbar_stderr.tolist()):
            nbar_rows.append([_fmt(t), name, _fmt(mean), _fmt(se)])
    summary_rows = [
        [
            name,
            m.runs,
            _fmt(m.final_mean),
            _fmt(m.final_stderr),
            _fmt(m.incentivized_mean),
            _fmt(m.incentivized_stderr),
            m.capped_runs,
            _fmt(m.milestone_mean),
            _fmt(m.milestone_stderr),
            m.milestone_reached,
            m.note,
        ]
        for name, m in table.methods.items()
    ]
    summary_rows += [[name, 0, "", "", "", "", 0, "", "", 0, f"failed: {msg}"] for name, msg in table.failures.items()]
    per_user_rows = []
    for name, m in table.methods.items():
        for user, (org, inc) in enumerate(zip(m.organic_per_user.tolist(), m.incentivized_per_user.tolist())):
            per_user_rows.append([name, user, _fmt(org), _fmt(inc)])
    files = {
        "nbar.csv": _csv_text(["t", "method", "mean", "stderr"], nbar_rows),
        "summary.csv": _csv_text(
            [
                "method",
                "runs",
                "organic_final_mean",
                "organic_final_stderr",
                "incentivized_mean",
                "incentivized_stderr",
                "capped_runs",
                "milestone_mean",
                "milestone_stderr",
                "milestone_reached",
                "note",
            ],
            summary_rows,
        ),
        "per_user.csv": _csv_text(["method", "user", "organic_mean", "incentivized_mean"], per_user_rows),
        "nbar.svg": render_svg(grid, {n: (m.nbar_mean, m.nbar_stderr) for n, m in table.methods.items()}),
    }
    paths = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        paths.append(path)
    return paths


def load_nbar(path):
    """Read ``nbar.csv`` back into ``(grid, {method: (mean, stderr)})``."""
    series = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "method", "mean", "stderr"]:
            raise ConfigError(f"{path}: expected header 't,method,mean,stderr'")
        for row in reader:
            series.setdefault(row["method"], []).append((float(row["t"]), float(row["mean"]), float(row["stderr"])))
    if not series:
        raise ConfigError(f"{path}: no rows")
    grids = {tuple(r[0] for r in rows) for rows in series.values()}
    if len(grids) != 1:
        raise ConfigError(f"{path}: methods use different time grids")
    grid = np.array(next(iter(grids)))
    return grid, {m: (np.array([r[1] for r in rows]), np.array([r[2] for r in rows])) for m, rows in series.items()}
