"""End-to-end acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines appear in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).resolve().parent))

from cheshire.cheshire import simulate_controlled  # noqa: E402
from cheshire.cli import main as cli_main  # noqa: E402
from cheshire.estimation import FitConfig, fit_mle, log_likelihood  # noqa: E402
from cheshire.harness import NETWORK_PRESETS, ExperimentConfig, run_experiment  # noqa: E402
from cheshire.hawkes import EventLog, IntensityVector, NetworkModel, apply_jump, decay_intensity, save_model  # noqa: E402
from cheshire.policy import ControlConfig, build_policy, solve_g, solve_riccati  # noqa: E402
from cheshire.rng import make_rng  # noqa: E402
from cheshire.simulation import simulate_uncontrolled  # noqa: E402

from oracles import direct_intensity, riccati_hamiltonian, scalar_euler_richardson  # noqa: E402

RESULTS = {}


def report(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line, flush=True)
    return passed


# -- shared heavy runs -----------------------------------------------------------------

FIG1 = dict(preset="core-periphery-64", tf=5.5, runs=20, event_cap=200_000, budget=3600.0,
            q=1.0, s=1000.0, f=0.0, calibration_runs=4, calibration_tol=0.05)


@functools.lru_cache(maxsize=None)
def fig1_table():
    started = time.perf_counter()
    table = run_experiment(ExperimentConfig(methods=("cheshire", "uncontrolled"), **FIG1))
    return table, time.perf_counter() - started


# -- criteria ----------------------------------------------------------------------------


def criterion_1():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        A = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.6)
        model = NetworkModel(A, rng.uniform(0, 1, n), float(rng.uniform(0.5, 5.0)))
        m = int(rng.integers(0, 51))
        times = np.sort(rng.uniform(0, 10, m))
        users = rng.integers(0, n, m)
        lam, k = IntensityVector(model.mu0, 0.0), 0
        for t in np.sort(rng.uniform(0, 10, 20)):
            while k < m and times[k] < t:
                lam = apply_jump(model, decay_intensity(model, lam, times[k]), users[k])
                k += 1
            got = decay_intensity(model, lam, t).values
            ref = direct_intensity(A.tolist(), model.mu0.tolist(), model.omega, times.tolist(), users.tolist(), t)
            worst = max(worst, float(np.abs(got - ref).max()))
    elapsed = time.perf_counter() - started
    return report(1, worst <= 1e-9 and elapsed < 5.0, f"max |recursion - direct| = {worst:.2e}, {elapsed:.2f} s")


def _h_error(model, q, s, f, steps):
    _, H = solve_riccati(model, ControlConfig(0.0, 1.0, q, s, f, steps))
    return np.abs(H[0] - riccati_hamiltonian(model.A, model.omega, q, s, f, 1.0)).max()


def criterion_2():
    started = time.perf_counter()
    _, H = solve_riccati(NetworkModel([[0.0]], [0.0], 1.0), ControlConfig(0.0, 1.0, [0.0], [1.0], [1.0], 2000))
    analytic = abs(H[0, 0, 0] + math.exp(-2.0))
    scalar = NetworkModel([[1.0]], [0.0], 1.0)
    r_scalar = _h_error(scalar, [1.0], [1.0], [0.0], 160) / _h_error(scalar, [1.0], [1.0], [0.0], 320)
    rng = np.random.default_rng(0)
    matrix = NetworkModel(rng.uniform(0, 0.5, (4, 4)), rng.uniform(0, 1, 4), 2.0)
    q, s, f = rng.uniform(0.5, 1, 4), rng.uniform(2, 4, 4), rng.uniform(0, 1, 4)
    r_matrix = _h_error(matrix, q, s, f, 20) / _h_error(matrix, q, s, f, 40)
    elapsed = time.perf_counter() - started
    ok = analytic <= 1e-6 and 12 <= r_scalar <= 20 and 12 <= r_matrix <= 20 and elapsed < 10.0
    return report(2, ok, f"|H + e^-2| = {analytic:.1e}, ratios scalar {r_scalar:.2f} / n=4 {r_matrix:.2f}, {elapsed:.2f} s")


def criterion_3():
    started = time.perf_counter()
    worst = 0.0
    for a, omega, mu, q, s, f in [(1.0, 1.0, 0.5, 1.0, 1.0, 0.0), (0.4, 3.0, 2.0, 0.5, 0.2, 1.0), (0.5, 2.0, 1.0, 1.0, 2.0, 0.5)]:
        model = NetworkModel([[a]], [mu], omega)
        config = ControlConfig(0.0, 1.0, [q], [s], [f], 2000)
        grid, H = solve_riccati(model, config)
        g = solve_g(model, config, grid, H)
        H_ref, g_ref = scalar_euler_richardson(a, omega, mu, q, s, f, 1.0, steps=1_000_000)
        worst = max(worst, abs(H[0, 0, 0] - H_ref), abs(g[0, 0] - g_ref))
    elapsed = time.perf_counter() - started
    return report(3, worst <= 1e-6 and elapsed < 30.0, f"max |solver - Euler oracle| = {worst:.1e}, {elapsed:.2f} s")


def criterion_4():
    A = np.array([[0.0, 0.8, 0.2], [0.5, 0.0, 0.6], [0.3, 0.4, 0.0]])
    model = NetworkModel(A, [5.0, 2.5, 4.0], 2.0)
    policy = build_policy(model, ControlConfig.uniform(3, 0.0, 3.0, q=1.0, s=0.7, f=0.0, grid_steps=600))
    checks = np.sort(make_rng(4).uniform(0.0, 3.0, 100))
    res = simulate_controlled(model, policy, 0.0, 3.0, 8, checkpoints=checks)
    found = res.diagnostics["checkpoints"]
    worst = max(float(np.abs(sup - closed).max()) for _, sup, closed in found)
    ok = len(found) == 100 and worst <= 1e-9 and res.incentivized_count > 0
    return report(4, ok, f"{len(found)} checkpoints, {res.incentivized_count} incentivized, max gap {worst:.1e}")


def criterion_5():
    table, _ = fig1_table()
    if table.cheshire_multiplier is None:
        return report(5, False, f"no calibrated policy: {table.failures}")
    model = NETWORK_PRESETS["core-periphery-64"].generate(0)
    config = ControlConfig.uniform(64, 0.0, 5.5, FIG1["q"], FIG1["s"], FIG1["f"]).scaled(table.cheshire_multiplier)
    res = simulate_controlled(model, build_policy(model, config), 0.0, 5.5, 12345, cap=200_000)
    rel = res.min_control / res.max_control
    return report(5, rel >= -1e-6, f"min u / max u = {rel:.2e} over {res.incentivized_count} incentives")


def criterion_6():
    mu = np.array([3.0, 0.5, 1.2])
    T = 2.0
    model = NetworkModel(np.zeros((3, 3)), mu, 1.0)
    counts = np.array([np.bincount(simulate_uncontrolled(model, 0.0, T, s).log.users, minlength=3) for s in range(500)])
    lam = mu * T
    R = counts.shape[0]
    mean_z = np.abs(counts.mean(axis=0) - lam) / np.sqrt(lam / R)
    # sampling variance of the sample variance for Poisson: (mu4 - sigma^4 (R-3)/(R-1)) / R with mu4 = lam + 3 lam^2
    var_se = np.sqrt((lam + 3 * lam**2 - lam**2 * (R - 3) / (R - 1)) / R)
    var_z = np.abs(counts.var(axis=0, ddof=1) - lam) / var_se
    ok = bool(np.all(mean_z < 3) and np.all(var_z < 3))
    return report(6, ok, f"mean z {np.round(mean_z, 2).tolist()}, variance z {np.round(var_z, 2).tolist()}")


def criterion_7():
    table, elapsed = fig1_table()
    if "cheshire" in table.failures:
        return report(7, False, f"cheshire arm failed: {table.failures['cheshire']}")
    ctl, unc = table.methods["cheshire"], table.methods["uncontrolled"]
    ratio = ctl.final_mean / unc.final_mean
    ok = ratio >= 5.0 and elapsed < 600
    return report(7, ok, f"organic {ctl.final_mean:.0f} vs {unc.final_mean:.0f} ({ratio:.1f}x), "
                         f"incentivized {ctl.incentivized_mean:.0f}, capped {ctl.capped_runs}, {elapsed:.0f} s")


CRITERION_8 = {"assortative-128": 1500.0, "hierarchical-128": 300.0}


def criterion_8():
    started = time.perf_counter()
    parts, ok = [], True
    for preset, budget in CRITERION_8.items():
        table = run_experiment(ExperimentConfig(
            preset=preset, methods=("cheshire", "prk", "deg"), budget=budget, runs=20,
            q=1.0, s=1000.0, f=0.0, calibration_runs=4, calibration_tol=0.1,
        ))
        if "cheshire" in table.failures:
            ok = False
            parts.append(f"{preset}: cheshire failed")
            continue
        best = table.methods["cheshire"]
        for rival in ("prk", "deg"):
            other = table.methods[rival]
            z = (best.final_mean - other.final_mean) / math.hypot(best.final_stderr, other.final_stderr)
            ok &= z > 2.0
            parts.append(f"{preset} vs {rival} z={z:.1f}")
    elapsed = time.perf_counter() - started
    ok &= elapsed < 900
    return report(8, ok, ", ".join(parts) + f", {elapsed:.0f} s")


def criterion_9():
    times = []
    for budget in (100.0, 300.0, 900.0):
        table = run_experiment(ExperimentConfig(
            preset="hierarchical-128", methods=("cheshire",), budget=budget, runs=20, milestone=500,
            q=1.0, s=1000.0, f=0.0, calibration_runs=4, calibration_tol=0.1,
        ))
        m = table.methods.get("cheshire")
        if m is None or m.milestone_reached < m.runs:
            return report(9, False, f"budget {budget:g}: milestone not reached in every run")
        times.append(m.milestone_mean)
    ok = times[0] > times[1] > times[2]
    return report(9, ok, "mean milestone times " + " > ".join(f"{t:.3f}" for t in times) + " for budgets 100, 300, 900")


def criterion_10():
    A = np.array([[0.8, 0.4, 0.0, 0.0], [0.0, 0.6, 0.5, 0.0], [0.3, 0.0, 0.7, 0.2], [0.0, 0.5, 0.0, 0.6]])
    model = NetworkModel(A, [0.5, 0.3, 0.4, 0.2], 2.0)
    logs = [simulate_uncontrolled(model, 0.0, 20.0, 1000 + r).log for r in range(50)]
    fit = fit_mle(logs, config=FitConfig(omega_grid=(1.0, 2.0, 4.0)))
    err = float(np.linalg.norm(fit.model.A - A) / np.linalg.norm(A))
    rng = np.random.default_rng(11)
    worst, h = 0.0, 1e-5
    for _ in range(5):
        probe = NetworkModel(rng.uniform(0.1, 1.0, (3, 3)), rng.uniform(0.2, 1.0, 3), float(rng.uniform(0.5, 3.0)))
        times = np.sort(rng.uniform(0, 5, 30))
        log = EventLog(times, rng.integers(0, 3, 30), np.zeros(30, dtype=int), (0.0, 5.0), 3)
        grad = log_likelihood(probe, log).grad_A
        for i in range(3):
            for j in range(3):
                Ap, Am = probe.A.copy(), probe.A.copy()
                Ap[i, j] += h
                Am[i, j] -= h
                fd = (log_likelihood(NetworkModel(Ap, probe.mu0, probe.omega), log).value
                      - log_likelihood(NetworkModel(Am, probe.mu0, probe.omega), log).value) / (2 * h)
                worst = max(worst, abs(grad[i, j] - fd) / max(1.0, abs(fd)))
    ok = err < 0.2 and worst < 1e-5
    return report(10, ok, f"relative Frobenius error {err:.3f} (omega {fit.model.omega:g}), gradient rel. error {worst:.1e}")


def criterion_11(tmp):
    tmp = Path(tmp)
    A = np.array([[0.0, 0.6, 0.0], [0.4, 0.0, 0.3], [0.2, 0.5, 0.0]])
    save_model(NetworkModel(A, [0.5, 0.2, 0.3], 2.0), tmp / "model.json")
    doc = {"model_file": str(tmp / "model.json"), "tf": 3.0, "runs": 5, "budget": 6.0, "s": 2.0,
           "calibration_runs": 5, "calibration_tol": 0.2, "grid_steps": 300, "milestone": 3}
    (tmp / "exp.yaml").write_text(yaml.safe_dump(doc))
    codes = [cli_main(["--out-dir", str(tmp / d), "run", str(tmp / "exp.yaml")]) for d in ("a", "b")]
    names = ("nbar.csv", "summary.csv", "per_user.csv")
    same = all((tmp / "a" / n).read_bytes() == (tmp / "b" / n).read_bytes() for n in names)
    return report(11, codes == [0, 0] and same, f"exit codes {codes}, identical CSVs: {same}")


# -- pytest entry points --------------------------------------------------------------------


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    assert globals()[f"criterion_{number}"](), RESULTS[number]


def test_criterion_11(tmp_path):
    assert criterion_11(tmp_path), RESULTS[11]


if __name__ == "__main__":
    import tempfile

    outcomes = [globals()[f"criterion_{k}"]() for k in range(1, 11)]
    with tempfile.TemporaryDirectory() as tmp:
        outcomes.append(criterion_11(tmp))
    sys.exit(0 if all(outcomes) else 1)
