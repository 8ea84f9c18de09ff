"""Online sampling of optimal incentivized actions.

The control intensity ``u*(t) = base_u(t) - S^-1 A' H(t) (lambda(t) - mu0)`` is
linear in the excess intensity, and the excess is a sum of decaying columns
``A e_j exp(-omega (t - s_j))``, one per past action. The sampler therefore
treats ``u*`` as a superposition of inhomogeneous Poisson processes, one per
action, plus the deterministic ``base_u`` part:

* a pending incentivized action ``(i, tau)`` is drawn from the current superposed
  intensity;
* every organic action that happens before ``tau`` starts a new component whose
  own first arrival may pre-empt ``tau``;
* once ``tau`` is reached the incentivized action is emitted, it starts its own
  component, and a fresh pending action is drawn.

The components are kept aggregated in one excitation vector ``x`` (they share
the decay rate), so memory stays O(n) no matter how many actions occurred.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigError, SolverDivergenceError
from .hawkes import EventLog, IntensityVector, Kind, NetworkModel
from .policy import ControlConfig, FeedbackPolicy, build_policy, optimal_intensity
from .rng import derive_seed, run_streams
from .simulation import DEFAULT_EVENT_CAP, SimulationResult, SimulationState, _CapReached, sample_first_arrival


class CheshireSampler:
    """State of the incentivized-action sampler for one run."""

    def __init__(self, policy: FeedbackPolicy, rng, t_start=None, tf=None, track=True):
        self.policy = policy
        self.rng = rng
        self.omega = policy.model.omega
        self.A = policy.model.A
        self.tf = policy.tf if tf is None else float(tf)
        t_start = policy.t0 if t_start is None else float(t_start)
        self.x = np.zeros(policy.n)
        self.x_time = t_start
        self.track = track
        self.min_control = math.inf
        self.max_control = 0.0
        self.pending = None
        if not policy.is_zero:
            self.pending = self._sample_superposed(t_start)

    def excitation(self, t):
        """Aggregated components ``sum_j A e_j exp(-omega (t - s_j))``."""
        return self.x * math.exp(-self.omega * (t - self.x_time))

    def superposed_intensity(self, t, clamp=False):
        """Control intensity maintained by the sampler: base part plus every component."""
        u = self.policy.control(t, self.excitation(t))
        return np.clip(u, 0.0, None) if clamp else u

    def _note(self, raw):
        if self.track:
            lo, hi = float(raw.min()), float(raw.max())
            if lo < self.min_control:
                self.min_control = lo
            if hi > self.max_control:
                self.max_control = hi

    def _sample_superposed(self, t):
        policy = self.policy
        x_t = self.excitation(t)

        def rates(r):
            raw = policy.control(r, x_t * math.exp(-self.omega * (r - t)))
            self._note(raw)
            return np.clip(raw, 0.0, None)

        def bound(r):
            base_pos, colsum = policy.bound_terms(r)
            return base_pos + float(colsum @ x_t) * math.exp(-self.omega * (r - t))

        return sample_first_arrival(rates, bound, t, self.tf, self.rng)

    def _sample_component(self, user, s):
        policy = self.policy
        column = self.A[:, user]

        def rates(r):
            return np.clip(-policy.gain_apply(r, column), 0.0, None) * math.exp(-self.omega * (r - s))

        def bound(r):
            _, colsum = policy.bound_terms(r)
            return float(colsum @ column) * math.exp(-self.omega * (r - s))

        return sample_first_arrival(rates, bound, s, self.tf, self.rng)

    def _absorb(self, user, t):
        self.x = self.excitation(t) + self.A[:, user]
        self.x_time = t

    def add_organic(self, user, s):
        """An organic action by ``user`` at ``s``: start its component, keep the earliest arrival."""
        if self.track and not self.policy.is_zero:
            self._note(self.superposed_intensity(s))
        if not self.policy.is_zero:
            arrival = self._sample_component(user, s)
            if arrival is not None and (self.pending is None or arrival[1] < self.pending[1]):
                self.pending = arrival
        self._absorb(user, s)

    def add_incentivized(self, user, tau):
        """The pending action fired: start its component, then draw the next pending action."""
        if self.track:
            self._note(self.superposed_intensity(tau))
        self._absorb(user, tau)
        self.pending = self._sample_superposed(tau)


def cheshire_next(sampler: CheshireSampler, next_action, record_incentive=None):
    """Next incentivized action ``(user, time)`` or ``None`` before the horizon.

    ``next_action(tau)`` must return the next organic action ``(user, time)``
    strictly before ``tau`` (already applied to the network state) or ``None``.
    ``record_incentive(user, tau)`` is called when the incentivized action is
    accepted, before its own component is added.
    """
    while True:
        pending = sampler.pending
        tau = sampler.tf if pending is None else pending[1]
        action = next_action(tau)
        if action is None:
            break
        sampler.add_organic(*action)
    if pending is None:
        return None
    user, tau = pending
    if record_incentive is not None:
        record_incentive(user, tau)
    sampler.add_incentivized(user, tau)
    return user, tau


def simulate_controlled(
    model: NetworkModel,
    policy: FeedbackPolicy,
    t0,
    tf,
    seed,
    cap=DEFAULT_EVENT_CAP,
    lambda0=None,
    checkpoints=None,
    track=True,
) -> SimulationResult:
    """Organic Hawkes actions plus incentivized actions from the optimal policy.

    Both kinds excite the network through ``A``. ``checkpoints`` (sorted times)
    record, at each time, the sampler's superposed control intensity and the
    closed-form feedback law on the current network intensity; they are returned
    in ``result.diagnostics["checkpoints"]`` as ``(t, superposed, closed_form)``.
    """
    if policy.model.n != model.n:
        raise ConfigError("policy and model sizes differ")
    if t0 < policy.t0 - 1e-12 or tf > policy.tf + 1e-12:
        raise ConfigError(f"policy horizon [{policy.t0}, {policy.tf}] does not cover [{t0}, {tf}]")
    started = _time.perf_counter()
    organic_rng, control_rng = run_streams(seed)
    state = SimulationState(model, t0, tf, organic_rng, cap, lambda0)
    sampler = CheshireSampler(policy, control_rng, t0, tf, track=track)
    checks = [] if checkpoints is None else sorted(float(c) for c in checkpoints)
    found = []

    def flush(upto):
        while checks and checks[0] < upto:
            c = checks.pop(0)
            closed = optimal_intensity(policy, IntensityVector(state.intensity(c), c), clamp=False)
            found.append((c, sampler.superposed_intensity(c), closed))

    def next_action(tau):
        nxt = state.next_organic(tau)
        if nxt is None:
            return None
        user, t, lam = nxt
        flush(t)
        state.record(user, t, Kind.ORGANIC, lam)
        return user, t

    def record_incentive(user, tau):
        flush(tau)
        state.record(user, tau, Kind.INCENTIVIZED)

    try:
        while cheshire_next(sampler, next_action, record_incentive) is not None:
            pass
        flush(math.inf)
    except _CapReached:
        pass
    min_control = 0.0 if sampler.min_control == math.inf else sampler.min_control
    return state.result(
        started,
        seed=int(seed),
        min_control=min_control,
        max_control=sampler.max_control,
        diagnostics={"checkpoints": found},
    )


# -- budget calibration -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Calibration:
    config: ControlConfig
    multiplier: float
    budget_estimate: float
    probes: list = field(default_factory=list)


def estimate_budget(model, config, runs, seed=0, cap=DEFAULT_EVENT_CAP, lambda0=None):
    """Mean incentivized count over ``runs`` seeded runs; ``inf`` if the Riccati solve diverges."""
    try:
        policy = build_policy(model, config)
    except SolverDivergenceError:
        return math.inf
    if policy.is_zero:
        return 0.0
    counts = [
        simulate_controlled(model, policy, config.t0, config.tf, derive_seed(seed, r), cap, lambda0, track=False).incentivized_count
        for r in range(runs)
    ]
    return float(np.mean(counts))


def calibrate_budget(
    model: NetworkModel,
    template: ControlConfig,
    target_budget,
    runs=10,
    tol=0.05,
    seed=0,
    cap=DEFAULT_EVENT_CAP,
    bracket=(1e-6, 1e6),
    max_probes=40,
    lambda0=None,
) -> Calibration:
    """Scale ``S`` by a multiplier so the expected incentivized count hits the target.

    Larger control cost means fewer incentivized actions, so the multiplier is
    found by geometric expansion from 1 followed by bisection in log space. All
    probes reuse the same run seeds (common random numbers). A multiplier whose
    Riccati solve diverges counts as an unbounded budget.
    """
    if target_budget < 0:
        raise ConfigError("target budget must be >= 0")
    lo_m, hi_m = (float(b) for b in bracket)
    probes = []

    def probe(m):
        est = estimate_budget(model, template.scaled(m), runs, seed, cap, lambda0)
        probes.append((m, est))
        return est

    def done(est):
        return abs(est - target_budget) <= tol * target_budget

    def result(m, est):
        return Calibration(template.scaled(m), m, est, probes)

    def fail(reason):
        ends = {m: e for m, e in probes}
        for m in (lo_m, hi_m):
            if m not in ends:
                ends[m] = probe(m)
        raise CalibrationError(
            f"{reason}; budget estimate {ends[lo_m]:.6g} at multiplier {lo_m:g}, "
            f"{ends[hi_m]:.6g} at multiplier {hi_m:g} (target {target_budget:g})",
            probes,
        )

    m = min(max(1.0, lo_m), hi_m)
    est = probe(m)
    if done(est):
        return result(m, est)
    # expand until the target is bracketed: [m_small (budget too high), m_large (too low)]
    if est > target_budget:
        m_small, m_large = m, None
        while m_large is None:
            if m_small >= hi_m:
                fail("target below the budget reachable at the largest multiplier")
            m = min(m_small * 10.0, hi_m)
            est = probe(m)
            if done(est):
                return result(m, est)
            if est > target_budget:
                m_small = m
            else:
                m_large = m
    else:
        m_small, m_large = None, m
        while m_small is None:
            if m_large <= lo_m:
                fail("target above the budget reachable at the smallest multiplier")
            m = max(m_large / 10.0, lo_m)
            est = probe(m)
            if done(est):
                return result(m, est)
            if est < target_budget:
                m_large = m
            else:
                m_small = m
    while len(probes) < max_probes:
        m = math.sqrt(m_small * m_large)
        est = probe(m)
        if done(est):
            return result(m, est)
        if est > target_budget:
            m_small = m
        else:
            m_large = m
    finite = [(abs(e - target_budget), m, e) for m, e in probes if math.isfinite(e)]
    _, m, est = min(finite)
    # typically the estimate jumps across the target (few runs) or the target lies
    # past the largest budget before the Riccati solution blows up
    fail(f"no multiplier within tolerance after {len(probes)} probes (closest {est:.6g} at multiplier {m:.6g})")


# -- objective ------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _control_at(control, t, excess):
    if isinstance(control, FeedbackPolicy):
        return np.clip(control.control(t, excess), 0.0, None)
    return control


def run_cost(log: EventLog, model: NetworkModel, config: ControlConfig, control=None, lambda0=None) -> float:
    """``phi(lambda(tf)) + integral of l(lambda, u)`` along one realization.

    The state term is integrated in closed form between events. The control
    term, when ``control`` is a policy, is integrated by 8-point Gauss-Legendre
    on every piece between consecutive events and policy grid points (exact for
    the unclamped law up to the smooth exponential factors). ``control`` may
    also be a constant intensity vector.
    """
    t0, tf = config.t0, config.tf
    omega, mu0 = model.omega, model.mu0
    q, s, f = config.q, config.s, config.f
    if control is not None and not isinstance(control, FeedbackPolicy):
        control = np.asarray(control, dtype=float)
    excess = np.zeros(model.n) if lambda0 is None else np.asarray(lambda0, dtype=float) - mu0
    t_prev = t0
    total = 0.0
    mu_q_mu = float(mu0 @ (q * mu0))
    breaks = np.asarray(control.grid) if isinstance(control, FeedbackPolicy) else np.empty(0)

    def piece(a, b, exc):
        nonlocal total
        L = b - a
        if L <= 0:
            return
        e1 = -math.expm1(-omega * L) / omega
        e2 = -math.expm1(-2.0 * omega * L) / (2.0 * omega)
        quad = mu_q_mu * L + 2.0 * float(mu0 @ (q * exc)) * e1 + float(exc @ (q * exc)) * e2
        total -= 0.5 * quad
        if control is None:
            return
        if not isinstance(control, FeedbackPolicy):
            total += 0.5 * float(control @ (s * control)) * L
            return
        cuts = breaks[(breaks > a) & (breaks < b)]
        edges = np.concatenate(([a], cuts, [b]))
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
                r = lo + half * (node + 1.0)
                u = _control_at(control, r, exc * math.exp(-omega * (r - a)))
                total += 0.5 * weight * half * float(u @ (s * u))

    for t, user in zip(log.times.tolist(), log.users.tolist()):
        if t > tf:
            break
        piece(t_prev, t, excess)
        excess = excess * math.exp(-omega * (t - t_prev)) + model.A[:, user]
        t_prev = t
    piece(t_prev, tf, excess)
    lam_f = mu0 + excess * math.exp(-omega * (tf - t_prev))
    total -= 0.5 * float(lam_f @ (f * lam_f))
    return total


def objective_estimate(logs, model: NetworkModel, config: ControlConfig, control=None, lambda0=None):
    """Monte Carlo estimate of the expected cost over an ensemble of realizations.

    Returns ``(mean, standard_error)``.
    """
    logs = list(logs)
    if not logs:
        raise ConfigError("objective estimate needs at least one log")
    costs = np.array([run_cost(log, model, config, control, lambda0) for log in logs])
    se = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    return float(costs.mean()), se
