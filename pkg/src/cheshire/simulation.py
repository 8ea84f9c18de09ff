"""Event sampling by thinning.

Organic events come from Ogata thinning on the network intensity: between
events every component decays towards ``mu0`` (which is itself a lower bound
for the initial condition ``lambda0 = mu0``), so the current total intensity
bounds the future total until the next accepted event. Only the scalar total is
needed to accept or reject a proposal; the intensity vector is brought forward
lazily when an event is accepted.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidBoundError
from .hawkes import EventLog, IntensityVector, Kind, NetworkModel
from .rng import run_streams

DEFAULT_EVENT_CAP = 200_000
_BOUND_SLACK = 1e-9


class _CapReached(Exception):
    pass


class SimulationState:
    """Markov state of one run: intensity, clock, growing log, random stream.

    ``lam`` holds the intensity as of ``lam_time``; :meth:`intensity` decays it
    to any later time with the exact recursion.
    """

    def __init__(self, model: NetworkModel, t0, tf, rng, event_cap=DEFAULT_EVENT_CAP, lambda0=None):
        if not tf > t0:
            raise ConfigError("simulation horizon must satisfy tf > t0")
        if event_cap <= 0:
            raise ConfigError("event cap must be positive")
        self.model = model
        self.t0, self.tf = float(t0), float(tf)
        self.rng = rng
        self.event_cap = int(event_cap)
        lam = model.mu0.copy() if lambda0 is None else np.array(lambda0, dtype=float)
        if lam.shape != (model.n,) or np.any(lam < 0):
            raise ConfigError("lambda0 must be a nonnegative length-n vector")
        self.lam = lam
        self.lam_time = self.t0
        self.clock = self.t0
        self._mu_sum = float(model.mu0.sum())
        self._excess_sum = float(lam.sum()) - self._mu_sum
        self.times: list[float] = []
        self.users: list[int] = []
        self.kinds: list[int] = []
        self.capped = False

    def intensity(self, t) -> np.ndarray:
        dt = t - self.lam_time
        if dt < 0:
            raise ValueError(f"state is at {self.lam_time}, cannot evaluate earlier time {t}")
        mu0 = self.model.mu0
        return mu0 + np.exp(-self.model.omega * dt) * (self.lam - mu0)

    def intensity_vector(self, t) -> IntensityVector:
        return IntensityVector(self.intensity(t), t)

    def total_intensity(self, t) -> float:
        return self._mu_sum + self._excess_sum * np.exp(-self.model.omega * (t - self.lam_time))

    def record(self, user, t, kind=Kind.ORGANIC, lam_t=None):
        """Append an event at ``t >= clock`` and add its jump to the intensity."""
        if len(self.times) >= self.event_cap:
            self.capped = True
            raise _CapReached
        if t < self.clock:
            raise ValueError("events must be recorded in time order")
        lam = self.intensity(t) if lam_t is None else lam_t
        jump = self.model.A[:, user]
        self.lam = lam + jump
        self.lam_time = t
        self._excess_sum = float(self.lam.sum()) - self._mu_sum
        self.clock = t
        self.times.append(t)
        self.users.append(int(user))
        self.kinds.append(int(kind))

    def next_organic(self, horizon=None):
        """Ogata thinning for the next organic event before ``horizon``.

        Returns ``(user, time, lambda(time-))`` or ``None``. Rejected proposals
        and a proposal past ``horizon`` leave the state untouched, which is valid
        because exponential waiting times are memoryless.
        """
        horizon = self.tf if horizon is None else min(horizon, self.tf)
        rng = self.rng
        omega = self.model.omega
        t = self.clock
        mu_sum, excess, ref = self._mu_sum, self._excess_sum, self.lam_time
        # sum(lambda) moves monotonically towards sum(mu0) between events
        bound = max(mu_sum + excess * np.exp(-omega * (t - ref)), mu_sum)
        while bound > 0.0:
            t += rng.standard_exponential() / bound
            if t >= horizon:
                return None
            total = mu_sum + excess * np.exp(-omega * (t - ref))
            v = rng.random() * bound
            if v < total:
                lam = self.intensity(t)
                cum = np.cumsum(lam)
                user = int(np.searchsorted(cum, v * cum[-1] / total, side="right"))
                return min(user, self.model.n - 1), t, lam
            bound = max(total, mu_sum)
        return None

    def result(self, started=None, **extra) -> "SimulationResult":
        log = EventLog(self.times, self.users, self.kinds, (self.t0, self.tf), self.model.n)
        n_inc = int(np.count_nonzero(log.kinds == Kind.INCENTIVIZED))
        runtime = 0.0 if started is None else _time.perf_counter() - started
        return SimulationResult(log, self.capped, len(log) - n_inc, n_inc, runtime, **extra)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    log: EventLog
    capped: bool
    organic_count: int
    incentivized_count: int
    runtime: float
    seed: int | None = None
    min_control: float = 0.0
    max_control: float = 0.0
    diagnostics: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {
            "organic_count": self.organic_count,
            "incentivized_count": self.incentivized_count,
            "capped": self.capped,
            "seed": self.seed,
        }


def simulate_uncontrolled(model: NetworkModel, t0, tf, seed, cap=DEFAULT_EVENT_CAP, lambda0=None) -> SimulationResult:
    """Organic-only Hawkes run on ``(t0, tf]`` by Ogata thinning."""
    started = _time.perf_counter()
    organic_rng, _ = run_streams(seed)
    state = SimulationState(model, t0, tf, organic_rng, cap, lambda0)
    try:
        while (nxt := state.next_organic()) is not None:
            user, t, lam = nxt
            state.record(user, t, Kind.ORGANIC, lam)
    except _CapReached:
        pass
    return state.result(started, seed=int(seed))


def simulate_open_loop(model: NetworkModel, u, t0, tf, seed, cap=DEFAULT_EVENT_CAP, lambda0=None) -> SimulationResult:
    """Hawkes run steered by a constant (deterministic) control intensity ``u``.

    Incentivized events form a homogeneous Poisson process of rate ``sum(u)``
    with marks drawn proportionally to ``u``; they feed back through ``A`` like
    organic events.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,) or np.any(u < 0):
        raise ConfigError("control intensity must be a nonnegative length-n vector")
    started = _time.perf_counter()
    organic_rng, control_rng = run_streams(seed)
    state = SimulationState(model, t0, tf, organic_rng, cap, lambda0)
    rate = float(u.sum())
    cum_u = np.cumsum(u)

    def next_incentive(t):
        if rate <= 0:
            return None
        tau = t + control_rng.standard_exponential() / rate
        if tau >= state.tf:
            return None
        user = int(np.searchsorted(cum_u, control_rng.random() * rate, side="right"))
        return min(user, model.n - 1), tau

    try:
        pending = next_incentive(state.t0)
        while True:
            horizon = state.tf if pending is None else pending[1]
            nxt = state.next_organic(horizon)
            if nxt is not None:
                user, t, lam = nxt
                state.record(user, t, Kind.ORGANIC, lam)
                continue
            if pending is None:
                break
            user, tau = pending
            state.record(user, tau, Kind.INCENTIVIZED)
            pending = next_incentive(tau)
    except _CapReached:
        pass
    return state.result(started, seed=int(seed), max_control=rate)


def sample_inhomog_poisson(intensity_fn, bound_fn, t0, tf, rng):
    """First arrival after ``t0`` of a Poisson process with rate ``intensity_fn``.

    ``bound_fn(t)`` must bound the rate on ``[t, tf)``; it is refreshed after
    every proposal. Returns ``None`` when no point is accepted before ``tf``
    (which may be ``inf``). Raises :class:`InvalidBoundError` if a proposal
    exposes a rate above the bound.
    """
    t = t0
    while True:
        bound = bound_fn(t)
        if bound <= 0.0:
            return None
        t += rng.standard_exponential() / bound
        if t >= tf:
            return None
        rate = intensity_fn(t)
        if rate > bound * (1.0 + _BOUND_SLACK) + 1e-300:
            raise InvalidBoundError(f"intensity {rate} exceeds bound {bound} at t={t}")
        if rng.random() * bound < rate:
            return t


def sample_first_arrival(intensity_fn, bound_fn, t0, tf, rng):
    """Multivariate version of :func:`sample_inhomog_poisson`.

    ``intensity_fn`` returns a nonnegative vector, ``bound_fn`` a scalar bound
    on its sum. Returns ``(dimension, time)`` or ``None``.
    """
    t = t0
    while True:
        bound = bound_fn(t)
        if bound <= 0.0:
            return None
        t += rng.standard_exponential() / bound
        if t >= tf:
            return None
        rates = intensity_fn(t)
        cum = np.cumsum(rates)
        total = cum[-1]
        if total > bound * (1.0 + _BOUND_SLACK) + 1e-300:
            raise InvalidBoundError(f"intensity {total} exceeds bound {bound} at t={t}")
        v = rng.random() * bound
        if v < total:
            dim = int(np.searchsorted(cum, v, side="right"))
            return min(dim, rates.shape[0] - 1), t


def counting_path(log: EventLog, grid, kind=None):
    """Counts of events with ``time <= grid point``.

    Returns ``(per_user, aggregate)`` with shapes ``(len(grid), n)`` and
    ``(len(grid),)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size and np.any(np.diff(grid) < 0):
        raise ConfigError("counting grid must be sorted")
    sub = log.select(kind)
    per_user = np.zeros((grid.size, log.n), dtype=np.int64)
    for user in range(log.n):
        times = sub.times[sub.users == user]
        per_user[:, user] = np.searchsorted(times, grid, side="right")
    aggregate = np.searchsorted(sub.times, grid, side="right").astype(np.int64)
    return per_user, aggregate
