"""Network Hawkes model and the exact intensity algebra.

The organic intensity of an exponential-kernel multidimensional Hawkes process is

    lambda(t) = mu0 + A @ sum_{t_i < t} exp(-omega (t - t_i)) e_{u_i}

Column ``A[:, u]`` is the jump every user's intensity receives when user ``u``
acts. Between events the intensity relaxes exponentially towards ``mu0``, so the
state can be advanced exactly with :func:`decay_intensity` and
:func:`apply_jump` instead of re-summing the history.
"""

from __future__ import annotations

import csv
import enum
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, MalformedLogError, TimeReversalError


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Influence matrix ``A`` (n x n, nonnegative), baseline ``mu0`` and decay ``omega``."""

    A: np.ndarray
    mu0: np.ndarray
    omega: float

    def __post_init__(self):
        A = _frozen(self.A)
        mu0 = _frozen(self.mu0).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError(f"influence matrix must be square, got shape {A.shape}")
        if mu0.shape[0] != A.shape[0]:
            raise ConfigError("mu0 length does not match the influence matrix")
        if not (np.all(np.isfinite(A)) and np.all(A >= 0)):
            raise ConfigError("influence matrix entries must be finite and >= 0")
        if not (np.all(np.isfinite(mu0)) and np.all(mu0 >= 0)):
            raise ConfigError("baseline intensities must be finite and >= 0")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ConfigError("omega must be strictly positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def edges(self):
        """Influence edges ``(src, dst)``: events of ``src`` excite ``dst``."""
        dst, src = np.nonzero(self.A)
        order = np.lexsort((dst, src))
        return [(int(src[k]), int(dst[k])) for k in order]

    def with_omega(self, omega):
        return NetworkModel(self.A, self.mu0, omega)


class Kind(enum.IntEnum):
    ORGANIC = 0
    INCENTIVIZED = 1

    @classmethod
    def parse(cls, text):
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise MalformedLogError(f"unknown event kind {text!r}") from None


class Event(NamedTuple):
    time: float
    user: int
    kind: Kind = Kind.ORGANIC


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-ordered events on ``horizon = (t0, tf)`` for ``n`` users.

    Stored column-wise; iterate to get :class:`Event` tuples.
    """

    times: np.ndarray
    users: np.ndarray
    kinds: np.ndarray
    horizon: tuple
    n: int

    def __post_init__(self):
        times = _frozen(self.times).reshape(-1)
        users = _frozen(self.users, dtype=np.int64).reshape(-1)
        kinds = _frozen(self.kinds, dtype=np.int8).reshape(-1)
        if not (times.shape == users.shape == kinds.shape):
            raise MalformedLogError("times, users and kinds must have equal length")
        if times.size and np.any(np.diff(times) < 0):
            raise MalformedLogError("event times must be nondecreasing")
        if users.size and (users.min() < 0 or users.max() >= self.n):
            raise MalformedLogError(f"user index out of range for n={self.n}")
        if kinds.size and not np.all((kinds == 0) | (kinds == 1)):
            raise MalformedLogError("event kinds must be organic (0) or incentivized (1)")
        t0, tf = (float(x) for x in self.horizon)
        if tf < t0:
            raise MalformedLogError("horizon end precedes its start")
        if times.size and (times[0] < t0 or times[-1] > tf):
            raise MalformedLogError("event times fall outside the horizon")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "horizon", (t0, tf))

    @classmethod
    def from_events(cls, events: Sequence, horizon, n):
        events = [e if isinstance(e, Event) else Event(*e) for e in events]
        events.sort(key=lambda e: e.time)  # stable: ties keep insertion order
        return cls(
            times=[e.time for e in events],
            users=[e.user for e in events],
            kinds=[int(e.kind) for e in events],
            horizon=horizon,
            n=n,
        )

    @classmethod
    def empty(cls, horizon, n):
        return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8), horizon, n)

    def __len__(self):
        return self.times.size

    def __iter__(self) -> Iterator[Event]:
        for t, u, k in zip(self.times.tolist(), self.users.tolist(), self.kinds.tolist()):
            yield Event(t, u, Kind(k))

    def select(self, kind=None):
        if kind is None:
            return self
        keep = self.kinds == int(kind)
        return EventLog(self.times[keep], self.users[keep], self.kinds[keep], self.horizon, self.n)

    def count(self, kind=None):
        if kind is None:
            return len(self)
        return int(np.count_nonzero(self.kinds == int(kind)))

    def window(self, t_start, t_end):
        """Events in ``[t_start, t_end]`` re-labelled with that horizon."""
        keep = (self.times >= t_start) & (self.times <= t_end)
        return EventLog(self.times[keep], self.users[keep], self.kinds[keep], (t_start, t_end), self.n)


@dataclass(frozen=True, eq=False)
class IntensityVector:
    values: np.ndarray
    as_of: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values).reshape(-1))
        object.__setattr__(self, "as_of", float(self.as_of))


def _check_user(model, user):
    if not 0 <= int(user) < model.n:
        raise MalformedLogError(f"user {user} out of range for n={model.n}")


def intensity_from_history(model: NetworkModel, log: EventLog, t: float, lambda0=None) -> IntensityVector:
    """Direct kernel sum over every event strictly before ``t`` (both kinds).

    This is the slow reference; the simulators use the decay/jump recursion.
    ``lambda0`` is the intensity at ``log.horizon[0]``; it defaults to ``mu0``.
    """
    if log.n != model.n:
        raise MalformedLogError(f"log has n={log.n} but the model has n={model.n}")
    t0, tf = log.horizon
    if not t0 <= t <= tf:
        raise ConfigError(f"query time {t} outside horizon [{t0}, {tf}]")
    mask = log.times < t
    weights = np.exp(-model.omega * (t - log.times[mask]))
    lam = model.mu0 + model.A[:, log.users[mask]] @ weights
    if lambda0 is not None:
        lam = lam + (np.asarray(lambda0, dtype=float) - model.mu0) * np.exp(-model.omega * (t - t0))
    return IntensityVector(lam, t)


def decay_intensity(model: NetworkModel, lam: IntensityVector, t: float) -> IntensityVector:
    """Exact relaxation ``mu0 + exp(-omega (t - s)) (lambda(s) - mu0)`` with no events in between."""
    dt = t - lam.as_of
    if dt < 0:
        raise TimeReversalError(f"cannot decay intensity from {lam.as_of} back to {t}")
    if dt == 0:
        return lam
    return IntensityVector(model.mu0 + np.exp(-model.omega * dt) * (lam.values - model.mu0), t)


def apply_jump(model: NetworkModel, lam: IntensityVector, user: int) -> IntensityVector:
    """Add column ``A[:, user]``: the effect of one event by ``user``."""
    _check_user(model, user)
    return IntensityVector(lam.values + model.A[:, int(user)], lam.as_of)


@dataclass(frozen=True)
class StabilityReport:
    spectral_radius: float
    supercritical: bool
    converged: bool
    upper_bound: float
    iterations: int


def _acyclic(support):
    """Kahn's algorithm; a nonnegative matrix has spectral radius 0 iff its graph has no cycle."""
    support = support.copy()
    alive = np.ones(support.shape[0], dtype=bool)
    while alive.any():
        sources = alive & ~support[alive].any(axis=0)
        if not sources.any():
            return False
        alive &= ~sources
        support[sources] = False
    return True


def branching_check(model: NetworkModel, tol=1e-10, max_iters=10_000) -> StabilityReport:
    """Spectral radius of ``A / omega`` by power iteration.

    Iterates on ``A/omega + I`` (same Perron vector, no periodicity issues) from a
    positive start. The Collatz-Wielandt maximum is a guaranteed upper bound and
    is what gets reported when the iteration stalls.
    """
    M = model.A / model.omega
    n = model.n
    if not np.any(M) or _acyclic(M > 0):
        return StabilityReport(0.0, False, True, 0.0, 0)
    x = np.full(n, 1.0 / n)
    estimate = np.inf
    upper = np.inf
    for it in range(1, max_iters + 1):
        y = M @ x
        upper = min(upper, float(np.max(y / x)))
        z = x + y
        new_estimate = float(z.sum() / x.sum()) - 1.0
        x = z / z.sum()
        if abs(new_estimate - estimate) <= tol * max(1.0, abs(new_estimate)):
            rho = new_estimate
            return StabilityReport(rho, rho >= 1.0 - 1e-12, True, max(upper, rho), it)
        estimate = new_estimate
    warnings.warn("power iteration for the branching ratio did not converge; reporting the upper bound")
    return StabilityReport(upper, upper >= 1.0 - 1e-12, False, upper, max_iters)


# -- file formats -----------------------------------------------------------


def model_to_dict(model: NetworkModel) -> dict:
    rows, cols = np.nonzero(model.A)
    return {
        "n": model.n,
        "omega": model.omega,
        "mu0": model.mu0.tolist(),
        "A": [[int(r), int(c), float(model.A[r, c])] for r, c in zip(rows, cols)],
    }


def model_from_dict(doc: dict) -> NetworkModel:
    try:
        n = int(doc["n"])
        A = np.zeros((n, n))
        for row, col, value in doc["A"]:
            if not (0 <= int(row) < n and 0 <= int(col) < n):
                raise ConfigError(f"entry ({row}, {col}) outside a {n}x{n} matrix")
            A[int(row), int(col)] = float(value)
        return NetworkModel(A, doc["mu0"], float(doc["omega"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed model document: {exc}") from exc


def save_model(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> NetworkModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)


def save_log(log: EventLog, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "user", "kind"])
        for t, u, k in zip(log.times.tolist(), log.users.tolist(), log.kinds.tolist()):
            writer.writerow([repr(t), u, Kind(k).name.lower()])


def load_log(path, n, horizon=None) -> EventLog:
    """Read a ``time,user,kind`` CSV. Without ``horizon`` it spans ``[0, last event]``."""
    times, users, kinds = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["time", "user", "kind"]:
            raise MalformedLogError(f"{path}: expected header 'time,user,kind'")
        for row in reader:
            times.append(float(row["time"]))
            users.append(int(row["user"]))
            kinds.append(int(Kind.parse(row["kind"])))
    if times and any(b < a for a, b in zip(times, times[1:])):
        raise MalformedLogError(f"{path}: times are not in ascending order")
    if horizon is None:
        horizon = (0.0, times[-1] if times else 0.0)
    return EventLog(times, users, kinds, horizon, n)
