"""Optimal feedback policy for activity maximization.

With quadratic losses

    l(lambda, u) = -1/2 lambda' Q lambda + 1/2 u' S u,    phi(lambda) = -1/2 lambda' F lambda

the cost-to-go is quadratic, ``J = f + g' lambda + 1/2 lambda' H lambda``, with

    dH/dt = (wI - A)' H + H (wI - A) + H A S^-1 A' H + Q,              H(tf) = -F
    dg/dt = [wI - A' + H A S^-1 A'] g - w H mu0 + 1/2 [H A S^-1 - I] d,  g(tf) = 0

where ``d = diag(A' H A)``, and the optimal control intensity is

    u*(t) = -S^-1 [A' g + A' H lambda + 1/2 diag(A' H A)].

Both equations are integrated backwards with classical RK4 on a fixed grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverDivergenceError
from .hawkes import IntensityVector, NetworkModel

DEFAULT_GRID_STEPS = 2000


def _diag_vector(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{name} must be a scalar or a length-{n} vector")
    return arr


@dataclass(frozen=True, eq=False)
class ControlConfig:
    """Horizon, diagonal weights ``q`` (state reward), ``s`` (control cost), ``f`` (terminal reward)."""

    t0: float
    tf: float
    q: np.ndarray
    s: np.ndarray
    f: np.ndarray
    grid_steps: int = DEFAULT_GRID_STEPS

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = q.shape[0]
        s = _diag_vector(self.s, n, "s")
        f = _diag_vector(self.f, n, "f")
        if not self.tf > self.t0:
            raise ConfigError("control horizon must satisfy tf > t0")
        if np.any(q < 0) or np.any(f < 0):
            raise ConfigError("q and f entries must be >= 0")
        if np.any(~(s > 0)) or not np.all(np.isfinite(s)):
            raise ConfigError("s entries must be finite and > 0")
        if int(self.grid_steps) < 2:
            raise ConfigError("grid_steps must be at least 2")
        for name, arr in (("q", q), ("s", s), ("f", f)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))
        object.__setattr__(self, "grid_steps", int(self.grid_steps))

    @classmethod
    def uniform(cls, n, t0, tf, q=1.0, s=1.0, f=0.0, grid_steps=DEFAULT_GRID_STEPS):
        return cls(t0, tf, _diag_vector(q, n, "q"), _diag_vector(s, n, "s"), _diag_vector(f, n, "f"), grid_steps)

    @property
    def n(self):
        return self.q.shape[0]

    def scaled(self, s_multiplier):
        return replace(self, s=self.s * float(s_multiplier))

    def grid(self):
        return np.linspace(self.t0, self.tf, self.grid_steps + 1)

    def to_dict(self):
        return {
            "t0": self.t0,
            "tf": self.tf,
            "q": self.q.tolist(),
            "s": self.s.tolist(),
            "f": self.f.tolist(),
            "grid_steps": self.grid_steps,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["t0"], doc["tf"], doc["q"], doc["s"], doc["f"], doc["grid_steps"])


def _check(model, config):
    if config.n != model.n:
        raise ConfigError(f"control config has n={config.n} but the model has n={model.n}")


def riccati_rhs(H, A, s_inv, omega, Q):
    """``dH/dt`` for symmetric ``H``; uses two matrix products."""
    HA = H @ A
    return 2.0 * omega * H - HA - HA.T + (HA * s_inv) @ HA.T + Q


def solve_riccati(model: NetworkModel, config: ControlConfig):
    """Backward RK4 for ``H`` from ``H(tf) = -F``.

    Returns ``(grid, H)`` with ``H`` of shape ``(grid_steps + 1, n, n)``;
    ``H[-1]`` is exactly ``-diag(f)``. Symmetrized after every step.
    """
    _check(model, config)
    grid = config.grid()
    steps = config.grid_steps
    h = (config.tf - config.t0) / steps
    A, omega = model.A, model.omega
    s_inv = 1.0 / config.s
    Q = np.diag(config.q)
    H = np.empty((steps + 1, model.n, model.n))
    H[-1] = -np.diag(config.f)
    cur = H[-1].copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps - 1, -1, -1):
            k1 = riccati_rhs(cur, A, s_inv, omega, Q)
            k2 = riccati_rhs(cur - 0.5 * h * k1, A, s_inv, omega, Q)
            k3 = riccati_rhs(cur - 0.5 * h * k2, A, s_inv, omega, Q)
            k4 = riccati_rhs(cur - h * k3, A, s_inv, omega, Q)
            cur = cur - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            cur = 0.5 * (cur + cur.T)
            if not np.all(np.isfinite(cur)):
                raise SolverDivergenceError(
                    f"Riccati solution became non-finite at t={grid[k]:.6g} "
                    f"(integrating backwards from tf={config.tf})",
                    time=float(grid[k]),
                )
            H[k] = cur
    return grid, H


def _diag_AtHA(A, H):
    """``diag(A' H A)`` for one matrix or a stack of matrices."""
    return np.einsum("ij,...ik,kj->...j", A, H, A, optimize=True)


def g_rhs(g, H, HA, A, s_inv, omega, mu0):
    d = 0.5 * np.einsum("ij,ij->j", A, HA)
    c = A.T @ g + d
    return omega * g - c + H @ (A @ (s_inv * c) - omega * mu0)


def solve_g(model: NetworkModel, config: ControlConfig, grid, H):
    """Backward RK4 for ``g`` from ``g(tf) = 0``.

    Midpoint stages need ``H`` between grid points; it is taken from the cubic
    Hermite interpolant built with the Riccati right-hand side, which keeps the
    scheme fourth order (linear interpolation would cap it at second).
    """
    _check(model, config)
    grid = np.asarray(grid, dtype=float)
    if H.shape != (config.grid_steps + 1, model.n, model.n) or grid.shape != (config.grid_steps + 1,):
        raise ConfigError("H grid does not match the control config grid")
    if not np.allclose(grid, config.grid(), rtol=0, atol=1e-12 * max(1.0, abs(config.tf))):
        raise ConfigError("H was computed on a different time grid")
    steps = config.grid_steps
    h = (config.tf - config.t0) / steps
    A, omega, mu0 = model.A, model.omega, model.mu0
    s_inv = 1.0 / config.s
    Q = np.diag(config.q)
    g = np.zeros((steps + 1, model.n))
    cur = np.zeros(model.n)
    H_right = H[-1]
    dH_right = riccati_rhs(H_right, A, s_inv, omega, Q)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps - 1, -1, -1):
            H_left = H[k]
            dH_left = riccati_rhs(H_left, A, s_inv, omega, Q)
            H_mid = 0.5 * (H_left + H_right) + (h / 8.0) * (dH_left - dH_right)
            HA_right, HA_mid, HA_left = H_right @ A, H_mid @ A, H_left @ A
            k1 = g_rhs(cur, H_right, HA_right, A, s_inv, omega, mu0)
            k2 = g_rhs(cur - 0.5 * h * k1, H_mid, HA_mid, A, s_inv, omega, mu0)
            k3 = g_rhs(cur - 0.5 * h * k2, H_mid, HA_mid, A, s_inv, omega, mu0)
            k4 = g_rhs(cur - h * k3, H_left, HA_left, A, s_inv, omega, mu0)
            cur = cur - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(cur)):
                raise SolverDivergenceError(f"g became non-finite at t={grid[k]:.6g}", time=float(grid[k]))
            g[k] = cur
            H_right, dH_right = H_left, dH_left
    return g


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    """Solved policy on a uniform grid, linearly interpolated in time.

    ``base_u[k] = -S^-1 [A'(g + H mu0) + 1/2 diag(A' H A)]`` is the control at
    ``lambda = mu0``; the full law is ``u*(t) = base_u(t) - S^-1 A' H(t) (lambda - mu0)``.
    ``gain_colsum_max[k]`` and ``base_pos_max[k]`` are suffix maxima over the
    grid (from ``k`` on) of the column sums of ``|S^-1 A' H|`` and of ``sum(base_u^+)``,
    which give thinning bounds valid for every later time.
    """

    model: NetworkModel
    config: ControlConfig
    grid: np.ndarray
    H: np.ndarray
    g: np.ndarray
    base_u: np.ndarray = field(repr=False)
    gain_colsum_max: np.ndarray = field(repr=False)
    base_pos_max: np.ndarray = field(repr=False)
    _zero: bool = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_zero", not (np.any(self.H) or np.any(self.g)))

    @classmethod
    def from_solution(cls, model, config, grid, H, g):
        A, mu0 = model.A, model.mu0
        s_inv = 1.0 / config.s
        HA = H @ A  # (G, n, n)
        diag = np.einsum("ij,gij->gj", A, HA)
        base_u = -s_inv * (np.einsum("ij,gi->gj", A, g + H @ mu0) + 0.5 * diag)
        # |S^-1 A' H| column sums; (A' H)[i, k] = (H A)[k, i] because H is symmetric
        colsum = np.einsum("gki,i->gk", np.abs(HA), s_inv)
        gain_colsum_max = np.maximum.accumulate(colsum[::-1], axis=0)[::-1]
        base_pos = np.clip(base_u, 0.0, None).sum(axis=1)
        base_pos_max = np.maximum.accumulate(base_pos[::-1])[::-1]
        arrays = [np.asarray(grid, dtype=float), H, g, base_u, gain_colsum_max, base_pos_max]
        for arr in arrays:
            arr.setflags(write=False)
        return cls(model, config, *arrays)

    @property
    def n(self):
        return self.model.n

    @property
    def t0(self):
        return self.config.t0

    @property
    def tf(self):
        return self.config.tf

    @property
    def is_zero(self):
        return self._zero

    def locate(self, t):
        """Grid interval index ``k`` and weight ``w`` with ``t = (1-w) grid[k] + w grid[k+1]``."""
        t0, tf = self.config.t0, self.config.tf
        if not t0 <= t <= tf:
            raise ConfigError(f"time {t} outside the policy horizon [{t0}, {tf}]")
        steps = self.config.grid_steps
        pos = (t - t0) / (tf - t0) * steps
        k = min(int(pos), steps - 1)
        return k, pos - k

    def H_at(self, t):
        k, w = self.locate(t)
        return (1.0 - w) * self.H[k] + w * self.H[k + 1]

    def g_at(self, t):
        k, w = self.locate(t)
        return (1.0 - w) * self.g[k] + w * self.g[k + 1]

    def base_at(self, t):
        k, w = self.locate(t)
        return (1.0 - w) * self.base_u[k] + w * self.base_u[k + 1]

    def gain_apply(self, t, x, loc=None):
        """``S^-1 A' H(t) x`` without forming the gain matrix."""
        k, w = self.locate(t) if loc is None else loc
        Hx = (1.0 - w) * (self.H[k] @ x) + w * (self.H[k + 1] @ x)
        return (self.model.A.T @ Hx) / self.config.s

    def control(self, t, excess):
        """Unclamped ``u*(t)`` written as ``base_u(t) - S^-1 A' H(t) excess`` with ``excess = lambda - mu0``."""
        loc = self.locate(t)
        k, w = loc
        base = (1.0 - w) * self.base_u[k] + w * self.base_u[k + 1]
        return base - self.gain_apply(t, excess, loc)

    def bound_terms(self, t):
        """``(sum of positive base control, column sums of |gain|)`` bounding all times ``>= t``."""
        k, _ = self.locate(t)
        return self.base_pos_max[k], self.gain_colsum_max[k]


def build_policy(model: NetworkModel, config: ControlConfig) -> FeedbackPolicy:
    grid, H = solve_riccati(model, config)
    g = solve_g(model, config, grid, H)
    return FeedbackPolicy.from_solution(model, config, grid, H, g)


def zero_policy(model: NetworkModel, t0, tf, grid_steps=2) -> FeedbackPolicy:
    """Policy with ``Q = F = 0``: ``H = g = 0`` and no control at all."""
    config = ControlConfig.uniform(model.n, t0, tf, q=0.0, s=1.0, f=0.0, grid_steps=grid_steps)
    return build_policy(model, config)


def optimal_intensity(policy: FeedbackPolicy, lam: IntensityVector, t=None, clamp=True) -> np.ndarray:
    """Closed-form feedback law ``-S^-1 [A' g + A' H lambda + 1/2 diag(A' H A)]``.

    ``H`` and ``g`` are linearly interpolated at ``t`` (defaults to
    ``lam.as_of``). With ``clamp`` negative components are set to zero.
    """
    t = lam.as_of if t is None else t
    A = policy.model.A
    H = policy.H_at(t)
    g = policy.g_at(t)
    HA = H @ A
    raw = -(A.T @ g + HA.T @ lam.values + 0.5 * np.einsum("ij,ij->j", A, HA)) / policy.config.s
    return np.clip(raw, 0.0, None) if clamp else raw


# -- policy files -------------------------------------------------------------


def save_policy(policy: FeedbackPolicy, path) -> None:
    """``.json`` writes the plain dump; anything else writes a compressed ``.npz``."""
    from .hawkes import model_to_dict

    path = Path(path)
    header = {"config": policy.config.to_dict(), "model": model_to_dict(policy.model)}
    if path.suffix == ".json":
        doc = dict(header)
        doc["grid"] = policy.grid.tolist()
        doc["H"] = [Hk.reshape(-1).tolist() for Hk in policy.H]
        doc["g"] = policy.g.tolist()
        path.write_text(json.dumps(doc) + "\n")
        return
    with open(path, "wb") as fh:
        np.savez_compressed(fh, grid=policy.grid, H=policy.H, g=policy.g, header=np.array(json.dumps(header)))


def load_policy(path) -> FeedbackPolicy:
    from .hawkes import model_from_dict

    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        header = doc
        grid = np.asarray(doc["grid"], dtype=float)
        n = int(doc["model"]["n"])
        H = np.asarray(doc["H"], dtype=float).reshape(grid.size, n, n)
        g = np.asarray(doc["g"], dtype=float).reshape(grid.size, n)
    else:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            grid, H, g = data["grid"], data["H"], data["g"]
    model = model_from_dict(header["model"])
    config = ControlConfig.from_dict(header["config"])
    if H.shape != (config.grid_steps + 1, model.n, model.n):
        raise ConfigError(f"{path}: H array does not match the stored config")
    return FeedbackPolicy.from_solution(model, config, grid, H, g)
