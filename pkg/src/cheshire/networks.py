"""Synthetic networks, parameter sampling and structural scores.

Edges are directed ``(src, dst)`` pairs meaning actions of ``src`` trigger
follow-ups from ``dst``; in the influence matrix that is entry ``A[dst, src]``
(column ``src`` is the jump caused by an action of ``src``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .hawkes import NetworkModel


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: np.ndarray  # (m, 2) int array of (src, dst), sorted, unique, no self-loops

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ConfigError("edge endpoint out of range")
        edges = np.unique(edges, axis=0)
        edges = edges[edges[:, 0] != edges[:, 1]]
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    def __len__(self):
        return self.edges.shape[0]

    def adjacency(self):
        """Dense 0/1 matrix with ``adj[src, dst] = 1``."""
        adj = np.zeros((self.n, self.n))
        adj[self.edges[:, 0], self.edges[:, 1]] = 1.0
        return adj

    def out_degree(self):
        return np.bincount(self.edges[:, 0], minlength=self.n).astype(float)

    def in_degree(self):
        return np.bincount(self.edges[:, 1], minlength=self.n).astype(float)

    @classmethod
    def from_model(cls, model: NetworkModel):
        return cls(model.n, model.edges())


@dataclass(frozen=True)
class KroneckerSeed:
    theta: tuple
    k: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape == (4,):
            theta = theta.reshape(2, 2)
        if theta.shape != (2, 2):
            raise ConfigError("Kronecker seed matrix must be 2x2")
        if np.any(theta < 0) or np.any(theta > 1):
            raise ConfigError("Kronecker seed entries must lie in [0, 1]")
        if int(self.k) < 1:
            raise ConfigError("Kronecker power k must be >= 1")
        object.__setattr__(self, "theta", tuple(map(tuple, theta.tolist())))
        object.__setattr__(self, "k", int(self.k))

    @property
    def n(self):
        return 2**self.k

    def probabilities(self):
        """Edge probability matrix; node bits are consumed most significant first."""
        theta = np.asarray(self.theta)
        P = np.ones((1, 1))
        for _ in range(self.k):
            P = np.kron(P, theta)
        return P


KRONECKER_PRESETS = {
    # 64-node pair from the small-network study
    "core-periphery": (0.96, 0.3, 0.3, 0.96),
    "dissortative": (0.3, 0.96, 0.96, 0.3),
    # five families from the large synthetic comparison
    "assortative": (0.96, 0.3, 0.3, 0.96),
    "random": (0.7, 0.7, 0.7, 0.7),
    "hierarchical": (0.9, 0.1, 0.1, 0.9),
    "core-periphery-b": (0.9, 0.5, 0.5, 0.3),
}


def kronecker_graph(seed: KroneckerSeed, rng) -> Graph:
    """Stochastic Kronecker graph: each ordered pair is an independent Bernoulli draw."""
    P = seed.probabilities()
    hits = rng.random(P.shape) < P
    np.fill_diagonal(hits, False)
    src, dst = np.nonzero(hits)
    return Graph(seed.n, np.column_stack([src, dst]))


def sample_parameters(graph: Graph, a_low, a_high, mu_low, mu_high, active_fraction, omega, rng) -> NetworkModel:
    """Uniform influence on every edge and uniform baselines on a random subset of users."""
    if not 0.0 <= active_fraction <= 1.0:
        raise ConfigError("active_fraction must lie in [0, 1]")
    n = graph.n
    A = np.zeros((n, n))
    if len(graph):
        A[graph.edges[:, 1], graph.edges[:, 0]] = rng.uniform(a_low, a_high, len(graph))
    mu0 = np.zeros(n)
    n_active = int(np.floor(active_fraction * n + 1e-9))
    if n_active:
        active = np.sort(rng.choice(n, size=n_active, replace=False))
        mu0[active] = rng.uniform(mu_low, mu_high, n_active)
    return NetworkModel(A, mu0, omega)


@dataclass(frozen=True)
class PageRankResult:
    scores: np.ndarray
    iterations: int
    converged: bool


def pagerank(graph: Graph, damping=0.85, tol=1e-12, max_iters=1000) -> PageRankResult:
    """Power iteration with uniform teleport; dangling nodes spread uniformly."""
    if not 0.0 < damping < 1.0:
        raise ConfigError("damping must lie in (0, 1)")
    n = graph.n
    out = graph.out_degree()
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    weight = np.zeros(len(graph))
    if len(graph):
        weight = 1.0 / out[src]
    dangling = out == 0
    x = np.full(n, 1.0 / n)
    for it in range(1, max_iters + 1):
        flow = np.bincount(dst, weights=weight * x[src], minlength=n)
        new = damping * (flow + x[dangling].sum() / n) + (1.0 - damping) / n
        new /= new.sum()
        delta = np.abs(new - x).sum()
        x = new
        if delta < tol:
            return PageRankResult(x, it, True)
    warnings.warn("pagerank did not converge; returning the last iterate")
    return PageRankResult(x, max_iters, False)


def degree_scores(graph: Graph) -> np.ndarray:
    """Outgoing degree: how many users an action directly reaches."""
    return graph.out_degree()


def baseline_policy(scores, budget, horizon) -> np.ndarray:
    """Constant intensities proportional to ``scores`` spending ``budget`` over ``horizon``."""
    scores = np.asarray(scores, dtype=float)
    if np.any(scores < 0):
        raise ConfigError("scores must be nonnegative")
    if budget < 0:
        raise ConfigError("budget must be >= 0")
    total = scores.sum()
    if total <= 0:
        raise ConfigError("degenerate scores: all zero")
    t0, tf = horizon
    return budget * scores / (total * (tf - t0))


# -- edge-list files ------------------------------------------------------------


def save_graph(graph: Graph, path) -> None:
    lines = [f"# n={graph.n}"] + [f"{s} {d}" for s, d in graph.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> Graph:
    n = None
    edges = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("n="):
                n = int(body[2:])
            continue
        src, dst = line.split()[:2]
        edges.append((int(src), int(dst)))
    if n is None:
        raise ConfigError(f"{path}: missing '# n=<count>' header")
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
