import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cheshire.errors import ConfigError
from cheshire.networks import (
    KRONECKER_PRESETS,
    Graph,
    KroneckerSeed,
    baseline_policy,
    degree_scores,
    kronecker_graph,
    load_graph,
    pagerank,
    sample_parameters,
    save_graph,
)
from cheshire.rng import make_rng

from oracles import kronecker_expected_edges, pagerank_dense


def star(n=5):
    return Graph(n, [(0, j) for j in range(1, n)])


def test_all_ones_seed_gives_complete_graph():
    g = kronecker_graph(KroneckerSeed((1, 1, 1, 1), 2), make_rng(0))
    assert g.n == 4 and len(g) == 12
    assert not np.any(g.edges[:, 0] == g.edges[:, 1])


def test_zero_seed_gives_empty_graph():
    for k in (1, 3, 5):
        assert len(kronecker_graph(KroneckerSeed((0, 0, 0, 0), k), make_rng(k))) == 0


def test_expected_edge_count_matches_exhaustive_oracle():
    theta = ((0.96, 0.3), (0.3, 0.96))
    seed = KroneckerSeed(theta, 6)
    expected = kronecker_expected_edges(theta, 6)
    P = seed.probabilities()
    assert P.sum() - np.trace(P) == pytest.approx(expected, rel=1e-12)
    counts = np.array([len(kronecker_graph(seed, make_rng(i))) for i in range(200)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - expected) < 3 * se


def test_asymmetric_seed_bit_order():
    theta = ((0.1, 0.2), (0.3, 0.4))
    P = KroneckerSeed(theta, 3).probabilities()
    # node 4 = 0b100, node 1 = 0b001: levels read (1,0), (0,0), (0,1) most significant first
    assert P[4, 1] == pytest.approx(0.3 * 0.1 * 0.2)
    assert P.sum() - np.trace(P) == pytest.approx(kronecker_expected_edges(theta, 3), rel=1e-12)


def test_kronecker_deterministic_per_seed():
    seed = KroneckerSeed(KRONECKER_PRESETS["hierarchical"], 5)
    a = kronecker_graph(seed, make_rng(3))
    b = kronecker_graph(seed, make_rng(3))
    np.testing.assert_array_equal(a.edges, b.edges)


def test_seed_validation():
    with pytest.raises(ConfigError):
        KroneckerSeed((0.5, 1.2, 0.1, 0.1), 2)
    with pytest.raises(ConfigError):
        KroneckerSeed((0.5, 0.5, 0.5), 2)
    with pytest.raises(ConfigError):
        KroneckerSeed((0.5, 0.5, 0.5, 0.5), 0)


def test_graph_drops_self_loops_and_duplicates():
    g = Graph(3, [(0, 1), (0, 1), (2, 2), (1, 0)])
    assert g.edges.tolist() == [[0, 1], [1, 0]]
    with pytest.raises(ConfigError):
        Graph(2, [(0, 2)])


def test_sample_parameters_support():
    g = star(6)
    model = sample_parameters(g, 0.0, 10.0, 0.0, 10.0, 0.5, 16.0, make_rng(1))
    nz = np.argwhere(model.A > 0)
    assert sorted(map(tuple, nz[:, ::-1].tolist())) == sorted(map(tuple, g.edges.tolist()))
    assert np.count_nonzero(model.mu0) == 3
    assert model.omega == 16.0
    assert Graph.from_model(model).edges.tolist() == g.edges.tolist()


def test_sample_parameters_trivial_cases():
    quiet = sample_parameters(star(), 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, make_rng(0))
    assert not quiet.mu0.any()
    empty = sample_parameters(Graph(4, []), 0.0, 1.0, 1.0, 2.0, 1.0, 1.0, make_rng(0))
    assert not empty.A.any() and np.all(empty.mu0 >= 1.0)
    with pytest.raises(ConfigError):
        sample_parameters(star(), 0.0, 1.0, 0.0, 1.0, 1.5, 1.0, make_rng(0))


def test_pagerank_examples():
    pair = pagerank(Graph(2, [(0, 1), (1, 0)]))
    np.testing.assert_allclose(pair.scores, [0.5, 0.5], atol=1e-12)
    empty = pagerank(Graph(4, []))
    np.testing.assert_allclose(empty.scores, np.full(4, 0.25), atol=1e-15)
    g = star()
    got = pagerank(g, damping=0.85, tol=1e-15)
    assert got.converged
    np.testing.assert_allclose(got.scores, pagerank_dense(g.adjacency(), 0.85), rtol=0, atol=1e-10)


def test_pagerank_nonconvergence_warns():
    with pytest.warns(UserWarning):
        res = pagerank(star(), max_iters=2, tol=0.0)
    assert not res.converged and res.iterations == 2
    with pytest.raises(ConfigError):
        pagerank(star(), damping=1.0)


def test_baseline_policy_examples():
    np.testing.assert_allclose(baseline_policy(np.ones(4), 8.0, (1.0, 3.0)), np.ones(4))
    assert not baseline_policy(np.ones(3), 0.0, (0.0, 1.0)).any()
    u = baseline_policy(degree_scores(star()), 10.0, (0.0, 2.0))
    assert u[0] == 5.0 and not u[1:].any()
    with pytest.raises(ConfigError):
        baseline_policy(np.zeros(3), 1.0, (0.0, 1.0))
    with pytest.raises(ConfigError):
        baseline_policy(np.ones(3), -1.0, (0.0, 1.0))


def test_graph_file_round_trip(tmp_path):
    g = kronecker_graph(KroneckerSeed(KRONECKER_PRESETS["random"], 4), make_rng(2))
    save_graph(g, tmp_path / "g.txt")
    assert (tmp_path / "g.txt").read_text().startswith("# n=16\n")
    back = load_graph(tmp_path / "g.txt")
    assert back.n == 16
    np.testing.assert_array_equal(back.edges, g.edges)
    (tmp_path / "bad.txt").write_text("0 1\n")
    with pytest.raises(ConfigError):
        load_graph(tmp_path / "bad.txt")


@given(seed=st.integers(0, 2**32), k=st.integers(1, 5), p=st.floats(0, 1))
def test_pagerank_is_distribution(seed, k, p):
    g = kronecker_graph(KroneckerSeed((p, 1 - p, 0.5, p), k), make_rng(seed))
    res = pagerank(g)
    assert abs(res.scores.sum() - 1.0) < 1e-12
    assert np.all(res.scores >= 0)


@given(
    scores=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=10).filter(lambda v: sum(v) > 0),
    budget=st.floats(0, 1e4, allow_nan=False),
    span=st.floats(0.1, 50),
)
def test_baseline_budget_identity(scores, budget, span):
    u = baseline_policy(scores, budget, (1.0, 1.0 + span))
    assert u.sum() * span == pytest.approx(budget, rel=1e-12, abs=1e-12)
