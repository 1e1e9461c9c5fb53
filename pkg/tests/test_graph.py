import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgcnet.errors import DimensionError, DomainError
from rgcnet.graph import (
    Graph,
    Permutation,
    binarize,
    clustering_coefficients,
    degrees,
    hop_distances,
    normalize_adjacency,
    permute,
    topology_stats,
)

from oracles import random_connected, random_graph, triangle_clustering


def test_graph_is_immutable_and_validated():
    g = Graph(np.eye(3), np.ones((3, 2)))
    assert g.n_nodes == 3 and g.n_features == 2
    with pytest.raises(ValueError):
        g.adjacency[0, 0] = 5
    with pytest.raises(DimensionError):
        Graph(np.ones((2, 3)), None)
    with pytest.raises(DimensionError):
        Graph(np.ones((3, 3)), np.ones((2, 1)))


def test_normalize_matches_formula(rng):
    a = random_graph(rng, 8, 0.5)
    a[0, :] = a[:, 0] = 0  # isolated node
    got = normalize_adjacency(a)
    d = a.sum(1)
    for i in range(8):
        for j in range(8):
            want = a[i, j] / np.sqrt(d[i] * d[j]) if d[i] and d[j] else 0.0
            assert got[i, j] == pytest.approx(want, abs=1e-15)
    assert np.all(got[0] == 0)


def test_normalize_self_loops():
    a = np.array([[0, 1], [1, 0]], float)
    np.testing.assert_allclose(normalize_adjacency(a, add_self_loops=True), np.full((2, 2), 0.5))


def test_normalize_rejects_negative():
    with pytest.raises(DomainError):
        normalize_adjacency(-np.ones((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000))
def test_permutation_matrix_and_permute(n, seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, n)
    x = rng.standard_normal((n, 3))
    p = Permutation.random(n, rng)
    pm = p.matrix()
    g2 = permute(Graph(a, x), p)
    np.testing.assert_array_equal(g2.adjacency, pm @ a @ pm.T)
    np.testing.assert_array_equal(g2.features, pm @ x)
    np.testing.assert_array_equal(p.apply_rows(x), pm @ x)
    q = Permutation.random(n, rng)
    np.testing.assert_array_equal(p.compose(q).matrix(), pm @ q.matrix())


def test_permutation_rejects_non_bijection():
    with pytest.raises(DomainError):
        Permutation((0, 0, 1))


def test_binarize_and_degrees():
    a = np.array([[5, 0.2, 0], [0.2, 0, 0.7], [0, 0.7, 0]])
    assert binarize(a, 0.5).tolist() == [[False, False, False], [False, False, True], [False, True, False]]
    assert degrees(a).tolist() == [1, 2, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_clustering_matches_networkx_and_triangles(n, seed):
    a = random_graph(np.random.default_rng(seed), n, 0.5)
    ours = clustering_coefficients(a)
    nxc = nx.clustering(nx.from_numpy_array(a))
    for i in range(n):
        assert ours[i] == pytest.approx(nxc[i], abs=1e-12)
        assert ours[i] == float(triangle_clustering(a)[i])


def test_hop_distances_match_networkx(rng):
    a = random_graph(rng, 10, 0.2)
    d = hop_distances(a)
    lengths = dict(nx.all_pairs_shortest_path_length(nx.from_numpy_array(a)))
    for i in range(10):
        for j in range(10):
            assert d[i, j] == lengths[i].get(j, np.inf)


def test_topology_stats_against_networkx(rng):
    a = random_connected(rng, 12, 0.2)
    s = topology_stats(a)
    g = nx.from_numpy_array(a)
    assert s["avg_degree"] == pytest.approx(2 * g.number_of_edges() / 12)
    assert s["avg_clustering"] == pytest.approx(nx.average_clustering(g))
    assert s["avg_path_length"] == pytest.approx(nx.average_shortest_path_length(g))
    assert s["diameter"] == nx.diameter(g)
    assert s["density"] == pytest.approx(nx.density(g))


def test_topology_single_node():
    s = topology_stats(np.zeros((1, 1)))
    assert s["diameter"] == 0 and s["density"] == 0
