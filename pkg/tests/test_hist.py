"""Shortest-path position histograms against explicit path enumeration."""

import numpy as np
import pytest

from helpers import make_graph, random_graph
from oracles import all_shortest_paths, oracle_histograms
from plankern.hist import bfs_counts, shortest_path_histograms


def test_delta_must_be_positive():
    g = make_graph([0], [])
    with pytest.raises(ValueError):
        shortest_path_histograms(g, delta=0)


def test_single_node_counts_trivial_path():
    m = shortest_path_histograms(make_graph([0], []), delta=4)
    expect = np.zeros((1, 4, 4), dtype=np.int64)
    expect[0, 0, 0] = 1
    assert np.array_equal(m, expect)


def test_three_node_path_worked_example():
    # a - b - c; middle node sits at position 0 of two 2-node paths,
    # position 1 of two 2-node paths and of both 3-node paths.
    g = make_graph([0, 0, 0], [(0, 1), (1, 2)])
    m = shortest_path_histograms(g, delta=4)
    b = m[1]
    assert b[0, 0] == 1
    assert b[0, 1] == 2
    assert b[1, 1] == 2
    assert b[1, 2] == 2
    assert b.sum() == 7
    # endpoints are symmetric: a and c see the same histogram
    assert np.array_equal(m[0], m[2])
    assert m[0, 0, 1] == 1 and m[0, 1, 1] == 1 and m[0, 0, 2] == 1 and m[0, 2, 2] == 1


def test_four_cycle_has_two_shortest_paths_between_opposites():
    g = make_graph([0, 0, 0, 0], [(0, 1), (1, 2), (2, 3), (0, 3)])
    m = shortest_path_histograms(g, delta=4)
    # opposite corners: 2 shortest paths each way, middle position split
    # across both intermediate nodes
    assert m[0, 0, 2] == 2  # node 0 starts both 0->2 paths
    assert m[1, 1, 2] == 2  # node 1 is the midpoint of 0->2 and 2->0
    # every node is equivalent under the cycle's symmetry
    for u in range(1, 4):
        assert np.array_equal(m[0], m[u])


def test_delta_truncates_long_paths():
    g = make_graph([0] * 5, [(i, i + 1) for i in range(4)])
    m2 = shortest_path_histograms(g, delta=2)
    assert m2.shape == (5, 2, 2)
    # only trivial and 2-node paths survive
    assert m2[:, 1, 1].sum() == 8  # 4 edges, both directions
    assert m2[0, 0, 1] == 1


def test_matches_path_enumeration_on_random_graphs(small_plans):
    rng = np.random.default_rng(5)
    for k in range(30):
        g = random_graph(rng, int(rng.integers(1, 7)))
        assert np.array_equal(shortest_path_histograms(g, 4), oracle_histograms(g, 4))
    for g in small_plans[:20]:
        assert np.array_equal(shortest_path_histograms(g, 4), oracle_histograms(g, 4))


def test_path_enumeration_agrees_with_sigma_products():
    # spot-check the Brandes counting against the raw path list
    rng = np.random.default_rng(11)
    g = random_graph(rng, 6)
    adj = g.adjacency()
    paths = all_shortest_paths(g, delta=4)
    for s in range(6):
        dist, sigma = bfs_counts(adj, s)
        for t in range(6):
            if s == t or dist[t] > 3:
                continue
            listed = sum(1 for p in paths if p[0] == s and p[-1] == t)
            assert listed == sigma[t]


def test_permutation_equivariance(plans):
    rng = np.random.default_rng(3)
    for g in plans[:15]:
        n = g.n_nodes
        perm = rng.permutation(n)
        relabel = {old: new for new, old in enumerate(perm)}
        permuted = make_graph(
            [g.nodes[perm[i]].category for i in range(n)],
            [
                (min(relabel[u], relabel[v]), max(relabel[u], relabel[v]), kind)
                for u, v, kind in g.edges
            ],
        )
        m = shortest_path_histograms(g, 4)
        mp = shortest_path_histograms(permuted, 4)
        for new_i in range(n):
            assert np.array_equal(mp[new_i], m[perm[new_i]])


def test_histogram_total_counts_node_path_incidences(small_plans):
    for g in small_plans[:10]:
        m = shortest_path_histograms(g, 4)
        paths = all_shortest_paths(g, 4)
        assert m.sum() == sum(len(p) for p in paths)
