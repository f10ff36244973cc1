"""Brute-force reference implementations used to pin expected values.

Everything here trades speed for being obviously correct: exhaustive
enumeration instead of branch-and-bound, explicit path listing instead of
the histogram factorization. Only usable on small graphs.
"""

from itertools import combinations, permutations

import numpy as np

from plankern.graphs import FloorPlanGraph
from plankern.metrics import EditCostModel


def oracle_ged(g1: FloorPlanGraph, g2: FloorPlanGraph, costs: EditCostModel | None = None) -> float:
    """Minimum edit cost over every injective partial node mapping."""
    if costs is None:
        costs = EditCostModel()
    n1, n2 = g1.n_nodes, g2.n_nodes
    cats1 = [r.category for r in g1.nodes]
    cats2 = [r.category for r in g2.nodes]
    e1 = {(min(u, v), max(u, v)): k for u, v, k in g1.edges}
    e2 = g2.edge_kinds()
    best = float("inf")
    for k in range(min(n1, n2) + 1):
        for keep in combinations(range(n1), k):
            for img in permutations(range(n2), k):
                m = dict(zip(keep, img))
                inv = {j: u for u, j in m.items()}
                c = (n1 - k) * costs.node_del + (n2 - k) * costs.node_ins
                c += sum(costs.node_sub for u in keep if cats1[u] != cats2[m[u]])
                for (u, v), kind in e1.items():
                    if u in m and v in m:
                        a, b = m[u], m[v]
                        k2 = e2.get((min(a, b), max(a, b)))
                        if k2 is None:
                            c += costs.edge_del
                        elif k2 is not kind:
                            c += costs.edge_sub
                    else:
                        c += costs.edge_del
                for (a, b) in e2:
                    if a in inv and b in inv:
                        u, v = inv[a], inv[b]
                        if (min(u, v), max(u, v)) not in e1:
                            c += costs.edge_ins
                    else:
                        c += costs.edge_ins
                if c < best:
                    best = c
    return best


def _bfs_dist(adj: list[list[int]], source: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def all_shortest_paths(graph: FloorPlanGraph, delta: int) -> list[tuple[int, ...]]:
    """Every shortest path with at most `delta` nodes, as node tuples.

    Includes the trivial single-node path (s,) for every node. Ordered
    pairs: the reverse of each multi-node path is listed separately.
    """
    n = graph.n_nodes
    adj = graph.adjacency()
    dist = [_bfs_dist(adj, s) for s in range(n)]
    paths: list[tuple[int, ...]] = [(s,) for s in range(n)]
    for s in range(n):
        for t in range(n):
            d = dist[s][t]
            if t == s or d < 0 or d > delta - 1:
                continue
            # extend only along edges that stay on some shortest s->t path
            stack = [(s,)]
            while stack:
                prefix = stack.pop()
                v = prefix[-1]
                if v == t:
                    paths.append(prefix)
                    continue
                for w in adj[v]:
                    if dist[s][w] == dist[s][v] + 1 and dist[s][w] + dist[w][t] == d:
                        stack.append(prefix + (w,))
    return paths


def oracle_histograms(graph: FloorPlanGraph, delta: int) -> np.ndarray:
    """Position histograms counted from the explicit path list."""
    m = np.zeros((graph.n_nodes, delta, delta), dtype=np.int64)
    for path in all_shortest_paths(graph, delta):
        j = len(path) - 1
        for i, u in enumerate(path):
            m[u, i, j] += 1
    return m


def oracle_graph_kernel(
    g1: FloorPlanGraph,
    g2: FloorPlanGraph,
    h1: np.ndarray,
    h2: np.ndarray,
    mu: float,
    delta: int,
) -> float:
    """Sum of node kernels over all aligned positions of equal-length paths."""
    knode = np.exp(-mu * np.square(h1[:, None, :] - h2[None, :, :]).sum(axis=2))
    total = 0.0
    paths1 = all_shortest_paths(g1, delta)
    paths2 = all_shortest_paths(g2, delta)
    for p1 in paths1:
        for p2 in paths2:
            if len(p1) != len(p2):
                continue
            for u, v in zip(p1, p2):
                total += knode[u, v]
    return total
