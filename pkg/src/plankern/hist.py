"""Shortest-path position histograms.

For every ordered node pair (s, t) within hop distance delta-1, every
shortest s->t path is counted: a node u sitting at hop i from s on such a
path contributes sigma(s,u) * sigma(u,t) to entry [i, d(s,t)] of its
histogram, where sigma counts shortest paths (Brandes-style products).
The trivial one-node path s=t contributes 1 to entry [0, 0]. Counting all
shortest paths (rather than one BFS/Dijkstra tree per source) makes the
result permutation-equivariant with no tie-break dependence.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .graphs import FloorPlanGraph


def bfs_counts(adj: list[list[int]], source: int) -> tuple[np.ndarray, np.ndarray]:
    """Hop distances and shortest-path counts from `source` (unreachable: -1, 0)."""
    n = len(adj)
    dist = np.full(n, -1, dtype=np.int64)
    sigma = np.zeros(n, dtype=np.int64)
    dist[source] = 0
    sigma[source] = 1
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
    return dist, sigma


def shortest_path_histograms(graph: FloorPlanGraph, delta: int = 4) -> np.ndarray:
    """(n, delta, delta) int64 histogram stack, one delta x delta matrix per node.

    Entry [u, i, j] counts occurrences of node u at position i+1 on shortest
    paths with j+1 nodes. Paths with more than `delta` nodes are ignored.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    n = graph.n_nodes
    adj = graph.adjacency()
    dist = np.empty((n, n), dtype=np.int64)
    sigma = np.empty((n, n), dtype=np.int64)
    for s in range(n):
        dist[s], sigma[s] = bfs_counts(adj, s)

    m = np.zeros((n, delta, delta), dtype=np.int64)
    m[np.arange(n), 0, 0] = 1  # trivial s=t path
    for s in range(n):
        for t in range(n):
            if t == s:
                continue
            d_st = dist[s, t]
            if d_st < 0 or d_st > delta - 1:
                continue
            on_path = np.nonzero(dist[s] + dist[t] == d_st)[0]
            np.add.at(
                m,
                (on_path, dist[s, on_path], d_st),
                sigma[s, on_path] * sigma[t, on_path],
            )
    return m
