"""Ground-truth similarity oracles and ranking metrics.

Exact graph edit distance (branch-and-bound over node assignments with an
admissible label-multiset lower bound), its normalized exponential variant,
rasterized mean IoU over room categories, tie-inclusive precision-at-k and
triplet accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import NUM_CATEGORIES, FloorPlanGraph

DEFAULT_NODE_CAP = 20


class GraphTooLargeError(ValueError):
    """Exact GED was requested beyond the configured size cap."""


@dataclass(frozen=True)
class EditCostModel:
    """Per-operation edit costs; substitutions are free on matching labels.

    Insertion and deletion costs must be symmetric so GED is symmetric.
    """

    node_sub: float = 1.0
    node_ins: float = 1.0
    node_del: float = 1.0
    edge_sub: float = 1.0
    edge_ins: float = 1.0
    edge_del: float = 1.0

    def __post_init__(self):
        for name in ("node_sub", "node_ins", "node_del", "edge_sub", "edge_ins", "edge_del"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.node_ins != self.node_del or self.edge_ins != self.edge_del:
            raise ValueError("insertion and deletion costs must match (symmetry)")


def ged(
    g1: FloorPlanGraph,
    g2: FloorPlanGraph,
    costs: EditCostModel | None = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> float:
    """Exact minimum edit cost transforming g1 into g2.

    Branch-and-bound over assignments of g1 nodes (in index order) to unused
    g2 nodes or deletion, children explored in ascending candidate index.
    Refuses with GraphTooLargeError above `node_cap` total nodes: this
    routine never approximates.
    """
    if costs is None:
        costs = EditCostModel()
    n1, n2 = g1.n_nodes, g2.n_nodes
    if n1 + n2 > node_cap:
        raise GraphTooLargeError(
            f"exact GED refused: {n1}+{n2} nodes exceeds cap {node_cap}"
        )

    cats1 = [r.category for r in g1.nodes]
    cats2 = [r.category for r in g2.nodes]
    # Edge kinds as small ints on flat matrices: 0 none, 1 door, 2 wall.
    k2mat = bytearray(n2 * n2)
    adj2: list[list[tuple[int, int]]] = [[] for _ in range(n2)]
    edges2: list[tuple[int, int]] = []
    unused_edges2 = [0, 0, 0]  # indexed by kind code, slot 0 unused
    for (u, v), kind in g2.edge_kinds().items():
        code = 1 if kind.value == "door" else 2
        k2mat[u * n2 + v] = code
        k2mat[v * n2 + u] = code
        adj2[u].append((v, code))
        adj2[v].append((u, code))
        edges2.append((u, v))
        unused_edges2[code] += 1
    # g1 edges from node i back to earlier nodes, plus pair-existence matrix.
    b1mat = bytearray(n1 * n1)
    back1: list[list[tuple[int, int]]] = [[] for _ in range(n1)]
    fwd_deg = [0] * n1
    for u, v, kind in g1.edges:
        code = 1 if kind.value == "door" else 2
        lo, hi = (u, v) if u < v else (v, u)
        b1mat[hi * n1 + lo] = code
        b1mat[lo * n1 + hi] = code
        back1[hi].append((lo, code))
        fwd_deg[lo] += 1

    # Suffix label counts of g1 and per-kind counts of g1 edges fully inside
    # the undecided suffix, both indexed by depth.
    num_cats = NUM_CATEGORIES
    suffix_cats1 = [[0] * num_cats for _ in range(n1 + 1)]
    for i in range(n1 - 1, -1, -1):
        row = suffix_cats1[i + 1].copy()
        row[cats1[i]] += 1
        suffix_cats1[i] = row
    suffix_edges1 = [[0, 0, 0] for _ in range(n1 + 1)]
    for i in range(n1 - 1, -1, -1):
        row = suffix_edges1[i + 1].copy()
        for u, v, kind in g1.edges:
            if min(u, v) == i:
                row[1 if kind.value == "door" else 2] += 1
        suffix_edges1[i] = row

    assignment: list[int | None] = [None] * n1
    preimage = [0] * n2  # meaningful only where used[j]
    used = [False] * n2
    rem2_cats = [0] * num_cats
    for c in cats2:
        rem2_cats[c] += 1
    n2_unused = n2

    sub_n, del_n, ins_n = costs.node_sub, costs.node_del, costs.node_ins
    sub_e, del_e, ins_e = costs.edge_sub, costs.edge_del, costs.edge_ins
    pair_n = min(sub_n, del_n + ins_n)
    pair_e = min(sub_e, del_e + ins_e)
    del_step = [del_n + del_e * len(back1[i]) for i in range(n1)]
    fwd_cost = [del_e * fwd_deg[i] for i in range(n1)]

    def leaf_extra() -> float:
        # Unmatched g2 nodes and every g2 edge touching one of them.
        extra = n2_unused * ins_n
        for x, y in edges2:
            if not (used[x] and used[y]):
                extra += ins_e
        return extra

    def map_cost(i: int, j: int) -> float:
        """Cost added by mapping i to j; edges to decided nodes count once."""
        c = 0.0 if cats1[i] == cats2[j] else sub_n
        jrow = j * n2
        irow = i * n1
        for a, kind1 in back1[i]:
            ja = assignment[a]
            if ja is None:
                c += del_e
            else:
                kind2 = k2mat[jrow + ja]
                if kind2 == 0:
                    c += del_e
                elif kind2 != kind1:
                    c += sub_e
        for x, _code in adj2[j]:
            if used[x] and not b1mat[irow + preimage[x]]:
                c += ins_e
        return c

    def apply(i: int, j: int) -> None:
        nonlocal n2_unused
        assignment[i] = j
        preimage[j] = i
        used[j] = True
        rem2_cats[cats2[j]] -= 1
        n2_unused -= 1
        for x, code in adj2[j]:
            if not used[x]:
                unused_edges2[code] -= 1

    def undo(i: int, j: int) -> None:
        nonlocal n2_unused
        used[j] = False
        for x, code in adj2[j]:
            if not used[x]:
                unused_edges2[code] += 1
        assignment[i] = None
        rem2_cats[cats2[j]] += 1
        n2_unused += 1

    def greedy_incumbent() -> float:
        """Locally cheapest completion; any feasible total seeds pruning."""
        total = 0.0
        chosen: list[tuple[int, int]] = []
        for i in range(n1):
            best_j = None
            best_c = del_step[i]
            for j in range(n2):
                if not used[j]:
                    c = map_cost(i, j)
                    if c < best_c:
                        best_j, best_c = j, c
            total += best_c
            if best_j is not None:
                apply(i, best_j)
                chosen.append((i, best_j))
        total += leaf_extra()
        for i, j in reversed(chosen):
            undo(i, j)
        return total

    # Incumbent: the cheaper of delete-all/insert-all and a greedy completion.
    best = (
        n1 * del_n + n2 * ins_n + len(g1.edges) * del_e + len(g2.edges) * ins_e
    )
    best = min(best, greedy_incumbent())
    # Edges with a deleted endpoint and the other endpoint still undecided;
    # each is a guaranteed future deletion charge.
    pending = 0.0

    def search(i: int, cost: float) -> None:
        nonlocal best, pending
        if i == n1:
            total = cost + leaf_extra()
            if total < best:
                best = total
            return
        # Admissible bound: optimal label-only matching of the remaining
        # nodes, likewise for suffix-internal g1 edges against fully-unused
        # g2 edges, plus the pending doomed edges.  The three pools are
        # disjoint, so the sum never overestimates.
        srow = suffix_cats1[i]
        same = 0
        for k in range(num_cats):
            a = srow[k]
            b = rem2_cats[k]
            same += a if a < b else b
        r1 = (n1 - i) - same
        r2 = n2_unused - same
        if r1 < r2:
            lb = pair_n * r1 + ins_n * (r2 - r1)
        else:
            lb = pair_n * r2 + del_n * (r1 - r2)
        se = suffix_edges1[i]
        same = (se[1] if se[1] < unused_edges2[1] else unused_edges2[1]) + (
            se[2] if se[2] < unused_edges2[2] else unused_edges2[2]
        )
        e1 = (se[1] + se[2]) - same
        e2 = (unused_edges2[1] + unused_edges2[2]) - same
        if e1 < e2:
            lb += pair_e * e1 + ins_e * (e2 - e1)
        else:
            lb += pair_e * e2 + del_e * (e1 - e2)
        if cost + lb + pending >= best:
            return
        # Deciding i settles its back edges into deleted nodes: they are
        # charged by the child step costs below, so they leave the pending
        # pool for the whole subtree.
        ndc = 0.0
        for a, _kind in back1[i]:
            if assignment[a] is None:
                ndc += del_e
        pending -= ndc
        for j in range(n2):
            if not used[j]:
                c = cost + map_cost(i, j)
                if c < best:
                    apply(i, j)
                    search(i + 1, c)
                    undo(i, j)
        # Deletion branch last (ascending candidate order, then delete).
        c = cost + del_step[i]
        if c < best:
            pending += fwd_cost[i]
            search(i + 1, c)
            pending -= fwd_cost[i]
        pending += ndc

    search(0, 0.0)
    return best


def sged(
    g1: FloorPlanGraph,
    g2: FloorPlanGraph,
    costs: EditCostModel | None = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> float:
    """exp(-GED / (|G1| + |G2|)), a similarity in (0, 1]."""
    return math.exp(-ged(g1, g2, costs, node_cap) / (g1.n_nodes + g2.n_nodes))


@dataclass(frozen=True)
class RasterConfig:
    """Pixel grid for category masks over the unit box."""

    resolution: int = 128
    extent: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")


def _polygon_mask(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test at the given pixel centers."""
    gx = xs[None, :]
    gy = ys[:, None]
    inside = np.zeros((ys.size, xs.size), dtype=bool)
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        if y1 == y2:
            continue
        crosses = (y1 > gy) != (y2 > gy)
        xcross = x1 + (gy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (gx < xcross)
    return inside


def category_label_map(graph: FloorPlanGraph, raster: RasterConfig = RasterConfig()) -> np.ndarray:
    """(res, res) int8 label image, -1 where no room; later nodes overwrite earlier."""
    lo, hi = raster.extent
    res = raster.resolution
    centers = lo + (np.arange(res) + 0.5) * (hi - lo) / res
    labels = np.full((res, res), -1, dtype=np.int8)
    for room in graph.nodes:
        poly = np.asarray(room.polygon)
        mask = _polygon_mask(poly, centers, centers)
        labels[mask] = room.category
    return labels


def miou_from_labels(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-category IoU of two label maps, over categories present in either."""
    k = NUM_CATEGORIES + 1
    joint = np.bincount(
        ((a.ravel() + 1).astype(np.int64) * k + (b.ravel() + 1)), minlength=k * k
    ).reshape(k, k)
    a_tot = joint.sum(axis=1)
    b_tot = joint.sum(axis=0)
    total = 0.0
    count = 0
    for c in range(1, k):
        inter = joint[c, c]
        union = a_tot[c] + b_tot[c] - inter
        if union > 0:
            total += inter / union
            count += 1
    if count == 0:
        return 0.0
    return total / count


def miou(
    g1: FloorPlanGraph, g2: FloorPlanGraph, raster: RasterConfig = RasterConfig()
) -> float:
    """Rasterized mean intersection-over-union of per-category room regions."""
    return miou_from_labels(category_label_map(g1, raster), category_label_map(g2, raster))


def precision_at_k(model_ranking, gt_scores, k: int) -> float:
    """Tie-inclusive P@k.

    Relevant items are those whose ground-truth score ties with or exceeds
    the k-th largest ground-truth score within the candidate set (the model
    ranking itself), so ties at the cut never penalize an arbitrary order.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    ids = list(model_ranking)
    if len(ids) < k:
        raise ValueError(f"ranking has {len(ids)} items, need at least k={k}")
    scores = sorted((gt_scores[i] for i in ids), reverse=True)
    threshold = scores[k - 1]
    hits = sum(1 for i in ids[:k] if gt_scores[i] >= threshold)
    return hits / k


def triplet_accuracy(preds) -> float:
    """Fraction of (s_ap, s_an) pairs with s_ap strictly greater; ties fail."""
    preds = list(preds)
    if not preds:
        raise ValueError("triplet_accuracy requires at least one prediction")
    return sum(1 for s_ap, s_an in preds if s_ap > s_an) / len(preds)
