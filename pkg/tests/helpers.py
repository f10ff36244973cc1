"""Hand-rolled graph builders for tests.

Synthetic plans from plankern.synth have realistic geometry but only come
in generator-shaped topologies; these builders give full control over
categories and edge structure while still passing validate().
"""

import numpy as np

from plankern.graphs import EdgeKind, FloorPlanGraph, Room, RoomShape


def rect_room(cx: float, cy: float, w: float, h: float, category: int) -> Room:
    poly = (
        (cx - w / 2, cy - h / 2),
        (cx + w / 2, cy - h / 2),
        (cx + w / 2, cy + h / 2),
        (cx - w / 2, cy + h / 2),
    )
    return Room(category=category, shape=RoomShape.from_rect(cx, cy, w, h), polygon=poly)


def make_graph(cats, edges, graph_id: str = "test") -> FloorPlanGraph:
    """Rooms laid out in a row; edges as (u, v) doors or (u, v, kind) tuples."""
    n = len(cats)
    w = 1.0 / n
    rooms = [rect_room(-0.5 + (i + 0.5) * w, 0.0, w, 0.4, c) for i, c in enumerate(cats)]
    norm = []
    for e in edges:
        u, v = e[0], e[1]
        kind = e[2] if len(e) > 2 else EdgeKind.DOOR
        if isinstance(kind, str):
            kind = EdgeKind(kind)
        norm.append((min(u, v), max(u, v), kind))
    return FloorPlanGraph(id=graph_id, nodes=rooms, edges=norm)


def random_graph(rng: np.random.Generator, n: int, graph_id: str = "rand", extra: float = 0.3):
    """Connected random graph: spanning tree plus `extra` chance per leftover pair."""
    cats = [int(rng.integers(0, 8)) for _ in range(n)]
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.append((u, v, EdgeKind.DOOR if rng.random() < 0.7 else EdgeKind.WALL))
    present = {(u, v) for u, v, _ in edges}
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in present and rng.random() < extra:
                edges.append((u, v, EdgeKind.DOOR if rng.random() < 0.7 else EdgeKind.WALL))
    return make_graph(cats, edges, graph_id=graph_id)
