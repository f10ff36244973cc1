"""Attributed floor-plan graphs: domain types, validation, JSON-lines I/O.

A floor plan is an undirected graph of rooms. Each room carries a category
(8 classes), a 6-entry shape vector [cx, cy, w, h, sqrt_area, p/4] and a
simple polygon; each edge is either a door (access) or a wall (adjacency
without access). Coordinates live in the unit box [-0.5, 0.5]^2 centered
at the origin; no physical scale is stored.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

CATEGORIES = (
    "living room",
    "bedroom",
    "kitchen",
    "bathroom",
    "dining",
    "store room",
    "balcony",
    "corridor",
)
NUM_CATEGORIES = len(CATEGORIES)

# Polygons may spill slightly past the unit box but never beyond this.
POLYGON_BOUND = 0.55

# Slack for the rectilinear shape consistency checks.
SHAPE_TOL = 1e-9


class MalformedInputError(ValueError):
    """A graph file (or one of its records) could not be parsed."""

    def __init__(self, message: str, record: int | None = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class InvalidGraphError(ValueError):
    """A parsed record violates the graph invariants."""

    def __init__(self, graph_id: str, violations: list[str], record: int | None = None):
        self.graph_id = graph_id
        self.violations = violations
        self.record = record
        where = f"record {record} " if record is not None else ""
        super().__init__(f"{where}(graph {graph_id!r}): " + "; ".join(violations))


class EdgeKind(Enum):
    DOOR = "door"
    WALL = "wall"

    def vector(self) -> np.ndarray:
        """Permeability encoding: [1;0] for access, [0;1] for adjacent-only."""
        if self is EdgeKind.DOOR:
            return np.array([1.0, 0.0])
        return np.array([0.0, 1.0])

    @classmethod
    def parse(cls, text: str) -> "EdgeKind":
        try:
            return cls(text)
        except ValueError:
            raise MalformedInputError(f"unknown edge kind {text!r}") from None


@dataclass(frozen=True)
class RoomShape:
    """Shape vector entries in fixed order: [cx; cy; w; h; sqrt_area; p/4]."""

    cx: float
    cy: float
    w: float
    h: float
    sqrt_area: float
    quarter_perimeter: float

    @classmethod
    def from_rect(cls, cx: float, cy: float, w: float, h: float) -> "RoomShape":
        return cls(cx, cy, w, h, math.sqrt(w * h), (w + h) / 2.0)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "RoomShape":
        if len(vec) != 6:
            raise MalformedInputError(f"shape vector must have 6 entries, got {len(vec)}")
        return cls(*(float(x) for x in vec))

    def vector(self) -> np.ndarray:
        return np.array(
            [self.cx, self.cy, self.w, self.h, self.sqrt_area, self.quarter_perimeter]
        )


@dataclass(frozen=True)
class Room:
    category: int
    shape: RoomShape
    polygon: tuple[tuple[float, float], ...]


Edge = tuple[int, int, EdgeKind]


@dataclass
class FloorPlanGraph:
    """A validated floor plan: rooms as nodes, permeability edges (u < v)."""

    id: str
    nodes: list[Room]
    edges: list[Edge]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> list[list[int]]:
        """Sorted neighbor lists; edges treated symmetrically."""
        adj: list[list[int]] = [[] for _ in self.nodes]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for nbrs in adj:
            nbrs.sort()
        return adj

    def edge_kinds(self) -> dict[tuple[int, int], EdgeKind]:
        return {(u, v): kind for u, v, kind in self.edges}

    def category_onehot(self) -> np.ndarray:
        """(n, 8) one-hot category matrix."""
        out = np.zeros((self.n_nodes, NUM_CATEGORIES))
        out[np.arange(self.n_nodes), [r.category for r in self.nodes]] = 1.0
        return out

    def shape_matrix(self) -> np.ndarray:
        """(n, 6) stacked shape vectors."""
        return np.array([r.shape.vector() for r in self.nodes])


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """True if closed segments p1p2 and q1q2 share any point."""
    d1 = _orient(*q1, *q2, *p1)
    d2 = _orient(*q1, *q2, *p2)
    d3 = _orient(*p1, *p2, *q1)
    d4 = _orient(*p1, *p2, *q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(*q1, *q2, *p1):
        return True
    if d2 == 0 and _on_segment(*q1, *q2, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *q1):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *q2):
        return True
    return False


def _polygon_is_simple(poly: Sequence[tuple[float, float]]) -> bool:
    k = len(poly)
    for i in range(k):
        a1, a2 = poly[i], poly[(i + 1) % k]
        if a1 == a2:
            return False
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or (i + 1) % k == j:
                continue  # adjacent segments share a vertex by construction
            b1, b2 = poly[j], poly[(j + 1) % k]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def validate(graph: FloorPlanGraph) -> list[str]:
    """Check all FloorPlanGraph invariants; returns violations, empty iff valid."""
    problems: list[str] = []
    n = graph.n_nodes
    if n < 1:
        return ["graph has no nodes"]

    for i, room in enumerate(graph.nodes):
        if not isinstance(room.category, int) or not 0 <= room.category < NUM_CATEGORIES:
            problems.append(f"node {i}: category out of range [0, 7]: {room.category}")
        s = room.shape
        if not (-0.5 <= s.cx <= 0.5 and -0.5 <= s.cy <= 0.5):
            problems.append(f"node {i}: center outside [-0.5, 0.5]^2")
        if not (0.0 < s.w <= 1.0 and 0.0 < s.h <= 1.0):
            problems.append(f"node {i}: width/height outside (0, 1]")
        if s.sqrt_area * s.sqrt_area > s.w * s.h + SHAPE_TOL:
            problems.append(f"node {i}: area exceeds bounding box w*h")
        if s.quarter_perimeter < (s.w + s.h) / 2.0 - SHAPE_TOL:
            problems.append(f"node {i}: quarter perimeter below rectilinear bound (w+h)/2")
        poly = room.polygon
        if len(poly) < 3:
            problems.append(f"node {i}: polygon has fewer than 3 vertices")
            continue
        if any(abs(x) > POLYGON_BOUND or abs(y) > POLYGON_BOUND for x, y in poly):
            problems.append(f"node {i}: polygon outside [-0.55, 0.55]^2")
        if not _polygon_is_simple(poly):
            problems.append(f"node {i}: polygon is not simple (self-intersecting)")

    seen: set[tuple[int, int]] = set()
    for u, v, _kind in graph.edges:
        if not (isinstance(u, int) and isinstance(v, int)) or not (0 <= u < n and 0 <= v < n):
            problems.append(f"edge ({u}, {v}): endpoint out of range")
            continue
        if u == v:
            problems.append(f"edge ({u}, {v}): self-loop")
            continue
        if u > v:
            problems.append(f"edge ({u}, {v}): not normalized to u < v")
            continue
        if (u, v) in seen:
            problems.append(f"duplicate edge ({u}, {v})")
        seen.add((u, v))

    if all("endpoint" not in p for p in problems):
        reached = {0}
        queue = deque([0])
        adj = graph.adjacency()
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in reached:
                    reached.add(v)
                    queue.append(v)
        if len(reached) < n:
            missing = sorted(set(range(n)) - reached)
            problems.append(f"disconnected: nodes {missing} unreachable from node 0")

    return problems


def graph_to_record(graph: FloorPlanGraph) -> dict:
    return {
        "id": graph.id,
        "nodes": [
            {
                "category": room.category,
                "shape": [float(x) for x in room.shape.vector()],
                "polygon": [[float(x), float(y)] for x, y in room.polygon],
            }
            for room in graph.nodes
        ],
        "edges": [{"u": u, "v": v, "kind": kind.value} for u, v, kind in graph.edges],
    }


def record_to_graph(rec: dict) -> FloorPlanGraph:
    try:
        nodes = [
            Room(
                category=int(nd["category"]),
                shape=RoomShape.from_vector(nd["shape"]),
                polygon=tuple((float(x), float(y)) for x, y in nd["polygon"]),
            )
            for nd in rec["nodes"]
        ]
        edges = [(int(e["u"]), int(e["v"]), EdgeKind.parse(e["kind"])) for e in rec["edges"]]
        return FloorPlanGraph(id=str(rec["id"]), nodes=nodes, edges=edges)
    except (KeyError, TypeError) as exc:
        raise MalformedInputError(f"bad graph record: {exc!r}") from exc


def write_graphs(graphs: Iterable[FloorPlanGraph], path) -> None:
    """One JSON object per line; floats serialized at full (repr) precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g), separators=(",", ":")))
            fh.write("\n")


def read_graphs(path, reject: list | None = None) -> list[FloorPlanGraph]:
    """Read and validate a JSON-lines graph file.

    Malformed JSON raises MalformedInputError with the record index. Records
    failing validate() raise InvalidGraphError, unless `reject` is given, in
    which case they are skipped and (record_index, message) is appended to it.
    """
    graphs: list[FloorPlanGraph] = []
    with open(path, "r", encoding="utf-8") as fh:
        for idx, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"invalid JSON: {exc}", record=idx) from exc
            try:
                g = record_to_graph(rec)
            except MalformedInputError as exc:
                if reject is not None:
                    reject.append((idx, str(exc)))
                    continue
                raise MalformedInputError(str(exc), record=idx) from exc
            violations = validate(g)
            if violations:
                if reject is not None:
                    reject.append((idx, "; ".join(violations)))
                    continue
                raise InvalidGraphError(g.id, violations, record=idx)
            graphs.append(g)
    return graphs
