"""Deterministic synthetic floor-plan generator.

Plans are recursive guillotine splits of the unit box into axis-aligned
rectangles, so shape features and layout rasters are exact. Every plan has
exactly one living room; door edges form a spanning tree of the room
adjacency rooted there (each plan is reachable through doors), with extra
doors and wall edges added by independent coin flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import CATEGORIES, EdgeKind, FloorPlanGraph, Room, RoomShape

LIVING = 0  # index of "living room" in CATEGORIES


@dataclass(frozen=True)
class GenConfig:
    """Generator knobs; category_weights[0] is ignored (living room is forced)."""

    count: int = 100
    seed: int = 0
    rooms_min: int = 3
    rooms_max: int = 9
    extra_door_prob: float = 0.2
    wall_edge_prob: float = 0.5
    category_weights: tuple[float, ...] = (1.0,) * len(CATEGORIES)

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not (1 <= self.rooms_min <= self.rooms_max <= 9):
            raise ValueError(
                f"need 1 <= rooms_min <= rooms_max <= 9, got "
                f"[{self.rooms_min}, {self.rooms_max}]"
            )
        for name in ("extra_door_prob", "wall_edge_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if len(self.category_weights) != len(CATEGORIES):
            raise ValueError(f"category_weights needs {len(CATEGORIES)} entries")
        if any(w < 0 for w in self.category_weights):
            raise ValueError("category_weights must be non-negative")
        if sum(self.category_weights[1:]) <= 0:
            raise ValueError("at least one non-living category weight must be positive")


Rect = tuple[float, float, float, float]  # x0, y0, x1, y1


def _split_rects(rng: np.random.Generator, n: int) -> list[Rect]:
    rects: list[Rect] = [(-0.5, -0.5, 0.5, 0.5)]
    while len(rects) < n:
        areas = [(x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in rects]
        i = int(np.argmax(areas))  # first maximum; keeps splitting deterministic
        x0, y0, x1, y1 = rects[i]
        frac = rng.uniform(0.35, 0.65)
        if (x1 - x0) >= (y1 - y0):
            xm = x0 + frac * (x1 - x0)
            rects[i] = (x0, y0, xm, y1)
            rects.append((xm, y0, x1, y1))
        else:
            ym = y0 + frac * (y1 - y0)
            rects[i] = (x0, y0, x1, ym)
            rects.append((x0, ym, x1, y1))
    return rects


def _touching(a: Rect, b: Rect) -> bool:
    """Positive-length shared boundary; split coordinates are inherited exactly."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    if ax1 == bx0 or bx1 == ax0:
        return min(ay1, by1) - max(ay0, by0) > 1e-9
    if ay1 == by0 or by1 == ay0:
        return min(ax1, bx1) - max(ax0, bx0) > 1e-9
    return False


def _plan(rng: np.random.Generator, cfg: GenConfig, plan_id: str) -> FloorPlanGraph:
    n = int(rng.integers(cfg.rooms_min, cfg.rooms_max + 1))
    rects = _split_rects(rng, n)

    adjacent = [
        (i, j) for i in range(n) for j in range(i + 1, n) if _touching(rects[i], rects[j])
    ]
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in adjacent:
        adj[i].append(j)
        adj[j].append(i)

    living = int(rng.integers(0, n))
    weights = np.array(cfg.category_weights[1:], dtype=np.float64)
    weights /= weights.sum()
    categories = []
    for i in range(n):
        if i == living:
            categories.append(LIVING)
        else:
            categories.append(1 + int(rng.choice(len(weights), p=weights)))

    # breadth-first spanning tree from the living room becomes the door skeleton
    tree: set[tuple[int, int]] = set()
    seen = [False] * n
    seen[living] = True
    frontier = [living]
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adj[u]):
                if not seen[v]:
                    seen[v] = True
                    tree.add((min(u, v), max(u, v)))
                    nxt.append(v)
        frontier = nxt

    edges = []
    for i, j in adjacent:
        extra_draw = rng.random()
        wall_draw = rng.random()
        if (i, j) in tree:
            edges.append((i, j, EdgeKind.DOOR))
        elif extra_draw < cfg.extra_door_prob:
            edges.append((i, j, EdgeKind.DOOR))
        elif wall_draw < cfg.wall_edge_prob:
            edges.append((i, j, EdgeKind.WALL))

    nodes = []
    for (x0, y0, x1, y1), cat in zip(rects, categories):
        shape = RoomShape.from_rect((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
        polygon = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
        nodes.append(Room(category=cat, shape=shape, polygon=polygon))
    return FloorPlanGraph(id=plan_id, nodes=nodes, edges=sorted(edges, key=lambda e: e[:2]))


def synth_generate(cfg: GenConfig) -> list[FloorPlanGraph]:
    """cfg.count plans, bit-reproducible from cfg.seed (per-item spawned seeds)."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.count)
    plans = []
    for i, seq in enumerate(seqs):
        rng = np.random.default_rng(seq)
        plans.append(_plan(rng, cfg, f"plan-{cfg.seed}-{i:06d}"))
    return plans


def tiling_check(plan: FloorPlanGraph) -> tuple[float, bool]:
    """(total rectangle area, pairwise interior-disjoint) for generator tests."""
    total = 0.0
    boxes = []
    for room in plan.nodes:
        s = room.shape
        boxes.append((s.cx - s.w / 2, s.cy - s.h / 2, s.cx + s.w / 2, s.cy + s.h / 2))
        total += s.w * s.h
    disjoint = True
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            ax0, ay0, ax1, ay1 = boxes[i]
            bx0, by0, bx1, by1 = boxes[j]
            ox = min(ax1, bx1) - max(ax0, bx0)
            oy = min(ay1, by1) - max(ay0, by0)
            if ox > 1e-9 and oy > 1e-9:
                disjoint = False
    return total, disjoint
