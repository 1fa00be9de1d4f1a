"""Cognitive-map accuracy and the grid-map rasterization baseline.

Accuracy reconstruction (the three scores are averaged into ``overall``):

* size: per matched object, the threshold-ladder relative accuracy of width
  and of depth, averaged; unmatched objects on either side score 0.
* distance: over unordered pairs of matched objects, the ladder accuracy of
  the predicted center distance against the true one.
* angle: over ordered pairs of matched objects, ``1 - delta / 180`` where
  ``delta`` is the absolute bearing error in degrees.

Pairwise scores need two matched objects. Alone they report 1.0 with a
degenerate flag. Inside ``evaluate_map`` a degenerate pairwise score is
1.0 only when both maps are fully matched (nothing to compare) and 0.0
otherwise, so an empty prediction against a populated map scores 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations, permutations
from typing import NamedTuple

from . import geometry as geo
from .rewards import DEFAULT_CONFIG, RewardConfig, num_reward

EXTENT_PAD = 0.05


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[str, str], ...]
    unmatched_pred: tuple[str, ...]
    unmatched_gt: tuple[str, ...]

    @property
    def union_size(self) -> int:
        return len(self.pairs) + len(self.unmatched_pred) + len(self.unmatched_gt)


class PairwiseScore(NamedTuple):
    value: float
    degenerate: bool


@dataclass(frozen=True)
class MapAccuracyReport:
    size_acc: float
    distance_acc: float
    angle_acc: float
    overall: float
    matched: int
    unmatched_pred: int
    unmatched_gt: int
    distance_degenerate: bool = False
    angle_degenerate: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GridCell:
    id: str
    label: str
    row: int
    col: int


@dataclass(frozen=True)
class GridMap:
    m: int
    extent: geo.Box2
    cells: tuple[GridCell, ...]

    def __post_init__(self) -> None:
        w, d = geo.dims(self.extent)
        if self.m < 1 or w <= 0 or d <= 0:
            raise ValueError("grid needs m >= 1 and an extent with positive area")
        if any(not (0 <= c.row < self.m and 0 <= c.col < self.m) for c in self.cells):
            raise ValueError("grid cell out of range")

    def cell_center(self, row: int, col: int) -> geo.Vec2:
        """World coordinates of a cell's center."""
        w, d = geo.dims(self.extent)
        return geo.Vec2(
            self.extent.min.x + (col + 0.5) * w / self.m,
            self.extent.min.y + (row + 0.5) * d / self.m,
        )

    def by_id(self) -> dict[str, GridCell]:
        return {c.id: c for c in self.cells}

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "extent": self.extent.as_list(),
            "cells": [[c.label, c.row, c.col] for c in self.cells],
        }


def match_objects(pred: geo.LayoutMap, gt: geo.LayoutMap) -> Matching:
    """Greedy same-label matching, closest centers first.

    Ties in distance go to the lower predicted index, then the lower
    ground-truth index.
    """
    candidates = []
    for i, p in enumerate(pred.objects):
        cp = geo.center(p.box)
        for j, g in enumerate(gt.objects):
            if p.label == g.label:
                cg = geo.center(g.box)
                candidates.append((math.hypot(cp.x - cg.x, cp.y - cg.y), i, j))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for _, i, j in candidates:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
            pairs.append((pred.objects[i].id, gt.objects[j].id))
    return Matching(
        pairs=tuple(pairs),
        unmatched_pred=tuple(o.id for i, o in enumerate(pred.objects) if i not in used_p),
        unmatched_gt=tuple(o.id for j, o in enumerate(gt.objects) if j not in used_g),
    )


def size_accuracy(
    matching: Matching, pred: geo.LayoutMap, gt: geo.LayoutMap, cfg: RewardConfig = DEFAULT_CONFIG
) -> float:
    if matching.union_size == 0:
        return 1.0
    p, g = pred.by_id(), gt.by_id()
    total = 0.0
    for pid, gid in matching.pairs:
        (pw, pd), (gw, gd) = geo.dims(p[pid].box), geo.dims(g[gid].box)
        total += (num_reward(pw, gw, cfg) + num_reward(pd, gd, cfg)) / 2
    return total / matching.union_size


def _matched_centers(matching: Matching, pred: geo.LayoutMap, gt: geo.LayoutMap):
    p, g = pred.by_id(), gt.by_id()
    return [(geo.center(p[pid].box), geo.center(g[gid].box)) for pid, gid in matching.pairs]


def distance_accuracy(
    matching: Matching, pred: geo.LayoutMap, gt: geo.LayoutMap, cfg: RewardConfig = DEFAULT_CONFIG
) -> PairwiseScore:
    centers = _matched_centers(matching, pred, gt)
    if len(centers) < 2:
        return PairwiseScore(1.0, True)
    scores = []
    for (pa, ga), (pb, gb) in combinations(centers, 2):
        d_pred = math.hypot(pa.x - pb.x, pa.y - pb.y)
        d_true = math.hypot(ga.x - gb.x, ga.y - gb.y)
        scores.append(num_reward(d_pred, d_true, cfg))
    return PairwiseScore(sum(scores) / len(scores), False)


def angle_accuracy(matching: Matching, pred: geo.LayoutMap, gt: geo.LayoutMap) -> PairwiseScore:
    """Pairs whose true centers coincide have no bearing and are skipped."""
    centers = _matched_centers(matching, pred, gt)
    scores = []
    for (pa, ga), (pb, gb) in permutations(centers, 2):
        if ga == gb:
            continue
        if pa == pb:
            scores.append(0.0)
            continue
        delta = abs(geo.bearing(pa, pb) - geo.bearing(ga, gb)) % 360.0
        delta = min(delta, 360.0 - delta)
        scores.append(1.0 - delta / 180.0)
    if not scores:
        return PairwiseScore(1.0, True)
    return PairwiseScore(sum(scores) / len(scores), False)


def evaluate_map(
    pred: geo.LayoutMap, gt: geo.LayoutMap, cfg: RewardConfig = DEFAULT_CONFIG
) -> MapAccuracyReport:
    matching = match_objects(pred, gt)
    size = size_accuracy(matching, pred, gt, cfg)
    complete = not matching.unmatched_pred and not matching.unmatched_gt
    dist = distance_accuracy(matching, pred, gt, cfg)
    ang = angle_accuracy(matching, pred, gt)
    d = dist.value if not dist.degenerate else (1.0 if complete else 0.0)
    a = ang.value if not ang.degenerate else (1.0 if complete else 0.0)
    return MapAccuracyReport(
        size_acc=size,
        distance_acc=d,
        angle_acc=a,
        overall=(size + d + a) / 3,
        matched=len(matching.pairs),
        unmatched_pred=len(matching.unmatched_pred),
        unmatched_gt=len(matching.unmatched_gt),
        distance_degenerate=dist.degenerate,
        angle_degenerate=ang.degenerate,
    )


def default_extent(layout: geo.LayoutMap, pad: float = EXTENT_PAD) -> geo.Box2:
    """Bounds of all boxes grown by ``pad`` of the span on each side.

    A zero span on an axis is widened to 1 m so the grid has positive area.
    """
    if not layout.objects:
        return geo.Box2.from_list([-0.5, -0.5, 0.5, 0.5])
    b = geo.Box2.from_points(c for o in layout.objects for c in (o.box.min, o.box.max))
    w, d = geo.dims(b)
    px = pad * w if w > 0 else 0.5
    py = pad * d if d > 0 else 0.5
    return geo.Box2.from_list([b.min.x - px, b.min.y - py, b.max.x + px, b.max.y + py])


def rasterize(layout: geo.LayoutMap, m: int, extent: geo.Box2 | None = None) -> GridMap:
    """Snap each object's center to a cell of an ``m`` x ``m`` grid over ``extent``."""
    extent = extent if extent is not None else default_extent(layout)
    w, d = geo.dims(extent)
    if m < 1 or w <= 0 or d <= 0:
        raise ValueError("rasterize needs m >= 1 and an extent with positive area")
    cells = []
    for o in layout.objects:
        c = geo.center(o.box)
        col = math.floor((c.x - extent.min.x) / w * m)
        row = math.floor((c.y - extent.min.y) / d * m)
        cells.append(GridCell(o.id, o.label, min(max(row, 0), m - 1), min(max(col, 0), m - 1)))
    return GridMap(m, extent, tuple(cells))


def grid_distance(grid: GridMap, id_a: str, id_b: str) -> float:
    """Metric distance between two objects' cell centers: what a grid map can tell."""
    cells = grid.by_id()
    a, b = cells[id_a], cells[id_b]
    ca, cb = grid.cell_center(a.row, a.col), grid.cell_center(b.row, b.col)
    return math.hypot(ca.x - cb.x, ca.y - cb.y)
