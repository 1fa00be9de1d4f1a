import itertools
import json
import math
from pathlib import Path

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from bevlayout.cot import parse_map
from bevlayout.geometry import Box2, LayoutMap, ObjectInstance, Vec2, rotate_box
from bevlayout.mapeval import (
    angle_accuracy,
    default_extent,
    distance_accuracy,
    evaluate_map,
    grid_distance,
    match_objects,
    rasterize,
    size_accuracy,
)

FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "map_eval_fixture.json").read_text())


def lm(*objs):
    return LayoutMap(tuple(ObjectInstance(str(i), lab, Box2.from_list(b)) for i, (lab, b) in enumerate(objs)))


def moved(m, fn):
    return LayoutMap(tuple(ObjectInstance(o.id, o.label, fn(o.box)) for o in m.objects))


ROOM = lm(
    ("sofa", [0, 0, 2, 1]),
    ("table", [3, 0, 4, 1]),
    ("lamp", [0, 3, 0.5, 3.5]),
    ("bed", [-3, -4, -1, -1]),
)


# -- matching --------------------------------------------------------------------


def test_identical_maps_fully_match():
    m = match_objects(ROOM, ROOM)
    assert sorted(m.pairs) == [(o.id, o.id) for o in ROOM.objects]
    assert m.unmatched_pred == m.unmatched_gt == ()


def test_missing_object_unmatched():
    pred = LayoutMap(ROOM.objects[:3])
    m = match_objects(pred, ROOM)
    assert m.unmatched_gt == ("3",) and len(m.pairs) == 3


def _brute_force(pred, gt):
    """Lexicographically best assignment: smallest distance first, then the next."""

    def dist(p, g):
        a, b = p.box, g.box
        ca = ((a.min.x + a.max.x) / 2, (a.min.y + a.max.y) / 2)
        cb = ((b.min.x + b.max.x) / 2, (b.min.y + b.max.y) / 2)
        return math.dist(ca, cb)

    best = None
    n = min(len(pred), len(gt))
    for ps in itertools.permutations(range(len(pred)), n):
        for gs in itertools.permutations(range(len(gt)), n):
            pairs = list(zip(ps, gs))
            key = sorted(dist(pred[i], gt[j]) for i, j in pairs)
            if best is None or key < best[0]:
                best = (key, {(pred[i].id, gt[j].id) for i, j in pairs})
    return best[1]


def test_swapped_same_label_picks_closest_first():
    gt = lm(("chair", [0, 0, 1, 1]), ("chair", [3, 0, 4, 1]))
    pred = lm(("chair", [2.8, 0, 3.8, 1]), ("chair", [0.5, 0, 1.5, 1]))
    m = match_objects(pred, gt)
    assert set(m.pairs) == {("0", "1"), ("1", "0")}
    assert set(m.pairs) == _brute_force(pred.objects, gt.objects)


points = st.tuples(st.integers(-20, 20), st.integers(-20, 20))


@given(st.lists(points, min_size=1, max_size=4, unique=True), st.lists(points, min_size=1, max_size=4, unique=True))
def test_greedy_matches_bottleneck_oracle(ps, gs):
    pred = lm(*[("chair", [x, y, x + 1, y + 1]) for x, y in ps])
    gt = lm(*[("chair", [x, y, x + 1, y + 1]) for x, y in gs])
    # distinct pairwise distances make the greedy choice unique
    d = [math.dist(p, g) for p in ps for g in gs]
    assume(len(set(d)) == len(d))
    assert set(match_objects(pred, gt).pairs) == _brute_force(pred.objects, gt.objects)


def test_labels_never_cross():
    m = match_objects(lm(("sofa", [0, 0, 1, 1])), lm(("bed", [0, 0, 1, 1])))
    assert m.pairs == () and m.unmatched_pred == ("0",) and m.unmatched_gt == ("0",)


# -- metrics -------------------------------------------------------------------------


def test_exact_maps_score_one():
    r = evaluate_map(ROOM, ROOM)
    assert (r.size_acc, r.distance_acc, r.angle_acc, r.overall) == (1.0, 1.0, 1.0, 1.0)


def test_size_ten_percent_off():
    def grow(b):
        c = Vec2((b.min.x + b.max.x) / 2, (b.min.y + b.max.y) / 2)
        w, d = (b.max.x - b.min.x) * 1.1 / 2, (b.max.y - b.min.y) * 1.1 / 2
        return Box2(Vec2(c.x - w, c.y - d), Vec2(c.x + w, c.y + d))

    pred = moved(ROOM, grow)
    assert size_accuracy(match_objects(pred, ROOM), pred, ROOM) == pytest.approx(0.9, abs=1e-12)


def test_empty_prediction():
    empty = LayoutMap(())
    r = evaluate_map(empty, ROOM)
    assert r.size_acc == 0.0 and r.overall == 0.0
    assert r.distance_degenerate and r.angle_degenerate
    assert r.unmatched_gt == 4
    both = evaluate_map(empty, empty)
    assert both.overall == 1.0


def test_translation_keeps_distance():
    pred = moved(ROOM, lambda b: b.translate(Vec2(7.5, -2.25)))
    m = match_objects(pred, ROOM)
    assert distance_accuracy(m, pred, ROOM).value == 1.0
    assert angle_accuracy(m, pred, ROOM).value == pytest.approx(1.0, abs=1e-12)


def test_doubling_one_pair_distance():
    gt = lm(("a", [-0.5, -0.5, 0.5, 0.5]), ("b", [1.5, -0.5, 2.5, 0.5]), ("c", [-0.5, 1.5, 0.5, 2.5]))
    # b moves from x=2 to x=4: d(a,b) 2 -> 4 (rel 1.0, scores 0); d(b,c) sqrt8 -> sqrt20
    pred = lm(("a", [-0.5, -0.5, 0.5, 0.5]), ("b", [3.5, -0.5, 4.5, 0.5]), ("c", [-0.5, 1.5, 0.5, 2.5]))
    rel_bc = (math.sqrt(20) - math.sqrt(8)) / math.sqrt(8)
    bc = sum(rel_bc <= 1 - k / 20 for k in range(10, 20)) / 10
    expected = (0.0 + bc + 1.0) / 3
    assert distance_accuracy(match_objects(pred, gt), pred, gt).value == pytest.approx(expected, abs=1e-12)


def test_rotation_by_90_halves_angle():
    pred = moved(ROOM, lambda b: rotate_box(b, 90.0))
    assert angle_accuracy(match_objects(pred, ROOM), pred, ROOM).value == pytest.approx(0.5, abs=1e-12)


def test_antipodal_pair_scores_zero():
    gt = lm(("a", [0, 0, 1, 1]), ("b", [2, 0, 3, 1]))
    pred = lm(("a", [2, 0, 3, 1]), ("b", [0, 0, 1, 1]))
    m = match_objects(pred, gt)
    assert angle_accuracy(m, pred, gt).value == 0.0


def test_perturbed_fixture_matches_hand_values():
    pred, gt = parse_map(json.dumps(FIXTURE["pred"])), parse_map(json.dumps(FIXTURE["gt"]))
    r = evaluate_map(pred, gt)
    exp = FIXTURE["expected"]
    for key in ("size_acc", "distance_acc", "angle_acc"):
        assert getattr(r, key) == pytest.approx(exp[key], abs=1e-12), key
    assert (r.matched, r.unmatched_pred, r.unmatched_gt) == (exp["matched"], exp["unmatched_pred"], exp["unmatched_gt"])
    assert r.overall == (r.size_acc + r.distance_acc + r.angle_acc) / 3


coord = st.floats(-10, 10, allow_nan=False)


@st.composite
def maps(draw, min_size=2):
    n = draw(st.integers(min_size, 5))
    objs = []
    for i in range(n):
        x, y = draw(coord), draw(coord)
        w, d = draw(st.floats(0.1, 3)), draw(st.floats(0.1, 3))
        objs.append((draw(st.sampled_from(["chair", "sofa", "lamp"])), [x, y, x + w, y + d]))
    return lm(*objs)


@given(maps(), st.sampled_from([0, 90, 180, 270]), coord, coord)
def test_shared_rigid_transform_invariance(gt, turn, tx, ty):
    pred = moved(gt, lambda b: Box2(Vec2(b.min.x * 1.05, b.min.y), Vec2(b.max.x * 1.05 + 0.1, b.max.y)))

    def rig(b):
        return rotate_box(b, turn).translate(Vec2(tx, ty))

    m = match_objects(pred, gt)
    a0, d0 = angle_accuracy(m, pred, gt), distance_accuracy(m, pred, gt)
    pred2, gt2 = moved(pred, rig), moved(gt, rig)
    a1, d1 = angle_accuracy(m, pred2, gt2), distance_accuracy(m, pred2, gt2)
    assert a1.value == pytest.approx(a0.value, abs=1e-6)
    assert d1.value == pytest.approx(d0.value, abs=1e-12)


@given(maps(), maps())
def test_report_fields_in_range(pred, gt):
    r = evaluate_map(pred, gt)
    for v in (r.size_acc, r.distance_acc, r.angle_acc, r.overall):
        assert 0.0 <= v <= 1.0
    assert r.overall == (r.size_acc + r.distance_acc + r.angle_acc) / 3


@given(maps())
def test_self_evaluation_is_perfect(m):
    r = evaluate_map(m, m)
    assert r.overall == pytest.approx(1.0, abs=1e-12)


# -- rasterization -------------------------------------------------------------------


EXTENT = Box2.from_list([0, 0, 10, 10])


def test_rasterize_examples():
    def cell(x, y, m=10):
        g = rasterize(lm(("a", [x - 0.1, y - 0.1, x + 0.1, y + 0.1])), m, EXTENT)
        return g.cells[0].row, g.cells[0].col

    assert cell(0.1, 0.1) == (0, 0)
    assert cell(9.9, 9.9) == (9, 9)
    assert cell(2.5, 7.5) == (7, 2)
    # exactly on the corners: min maps to 0, max clamps to m-1
    g = rasterize(lm(("a", [-0.2, -0.2, 0.2, 0.2]), ("b", [9.8, 9.8, 10.2, 10.2])), 10, EXTENT)
    assert [(c.row, c.col) for c in g.cells] == [(0, 0), (9, 9)]


def test_rasterize_cell_count_bounded():
    for m in (10, 20):
        g = rasterize(ROOM, m)
        assert len({(c.row, c.col) for c in g.cells}) <= len(ROOM.objects)
        assert len(g.cells) == len(ROOM.objects)


def test_default_extent():
    e = default_extent(ROOM)
    assert e.as_list() == pytest.approx([-3.35, -4.375, 4.35, 3.875])
    flat = default_extent(lm(("a", [1, 1, 1, 1])))
    assert flat.as_list() == [0.5, 0.5, 1.5, 1.5]


def test_grid_distance_uses_cell_centers():
    g = rasterize(lm(("a", [0.1, 0.1, 0.3, 0.3]), ("b", [3.6, 0.1, 3.8, 0.3])), 10, EXTENT)
    assert grid_distance(g, "0", "1") == pytest.approx(3.0)


unit = st.floats(0, 10, allow_nan=False)


@given(unit, unit, unit, st.integers(1, 40))
def test_rasterize_monotone(x1, x2, y, m):
    lo, hi = sorted((x1, x2))
    g = rasterize(lm(("a", [lo, y, lo, y]), ("b", [hi, y, hi, y])), m, EXTENT)
    assert g.cells[0].col <= g.cells[1].col


@given(unit, unit, unit, unit, st.sampled_from([5, 10]))
def test_rasterize_refinement(x1, y1, x2, y2, m):
    layout = lm(("a", [x1, y1, x1, y1]), ("b", [x2, y2, x2, y2]))
    fine = rasterize(layout, 2 * m, EXTENT).cells
    coarse = rasterize(layout, m, EXTENT).cells
    if (fine[0].row, fine[0].col) == (fine[1].row, fine[1].col):
        assert (coarse[0].row, coarse[0].col) == (coarse[1].row, coarse[1].col)
