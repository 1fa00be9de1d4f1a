import io
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bevlayout.geometry import Box3
from bevlayout.scene import (
    CameraPose,
    FrameSequence,
    Intrinsics,
    SceneError,
    SceneFormatError,
    camera_coords,
    coverage_fraction,
    frame_visibility,
    load_scene,
    load_scene_file,
    resample_fps,
    resample_indices,
    resample_scene,
    sample_sequences,
    scene_from_dict,
    scene_to_dict,
    serialize_scene,
)
from bevlayout.synth import make_scene

FIXTURE = Path(__file__).parent / "fixtures" / "scene_fixture.json"
K = Intrinsics(320.0, 320.0, 320.0, 240.0, 640.0, 480.0)


def minimal(**over):
    d = {
        "scene_id": "s",
        "objects": [{"id": "a", "label": "chair", "box3": [0, 0, 0, 1, 1, 1]}],
        "trajectory": [{"t": 0.0, "pos": [0, 0, 1], "yaw_deg": 0, "intrinsics": K.as_list()}],
    }
    d.update(over)
    return d


def pose(t, yaw=0.0, pos=(0.0, 0.0, 1.5)):
    return CameraPose(t, pos, yaw, K)


def nearest_oracle(ts, fps):
    """Scan every pose for each tick; strict < keeps the earlier pose on ties."""
    out, k = [], 0
    while ts[0] + k / fps <= ts[-1] + 1e-9:
        tick = ts[0] + k / fps
        best = 0
        for i, t in enumerate(ts):
            if abs(t - tick) < abs(ts[best] - tick) - 1e-12:
                best = i
        out.append(best)
        k += 1
    return out


# -- loading -------------------------------------------------------------------


def test_minimal_scene():
    s = load_scene(json.dumps(minimal()))
    assert s.scene_id == "s" and len(s.objects) == 1 and len(s.trajectory) == 1
    assert s.visibility is None


def test_fixture_counts():
    s = load_scene_file(FIXTURE)
    assert len(s.objects) == 5
    assert len(s.trajectory) == 32


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.pop("objects"), "objects"),
        (lambda d: d["objects"][0].pop("label"), "objects[0].label"),
        (lambda d: d["objects"][0].update(box3=[1, 0, 0, 0, 1, 1]), "objects[0].box3"),
        (lambda d: d["trajectory"][0].update(t="x"), "trajectory[0].t"),
        (lambda d: d["trajectory"][0].update(intrinsics=[0, 1, 1, 1, 1, 1]), "trajectory[0].intrinsics"),
        (lambda d: d.update(visibility={"5": ["a"]}), "visibility"),
        (lambda d: d.update(visibility={"0": ["zzz"]}), "visibility"),
    ],
)
def test_schema_errors_name_the_field(mutate, path):
    d = minimal()
    mutate(d)
    with pytest.raises(SceneFormatError) as ei:
        scene_from_dict(d)
    assert ei.value.path.startswith(path)


def test_non_monotone_timestamps():
    d = minimal()
    d["trajectory"] = d["trajectory"] * 2
    with pytest.raises(SceneError, match="strictly increasing"):
        scene_from_dict(d)


def test_malformed_json_reports_position():
    with pytest.raises(SceneFormatError, match="line 2 column"):
        load_scene('{"scene_id": "s",\n  "objects": [,]}')


def test_load_accepts_bytes_and_streams():
    raw = json.dumps(minimal())
    assert load_scene(raw.encode()) == load_scene(io.StringIO(raw))


def test_serialize_round_trip():
    for s in [load_scene_file(FIXTURE), make_scene(4), load_scene(json.dumps(minimal(visibility={"0": ["a"]})))]:
        assert load_scene(serialize_scene(s)) == s
        assert scene_from_dict(json.loads(json.dumps(scene_to_dict(s)))) == s


# -- resampling ----------------------------------------------------------------


def test_resample_40_to_20_takes_every_second():
    traj = [pose(k / 40) for k in range(41)]
    assert resample_indices([p.timestamp for p in traj], 20) == list(range(0, 41, 2))
    assert resample_indices([p.timestamp for p in traj], 20) == nearest_oracle([p.timestamp for p in traj], 20)


def test_resample_identity_and_single():
    traj = [pose(k / 20) for k in range(30)]
    assert resample_fps(traj, 20) == traj
    assert resample_fps([pose(3.0)], 20) == [pose(3.0)]


def test_resample_ties_go_to_earlier():
    # tick 0.05 is equidistant from 0.0 and 0.1
    assert resample_indices([0.0, 0.1], 20) == [0, 0, 1]


def test_resample_errors():
    with pytest.raises(SceneError):
        resample_indices([0.0], 0)
    with pytest.raises(SceneError):
        resample_indices([], 20)


increasing = st.lists(st.floats(0.001, 0.2), min_size=0, max_size=60).map(
    lambda gaps: [round(sum(gaps[:i]), 6) for i in range(len(gaps) + 1)]
).filter(lambda ts: all(b > a for a, b in zip(ts, ts[1:])))


@given(increasing, st.sampled_from([5.0, 10.0, 20.0, 30.0]))
def test_resample_matches_oracle(ts, fps):
    got = resample_indices(ts, fps)
    assert got == nearest_oracle(ts, fps)
    assert all(b >= a for a, b in zip(got, got[1:]))
    assert ts[0] + (len(got) - 1) / fps <= ts[-1] + 1e-6


@given(increasing, st.sampled_from([10.0, 20.0, 30.0]))
def test_resample_idempotent(ts, fps):
    once = resample_fps([pose(t) for t in ts], fps)
    assert resample_fps(once, fps) == once
    assert all(b.timestamp > a.timestamp for a, b in zip(once, once[1:]))


def test_resample_slow_source_repeats_poses():
    traj = [pose(k / 10, yaw=10.0 * k) for k in range(3)]
    out = resample_fps(traj, 20)
    assert [p.yaw_deg for p in out] == [0.0, 0.0, 10.0, 10.0, 20.0]
    assert [p.timestamp for p in out] == [k / 20 for k in range(5)]


def test_resample_scene_carries_visibility():
    d = minimal(
        trajectory=[{"t": k / 40, "pos": [0, 0, 1], "yaw_deg": 0, "intrinsics": K.as_list()} for k in range(5)],
        visibility={"2": ["a"], "3": ["a"]},
    )
    s = resample_scene(scene_from_dict(d), 20)
    assert [p.timestamp for p in s.trajectory] == [0.0, 0.05, 0.1]
    assert s.visibility == {1: frozenset({"a"})}


# -- visibility ----------------------------------------------------------------


def raycast_coverage(p: CameraPose, box: Box3, stride: int = 4) -> float:
    """Fraction of sampled pixels whose ray hits the box (slab test)."""
    k = p.intrinsics
    us = np.arange(stride / 2, k.width, stride)
    vs = np.arange(stride / 2, k.height, stride)
    u, v = np.meshgrid(us, vs)
    x, y = (u - k.cx) / k.fx, (v - k.cy) / k.fy
    yaw = math.radians(p.yaw_deg)
    fwd = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    d = fwd[None, None, :] + x[..., None] * right + y[..., None] * down
    o = np.array(p.position)
    lo, hi = np.array(box.min), np.array(box.max)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1, t2 = (lo - o) / d, (hi - o) / d
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (tmax >= np.maximum(tmin, 0.0))
    return float(hit.mean())


def test_visibility_passthrough():
    s = scene_from_dict(minimal(visibility={"0": []}))
    assert frame_visibility(s, 0) == frozenset()
    s = scene_from_dict(minimal(visibility={"0": ["a"]}))
    assert frame_visibility(s, 0, 1.0) == frozenset({"a"})


def test_object_behind_camera_excluded():
    d = minimal(objects=[{"id": "a", "label": "chair", "box3": [-3, -0.5, 0, -2, 0.5, 1]}])
    assert frame_visibility(scene_from_dict(d), 0, 0.0) == frozenset()


def test_out_of_range_frame():
    with pytest.raises(SceneError):
        frame_visibility(scene_from_dict(minimal()), 1)


def test_object_filling_view_against_raycast():
    s = load_scene_file(FIXTURE)
    wall = s.object_map()["wall_panel"]
    p = s.trajectory[0]
    truth = raycast_coverage(p, wall.box)
    assert truth >= 0.99
    assert "wall_panel" in frame_visibility(s, 0, 0.05)
    # rectangle coverage upper-bounds the silhouette on every fixture frame
    for i, q in enumerate(s.trajectory):
        for obj in s.objects:
            assert coverage_fraction(q, obj.box) >= raycast_coverage(q, obj.box) - 0.01, (i, obj.id)


def test_min_area_zero_is_positive_depth():
    for s in [load_scene_file(FIXTURE), make_scene(11)]:
        for i in range(0, len(s.trajectory), 7):
            p = s.trajectory[i]
            got = frame_visibility(s, i, 0.0)
            expected = {o.id for o in s.objects if camera_coords(p, o.box.center())[2] > 0}
            assert got == expected


def test_visibility_monotone_in_threshold():
    s = load_scene_file(FIXTURE)
    for i in range(len(s.trajectory)):
        sets = [frame_visibility(s, i, a) for a in (0.0, 0.005, 0.05, 0.5)]
        assert all(b <= a for a, b in zip(sets, sets[1:]))


# -- sequences -----------------------------------------------------------------


def test_single_frame_sequences():
    s = load_scene_file(FIXTURE)
    out = sample_sequences(s, {1}, 3, seed=0)
    assert len(out) == 3 and all(q.length == 1 for q in out)


def test_sampling_deterministic():
    s = make_scene(2)
    s = resample_scene(s)
    a = sample_sequences(s, {1, 4, 8, 12, 16}, 4, seed=9)
    assert a == sample_sequences(s, {1, 4, 8, 12, 16}, 4, seed=9)


def test_windows_contiguous_and_salient():
    s = load_scene_file(FIXTURE)
    n_objects_visible = [len(frame_visibility(s, i)) for i in range(len(s.trajectory))]
    out = sample_sequences(s, {4, 8}, 20, seed=1)
    assert sorted({q.length for q in out}) == [4, 8]
    for q in out:
        idx = q.frame_indices
        assert all(b == a + 1 for a, b in zip(idx, idx[1:]))
        assert 0 <= idx[0] and idx[-1] < len(s.trajectory)
        assert max(n_objects_visible[i] for i in idx) >= 2


def test_sampling_errors():
    s = load_scene_file(FIXTURE)
    with pytest.raises(SceneError, match="shorter than requested length 16"):
        sample_sequences(scene_from_dict(minimal()), {1, 16}, 1, seed=0)
    with pytest.raises(SceneError, match="no salient window"):
        sample_sequences(s, {1}, 1, seed=0, visibility=[frozenset()] * len(s.trajectory))
    with pytest.raises(SceneError):
        sample_sequences(s, {3}, 1, seed=0)


def test_frame_sequence_invariants():
    with pytest.raises(SceneError):
        FrameSequence("s", (0, 1, 2))
    with pytest.raises(SceneError):
        FrameSequence("s", (0, 2, 1, 3))
