"""Scene metadata: loading, trajectory resampling, visibility and clip sampling.

Scene files are JSON::

    {"scene_id": str,
     "objects": [{"id": str, "label": str, "box3": [xmin, ymin, zmin, xmax, ymax, zmax]}],
     "trajectory": [{"t": float, "pos": [x, y, z], "yaw_deg": float,
                     "intrinsics": [fx, fy, cx, cy, w, h]}],
     "visibility": {"<frame index>": [object ids]}}   # optional

World axes: x, y on the floor, z up. Cameras are level; yaw is measured
counterclockwise from +x.
"""

from __future__ import annotations

import json
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

from .geometry import Box3, GeometryError, ObjectInstance, ObserverFrame, Vec2
from .tasks import FRAME_COUNTS

DEFAULT_FPS = 20.0
DEFAULT_MIN_AREA_FRACTION = 0.005
NEAR_PLANE = 1e-3


class SceneError(ValueError):
    """Invalid scene data or an impossible sampling request."""


class SceneFormatError(SceneError):
    """Scene JSON violates the schema. ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def as_list(self) -> list[float]:
        return [self.fx, self.fy, self.cx, self.cy, self.width, self.height]


@dataclass(frozen=True)
class CameraPose:
    timestamp: float
    position: tuple[float, float, float]
    yaw_deg: float
    intrinsics: Intrinsics

    def frame(self) -> ObserverFrame:
        return ObserverFrame.from_yaw(Vec2(self.position[0], self.position[1]), self.yaw_deg)


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    objects: tuple[ObjectInstance, ...]
    trajectory: tuple[CameraPose, ...]
    visibility: dict[int, frozenset[str]] | None = None

    def object_map(self) -> dict[str, ObjectInstance]:
        return {o.id: o for o in self.objects}


@dataclass(frozen=True)
class FrameSequence:
    scene_id: str
    frame_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = self.frame_indices
        if len(idx) not in FRAME_COUNTS:
            raise SceneError(f"sequence length {len(idx)} not in {FRAME_COUNTS}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise SceneError(f"frame indices must be strictly increasing: {idx}")

    @property
    def length(self) -> int:
        return len(self.frame_indices)


# -- loading -----------------------------------------------------------------


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SceneFormatError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _numbers(value, n: int, path: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise SceneFormatError(path, f"expected a list of {n} numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _field(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise SceneFormatError(path, "expected an object")
    if key not in obj:
        raise SceneFormatError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def scene_from_dict(data: dict) -> SceneRecord:
    scene_id = _field(data, "scene_id", "")
    if not isinstance(scene_id, str) or not scene_id:
        raise SceneFormatError("scene_id", "expected a non-empty string")

    raw_objects = _field(data, "objects", "")
    if not isinstance(raw_objects, list):
        raise SceneFormatError("objects", "expected a list")
    objects = []
    seen: set[str] = set()
    for i, item in enumerate(raw_objects):
        p = f"objects[{i}]"
        oid, label = _field(item, "id", p), _field(item, "label", p)
        if not isinstance(oid, str) or not oid:
            raise SceneFormatError(f"{p}.id", "expected a non-empty string")
        if oid in seen:
            raise SceneFormatError(f"{p}.id", f"duplicate object id {oid!r}")
        seen.add(oid)
        if not isinstance(label, str) or not label:
            raise SceneFormatError(f"{p}.label", "expected a non-empty string")
        coords = _numbers(_field(item, "box3", p), 6, f"{p}.box3")
        try:
            box = Box3.from_list(coords)
        except GeometryError as exc:
            raise SceneFormatError(f"{p}.box3", str(exc)) from None
        objects.append(ObjectInstance(oid, label, box))

    raw_traj = _field(data, "trajectory", "")
    if not isinstance(raw_traj, list) or not raw_traj:
        raise SceneFormatError("trajectory", "expected a non-empty list")
    poses = []
    for i, item in enumerate(raw_traj):
        p = f"trajectory[{i}]"
        t = _number(_field(item, "t", p), f"{p}.t")
        pos = _numbers(_field(item, "pos", p), 3, f"{p}.pos")
        yaw = _number(_field(item, "yaw_deg", p), f"{p}.yaw_deg")
        intr = _numbers(_field(item, "intrinsics", p), 6, f"{p}.intrinsics")
        if any(v <= 0 for v in (intr[0], intr[1], intr[4], intr[5])):
            raise SceneFormatError(f"{p}.intrinsics", "focal lengths and image size must be positive")
        if poses and t <= poses[-1].timestamp:
            raise SceneError(f"{p}.t: timestamps must be strictly increasing ({t} after {poses[-1].timestamp})")
        poses.append(CameraPose(t, (pos[0], pos[1], pos[2]), yaw, Intrinsics(*intr)))

    visibility = None
    if data.get("visibility") is not None:
        raw_vis = data["visibility"]
        if not isinstance(raw_vis, dict):
            raise SceneFormatError("visibility", "expected an object")
        visibility = {}
        for key, ids in raw_vis.items():
            p = f"visibility.{key}"
            try:
                frame = int(key)
            except ValueError:
                raise SceneFormatError(p, "frame index keys must be integers") from None
            if not 0 <= frame < len(poses):
                raise SceneFormatError(p, f"frame index out of range [0, {len(poses)})")
            if not isinstance(ids, list) or not all(isinstance(x, str) for x in ids):
                raise SceneFormatError(p, "expected a list of object ids")
            unknown = set(ids) - seen
            if unknown:
                raise SceneFormatError(p, f"unknown object ids {sorted(unknown)}")
            visibility[frame] = frozenset(ids)

    return SceneRecord(scene_id, tuple(objects), tuple(poses), visibility)


def load_scene(source: bytes | str | IO) -> SceneRecord:
    """Parse and validate one scene from bytes, text, or a readable stream."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    if not isinstance(data, dict):
        raise SceneFormatError("<root>", "expected a JSON object")
    return scene_from_dict(data)


def load_scene_file(path) -> SceneRecord:
    with open(path, "rb") as fh:
        return load_scene(fh)


def scene_to_dict(scene: SceneRecord) -> dict:
    out: dict = {
        "scene_id": scene.scene_id,
        "objects": [{"id": o.id, "label": o.label, "box3": o.box.as_list()} for o in scene.objects],
        "trajectory": [
            {"t": p.timestamp, "pos": list(p.position), "yaw_deg": p.yaw_deg, "intrinsics": p.intrinsics.as_list()}
            for p in scene.trajectory
        ],
    }
    if scene.visibility is not None:
        out["visibility"] = {str(k): sorted(v) for k, v in sorted(scene.visibility.items())}
    return out


def serialize_scene(scene: SceneRecord, indent: int | None = None) -> str:
    return json.dumps(scene_to_dict(scene), indent=indent)


# -- resampling ----------------------------------------------------------------


def resample_indices(timestamps: Sequence[float], target_fps: float) -> list[int]:
    """Index of the nearest pose for each tick ``t0 + k / fps`` up to the last timestamp.

    Ties go to the earlier pose.
    """
    if target_fps <= 0:
        raise SceneError(f"target_fps must be positive, got {target_fps}")
    if not timestamps:
        raise SceneError("cannot resample an empty trajectory")
    t0, t_end = timestamps[0], timestamps[-1]
    # absorbs float error in t0 + k/fps at the final tick
    slack = 1e-9 * max(1.0, abs(t_end))
    out = []
    k = 0
    while True:
        tick = t0 + k / target_fps
        if tick > t_end + slack:
            break
        j = bisect_left(timestamps, tick)
        if j == len(timestamps):
            j -= 1
        elif j > 0 and tick - timestamps[j - 1] <= timestamps[j] - tick:
            j -= 1
        out.append(j)
        k += 1
    return out


def resample_fps(traj: Sequence[CameraPose], target_fps: float) -> list[CameraPose]:
    """Nearest pose for each tick, re-stamped with the tick time.

    Re-stamping puts the output on an exact ``1 / target_fps`` grid, which
    makes resampling idempotent. A source slower than the target rate
    yields repeated poses, as a frame-rate converter repeats frames.
    """
    t0 = traj[0].timestamp if traj else 0.0
    idx = resample_indices([p.timestamp for p in traj], target_fps)
    return [replace(traj[j], timestamp=t0 + k / target_fps) for k, j in enumerate(idx)]


def resample_scene(scene: SceneRecord, target_fps: float = DEFAULT_FPS) -> SceneRecord:
    """Scene whose trajectory is resampled to ``target_fps``.

    Precomputed visibility follows its source frame.
    """
    picks = resample_indices([p.timestamp for p in scene.trajectory], target_fps)
    visibility = None
    if scene.visibility is not None:
        visibility = {new: scene.visibility[old] for new, old in enumerate(picks) if old in scene.visibility}
    return replace(scene, trajectory=tuple(resample_fps(scene.trajectory, target_fps)), visibility=visibility)


# -- visibility ------------------------------------------------------------------


def camera_coords(pose: CameraPose, point: Sequence[float]) -> tuple[float, float, float]:
    """World point to camera coordinates (x right, y down, z forward)."""
    yaw = math.radians(pose.yaw_deg)
    fx_, fy_ = math.cos(yaw), math.sin(yaw)
    dx = point[0] - pose.position[0]
    dy = point[1] - pose.position[1]
    dz = point[2] - pose.position[2]
    forward = dx * fx_ + dy * fy_
    right = dx * fy_ - dy * fx_
    return right, -dz, forward


_BOX_EDGES = [
    (a, b)
    for a in range(8)
    for b in range(a + 1, 8)
    if bin(a ^ b).count("1") == 1  # corners differ in exactly one axis
]


def projected_rect(pose: CameraPose, box: Box3) -> tuple[float, float, float, float] | None:
    """Image-clipped bounding rectangle ``(u0, v0, u1, v1)`` of a box, or None if unseen.

    The box is clipped against the near plane before projection so corners
    behind the camera do not wrap around.
    """
    k = pose.intrinsics
    cam = [camera_coords(pose, c) for c in box.corners()]
    pts = [c for c in cam if c[2] >= NEAR_PLANE]
    for a, b in _BOX_EDGES:
        za, zb = cam[a][2], cam[b][2]
        if (za - NEAR_PLANE) * (zb - NEAR_PLANE) < 0:
            s = (NEAR_PLANE - za) / (zb - za)
            pts.append(tuple(cam[a][i] + s * (cam[b][i] - cam[a][i]) for i in range(3)))
    if not pts:
        return None
    us = [k.fx * x / z + k.cx for x, _, z in pts]
    vs = [k.fy * y / z + k.cy for _, y, z in pts]
    u0, u1 = max(min(us), 0.0), min(max(us), k.width)
    v0, v1 = max(min(vs), 0.0), min(max(vs), k.height)
    if u1 <= u0 or v1 <= v0:
        return None
    return u0, v0, u1, v1


def coverage_fraction(pose: CameraPose, box: Box3) -> float:
    rect = projected_rect(pose, box)
    if rect is None:
        return 0.0
    u0, v0, u1, v1 = rect
    return (u1 - u0) * (v1 - v0) / (pose.intrinsics.width * pose.intrinsics.height)


def frame_visibility(
    scene: SceneRecord, frame: int, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION
) -> frozenset[str]:
    """Ids of objects salient in ``frame``.

    Uses the scene's precomputed visibility when present; otherwise an object
    counts when its center is in front of the camera and its projected
    bounding rectangle covers at least ``min_area_fraction`` of the image.
    """
    if not 0 <= frame < len(scene.trajectory):
        raise SceneError(f"frame {frame} out of range [0, {len(scene.trajectory)})")
    if not 0.0 <= min_area_fraction <= 1.0:
        raise SceneError(f"min_area_fraction must lie in [0, 1], got {min_area_fraction}")
    if scene.visibility is not None:
        return scene.visibility.get(frame, frozenset())
    pose = scene.trajectory[frame]
    visible = set()
    for obj in scene.objects:
        if camera_coords(pose, obj.box.center())[2] <= 0:
            continue
        if coverage_fraction(pose, obj.box) >= min_area_fraction:
            visible.add(obj.id)
    return frozenset(visible)


def visibility_table(scene: SceneRecord, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION) -> list[frozenset[str]]:
    return [frame_visibility(scene, i, min_area_fraction) for i in range(len(scene.trajectory))]


# -- clip sampling -----------------------------------------------------------------


def sample_sequences(
    scene: SceneRecord,
    lengths: Iterable[int],
    per_length: int,
    seed: int,
    *,
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
    max_retries: int = 100,
    visibility: Sequence[frozenset[str]] | None = None,
) -> list[FrameSequence]:
    """Draw contiguous frame windows over ``scene.trajectory``.

    Resample the scene first (``resample_scene``) so windows are contiguous in
    the 20 FPS stream. Every window contains a frame with at least two
    visible objects (all of them, in a scene with fewer); draws failing that
    are retried up to ``max_retries`` times.
    """
    lengths = sorted(set(lengths))
    bad = [n for n in lengths if n not in FRAME_COUNTS]
    if bad:
        raise SceneError(f"unsupported sequence lengths {bad}; allowed {FRAME_COUNTS}")
    n_frames = len(scene.trajectory)
    too_long = [n for n in lengths if n > n_frames]
    if too_long:
        raise SceneError(
            "; ".join(f"trajectory of {n_frames} frames shorter than requested length {n}" for n in too_long)
        )
    vis = visibility if visibility is not None else visibility_table(scene, min_area_fraction)
    need = min(2, len(scene.objects))
    salient = [len(v) >= need for v in vis]
    rng = random.Random(seed)
    out = []
    for n in lengths:
        for _ in range(per_length):
            for _attempt in range(max_retries):
                start = rng.randrange(n_frames - n + 1)
                if any(salient[start : start + n]):
                    out.append(FrameSequence(scene.scene_id, tuple(range(start, start + n))))
                    break
            else:
                raise SceneError(f"no salient window of length {n} in scene {scene.scene_id!r}")
    return out
