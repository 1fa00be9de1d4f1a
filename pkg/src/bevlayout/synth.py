"""Procedural indoor scenes with a camera walking an arc around the room.

These stand in for simulator exports when testing the pipeline end to end.
"""

from __future__ import annotations

import math
import random

from .geometry import Box3, ObjectInstance
from .scene import CameraPose, Intrinsics, SceneRecord

# label -> (width range, depth range, height range, base-z range)
FLOOR_ITEMS = {
    "sofa": ((1.8, 2.2), (0.8, 1.0), (0.8, 0.9), (0.0, 0.0)),
    "bed": ((1.4, 2.0), (1.9, 2.1), (0.5, 0.6), (0.0, 0.0)),
    "table": ((1.0, 1.6), (0.6, 0.9), (0.7, 0.8), (0.0, 0.0)),
    "desk": ((1.0, 1.4), (0.5, 0.7), (0.7, 0.8), (0.0, 0.0)),
    "cabinet": ((0.8, 1.2), (0.4, 0.6), (0.8, 1.8), (0.0, 0.0)),
    "armchair": ((0.7, 0.9), (0.7, 0.9), (0.8, 1.0), (0.0, 0.0)),
    "tv_stand": ((1.2, 1.8), (0.4, 0.5), (0.4, 0.6), (0.0, 0.0)),
    "plant": ((0.3, 0.5), (0.3, 0.5), (0.6, 1.2), (0.0, 0.0)),
    "fridge": ((0.7, 0.9), (0.6, 0.8), (1.6, 1.9), (0.0, 0.0)),
}
RAISED_ITEMS = {
    "painting": ((0.6, 1.2), (0.03, 0.06), (0.4, 0.8), (1.2, 1.5)),
    "ceiling_lamp": ((0.4, 0.7), (0.4, 0.7), (0.2, 0.3), (2.3, 2.5)),
    "shelf": ((0.8, 1.2), (0.2, 0.3), (0.05, 0.1), (1.3, 1.7)),
    "vase": ((0.15, 0.25), (0.15, 0.25), (0.3, 0.4), (0.75, 0.8)),
}
REPEATED_ITEMS = {
    "chair": ((0.45, 0.55), (0.45, 0.55), (0.8, 1.0), (0.0, 0.0)),
    "cushion": ((0.35, 0.45), (0.35, 0.45), (0.1, 0.15), (0.45, 0.5)),
}

DEFAULT_INTRINSICS = Intrinsics(320.0, 320.0, 320.0, 240.0, 640.0, 480.0)


def _overlaps(a: Box3, b: Box3, margin: float) -> bool:
    return not (
        a.max[0] + margin <= b.min[0]
        or b.max[0] + margin <= a.min[0]
        or a.max[1] + margin <= b.min[1]
        or b.max[1] + margin <= a.min[1]
    )


def _place(rng: random.Random, spec, room: float, placed: list[Box3], floor: bool) -> Box3 | None:
    (w0, w1), (d0, d1), (h0, h1), (z0, z1) = spec
    w, d, h = rng.uniform(w0, w1), rng.uniform(d0, d1), rng.uniform(h0, h1)
    if rng.random() < 0.5:
        w, d = d, w
    z = rng.uniform(z0, z1)
    for _ in range(50):
        x = rng.uniform(0.2, room - 0.2 - w)
        y = rng.uniform(0.2, room - 0.2 - d)
        box = Box3((x, y, z), (x + w, y + d, z + h))
        if not floor or not any(_overlaps(box, other, 0.15) for other in placed):
            return box
    return None


def make_scene(
    seed: int,
    scene_id: str | None = None,
    *,
    source_fps: float = 30.0,
    duration: float = 6.0,
    n_floor: int = 6,
    n_raised: int = 3,
) -> SceneRecord:
    """Random furnished square room plus a camera arc sampled at ``source_fps``."""
    rng = random.Random(seed)
    room = rng.uniform(6.0, 9.0)
    objects: list[ObjectInstance] = []
    floor_boxes: list[Box3] = []

    labels = rng.sample(sorted(FLOOR_ITEMS), min(n_floor, len(FLOOR_ITEMS)))
    for label in labels:
        box = _place(rng, FLOOR_ITEMS[label], room, floor_boxes, floor=True)
        if box is not None:
            floor_boxes.append(box)
            objects.append(ObjectInstance(f"{label}_0", label, box))
    for label in rng.sample(sorted(RAISED_ITEMS), min(n_raised, len(RAISED_ITEMS))):
        box = _place(rng, RAISED_ITEMS[label], room, floor_boxes, floor=False)
        objects.append(ObjectInstance(f"{label}_0", label, box))
    for label, spec in sorted(REPEATED_ITEMS.items()):
        for k in range(rng.randint(1, 4)):
            box = _place(rng, spec, room, floor_boxes, floor=spec[3][1] == 0.0)
            if box is not None:
                if spec[3][1] == 0.0:
                    floor_boxes.append(box)
                objects.append(ObjectInstance(f"{label}_{k}", label, box))

    cx = cy = room / 2
    radius = 0.3 * room
    start = rng.uniform(0, 360)
    sweep = rng.choice((-1, 1)) * rng.uniform(90, 150)
    sway = rng.uniform(10, 30)
    n = int(round(duration * source_fps)) + 1
    poses = []
    for k in range(n):
        s = k / (n - 1)
        ang = math.radians(start + sweep * s)
        x, y = cx + radius * math.cos(ang), cy + radius * math.sin(ang)
        yaw = math.degrees(math.atan2(cy - y, cx - x)) + sway * math.sin(2 * math.pi * s)
        poses.append(CameraPose(k / source_fps, (x, y, 1.5), yaw % 360.0, DEFAULT_INTRINSICS))

    return SceneRecord(scene_id or f"synth_{seed:05d}", tuple(objects), tuple(poses))
