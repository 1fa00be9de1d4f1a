"""Ground-truth answering agent.

Re-derives each QA answer from the scene and writes it up as a structured
``<map>/<think>/<answer>`` response. Used to close the loop between
generation, parsing and scoring.
"""

from __future__ import annotations

from typing import Sequence

from . import cot
from . import geometry as geo
from .qa import LETTERS, ChoiceAnswer, NumericAnswer, QAPair
from .scene import FrameSequence, SceneRecord
from .tasks import TaskType


def observer_layout(scene: SceneRecord, seq: FrameSequence, visibility: Sequence[frozenset[str]]) -> geo.LayoutMap:
    """BEV map of the objects seen in ``seq``, centered on the first camera.

    +y is the first camera's facing direction. Boxes are rotated into that
    frame and re-bounded, so non-right-angle yaws enlarge them slightly.
    """
    first = scene.trajectory[seq.frame_indices[0]]
    origin = geo.Vec2(first.position[0], first.position[1])
    turn = 90.0 - first.yaw_deg
    seen: set[str] = set()
    for f in seq.frame_indices:
        seen |= visibility[f]
    objects = []
    for o in scene.objects:
        if o.id not in seen:
            continue
        shifted = geo.bev_project(o.box).translate(geo.Vec2(-origin.x, -origin.y))
        objects.append(geo.ObjectInstance(o.id, o.label, geo.rotate_box(shifted, turn)))
    return geo.LayoutMap(tuple(objects))


def _letter_for(answer: ChoiceAnswer, text: str) -> str:
    return LETTERS[answer.options.index(text)]


def derive(qa: QAPair, scene: SceneRecord, visibility: Sequence[frozenset[str]]) -> tuple[str, str]:
    """Return ``(answer_text, think_text)`` computed from ground truth."""
    objs = scene.object_map()
    bev = {i: geo.bev_project(objs[i].box) for i in qa.refs}
    label = {i: objs[i].label for i in qa.refs}

    if qa.task is TaskType.RELATIVE_DISTANCE:
        anchor, *cands = qa.refs
        dists = {c: geo.center_distance(bev[anchor], bev[c]) for c in cands}
        best = min(cands, key=dists.__getitem__)
        steps = "; ".join(f"d({label[anchor]}, {label[c]}) = {dists[c]:.3f} m" for c in cands)
        return _letter_for(qa.answer, label[best]), f"{steps}. Closest: {label[best]}."

    if qa.task is TaskType.VERTICAL_DIRECTION:
        a, b = qa.refs
        rel = geo.vertical_relation(objs[a].box, objs[b].box)
        za, zb = objs[a].box, objs[b].box
        think = (
            f"{label[a]} spans z [{za.min[2]:.2f}, {za.max[2]:.2f}], "
            f"{label[b]} spans z [{zb.min[2]:.2f}, {zb.max[2]:.2f}]: {rel.value}."
        )
        return _letter_for(qa.answer, rel.value), think

    if qa.task is TaskType.HORIZONTAL_DIRECTION:
        (t,) = qa.refs
        frame = scene.trajectory[qa.sequence.frame_indices[-1]].frame()
        target = geo.center(bev[t])
        fwd, lat = geo.direction_components(frame, target)
        rel = geo.relative_direction(frame, target)
        think = f"In the final camera frame, {label[t]} has forward {fwd:.3f} (dot) and left {lat:.3f} (cross): {rel.value}."
        return _letter_for(qa.answer, rel.value), think

    if qa.task is TaskType.OBJECT_SIZE:
        (o,) = qa.refs
        w, d = geo.dims(bev[o])
        value = max(w, d)
        return f"{value!r} m", f"{label[o]} is {w:.3f} m by {d:.3f} m; longest side {value:.3f} m."

    if qa.task is TaskType.MIN_DISTANCE:
        a, b = qa.refs
        value = geo.min_box_distance(bev[a], bev[b])
        return f"{value!r} m", f"Gap between the {label[a]} and {label[b]} boxes: {value:.3f} m."

    if qa.task is TaskType.OBJECT_COUNT:
        wanted = objs[qa.refs[0]].label
        seen: set[str] = set()
        for f in qa.sequence.frame_indices:
            seen |= visibility[f]
        count = sum(1 for o in scene.objects if o.id in seen and o.label == wanted)
        return str(count), f"Distinct {wanted} instances seen across the frames: {count}."

    raise ValueError(f"unhandled task {qa.task}")


def rederive_answer(qa: QAPair, scene: SceneRecord, visibility: Sequence[frozenset[str]]):
    """The answer value implied by ground truth, in the QA's own answer type."""
    text, _ = derive(qa, scene, visibility)
    if isinstance(qa.answer, ChoiceAnswer):
        return ChoiceAnswer(text, qa.answer.options)
    assert isinstance(qa.answer, NumericAnswer)
    return NumericAnswer(cot.extract_number(text).value, qa.answer.unit)


def oracle_response(qa: QAPair, scene: SceneRecord, visibility: Sequence[frozenset[str]]) -> str:
    text, think = derive(qa, scene, visibility)
    return cot.compose_response(observer_layout(scene, qa.sequence, visibility), think, text)
