"""Spatial QA generation from scene ground truth.

Question templates, one per task (``{a}``/``{b}`` are object labels)::

    relative_distance     Which of these objects is closest to the {a}, measured between object centers?
    vertical_direction    Where is the {a} vertically relative to the {b}?
    horizontal_direction  Standing at the camera's final position and facing its view direction, where is the {a}?
    object_size           How long is the longest horizontal side of the {a}, in meters?
    min_distance          What is the minimum distance between the {a} and the {b}, in meters?
    object_count          How many {a} instances appear across these frames?

Objects named in a question carry a label that is unique in the scene, so
the label identifies the instance.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, MutableMapping, Sequence

from . import geometry as geo
from .scene import DEFAULT_MIN_AREA_FRACTION, FrameSequence, SceneRecord, visibility_table
from .tasks import TaskType

LETTERS = "ABCD"

TEMPLATES = {
    TaskType.RELATIVE_DISTANCE: "Which of these objects is closest to the {a}, measured between object centers?",
    TaskType.VERTICAL_DIRECTION: "Where is the {a} vertically relative to the {b}?",
    TaskType.HORIZONTAL_DIRECTION: (
        "Standing at the camera's final position and facing its view direction, where is the {a}?"
    ),
    TaskType.OBJECT_SIZE: "How long is the longest horizontal side of the {a}, in meters?",
    TaskType.MIN_DISTANCE: "What is the minimum distance between the {a} and the {b}, in meters?",
    TaskType.OBJECT_COUNT: "How many {a} instances appear across these frames?",
}

RELATION_TERMS = {
    TaskType.VERTICAL_DIRECTION: tuple(v.value for v in geo.VerticalClass),
    TaskType.HORIZONTAL_DIRECTION: tuple(d.value for d in geo.DirectionClass),
}

# strict-winner margin for closest-object questions, meters
DISTANCE_MARGIN = 1e-6


class QuotaError(ValueError):
    def __init__(self, deficient: Iterable[TaskType]):
        self.deficient = sorted(set(deficient), key=list(TaskType).index)
        super().__init__("unachievable quota for task types: " + ", ".join(t.value for t in self.deficient))


@dataclass(frozen=True)
class ChoiceAnswer:
    letter: str
    options: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 2 <= len(self.options) <= 4:
            raise ValueError(f"choice answers need 2-4 options, got {len(self.options)}")
        if self.letter not in LETTERS[: len(self.options)]:
            raise ValueError(f"letter {self.letter!r} does not index one of {len(self.options)} options")

    @property
    def text(self) -> str:
        return self.options[LETTERS.index(self.letter)]


@dataclass(frozen=True)
class NumericAnswer:
    value: float
    unit: str  # "meters" or "count"

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError(f"numeric answers must be >= 0, got {self.value}")
        if self.unit not in ("meters", "count"):
            raise ValueError(f"unknown unit {self.unit!r}")


Answer = ChoiceAnswer | NumericAnswer


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    scene_id: str
    sequence: FrameSequence
    task: TaskType
    question: str
    answer: Answer
    refs: tuple[str, ...]

    def prompt_text(self) -> str:
        """Question plus lettered options for multiple-choice items."""
        if isinstance(self.answer, ChoiceAnswer):
            opts = "\n".join(f"{LETTERS[i]}. {o}" for i, o in enumerate(self.answer.options))
            return f"{self.question}\nOptions:\n{opts}"
        return self.question

    def to_dict(self) -> dict:
        if isinstance(self.answer, ChoiceAnswer):
            ans = {"kind": "choice", "letter": self.answer.letter, "options": list(self.answer.options)}
        else:
            ans = {"kind": "numeric", "value": self.answer.value, "unit": self.answer.unit}
        return {
            "qa_id": self.qa_id,
            "scene_id": self.scene_id,
            "frames": list(self.sequence.frame_indices),
            "task": self.task.value,
            "question": self.question,
            "answer": ans,
            "refs": list(self.refs),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> QAPair:
        a = d["answer"]
        if a["kind"] == "choice":
            answer: Answer = ChoiceAnswer(a["letter"], tuple(a["options"]))
        elif a["kind"] == "numeric":
            answer = NumericAnswer(float(a["value"]), a["unit"])
        else:
            raise ValueError(f"unknown answer kind {a['kind']!r}")
        return cls(
            qa_id=d["qa_id"],
            scene_id=d["scene_id"],
            sequence=FrameSequence(d["scene_id"], tuple(d["frames"])),
            task=TaskType.parse(d["task"]),
            question=d["question"],
            answer=answer,
            refs=tuple(d["refs"]),
        )


def dumps_jsonl(items: Iterable[QAPair]) -> str:
    return "".join(json.dumps(q.to_dict()) + "\n" for q in items)


def loads_jsonl(text: str) -> list[QAPair]:
    return [QAPair.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def make_distractors(
    task: TaskType,
    truth: str,
    pool: Iterable[str],
    seed: int,
    *,
    n_options: int | None = None,
    truth_position: int | None = None,
) -> list[str]:
    """Option list holding ``truth`` once plus distractors.

    Relation tasks draw distractors from the complementary relation terms and
    ignore ``pool``; distance questions draw from the distinct labels in
    ``pool``. Order is shuffled by ``seed`` unless ``truth_position`` pins
    where the truth goes.
    """
    if not task.multiple_choice:
        raise ValueError(f"{task.value} is not a multiple-choice task")
    if task in RELATION_TERMS:
        candidates = [t for t in RELATION_TERMS[task] if t != truth]
    else:
        candidates = sorted({p for p in pool if p != truth})
    k = min(4, 1 + len(candidates)) if n_options is None else n_options
    if k < 2 or k > 4 or k - 1 > len(candidates):
        raise ValueError(f"cannot build {k} options from {len(candidates)} distractors")
    rng = random.Random(seed)
    options = rng.sample(candidates, k - 1)
    if truth_position is None:
        options.append(truth)
        rng.shuffle(options)
    else:
        options.insert(truth_position, truth)
    return options


class _Builder:
    """Per-scene state shared by the task builders."""

    def __init__(self, scene: SceneRecord, visibility: Sequence[frozenset[str]], letter_counts: Counter):
        self.scene = scene
        self.vis = visibility
        self.objects = scene.object_map()
        self.label_counts = Counter(o.label for o in scene.objects)
        self.letter_counts = letter_counts

    def visible(self, seq: FrameSequence) -> list[geo.ObjectInstance]:
        ids: set[str] = set()
        for f in seq.frame_indices:
            ids |= self.vis[f]
        return [o for o in self.scene.objects if o.id in ids]

    def nameable(self, seq: FrameSequence) -> list[geo.ObjectInstance]:
        return [o for o in self.visible(seq) if self.label_counts[o.label] == 1]

    def choice(self, task: TaskType, truth: str, pool: list[str], n: int, rng: random.Random) -> ChoiceAnswer:
        # balance answer letters across the corpus: least-used feasible slot wins
        low = min(self.letter_counts[LETTERS[i]] for i in range(n))
        slots = [i for i in range(n) if self.letter_counts[LETTERS[i]] == low]
        pos = rng.choice(slots)
        options = make_distractors(task, truth, pool, rng.getrandbits(32), n_options=n, truth_position=pos)
        self.letter_counts[LETTERS[pos]] += 1
        return ChoiceAnswer(LETTERS[pos], tuple(options))

    def build(self, task: TaskType, seq: FrameSequence, rng: random.Random):
        return getattr(self, f"_{task.value}")(seq, rng)

    def _relative_distance(self, seq, rng):
        objs = self.nameable(seq)
        if len(objs) < 3:
            return None
        anchor = rng.choice(objs)
        others = [o for o in objs if o is not anchor]
        n = rng.randint(2, min(4, len(others)))
        cands = rng.sample(others, n)
        ab = geo.bev_project(anchor.box)
        ranked = sorted(cands, key=lambda o: geo.center_distance(ab, geo.bev_project(o.box)))
        d0 = geo.center_distance(ab, geo.bev_project(ranked[0].box))
        d1 = geo.center_distance(ab, geo.bev_project(ranked[1].box))
        if d1 - d0 <= DISTANCE_MARGIN:
            return None
        answer = self.choice(TaskType.RELATIVE_DISTANCE, ranked[0].label, [o.label for o in cands], n, rng)
        question = TEMPLATES[TaskType.RELATIVE_DISTANCE].format(a=anchor.label)
        return question, answer, (anchor.id, *(o.id for o in cands))

    def _vertical_direction(self, seq, rng):
        objs = self.nameable(seq)
        groups: dict[geo.VerticalClass, list] = defaultdict(list)
        for a in objs:
            for b in objs:
                if a is not b:
                    groups[geo.vertical_relation(a.box, b.box)].append((a, b))
        if not groups:
            return None
        rel = rng.choice(sorted(groups, key=list(geo.VerticalClass).index))
        a, b = rng.choice(groups[rel])
        n = len(RELATION_TERMS[TaskType.VERTICAL_DIRECTION])
        answer = self.choice(TaskType.VERTICAL_DIRECTION, rel.value, [], n, rng)
        question = TEMPLATES[TaskType.VERTICAL_DIRECTION].format(a=a.label, b=b.label)
        return question, answer, (a.id, b.id)

    def _horizontal_direction(self, seq, rng):
        frame = self.scene.trajectory[seq.frame_indices[-1]].frame()
        groups: dict[geo.DirectionClass, list] = defaultdict(list)
        for o in self.nameable(seq):
            c = geo.center(geo.bev_project(o.box))
            if c != frame.position:
                groups[geo.relative_direction(frame, c)].append(o)
        if not groups:
            return None
        rel = rng.choice(sorted(groups, key=list(geo.DirectionClass).index))
        target = rng.choice(groups[rel])
        answer = self.choice(TaskType.HORIZONTAL_DIRECTION, rel.value, [], 4, rng)
        question = TEMPLATES[TaskType.HORIZONTAL_DIRECTION].format(a=target.label)
        return question, answer, (target.id,)

    def _object_size(self, seq, rng):
        objs = self.nameable(seq)
        if not objs:
            return None
        o = rng.choice(objs)
        value = max(geo.dims(geo.bev_project(o.box)))
        return TEMPLATES[TaskType.OBJECT_SIZE].format(a=o.label), NumericAnswer(value, "meters"), (o.id,)

    def _min_distance(self, seq, rng):
        objs = self.nameable(seq)
        if len(objs) < 2:
            return None
        a, b = rng.sample(objs, 2)
        value = geo.min_box_distance(geo.bev_project(a.box), geo.bev_project(b.box))
        question = TEMPLATES[TaskType.MIN_DISTANCE].format(a=a.label, b=b.label)
        return question, NumericAnswer(value, "meters"), (a.id, b.id)

    def _object_count(self, seq, rng):
        objs = self.visible(seq)
        if not objs:
            return None
        per_label = Counter(o.label for o in objs)
        by_count: dict[int, list[str]] = defaultdict(list)
        for label, n in sorted(per_label.items()):
            by_count[n].append(label)
        label = rng.choice(by_count[rng.choice(sorted(by_count))])
        ids = tuple(o.id for o in objs if o.label == label)
        return TEMPLATES[TaskType.OBJECT_COUNT].format(a=label), NumericAnswer(float(len(ids)), "count"), ids


def plan_cells(count: int, lengths: Sequence[int], offset: int = 0) -> dict[int, int]:
    """Split ``count`` items over ``lengths`` as evenly as possible.

    The ``count % len(lengths)`` extra items go to consecutive lengths
    starting at index ``offset`` (mod the number of lengths).
    """
    base, rem = divmod(count, len(lengths))
    plan = {n: base for n in lengths}
    for i in range(rem):
        plan[lengths[(offset + i) % len(lengths)]] += 1
    return plan


def generate_qa(
    scene: SceneRecord,
    sequences: Sequence[FrameSequence],
    quota: Mapping[TaskType, int],
    seed: int,
    *,
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
    visibility: Sequence[frozenset[str]] | None = None,
    cell_offsets: MutableMapping[TaskType, int] | None = None,
    letter_counts: Counter | None = None,
    attempts_per_item: int = 30,
) -> list[QAPair]:
    """Generate QA pairs for one scene, balanced over the sequence lengths present.

    ``sequences`` must index ``scene.trajectory`` (resample the scene first).
    ``cell_offsets`` and ``letter_counts`` carry balancing state across
    scenes; both are updated in place when given.
    """
    if not sequences:
        raise ValueError("no sequences to generate from")
    vis = visibility if visibility is not None else visibility_table(scene, min_area_fraction)
    letters = letter_counts if letter_counts is not None else Counter()
    offsets = cell_offsets if cell_offsets is not None else {}
    builder = _Builder(scene, vis, letters)
    rng = random.Random(seed)
    by_len: dict[int, list[FrameSequence]] = defaultdict(list)
    for s in sequences:
        by_len[s.length].append(s)
    lengths = sorted(by_len)

    out: list[QAPair] = []
    deficient = set()
    for task in TaskType:
        count = quota.get(task, 0)
        if count <= 0:
            continue
        plan = plan_cells(count, lengths, offsets.get(task, 0))
        offsets[task] = (offsets.get(task, 0) + count) % len(lengths)
        for n in lengths:
            need, made, tries = plan[n], 0, 0
            pool = by_len[n]
            while made < need and tries < attempts_per_item * need:
                tries += 1
                seq = pool[rng.randrange(len(pool))]
                built = builder.build(task, seq, rng)
                if built is None:
                    continue
                question, answer, refs = built
                qa_id = f"{scene.scene_id}-{len(out):04d}"
                out.append(QAPair(qa_id, scene.scene_id, seq, task, question, answer, refs))
                made += 1
            if made < need:
                deficient.add(task)
    if deficient:
        raise QuotaError(deficient)
    return out
