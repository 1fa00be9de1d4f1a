"""Parsing and serialization of ``<map>/<think>/<answer>`` responses.

The map block holds a JSON array of ``{"label": str, "bbox": [xmin, ymin,
xmax, ymax]}`` objects in meters. The map and think blocks may be empty; the
answer block may not.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .geometry import Box2, GeometryError, LayoutMap, ObjectInstance
from .tasks import TaskType

TAGS = ("map", "think", "answer")

_BLOCK_RE = re.compile(
    r"\A\s*<map>(?P<map>.*?)</map>\s*"
    r"<think>(?P<think>.*?)</think>\s*"
    r"<answer>(?P<answer>.*?)</answer>\s*\Z",
    re.DOTALL,
)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_LETTER_RE = re.compile(r"(?<![A-Za-z0-9])([A-D])(?![A-Za-z0-9])")
_NUMBER_RE = re.compile(
    r"(?<!\w)(?<!\d\.)(?P<num>[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)(?!\.\d)"
    r"\s*(?P<unit>centimeters?|centimetres?|cm|meters?|metres?|m)?(?![A-Za-z])"
)


class ResponseFormatError(ValueError):
    """The response does not follow the three-block format, or its map is invalid."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (offset {offset})")


class AnswerParseError(ValueError):
    """No letter or number could be extracted from the answer text."""


@dataclass(frozen=True)
class StructuredResponse:
    raw: str
    map: LayoutMap | None
    think: str | None
    answer: str


@dataclass(frozen=True)
class ChoiceLetter:
    letter: str


@dataclass(frozen=True)
class NumericValue:
    value: float


ParsedAnswer = ChoiceLetter | NumericValue


def _tag_counts_ok(raw: str) -> bool:
    return all(raw.count(f"<{t}>") == 1 and raw.count(f"</{t}>") == 1 for t in TAGS)


def parse_map(text: str, offset: int = 0) -> LayoutMap:
    """Decode a map block body. ``offset`` is added to reported error positions."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ResponseFormatError(f"malformed map JSON: {exc.msg}", offset + exc.pos) from None
    if not isinstance(data, list):
        raise ResponseFormatError("map must be a JSON array", offset)
    objects = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or set(item) != {"label", "bbox"}:
            raise ResponseFormatError(f"map entry {i} must have exactly 'label' and 'bbox'", offset)
        label, bbox = item["label"], item["bbox"]
        if not isinstance(label, str) or not label:
            raise ResponseFormatError(f"map entry {i} has an invalid label", offset)
        if (
            not isinstance(bbox, list)
            or len(bbox) != 4
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox)
        ):
            raise ResponseFormatError(f"map entry {i} bbox must be 4 numbers", offset)
        try:
            box = Box2.from_list(bbox)
        except GeometryError as exc:
            raise ResponseFormatError(f"map entry {i}: {exc}", offset) from None
        objects.append(ObjectInstance(str(i), label, box))
    return LayoutMap(tuple(objects))


def check_format(raw: str) -> bool:
    """True iff ``raw`` is exactly a map, think and answer block, in that order.

    Only whitespace may surround the blocks. Never raises.
    """
    try:
        if not isinstance(raw, str) or not _tag_counts_ok(raw):
            return False
        m = _BLOCK_RE.match(raw)
        if m is None or not m.group("answer").strip():
            return False
        body = m.group("map")
        if body.strip():
            parse_map(body)
        return True
    except (ResponseFormatError, RecursionError):
        return False


def parse_response(raw: str) -> StructuredResponse:
    if not check_format(raw):
        # surface the map error when that is the only problem
        m = _BLOCK_RE.match(raw) if _tag_counts_ok(raw) else None
        if m is not None and m.group("answer").strip() and m.group("map").strip():
            parse_map(m.group("map"), m.start("map"))
        raise ResponseFormatError("format")
    m = _BLOCK_RE.match(raw)
    assert m is not None
    body = m.group("map")
    layout = parse_map(body, m.start("map")) if body.strip() else None
    think = m.group("think").strip() or None
    return StructuredResponse(raw=raw, map=layout, think=think, answer=m.group("answer").strip())


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def serialize_map(m: LayoutMap) -> str:
    """Canonical JSON form: input order, two decimals, no whitespace."""
    parts = []
    for obj in m.objects:
        coords = ",".join(_fmt(v) for v in obj.box.as_list())
        parts.append(f'{{"label":{json.dumps(obj.label)},"bbox":[{coords}]}}')
    return "[" + ",".join(parts) + "]"


def serialize_response(resp: StructuredResponse) -> str:
    body = serialize_map(resp.map) if resp.map is not None else ""
    return f"<map>{body}</map><think>{resp.think or ''}</think><answer>{resp.answer}</answer>"


def compose_response(layout: LayoutMap | None, think: str, answer: str) -> str:
    body = serialize_map(layout) if layout is not None else ""
    return f"<map>{body}</map><think>{think}</think><answer>{answer}</answer>"


def answer_text(raw: str) -> str:
    """Content of the first ``<answer>`` block, or the whole text when there is none."""
    m = _ANSWER_RE.search(raw)
    return m.group(1) if m else raw


_CM_UNITS = {"cm", "centimeter", "centimeters", "centimetre", "centimetres"}


def extract_choice(text: str) -> ChoiceLetter:
    m = _LETTER_RE.search(text)
    if m is None:
        raise AnswerParseError(f"unparseable answer: {text[:80]!r}")
    return ChoiceLetter(m.group(1))


def extract_number(text: str) -> NumericValue:
    """First decimal number in ``text``; centimeters are converted to meters."""
    for m in _NUMBER_RE.finditer(text):
        value = float(m.group("num"))
        if not math.isfinite(value):
            continue
        if (m.group("unit") or "").lower() in _CM_UNITS:
            value /= 100.0
        return NumericValue(value)
    raise AnswerParseError(f"unparseable answer: {text[:80]!r}")


def extract_answer(resp: StructuredResponse | str, task: TaskType) -> ParsedAnswer:
    """Pull a letter (multiple-choice tasks) or a number out of a response's answer.

    Accepts a parsed response or plain answer text.
    """
    text = resp.answer if isinstance(resp, StructuredResponse) else resp
    return extract_choice(text) if task.multiple_choice else extract_number(text)
