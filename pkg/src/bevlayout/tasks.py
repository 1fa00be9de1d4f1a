"""The six spatial QA task types."""

from __future__ import annotations

from enum import Enum


class TaskType(str, Enum):
    RELATIVE_DISTANCE = "relative_distance"
    VERTICAL_DIRECTION = "vertical_direction"
    HORIZONTAL_DIRECTION = "horizontal_direction"
    OBJECT_SIZE = "object_size"
    MIN_DISTANCE = "min_distance"
    OBJECT_COUNT = "object_count"

    @property
    def multiple_choice(self) -> bool:
        return self in MULTIPLE_CHOICE_TASKS

    @classmethod
    def parse(cls, name: str) -> TaskType:
        """Accept the enum value or a CamelCase/hyphenated spelling."""
        key = name.strip()
        for t in cls:
            if key in (t.value, t.name) or key.replace("-", "_").lower() == t.value:
                return t
        flat = key.replace("_", "").replace("-", "").lower()
        for t in cls:
            if t.value.replace("_", "") == flat:
                return t
        raise ValueError(f"unknown task type: {name!r}")


MULTIPLE_CHOICE_TASKS = frozenset(
    {TaskType.RELATIVE_DISTANCE, TaskType.VERTICAL_DIRECTION, TaskType.HORIZONTAL_DIRECTION}
)
NUMERICAL_TASKS = frozenset({TaskType.OBJECT_SIZE, TaskType.MIN_DISTANCE, TaskType.OBJECT_COUNT})
FRAME_COUNTS = (1, 4, 8, 12, 16)
