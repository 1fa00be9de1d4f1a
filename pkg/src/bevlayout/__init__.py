"""Metric-grounded BEV layout maps, spatial QA generation and verifiable rewards."""

from .geometry import (
    Box2,
    Box3,
    DirectionClass,
    LayoutMap,
    ObjectInstance,
    ObserverFrame,
    Vec2,
    VerticalClass,
)
from .rewards import RewardConfig
from .tasks import FRAME_COUNTS, TaskType

__all__ = [
    "Box2",
    "Box3",
    "DirectionClass",
    "FRAME_COUNTS",
    "LayoutMap",
    "ObjectInstance",
    "ObserverFrame",
    "RewardConfig",
    "TaskType",
    "Vec2",
    "VerticalClass",
]

__version__ = "0.1.0"
