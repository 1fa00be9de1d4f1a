"""Axis-aligned box geometry on the bird's-eye-view plane.

Coordinates are metric (meters). Layout maps are observer-centered: the
observer sits at the origin and +y is the observer's initial facing
direction, so +x points to the observer's right. Scene boxes are 3D with z
vertical (up-positive); ``bev_project`` drops z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence


class GeometryError(ValueError):
    """Raised for invalid geometric inputs or degenerate queries."""


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise GeometryError(f"non-finite coordinate: {v!r}")


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        _check_finite(self.x, self.y)

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def scale(self, k: float) -> Vec2:
        return Vec2(self.x * k, self.y * k)

    def dot(self, other: Vec2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Vec2) -> float:
        """z-component of the 3D cross product (self, 0) x (other, 0)."""
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def rotate(self, degrees: float) -> Vec2:
        """Rotate counterclockwise about the origin."""
        a = math.radians(degrees)
        c, s = math.cos(a), math.sin(a)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)


@dataclass(frozen=True)
class Box2:
    min: Vec2
    max: Vec2

    def __post_init__(self) -> None:
        if self.min.x > self.max.x or self.min.y > self.max.y:
            raise GeometryError(f"box min exceeds max: {self.as_list()}")

    @classmethod
    def from_list(cls, values: Sequence[float]) -> Box2:
        """Build from ``[xmin, ymin, xmax, ymax]``."""
        if len(values) != 4:
            raise GeometryError(f"expected 4 box coordinates, got {len(values)}")
        xmin, ymin, xmax, ymax = (float(v) for v in values)
        return cls(Vec2(xmin, ymin), Vec2(xmax, ymax))

    @classmethod
    def from_points(cls, points: Iterable[Vec2]) -> Box2:
        pts = list(points)
        if not pts:
            raise GeometryError("cannot bound an empty point set")
        return cls(
            Vec2(min(p.x for p in pts), min(p.y for p in pts)),
            Vec2(max(p.x for p in pts), max(p.y for p in pts)),
        )

    def as_list(self) -> list[float]:
        return [self.min.x, self.min.y, self.max.x, self.max.y]

    def corners(self) -> tuple[Vec2, Vec2, Vec2, Vec2]:
        return (
            self.min,
            Vec2(self.max.x, self.min.y),
            self.max,
            Vec2(self.min.x, self.max.y),
        )

    def translate(self, offset: Vec2) -> Box2:
        return Box2(self.min + offset, self.max + offset)


@dataclass(frozen=True)
class Box3:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self) -> None:
        _check_finite(*self.min, *self.max)
        if len(self.min) != 3 or len(self.max) != 3:
            raise GeometryError("Box3 corners must have 3 components")
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise GeometryError(f"box min exceeds max: {self.as_list()}")

    @classmethod
    def from_list(cls, values: Sequence[float]) -> Box3:
        """Build from ``[xmin, ymin, zmin, xmax, ymax, zmax]``."""
        if len(values) != 6:
            raise GeometryError(f"expected 6 box coordinates, got {len(values)}")
        v = [float(x) for x in values]
        return cls((v[0], v[1], v[2]), (v[3], v[4], v[5]))

    def as_list(self) -> list[float]:
        return [*self.min, *self.max]

    def center(self) -> tuple[float, float, float]:
        return tuple((lo + hi) / 2 for lo, hi in zip(self.min, self.max))  # type: ignore[return-value]

    def corners(self) -> list[tuple[float, float, float]]:
        xs = (self.min[0], self.max[0])
        ys = (self.min[1], self.max[1])
        zs = (self.min[2], self.max[2])
        return [(x, y, z) for x in xs for y in ys for z in zs]


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    label: str
    box: Box2 | Box3

    def __post_init__(self) -> None:
        if not self.label:
            raise GeometryError(f"object {self.id!r} has an empty label")


@dataclass(frozen=True)
class ObserverFrame:
    position: Vec2
    facing: Vec2

    def __post_init__(self) -> None:
        if abs(self.facing.norm() - 1.0) > 1e-9:
            raise GeometryError(f"facing must be a unit vector, got norm {self.facing.norm()!r}")

    @classmethod
    def from_yaw(cls, position: Vec2, yaw_deg: float) -> ObserverFrame:
        """Facing measured counterclockwise from +x, in degrees."""
        a = math.radians(yaw_deg)
        return cls(position, Vec2(math.cos(a), math.sin(a)))


@dataclass(frozen=True)
class LayoutMap:
    objects: tuple[ObjectInstance, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        seen: set[str] = set()
        for obj in self.objects:
            if not isinstance(obj.box, Box2):
                raise GeometryError(f"layout map object {obj.id!r} must carry a Box2")
            if obj.id in seen:
                raise GeometryError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def by_id(self) -> dict[str, ObjectInstance]:
        return {o.id: o for o in self.objects}


class DirectionClass(str, Enum):
    FRONT = "front"
    BEHIND = "behind"
    LEFT = "left"
    RIGHT = "right"


class VerticalClass(str, Enum):
    ABOVE = "above"
    BELOW = "below"
    SAME_LEVEL = "same level"


def center(b: Box2) -> Vec2:
    return Vec2((b.min.x + b.max.x) / 2, (b.min.y + b.max.y) / 2)


def dims(b: Box2) -> tuple[float, float]:
    """Return ``(width, depth)``: extents along x and y."""
    return (b.max.x - b.min.x, b.max.y - b.min.y)


def center_distance(a: Box2, b: Box2) -> float:
    ca, cb = center(a), center(b)
    return math.hypot(ca.x - cb.x, ca.y - cb.y)


def min_box_distance(a: Box2, b: Box2) -> float:
    """Shortest Euclidean distance between two boxes; 0 when they touch or overlap."""
    gap_x = max(0.0, a.min.x - b.max.x, b.min.x - a.max.x)
    gap_y = max(0.0, a.min.y - b.max.y, b.min.y - a.max.y)
    return math.hypot(gap_x, gap_y)


def direction_components(frame: ObserverFrame, target: Vec2) -> tuple[float, float]:
    """Return ``(forward, lateral)`` of ``target`` in the observer's frame.

    ``lateral`` is positive to the observer's left.
    """
    d = target - frame.position
    return d.dot(frame.facing), frame.facing.cross(d)


def relative_direction(frame: ObserverFrame, target: Vec2) -> DirectionClass:
    """Classify ``target`` as front/behind/left/right of the observer.

    The plane is split along the 45-degree diagonals; targets exactly on a
    diagonal go to front/behind.
    """
    if target == frame.position:
        raise GeometryError("degenerate direction: target coincides with observer")
    fwd, lat = direction_components(frame, target)
    if fwd == 0.0 and lat == 0.0:
        raise GeometryError("degenerate direction: target coincides with observer")
    if abs(fwd) >= abs(lat):
        return DirectionClass.FRONT if fwd > 0 else DirectionClass.BEHIND
    return DirectionClass.LEFT if lat > 0 else DirectionClass.RIGHT


def bearing(src: Vec2, dst: Vec2) -> float:
    """Angle of ``dst - src`` counterclockwise from +x, in ``[0, 360)`` degrees."""
    dx, dy = dst.x - src.x, dst.y - src.y
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("degenerate bearing: coincident points")
    deg = math.degrees(math.atan2(dy, dx)) % 360.0
    # -tiny % 360 rounds to 360.0
    return 0.0 if deg >= 360.0 else deg


def vertical_relation(a: Box3, b: Box3) -> VerticalClass:
    """Relation of ``a`` to ``b`` along z; overlapping intervals are the same level.

    Touching intervals count as separated. Two flat boxes at the same height
    are the same level, which keeps the relation antisymmetric.
    """
    if a.min[2] >= b.max[2] and a.max[2] > b.min[2]:
        return VerticalClass.ABOVE
    if a.max[2] <= b.min[2] and a.min[2] < b.max[2]:
        return VerticalClass.BELOW
    return VerticalClass.SAME_LEVEL


def bev_project(b: Box3) -> Box2:
    return Box2(Vec2(b.min[0], b.min[1]), Vec2(b.max[0], b.max[1]))


def rotate_box(b: Box2, degrees: float, about: Vec2 = Vec2(0.0, 0.0)) -> Box2:
    """Axis-aligned bound of ``b`` rotated counterclockwise about ``about``.

    Exact for multiples of 90 degrees; otherwise the footprint grows to the
    bounding box of the rotated corners.
    """
    return Box2.from_points((c - about).rotate(degrees) + about for c in b.corners())
