"""Gaussian-field proximity and verifiers for GUI grounding and planning."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .core import ZoneSchema
from .errors import InvalidInputError

__all__ = [
    "Point",
    "BoundingBox",
    "FieldParams",
    "ActionType",
    "ActionRecord",
    "field_value",
    "sigma_levels",
    "sigma_level_schema",
    "gui_zone_score",
    "grounding_verify",
    "planning_step_proximity",
    "planning_verify",
]

GUI_TIER_SCORES = (1.0, 0.75, 0.5, 0.25)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError("point coordinates must be finite")


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise InvalidInputError("box coordinates must be finite")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidInputError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    @property
    def half_extents(self) -> tuple[float, float]:
        return (self.x2 - self.x1) / 2, (self.y2 - self.y1) / 2

    def contains(self, p: Point) -> bool:
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2

    def scaled(self, lam: float) -> "BoundingBox":
        return BoundingBox(self.x1 * lam, self.y1 * lam, self.x2 * lam, self.y2 * lam)


@dataclass(frozen=True)
class FieldParams:
    # 1/3 puts the 3-sigma contour on the inscribed ellipse
    sigma: float = 1 / 3

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")


def normalized_sq_distance(p: Point, B: BoundingBox) -> float:
    cx, cy = B.center
    a, b = B.half_extents
    return ((p.x - cx) / a) ** 2 + ((p.y - cy) / b) ** 2


def field_value(p: Point, B: BoundingBox, params: FieldParams = FieldParams()) -> float:
    """Gaussian field of ``p`` over box ``B``; 0 outside the box (edges count as inside)."""
    if not B.contains(p):
        return 0.0
    d2 = normalized_sq_distance(p, B)
    return math.exp(-d2 / (2 * params.sigma ** 2))


def sigma_levels() -> list[float]:
    """Field values on the k-sigma contours, k = 0..3."""
    return [math.exp(-k * k / 2) for k in range(4)]


def sigma_level_schema() -> ZoneSchema:
    """Zone schema whose boundaries are the 1/2/3-sigma field levels.

    Discretizing a field value with this schema gives the same tier as
    :func:`gui_zone_score`.
    """
    t = sigma_levels()
    return ZoneSchema((1.0, t[1], t[2], t[3], 0.0), GUI_TIER_SCORES, zero_is_miss=True)


def gui_zone_score(p: Point, B: BoundingBox, params: FieldParams = FieldParams()) -> float:
    phi = field_value(p, B, params)
    _, t1, t2, t3 = sigma_levels()
    if phi >= t1:
        return 1.0
    if phi >= t2:
        return 0.75
    if phi >= t3:
        return 0.5
    if phi > 0:
        return 0.25
    return 0.0


def grounding_verify(p: Point, B: BoundingBox) -> int:
    return int(B.contains(p))


class ActionType(str, Enum):
    CLICK = "click"
    DRAG = "drag"
    TYPE_TEXT = "type_text"
    SCROLL = "scroll"
    OTHER = "other"


GROUNDING_ACTIONS = frozenset({ActionType.CLICK, ActionType.DRAG})


@dataclass(frozen=True)
class ActionRecord:
    """One GUI action.

    ``point`` is the click location, or the end point for a drag.
    ``terminal_goal_met`` is only read on the last step of a trajectory.
    """

    action_type: ActionType
    point: Optional[Point] = None
    text: Optional[str] = None
    terminal_goal_met: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "action_type", ActionType(self.action_type))

    def well_formed(self) -> bool:
        if self.action_type in GROUNDING_ACTIONS:
            return self.point is not None
        if self.action_type is ActionType.TYPE_TEXT:
            return self.text is not None
        return True


def _action_correct(pred: ActionRecord, ref: ActionRecord) -> bool:
    if pred.action_type is not ref.action_type or not pred.well_formed():
        return False
    if ref.action_type is ActionType.TYPE_TEXT:
        return pred.text == ref.text
    return True


def planning_step_proximity(pred: ActionRecord, ref: ActionRecord,
                            ref_box: Optional[BoundingBox] = None,
                            params: FieldParams = FieldParams()) -> float:
    """Field value for grounding actions, binary action correctness otherwise."""
    if not ref.well_formed() and ref.action_type is ActionType.TYPE_TEXT:
        raise InvalidInputError("reference type_text action carries no text")
    if not _action_correct(pred, ref):
        return 0.0
    if ref.action_type in GROUNDING_ACTIONS:
        if ref_box is None:
            raise InvalidInputError("grounding reference action needs a target box")
        return field_value(pred.point, ref_box, params)
    return 1.0


def planning_verify(pred_steps: Sequence[ActionRecord], ref_steps: Sequence[ActionRecord],
                    ref_boxes: Sequence[Optional[BoundingBox]]) -> int:
    if not (len(pred_steps) == len(ref_steps) == len(ref_boxes)):
        raise InvalidInputError(
            f"length mismatch: {len(pred_steps)} predicted, {len(ref_steps)} reference, "
            f"{len(ref_boxes)} boxes")
    if not pred_steps:
        return 0
    for pred, ref, box in zip(pred_steps, ref_steps, ref_boxes):
        if not _action_correct(pred, ref):
            return 0
        if ref.action_type in GROUNDING_ACTIONS:
            if box is None:
                raise InvalidInputError("grounding reference action needs a target box")
            if not box.contains(pred.point):
                return 0
    return int(pred_steps[-1].terminal_goal_met == 1)
