"""Field-plane geometry: dimensions, named landmarks, regions, pitch version.

Field coordinates are millimeters with the origin at one corner, x along
the field length and y along the width. The 2D plan view is a pure scale
of field coordinates (``model_image_scale`` pixels per millimeter).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path

import yaml

from .errors import SchemaError

SCHEMA_VERSION = 1

SIDES = ("left", "right")


class LandmarkKind(str, Enum):
    T_JUNCTION = "T_junction"
    L_CORNER = "L_corner"
    PENALTY_AREA_CORNER = "penalty_area_corner"
    GOAL_AREA_CORNER = "goal_area_corner"
    CENTER_CIRCLE_TANGENT = "center_circle_tangent"


class PitchVersion(Enum):
    WITH_GOAL_AREAS = "with_goal_areas"
    WITHOUT_GOAL_AREAS = "without_goal_areas"
    UNKNOWN = "unknown"


@dataclass(frozen=True, order=True)
class LandmarkId:
    """A landmark class: line-pattern kind plus a label making it unique."""

    kind: LandmarkKind
    label: str

    def __str__(self) -> str:
        return f"{self.kind.value}.{self.label}"

    @classmethod
    def parse(cls, text: str) -> "LandmarkId":
        kind, sep, label = text.partition(".")
        if not sep or not label:
            raise SchemaError(f"bad landmark id {text!r}, expected '<kind>.<label>'")
        try:
            return cls(LandmarkKind(kind), label)
        except ValueError:
            raise SchemaError(f"unknown landmark kind {kind!r}") from None


@dataclass(frozen=True)
class Rect:
    """Axis-aligned closed rectangle in field millimeters."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 <= self.x1 and self.y0 <= self.y1):
            raise SchemaError(f"rectangle has negative extent: {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_rect(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and self.x1 >= other.x1 and self.y1 >= other.y1)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass
class FieldModel:
    length: float
    width: float
    penalty_area: dict[str, Rect]
    goal_mouth: dict[str, tuple[float, float]]
    landmarks: dict[LandmarkId, tuple[float, float]]
    goal_area: dict[str, Rect] | None = None
    model_image_scale: float = 0.1
    extra: dict = field(default_factory=dict)

    @property
    def pitch_version(self) -> PitchVersion:
        if self.goal_area is not None:
            return PitchVersion.WITH_GOAL_AREAS
        return PitchVersion.WITHOUT_GOAL_AREAS

    def landmark_point(self, landmark: LandmarkId) -> tuple[float, float]:
        return self.landmarks[landmark]

    def plan_size(self) -> tuple[int, int]:
        """Plan-view image size in pixels (width, height)."""
        s = self.model_image_scale
        return int(round(self.length * s)), int(round(self.width * s))


def _collinear(a, b, c, eps: float = 1e-9) -> bool:
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return abs(area2) <= eps


def _has_nondegenerate_quad(points: list[tuple[float, float]]) -> bool:
    # Looks for 4 points no 3 of which are collinear (homography solvability).
    for quad in combinations(points, 4):
        if not any(_collinear(*tri) for tri in combinations(quad, 3)):
            return True
    return False


def validate_field_model(model: FieldModel) -> FieldModel:
    if model.length <= 0 or model.width <= 0:
        raise SchemaError(f"degenerate field {model.length}x{model.width}")
    if model.model_image_scale <= 0:
        raise SchemaError("model_image_scale must be positive")
    bounds = Rect(0.0, 0.0, model.length, model.width)
    for side in SIDES:
        if side not in model.penalty_area:
            raise SchemaError(f"missing penalty area for side {side!r}")
        if not bounds.contains_rect(model.penalty_area[side]):
            raise SchemaError(f"penalty area ({side}) outside field bounds")
        if side not in model.goal_mouth:
            raise SchemaError(f"missing goal mouth for side {side!r}")
        y0, y1 = model.goal_mouth[side]
        if not (0 <= y0 < y1 <= model.width):
            raise SchemaError(f"goal mouth ({side}) outside field bounds")
    if model.goal_area is not None:
        for side in SIDES:
            if side not in model.goal_area:
                raise SchemaError(f"missing goal area for side {side!r}")
            if not bounds.contains_rect(model.goal_area[side]):
                raise SchemaError(f"goal area ({side}) outside field bounds")
            if not model.penalty_area[side].contains_rect(model.goal_area[side]):
                raise SchemaError(f"goal area ({side}) not inside penalty area")
    for lid, (x, y) in model.landmarks.items():
        if not bounds.contains(x, y):
            raise SchemaError(f"landmark {lid} at ({x}, {y}) outside field bounds")
    points = list(model.landmarks.values())
    if len(points) < 4 or not _has_nondegenerate_quad(points):
        raise SchemaError("need at least 4 landmarks with no 3 collinear")
    return model


def load_field_model(doc: dict) -> FieldModel:
    """Build a validated FieldModel from a field-description document."""
    if not isinstance(doc, dict):
        raise SchemaError("field description must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported field schema_version {version!r}")
    try:
        length = float(doc["length_mm"])
        width = float(doc["width_mm"])
        penalty = {s: Rect(*map(float, doc["penalty_area"][s])) for s in SIDES}
        mouth = {s: tuple(map(float, doc["goal_mouth"][s])) for s in SIDES}
        raw_landmarks = doc["landmarks"]
    except KeyError as exc:
        raise SchemaError(f"field description missing key {exc}") from None
    goal_area = None
    if doc.get("goal_area") is not None:
        goal_area = {s: Rect(*map(float, doc["goal_area"][s])) for s in SIDES}
    landmarks: dict[LandmarkId, tuple[float, float]] = {}
    for entry in raw_landmarks:
        try:
            lid = LandmarkId(LandmarkKind(entry["kind"]), str(entry["label"]))
            point = (float(entry["x"]), float(entry["y"]))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad landmark entry {entry!r}: {exc}") from None
        if lid in landmarks:
            raise SchemaError(f"duplicate landmark id {lid}")
        landmarks[lid] = point
    model = FieldModel(
        length=length,
        width=width,
        penalty_area=penalty,
        goal_mouth=mouth,
        landmarks=landmarks,
        goal_area=goal_area,
        model_image_scale=float(doc.get("model_image_scale", 0.1)),
        extra={k: doc[k] for k in ("center_circle_radius",) if k in doc},
    )
    return validate_field_model(model)


def serialize_field_model(model: FieldModel) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "length_mm": model.length,
        "width_mm": model.width,
        "model_image_scale": model.model_image_scale,
        "penalty_area": {s: model.penalty_area[s].as_list() for s in SIDES},
        "goal_mouth": {s: list(model.goal_mouth[s]) for s in SIDES},
        "goal_area": None,
        "landmarks": [
            {"kind": lid.kind.value, "label": lid.label, "x": x, "y": y}
            for lid, (x, y) in sorted(model.landmarks.items())
        ],
    }
    if model.goal_area is not None:
        doc["goal_area"] = {s: model.goal_area[s].as_list() for s in SIDES}
    doc.update(model.extra)
    return doc


def load_field_model_file(path: str | Path) -> FieldModel:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return load_field_model(doc)


def save_field_model_file(model: FieldModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(serialize_field_model(model), fh, sort_keys=True)


def default_field_document(
    length: float = 9000.0,
    width: float = 6000.0,
    penalty_depth: float = 1650.0,
    penalty_width: float = 4000.0,
    goal_area_depth: float = 600.0,
    goal_area_width: float = 2200.0,
    goal_mouth_width: float = 1500.0,
    center_circle_radius: float = 750.0,
    model_image_scale: float = 0.1,
    with_goal_areas: bool = True,
) -> dict:
    """SPL-style default layout with landmarks at all line intersections."""
    cy = width / 2.0
    py0, py1 = cy - penalty_width / 2.0, cy + penalty_width / 2.0
    gy0, gy1 = cy - goal_area_width / 2.0, cy + goal_area_width / 2.0
    my0, my1 = cy - goal_mouth_width / 2.0, cy + goal_mouth_width / 2.0
    half = length / 2.0

    landmarks = [
        ("L_corner", "left_bottom", 0.0, 0.0),
        ("L_corner", "left_top", 0.0, width),
        ("L_corner", "right_bottom", length, 0.0),
        ("L_corner", "right_top", length, width),
        ("T_junction", "halfway_bottom", half, 0.0),
        ("T_junction", "halfway_top", half, width),
        ("T_junction", "penalty_left_low", 0.0, py0),
        ("T_junction", "penalty_left_high", 0.0, py1),
        ("T_junction", "penalty_right_low", length, py0),
        ("T_junction", "penalty_right_high", length, py1),
        ("penalty_area_corner", "left_low", penalty_depth, py0),
        ("penalty_area_corner", "left_high", penalty_depth, py1),
        ("penalty_area_corner", "right_low", length - penalty_depth, py0),
        ("penalty_area_corner", "right_high", length - penalty_depth, py1),
        ("center_circle_tangent", "bottom", half, cy - center_circle_radius),
        ("center_circle_tangent", "top", half, cy + center_circle_radius),
    ]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "length_mm": length,
        "width_mm": width,
        "model_image_scale": model_image_scale,
        "penalty_area": {
            "left": [0.0, py0, penalty_depth, py1],
            "right": [length - penalty_depth, py0, length, py1],
        },
        "goal_mouth": {"left": [my0, my1], "right": [my0, my1]},
        "goal_area": None,
        "center_circle_radius": center_circle_radius,
        "landmarks": [
            {"kind": k, "label": lbl, "x": x, "y": y} for k, lbl, x, y in landmarks
        ],
    }
    if with_goal_areas:
        doc["goal_area"] = {
            "left": [0.0, gy0, goal_area_depth, gy1],
            "right": [length - goal_area_depth, gy0, length, gy1],
        }
        doc["landmarks"].extend(
            {"kind": k, "label": lbl, "x": x, "y": y}
            for k, lbl, x, y in [
                ("goal_area_corner", "left_low", goal_area_depth, gy0),
                ("goal_area_corner", "left_high", goal_area_depth, gy1),
                ("goal_area_corner", "right_low", length - goal_area_depth, gy0),
                ("goal_area_corner", "right_high", length - goal_area_depth, gy1),
            ]
        )
    return doc


def default_field_model(**kwargs) -> FieldModel:
    return load_field_model(default_field_document(**kwargs))


def infer_pitch_version(landmark_detections) -> PitchVersion:
    """Infer the field variant from the set of detected landmark classes.

    with_goal_areas needs at least 2 distinct goal-area-corner classes;
    penalty-area classes alone give without_goal_areas; anything less is
    unknown.
    """
    ids = set(landmark_detections)
    goal_corners = {l for l in ids if l.kind is LandmarkKind.GOAL_AREA_CORNER}
    penalty_corners = {l for l in ids if l.kind is LandmarkKind.PENALTY_AREA_CORNER}
    if len(goal_corners) >= 2:
        return PitchVersion.WITH_GOAL_AREAS
    if penalty_corners and not goal_corners:
        return PitchVersion.WITHOUT_GOAL_AREAS
    return PitchVersion.UNKNOWN


def point_in_region(model: FieldModel, p: tuple[float, float], region: str, side: str) -> bool:
    """Closed-rectangle membership test for penalty or goal areas."""
    if side not in SIDES:
        raise SchemaError(f"unknown side {side!r}")
    if region == "penalty_area":
        rect = model.penalty_area[side]
    elif region == "goal_area":
        if model.goal_area is None:
            raise SchemaError("goal_area not defined for this field model")
        rect = model.goal_area[side]
    else:
        raise SchemaError(f"unknown region {region!r}")
    return rect.contains(p[0], p[1])
