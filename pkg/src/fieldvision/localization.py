"""Projecting tracked boxes onto the field plane.

Tracked image boxes become field-coordinate points by anchoring each
box to its ground-contact point, undistorting that point through the
camera profile, and mapping it through the plan homography.  Field
positions are millimeters with the origin at one field corner.  A
radar frame is the per-frame snapshot of those points, renderable as
a small plan-view image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image, ImageDraw

from .camera import CameraProfile, undistort_pixels
from .detections import BALL, ROBOT
from .errors import DataError
from .field_model import FieldModel
from .homography import project_points
from .tracker import CONFIRMED, Track

DEFAULT_FIELD_MARGIN_MM = 500.0


@dataclass(frozen=True)
class FieldTrackPoint:
    frame: int
    track_id: int
    kind: str
    x: float  # field mm
    y: float
    team: int | None = None
    jersey: int | None = None
    fallen: bool = False
    out_of_field: bool = False


@dataclass
class RadarFrame:
    frame: int
    points: list[FieldTrackPoint] = field(default_factory=list)

    def __post_init__(self) -> None:
        balls = [p for p in self.points if p.kind == BALL]
        if len(balls) > 1:
            raise DataError(
                f"frame {self.frame}: {len(balls)} ball points, expected at most 1")

    def ball(self) -> FieldTrackPoint | None:
        for p in self.points:
            if p.kind == BALL:
                return p
        return None

    def robots(self) -> list[FieldTrackPoint]:
        return [p for p in self.points if p.kind == ROBOT]


def anchor_point(bbox: tuple[float, float, float, float], kind: str = ROBOT,
                 fallen: bool = False) -> tuple[float, float]:
    """Image point where an object touches the ground.

    Upright robots anchor at the bottom-center of the box; the ball and
    fallen robots (no meaningful bottom edge) anchor at the box center.
    """
    x, y, w, h = bbox
    if w <= 0 or h <= 0:
        raise DataError(f"bbox must have positive area, got {bbox}")
    if kind == ROBOT and not fallen:
        return (x + w / 2.0, y + h)
    return (x + w / 2.0, y + h / 2.0)


@dataclass(frozen=True)
class TrackSnapshot:
    """One track's state at a single frame, as localization consumes it."""

    track_id: int
    kind: str
    bbox: tuple[float, float, float, float]
    fallen: bool = False
    hits: int = 0


def _in_field(model: FieldModel, x: float, y: float, margin: float) -> bool:
    return (-margin <= x <= model.length + margin
            and -margin <= y <= model.width + margin)


def localize_frame(frame: int, snapshots: list[TrackSnapshot], h: np.ndarray,
                   model: FieldModel, profile: CameraProfile | None = None,
                   margin: float = DEFAULT_FIELD_MARGIN_MM) -> RadarFrame:
    """Project one frame's tracks into field coordinates.

    ``h`` maps undistorted image pixels to plan-view pixels; a camera
    profile, when given, undistorts anchors first.  Points landing
    outside the field bounds plus ``margin`` are flagged, never dropped.
    When several ball tracks coexist, the one with the most hits wins
    (lowest id on ties) so the radar frame keeps a single ball.
    """
    if not snapshots:
        return RadarFrame(frame=frame)
    anchors = np.array([anchor_point(s.bbox, s.kind, s.fallen)
                        for s in snapshots], dtype=float)
    if profile is not None:
        anchors = undistort_pixels(profile, anchors)
    plan = project_points(np.asarray(h, dtype=float), anchors)
    mm = plan / model.model_image_scale

    points: list[FieldTrackPoint] = []
    for s, (fx, fy) in zip(snapshots, mm):
        if not np.isfinite(fx) or not np.isfinite(fy):
            raise DataError(
                f"frame {frame}: track {s.track_id} projects to a "
                "non-finite field position")
        points.append(FieldTrackPoint(
            frame=frame, track_id=s.track_id, kind=s.kind,
            x=float(fx), y=float(fy), fallen=s.fallen,
            out_of_field=not _in_field(model, float(fx), float(fy), margin)))

    balls = [(s, p) for s, p in zip(snapshots, points) if p.kind == BALL]
    if len(balls) > 1:
        best = max(balls, key=lambda sp: (sp[0].hits, -sp[0].track_id))
        drop = {id(p) for _, p in balls if p is not best[1]}
        points = [p for p in points if id(p) not in drop]
    return RadarFrame(frame=frame, points=points)


def snapshots_from_tracks(tracks: list[Track], frame: int,
                          confirmed_only: bool = True) -> list[TrackSnapshot]:
    """Collect per-track state at one frame from tracker history."""
    out = []
    for t in tracks:
        for entry in t.history:
            if entry.frame != frame:
                continue
            if confirmed_only and entry.status != CONFIRMED:
                break
            out.append(TrackSnapshot(track_id=t.id, kind=t.kind,
                                     bbox=entry.bbox, fallen=entry.fallen,
                                     hits=t.hits))
            break
    return out


def localize_tracks(tracks: list[Track], h: np.ndarray, model: FieldModel,
                    profile: CameraProfile | None = None,
                    margin: float = DEFAULT_FIELD_MARGIN_MM,
                    confirmed_only: bool = True) -> list[RadarFrame]:
    """Localize a whole tracker run, one RadarFrame per observed frame."""
    frames = sorted({e.frame for t in tracks for e in t.history})
    return [localize_frame(f, snapshots_from_tracks(tracks, f, confirmed_only),
                           h, model, profile, margin) for f in frames]


def with_identity(point: FieldTrackPoint, team: int | None,
                  jersey: int | None) -> FieldTrackPoint:
    return replace(point, team=team, jersey=jersey)


# Plan-view rendering ------------------------------------------------------

_GRASS = (20, 110, 40)
_LINE = (255, 255, 255)
_TEAM_COLORS = {0: (220, 40, 40), 1: (40, 80, 220)}
_UNKNOWN = (150, 150, 150)
_BALL_COLOR = (255, 160, 0)


def _scaled(model: FieldModel, x: float, y: float) -> tuple[float, float]:
    s = model.model_image_scale
    return (x * s, y * s)


def render_radar(radar: RadarFrame, model: FieldModel,
                 marker_radius: int = 4) -> Image.Image:
    """Rasterize field lines and one frame's points at the plan scale.

    Purely deterministic: equal inputs yield identical images.
    """
    w, h = model.plan_size()
    img = Image.new("RGB", (w, h), _GRASS)
    draw = ImageDraw.Draw(img)
    s = model.model_image_scale

    draw.rectangle([0, 0, w - 1, h - 1], outline=_LINE)
    cx = model.length / 2.0 * s
    draw.line([(cx, 0), (cx, h - 1)], fill=_LINE)
    # center circle radius from the field model when present, else 1/8 width
    r = model.extra.get("center_circle_radius", model.width / 8.0) * s
    draw.ellipse([cx - r, h / 2 - r, cx + r, h / 2 + r], outline=_LINE)
    areas = list(model.penalty_area.values())
    if model.goal_area:
        areas += list(model.goal_area.values())
    for area in areas:
        x0, y0 = _scaled(model, area.x0, area.y0)
        x1, y1 = _scaled(model, area.x1, area.y1)
        draw.rectangle([x0, y0, x1, y1], outline=_LINE)

    for p in sorted(radar.points, key=lambda q: q.track_id):
        px, py = _scaled(model, p.x, p.y)
        if p.kind == BALL:
            color = _BALL_COLOR
            rad = max(2, marker_radius - 1)
        else:
            color = _TEAM_COLORS.get(p.team, _UNKNOWN)
            rad = marker_radius
        box = [px - rad, py - rad, px + rad, py + rad]
        if p.fallen:
            draw.rectangle(box, fill=color, outline=_LINE)
        else:
            draw.ellipse(box, fill=color, outline=_LINE)
    return img
