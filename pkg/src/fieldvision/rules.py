"""Rule-based game events over field-localized trajectories.

Three detectors: penalty-area overcrowding (illegal defender), ball
displacement events (passes, shots, shots on target, goals), and fall
episodes from per-frame fallen flags.  Ball events slide a fixed
window over the trajectory; each event type then observes a refractory
period so one physical pass is not counted once per overlapping
window.  Setting refractory to 0 recovers the literal every-window
counting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError
from .field_model import FieldModel
from .localization import RadarFrame
from .tracker import Track

PASS = "pass"
SHOT = "shot"
SHOT_ON_TARGET = "shot_on_target"
GOAL = "goal"
FALL = "fall"
ILLEGAL_DEFENDER = "illegal_defender"

EVENT_TYPES = (PASS, SHOT, SHOT_ON_TARGET, GOAL, FALL, ILLEGAL_DEFENDER)

SIDES = ("left", "right")


@dataclass(frozen=True)
class RuleParams:
    """Thresholds for event detection.

    pass_min and pass_max are plan-view pixels (millimeters times the
    field model's image scale), matching the units the displacement
    bounds were tuned in.
    """

    pass_min: float = 50.0
    pass_max: float = 70.0
    window: int = 5
    refractory: int = 5
    illegal_count: int = 3

    def __post_init__(self) -> None:
        if not 0 < self.pass_min < self.pass_max:
            raise SchemaError("need 0 < pass_min < pass_max")
        if self.window < 1:
            raise SchemaError("window must be >= 1")
        if self.refractory < 0:
            raise SchemaError("refractory must be >= 0")
        if self.illegal_count < 1:
            raise SchemaError("illegal_count must be >= 1")


@dataclass(frozen=True)
class GameEvent:
    type: str
    frame: int
    team: int | None = None
    actor: int | None = None
    detail: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.type not in EVENT_TYPES:
            raise SchemaError(f"unknown event type {self.type!r}")

    def detail_dict(self) -> dict[str, str]:
        return dict(self.detail)


def _detail(**kv: object) -> tuple[tuple[str, str], ...]:
    return tuple((k, str(v)) for k, v in kv.items())


# Illegal defender ----------------------------------------------------------

class IllegalDefenderMonitor:
    """Rising-edge counter of penalty-area overcrowding.

    One foul per episode: the event fires when a team's robot count
    inside a penalty area first exceeds the threshold, and cannot fire
    again for that (team, side) until the count has dropped back.
    """

    def __init__(self, model: FieldModel, params: RuleParams | None = None):
        self.model = model
        self.params = params or RuleParams()
        self._active: set[tuple[int, str]] = set()

    def step(self, frame: int,
             robots: list[tuple[int, float, float]]) -> list[GameEvent]:
        """robots: (team, x mm, y mm) for every team-labeled robot."""
        events = []
        counts: dict[tuple[int, str], int] = {}
        for team, x, y in robots:
            for side in SIDES:
                if self.model.penalty_area[side].contains(x, y):
                    counts[(team, side)] = counts.get((team, side), 0) + 1
        over = {key for key, n in counts.items()
                if n > self.params.illegal_count}
        for team, side in sorted(over - self._active):
            events.append(GameEvent(
                type=ILLEGAL_DEFENDER, frame=frame, team=team,
                detail=_detail(side=side, count=counts[(team, side)])))
        self._active = over
        return events


def illegal_defender_events(frames: dict[int, list[tuple[int, float, float]]],
                            model: FieldModel,
                            params: RuleParams | None = None) -> list[GameEvent]:
    """Run the monitor over a whole frame-indexed robot stream."""
    monitor = IllegalDefenderMonitor(model, params)
    events: list[GameEvent] = []
    for frame in sorted(frames):
        events += monitor.step(frame, frames[frame])
    return events


# Ball events ---------------------------------------------------------------

def _beyond_goal_line(model: FieldModel, x: float, side: str) -> bool:
    return x < 0.0 if side == "left" else x > model.length


def _in_mouth(model: FieldModel, y: float, side: str) -> bool:
    y0, y1 = model.goal_mouth[side]
    return y0 <= y <= y1


def _nearest_team(robots: list[tuple[int, float, float]],
                  bx: float, by: float) -> int | None:
    best: tuple[float, int] | None = None
    for team, x, y in robots:
        d = math.hypot(x - bx, y - by)
        if best is None or d < best[0]:
            best = (d, team)
    return None if best is None else best[1]


def detect_ball_events(
    ball: dict[int, tuple[float, float]],
    model: FieldModel,
    params: RuleParams | None = None,
    robots: dict[int, list[tuple[int, float, float]]] | None = None,
) -> list[GameEvent]:
    """Scan the ball trajectory with a sliding window of fixed stride 1.

    ``ball`` maps frame index to field position in millimeters; frames
    missing either endpoint of a window are skipped.  Events are stamped
    at the window start and attributed to the team of the robot nearest
    the ball there (None when no robot data is supplied).
    """
    params = params or RuleParams()
    w = params.window
    scale = model.model_image_scale
    last_fired: dict[str, int] = {}
    events: list[GameEvent] = []

    def ready(kind: str, n: int) -> bool:
        last = last_fired.get(kind)
        return last is None or n > last + params.refractory

    def fire(kind: str, n: int, team: int | None, **detail: object) -> None:
        last_fired[kind] = n
        events.append(GameEvent(type=kind, frame=n, team=team,
                                detail=_detail(**detail) if detail else ()))

    for n in sorted(ball):
        if n + w not in ball:
            continue
        x0, y0 = ball[n]
        x1, y1 = ball[n + w]
        team = _nearest_team(robots.get(n, []), x0, y0) if robots else None

        dist_px = math.hypot(x1 - x0, y1 - y0) * scale
        if params.pass_min < dist_px < params.pass_max and ready(PASS, n):
            fire(PASS, n, team, distance_px=round(dist_px, 3))

        for side in SIDES:
            area = model.penalty_area[side]
            if (not area.contains(x0, y0) and area.contains(x1, y1)
                    and ready(SHOT, n)):
                fire(SHOT, n, team, side=side)
                if _in_mouth(model, y1, side) and ready(SHOT_ON_TARGET, n):
                    fire(SHOT_ON_TARGET, n, team, side=side)
            if (not _beyond_goal_line(model, x0, side)
                    and _beyond_goal_line(model, x1, side)
                    and _in_mouth(model, y1, side) and ready(GOAL, n)):
                fire(GOAL, n, team, side=side)
    return events


def ball_trajectory(frames: list[RadarFrame]) -> dict[int, tuple[float, float]]:
    out = {}
    for fr in frames:
        b = fr.ball()
        if b is not None:
            out[fr.frame] = (b.x, b.y)
    return out


def team_positions(frames: list[RadarFrame]
                   ) -> dict[int, list[tuple[int, float, float]]]:
    """Team-labeled robot positions per frame (unlabeled robots skipped)."""
    out: dict[int, list[tuple[int, float, float]]] = {}
    for fr in frames:
        rows = [(p.team, p.x, p.y) for p in fr.robots() if p.team is not None]
        if rows:
            out[fr.frame] = rows
    return out


# Falls ----------------------------------------------------------------------

FALL_DEBOUNCE = 3


def fall_events(tracks: list[Track],
                team_of: dict[int, int] | None = None) -> list[GameEvent]:
    """One event per fall episode, debounced over consecutive frames.

    The fallen flag must hold for FALL_DEBOUNCE consecutive frames; the
    event lands on the confirming frame (onset + 2).  A new episode
    requires the robot to come back upright first.  Frame gaps reset
    the streak.
    """
    events = []
    for t in tracks:
        streak = 0
        fired = False
        prev_frame: int | None = None
        for entry in sorted(t.history, key=lambda e: e.frame):
            contiguous = prev_frame is None or entry.frame == prev_frame + 1
            prev_frame = entry.frame
            if not entry.fallen:
                streak = 0
                fired = False
                continue
            streak = streak + 1 if contiguous or streak == 0 else 1
            if streak >= FALL_DEBOUNCE and not fired:
                team = team_of.get(t.id) if team_of else None
                events.append(GameEvent(type=FALL, frame=entry.frame,
                                        team=team, actor=t.id))
                fired = True
    events.sort(key=lambda e: (e.frame, e.actor or 0))
    return events


# Events CSV ------------------------------------------------------------------

_HEADER = ["frame", "type", "team", "actor", "detail"]


def write_events(events: list[GameEvent], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(_HEADER)
        for e in sorted(events, key=lambda e: (e.frame, e.type)):
            detail = ";".join(f"{k}={v}" for k, v in e.detail)
            out.writerow([e.frame, e.type,
                          "" if e.team is None else e.team,
                          "" if e.actor is None else e.actor, detail])


def parse_events(path: str | Path) -> list[GameEvent]:
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HEADER:
            raise SchemaError(f"bad events header: {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_HEADER):
                raise SchemaError(f"line {lineno}: expected {len(_HEADER)} "
                                  f"fields, got {len(row)}")
            frame_s, type_s, team_s, actor_s, detail_s = row
            fragments = [kv for kv in detail_s.split(";") if kv]
            if any("=" not in kv for kv in fragments):
                raise SchemaError(f"line {lineno}: bad detail {detail_s!r}")
            try:
                detail = tuple(tuple(kv.split("=", 1)) for kv in fragments)
                events.append(GameEvent(
                    type=type_s, frame=int(frame_s),
                    team=int(team_s) if team_s else None,
                    actor=int(actor_s) if actor_s else None,
                    detail=detail))
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    return events


def count_by_type(events: list[GameEvent]) -> dict[str, int]:
    counts = {t: 0 for t in EVENT_TYPES}
    for e in events:
        counts[e.type] += 1
    return counts
