"""Aggregate statistics over localized, identity-labeled tracks.

Heatmaps, per-entity trackmaps, pass/shot maps, ball possession, and
the scoreboard summary.  Everything here is a pure batch aggregation:
equal inputs produce identical grids, tallies, and rendered images.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from .errors import DataError
from .field_model import FieldModel
from .localization import FieldTrackPoint, RadarFrame, render_radar
from .rules import (
    FALL,
    GOAL,
    ILLEGAL_DEFENDER,
    PASS,
    SHOT,
    SHOT_ON_TARGET,
    GameEvent,
)

# Entity handle for the ball: track ids are dynamic, so the ball is
# addressed by name rather than by a reserved numeric slot.
BALL_ENTITY = "ball"

DEFAULT_CELL_MM = 100.0
DEFAULT_BLUR_SIGMA = 1.5
DEFAULT_GAP_BREAK = 10


def _entity_points(frames: list[RadarFrame],
                   entity: int | str) -> list[FieldTrackPoint]:
    out = []
    for fr in frames:
        if entity == BALL_ENTITY:
            b = fr.ball()
            if b is not None:
                out.append(b)
        else:
            for p in fr.points:
                if p.track_id == entity:
                    out.append(p)
    if not out:
        raise DataError(f"no localized points for entity {entity!r}")
    return out


# Heatmaps ---------------------------------------------------------------------

@dataclass
class HeatmapGrid:
    grid: np.ndarray  # rows x cols in [0, 1], row 0 at y = 0
    cell_mm: float
    extent: tuple[float, float]  # field length, width

    def argmax_cell(self) -> tuple[int, int]:
        return tuple(np.unravel_index(int(self.grid.argmax()),
                                      self.grid.shape))


def _histogram(points: list[FieldTrackPoint], model: FieldModel,
               cell_mm: float) -> np.ndarray:
    rows = int(math.ceil(model.width / cell_mm))
    cols = int(math.ceil(model.length / cell_mm))
    grid = np.zeros((rows, cols))
    for p in points:
        if not (0 <= p.x <= model.length and 0 <= p.y <= model.width):
            continue
        r = min(int(p.y // cell_mm), rows - 1)
        c = min(int(p.x // cell_mm), cols - 1)
        grid[r, c] += 1.0
    return grid


def heatmap(frames: list[RadarFrame], model: FieldModel,
            entity: int | str = BALL_ENTITY,
            cell_mm: float = DEFAULT_CELL_MM,
            blur_sigma: float = DEFAULT_BLUR_SIGMA) -> HeatmapGrid:
    """Occupancy density for one entity, max-normalized to [0, 1].

    2D histogram over cell_mm cells, Gaussian-blurred; sigma 0 keeps
    the raw histogram.  Points outside the field extent do not count.
    """
    if cell_mm <= 0:
        raise DataError("cell_mm must be positive")
    points = _entity_points(frames, entity)
    grid = _histogram(points, model, cell_mm)
    if blur_sigma > 0:
        grid = gaussian_filter(grid, sigma=blur_sigma, mode="constant")
    peak = grid.max()
    if peak > 0:
        grid = grid / peak
    return HeatmapGrid(grid=grid, cell_mm=cell_mm,
                       extent=(model.length, model.width))


def heatmap_to_csv(hm: HeatmapGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        for row in hm.grid:
            out.writerow([f"{v:.6f}" for v in row])


def render_heatmap(hm: HeatmapGrid, model: FieldModel) -> Image.Image:
    """Field plan with a red overlay proportional to occupancy."""
    base = render_radar(RadarFrame(frame=0), model).convert("RGB")
    arr = np.asarray(base).astype(np.float64)
    w, h = base.size
    rows, cols = hm.grid.shape
    ys = np.minimum((np.arange(h) * rows) // max(h, 1), rows - 1)
    xs = np.minimum((np.arange(w) * cols) // max(w, 1), cols - 1)
    weight = hm.grid[np.ix_(ys, xs)]
    overlay = np.zeros_like(arr)
    overlay[:, :, 0] = 255.0
    blended = arr * (1.0 - 0.75 * weight[:, :, None]) \
        + overlay * (0.75 * weight[:, :, None])
    return Image.fromarray(np.clip(np.rint(blended), 0, 255).astype(np.uint8))


# Trackmaps --------------------------------------------------------------------

def trackmap(frames: list[RadarFrame], entity: int | str,
             gap_break: int = DEFAULT_GAP_BREAK
             ) -> list[list[tuple[int, float, float]]]:
    """Per-frame (frame, x, y) polylines, split at frame gaps > gap_break.

    Pure pass-through of the localization output, no smoothing.
    """
    points = _entity_points(frames, entity)
    points.sort(key=lambda p: p.frame)
    polylines: list[list[tuple[int, float, float]]] = []
    current: list[tuple[int, float, float]] = []
    prev: int | None = None
    for p in points:
        if prev is not None and p.frame - prev > gap_break:
            polylines.append(current)
            current = []
        current.append((p.frame, p.x, p.y))
        prev = p.frame
    if current:
        polylines.append(current)
    return polylines


def render_trackmap(polylines: list[list[tuple[int, float, float]]],
                    model: FieldModel) -> Image.Image:
    img = render_radar(RadarFrame(frame=0), model).convert("RGB")
    draw = ImageDraw.Draw(img)
    s = model.model_image_scale
    for line in polylines:
        if len(line) == 1:
            _, x, y = line[0]
            draw.ellipse([x * s - 1, y * s - 1, x * s + 1, y * s + 1],
                         fill=(255, 255, 0))
            continue
        draw.line([(x * s, y * s) for _, x, y in line],
                  fill=(255, 255, 0), width=1)
    return img


# Possession -------------------------------------------------------------------

@dataclass
class PossessionTally:
    frames_team0: int = 0
    frames_team1: int = 0
    frames_unattributed: int = 0

    @property
    def attributed(self) -> int:
        return self.frames_team0 + self.frames_team1

    def percentages(self) -> tuple[float, float]:
        if self.attributed == 0:
            return (0.0, 0.0)
        return (100.0 * self.frames_team0 / self.attributed,
                100.0 * self.frames_team1 / self.attributed)

    def to_dict(self) -> dict:
        p0, p1 = self.percentages()
        return {"frames_team0": self.frames_team0,
                "frames_team1": self.frames_team1,
                "frames_unattributed": self.frames_unattributed,
                "pct_team0": p0, "pct_team1": p1}


def possession(frames: list[RadarFrame]) -> PossessionTally:
    """Nearest-team tally per ball-tracked frame.

    Strictly closer goes to team 0, otherwise team 1 (ties included).
    Frames where either team has no labeled robot are unattributed.
    """
    tally = PossessionTally()
    for fr in frames:
        ball = fr.ball()
        if ball is None:
            continue
        d0 = d1 = None
        for p in fr.robots():
            if p.team is None:
                continue
            d = math.hypot(p.x - ball.x, p.y - ball.y)
            if p.team == 0:
                d0 = d if d0 is None else min(d0, d)
            else:
                d1 = d if d1 is None else min(d1, d)
        if d0 is None or d1 is None:
            tally.frames_unattributed += 1
        elif d0 < d1:
            tally.frames_team0 += 1
        else:
            tally.frames_team1 += 1
    return tally


# Pass and shot map -------------------------------------------------------------

@dataclass(frozen=True)
class MapSegment:
    type: str
    team: int | None
    start: tuple[float, float]
    end: tuple[float, float]
    frame: int


_SEGMENT_COLORS = {
    PASS: (240, 240, 240),
    SHOT: (255, 220, 0),
    SHOT_ON_TARGET: (255, 140, 0),
    GOAL: (255, 40, 40),
}


def pass_shot_map(events: list[GameEvent],
                  ball: dict[int, tuple[float, float]],
                  window: int) -> list[MapSegment]:
    """Field segment per ball event over its detection window."""
    segments = []
    for e in sorted(events, key=lambda e: (e.frame, e.type)):
        if e.type not in _SEGMENT_COLORS:
            continue
        start = ball.get(e.frame)
        end = ball.get(e.frame + window)
        if start is None or end is None:
            continue
        segments.append(MapSegment(type=e.type, team=e.team,
                                   start=start, end=end, frame=e.frame))
    return segments


def render_pass_shot_map(segments: list[MapSegment],
                         model: FieldModel,
                         team: int | None = None) -> Image.Image:
    img = render_radar(RadarFrame(frame=0), model).convert("RGB")
    draw = ImageDraw.Draw(img)
    s = model.model_image_scale
    for seg in segments:
        if team is not None and seg.team != team:
            continue
        color = _SEGMENT_COLORS[seg.type]
        draw.line([(seg.start[0] * s, seg.start[1] * s),
                   (seg.end[0] * s, seg.end[1] * s)], fill=color, width=2)
        ex, ey = seg.end[0] * s, seg.end[1] * s
        draw.ellipse([ex - 2, ey - 2, ex + 2, ey + 2], fill=color)
    return img


# Scoreboard -------------------------------------------------------------------

@dataclass
class TeamStats:
    goals: int = 0
    attempts: int = 0
    on_target: int = 0
    passes: int = 0
    illegal_defender: int = 0
    falls: int = 0
    possession_pct: float = 0.0


@dataclass
class Scoreboard:
    teams: dict[int, TeamStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {str(t): vars(st) for t, st in sorted(self.teams.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        rows = [("", "team 0", "team 1")]
        t0 = self.teams.get(0, TeamStats())
        t1 = self.teams.get(1, TeamStats())
        for label, attr in (("goals", "goals"), ("attempts", "attempts"),
                            ("on target", "on_target"), ("passes", "passes"),
                            ("illegal defender", "illegal_defender"),
                            ("falls", "falls")):
            rows.append((label, str(getattr(t0, attr)),
                         str(getattr(t1, attr))))
        p0, p1 = t0.possession_pct, t1.possession_pct
        rows.append(("possession %", f"{p0:.1f}", f"{p1:.1f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
            for row in rows)


_EVENT_FIELD = {GOAL: "goals", SHOT: "attempts",
                SHOT_ON_TARGET: "on_target", PASS: "passes",
                ILLEGAL_DEFENDER: "illegal_defender", FALL: "falls"}


def scoreboard(events: list[GameEvent],
               tally: PossessionTally | None = None) -> Scoreboard:
    """Fold events into per-team counts; enforce the count hierarchy.

    goals <= attempts on target <= total attempts must hold per team;
    a violation means upstream event logic is inconsistent and raises
    instead of clamping.
    """
    board = Scoreboard(teams={0: TeamStats(), 1: TeamStats()})
    for e in events:
        if e.team is None or e.team not in board.teams:
            continue
        st = board.teams[e.team]
        attr = _EVENT_FIELD.get(e.type)
        if attr:
            setattr(st, attr, getattr(st, attr) + 1)
    for team, st in board.teams.items():
        if not st.goals <= st.on_target <= st.attempts:
            raise DataError(
                f"team {team}: inconsistent counts goals={st.goals} "
                f"on_target={st.on_target} attempts={st.attempts}")
    if tally is not None:
        p0, p1 = tally.percentages()
        board.teams[0].possession_pct = p0
        board.teams[1].possession_pct = p1
    return board
