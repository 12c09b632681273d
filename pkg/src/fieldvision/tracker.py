"""Tracking by detection: motion + appearance association with track life
cycle management.

Each frame: predict all live tracks, associate per class (robots and ball
never mix) via a gated cost matrix and minimum-cost assignment, update
matched tracks, spawn tentative tracks for unmatched detections, retire
tracks that have coasted past max_age. Deleted ids are never reused; a
reappearing object gets a fresh id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import hungarian_assign
from .detections import BALL, ROBOT, Detection
from .errors import DataError, SchemaError
from .kalman import KalmanBoxState, kalman_init, kalman_predict, kalman_update

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
DELETED = "deleted"


@dataclass(frozen=True)
class TrackerParams:
    iou_threshold: float = 0.3
    max_age: int = 30
    min_hits: int = 3
    lambda_app: float = 0.5
    ema_alpha: float = 0.9
    fall_threshold: float = 1.0
    nsa_kappa: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.iou_threshold <= 1.0):
            raise SchemaError("iou_threshold outside [0, 1]")
        if not (0.0 <= self.lambda_app <= 1.0):
            raise SchemaError("lambda_app outside [0, 1]")
        if not (0.0 <= self.ema_alpha <= 1.0):
            raise SchemaError("ema_alpha outside [0, 1]")
        if self.max_age < 1 or self.min_hits < 1:
            raise SchemaError("max_age and min_hits must be >= 1")


def iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise DataError("iou needs positive-area boxes")
    x0 = max(ax, bx)
    y0 = max(ay, by)
    x1 = min(ax + aw, bx + bw)
    y1 = min(ay + ah, by + bh)
    inter = max(0.0, x1 - x0) * max(0.0, y1 - y0)
    return inter / (aw * ah + bw * bh - inter)


def detect_fall(bbox, threshold: float = 1.0) -> bool:
    """A box flatter than the threshold aspect (h/w) counts as fallen."""
    _, _, w, h = bbox
    return h / w < threshold


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DataError(f"feature dimensions differ: {a.shape} vs {b.shape}")
    return 1.0 - float(np.dot(a, b))


def ema_feature_update(e: np.ndarray, f: np.ndarray, alpha: float) -> tuple[np.ndarray, bool]:
    """Blend a track feature toward a detection feature, renormalized.

    Returns (feature, degenerate). When the blend cancels to zero norm the
    previous feature is kept and flagged.
    """
    if e.shape != f.shape:
        raise DataError(f"feature dimensions differ: {e.shape} vs {f.shape}")
    mixed = alpha * e + (1.0 - alpha) * f
    norm = float(np.linalg.norm(mixed))
    if norm < 1e-12:
        return e, True
    return mixed / norm, False


@dataclass
class HistoryEntry:
    frame: int
    bbox: tuple[float, float, float, float]
    status: str
    fallen: bool
    predicted: bool  # True when no detection matched this frame (coasting)


@dataclass
class Track:
    id: int
    kind: str
    kalman: KalmanBoxState
    hits: int = 1
    age_since_update: int = 0
    status: str = TENTATIVE
    feature: np.ndarray | None = None
    feature_degenerate: bool = False
    fallen: bool = False
    history: list[HistoryEntry] = field(default_factory=list)

    def bbox(self) -> tuple[float, float, float, float]:
        return self.kalman.bbox()


@dataclass
class StepEvents:
    created: list[int] = field(default_factory=list)
    confirmed: list[int] = field(default_factory=list)
    deleted: list[int] = field(default_factory=list)


def cost_matrix(tracks: list[Track], detections: list[Detection],
                params: TrackerParams) -> np.ndarray:
    """Gated association costs; +inf marks pairs failing the IoU gate."""
    out = np.full((len(tracks), len(detections)), np.inf)
    for i, t in enumerate(tracks):
        tb = t.bbox()
        for j, d in enumerate(detections):
            overlap = iou(tb, d.bbox)
            if overlap < params.iou_threshold:
                continue
            if t.feature is not None and d.embedding is not None:
                lam = params.lambda_app
                out[i, j] = ((1.0 - lam) * (1.0 - overlap)
                             + lam * cosine_distance(t.feature, d.embedding))
            else:
                out[i, j] = 1.0 - overlap
    return out


class Tracker:
    def __init__(self, params: TrackerParams | None = None):
        self.params = params or TrackerParams()
        self.live: list[Track] = []
        self.retired: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None

    def _new_track(self, frame: int, det: Detection) -> Track:
        track = Track(id=self._next_id, kind=det.kind,
                      kalman=kalman_init(det.bbox), feature=det.embedding)
        self._next_id += 1
        track.fallen = det.kind == ROBOT and detect_fall(
            det.bbox, self.params.fall_threshold)
        track.history.append(HistoryEntry(
            frame=frame, bbox=det.bbox, status=track.status,
            fallen=track.fallen, predicted=False))
        return track

    def step(self, frame: int, detections: list[Detection]) -> tuple[list[Track], StepEvents]:
        """Advance one frame; returns live tracks and life-cycle events."""
        if self._last_frame is not None and frame <= self._last_frame:
            raise DataError(f"frame {frame} does not advance past {self._last_frame}")
        self._last_frame = frame
        events = StepEvents()
        p = self.params

        for t in self.live:
            t.kalman = kalman_predict(t.kalman)

        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        for kind in (ROBOT, BALL):
            kind_tracks = [(i, t) for i, t in enumerate(self.live) if t.kind == kind]
            kind_dets = [(j, d) for j, d in enumerate(detections) if d.kind == kind]
            if not kind_tracks or not kind_dets:
                continue
            costs = cost_matrix([t for _, t in kind_tracks],
                                [d for _, d in kind_dets], p)
            matches, _, _ = hungarian_assign(costs)
            for ti, dj in matches:
                i, t = kind_tracks[ti]
                j, d = kind_dets[dj]
                matched_tracks.add(i)
                matched_dets.add(j)
                t.kalman = kalman_update(t.kalman, d.bbox,
                                         confidence=d.confidence,
                                         nsa_kappa=p.nsa_kappa)
                t.hits += 1
                t.age_since_update = 0
                if t.feature is not None and d.embedding is not None:
                    t.feature, degenerate = ema_feature_update(
                        t.feature, d.embedding, p.ema_alpha)
                    t.feature_degenerate = degenerate
                elif d.embedding is not None:
                    t.feature = d.embedding
                if t.kind == ROBOT:
                    t.fallen = detect_fall(d.bbox, p.fall_threshold)
                if t.status == TENTATIVE and t.hits >= p.min_hits:
                    t.status = CONFIRMED
                    events.confirmed.append(t.id)
                t.history.append(HistoryEntry(
                    frame=frame, bbox=t.bbox(), status=t.status,
                    fallen=t.fallen, predicted=False))

        survivors: list[Track] = []
        for i, t in enumerate(self.live):
            if i in matched_tracks:
                survivors.append(t)
                continue
            t.age_since_update += 1
            if t.age_since_update > p.max_age:
                t.status = DELETED
                events.deleted.append(t.id)
                self.retired.append(t)
                continue
            t.history.append(HistoryEntry(
                frame=frame, bbox=t.bbox(), status=t.status,
                fallen=t.fallen, predicted=True))
            survivors.append(t)
        self.live = survivors

        for j, d in enumerate(detections):
            if j in matched_dets or d.kind not in (ROBOT, BALL):
                continue
            t = self._new_track(frame, d)
            events.created.append(t.id)
            if t.hits >= p.min_hits:
                t.status = CONFIRMED
                t.history[-1].status = CONFIRMED
                events.confirmed.append(t.id)
            self.live.append(t)

        return list(self.live), events

    def all_tracks(self) -> list[Track]:
        return sorted(self.live + self.retired, key=lambda t: t.id)


def dump_tracks(tracks: list[Track], path: str | Path) -> None:
    """Track history CSV: frame,track_id,class,x,y,w,h,status,fallen."""
    rows = ["frame,track_id,class,x,y,w,h,status,fallen"]
    entries = []
    for t in tracks:
        for h in t.history:
            entries.append((h.frame, t.id, t.kind, h))
    entries.sort(key=lambda e: (e[0], e[1]))
    for frame, tid, kind, h in entries:
        x, y, w, hh = h.bbox
        rows.append(f"{frame},{tid},{kind},{x:.2f},{y:.2f},{w:.2f},{hh:.2f},"
                    f"{h.status},{int(h.fallen)}")
    Path(path).write_text("\n".join(rows) + "\n")
