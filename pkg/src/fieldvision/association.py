"""Matching track ids to team and jersey identities.

The referee-side controller logs self-reported robot positions with
team and jersey labels.  Over an early window of the game, per-track
mean positions are clustered (K-Means, deterministic seeding) and the
cluster centers matched to the controller's mean positions with the
assignment solver.  Tracks inherit the identity of their cluster when
they sit close enough to the claimed position; everything else is
left explicitly unassigned rather than forced.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import hungarian_assign
from .detections import ROBOT
from .errors import SchemaError
from .localization import RadarFrame, with_identity

log = logging.getLogger(__name__)

VALID_FLAGS = frozenset({"active", "penalized", "fallen"})

DEFAULT_WINDOW_FRAMES = 60
DEFAULT_REJECT_MM = 1000.0


@dataclass(frozen=True)
class GcRecord:
    frame: int
    team: int
    jersey: int
    x: float
    y: float
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.team not in (0, 1):
            raise SchemaError(f"team must be 0 or 1, got {self.team}")
        if self.jersey < 1:
            raise SchemaError(f"jersey must be >= 1, got {self.jersey}")
        bad = set(self.flags) - VALID_FLAGS
        if bad:
            raise SchemaError(f"unknown flags {sorted(bad)}")

    @property
    def identity(self) -> tuple[int, int]:
        return (self.team, self.jersey)


@dataclass(frozen=True)
class AssociationParams:
    window_frames: int = DEFAULT_WINDOW_FRAMES
    reject_threshold_mm: float = DEFAULT_REJECT_MM
    kmeans_iterations: int = 100

    def __post_init__(self) -> None:
        if self.window_frames < 1:
            raise SchemaError("window_frames must be >= 1")
        if self.reject_threshold_mm <= 0:
            raise SchemaError("reject_threshold_mm must be positive")


@dataclass
class IdentityMap:
    assignments: dict[int, tuple[int, int]] = field(default_factory=dict)
    unassigned: set[int] = field(default_factory=set)
    residual_mm: float = float("nan")
    window: tuple[int, int] = (0, 0)

    def team_of(self) -> dict[int, int]:
        return {tid: team for tid, (team, _) in self.assignments.items()}

    def to_dict(self) -> dict:
        return {
            "assignments": {str(tid): list(ident)
                            for tid, ident in sorted(self.assignments.items())},
            "unassigned": sorted(self.unassigned),
            "residual_mm": None if math.isnan(self.residual_mm)
            else self.residual_mm,
            "window": list(self.window),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IdentityMap":
        return cls(
            assignments={int(k): (int(v[0]), int(v[1]))
                         for k, v in doc["assignments"].items()},
            unassigned=set(doc["unassigned"]),
            residual_mm=(float("nan") if doc["residual_mm"] is None
                         else float(doc["residual_mm"])),
            window=tuple(doc["window"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "IdentityMap":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# Controller log I/O ---------------------------------------------------------

_GC_HEADER = ["frame", "team", "jersey", "x", "y", "flags"]


def parse_gc_log(path: str | Path) -> list[GcRecord]:
    """Read `frame,team,jersey,x,y,flags` rows; flags pipe-separated."""
    records: list[GcRecord] = []
    seen: set[tuple[int, int]] = set()
    current = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _GC_HEADER:
            raise SchemaError(f"bad controller log header: {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_GC_HEADER):
                raise SchemaError(f"line {lineno}: expected 6 fields")
            try:
                frame = int(row[0])
                rec = GcRecord(
                    frame=frame, team=int(row[1]), jersey=int(row[2]),
                    x=float(row[3]), y=float(row[4]),
                    flags=frozenset(f for f in row[5].split("|") if f))
            except (SchemaError, ValueError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            if current is None or frame != current:
                if current is not None and frame < current:
                    raise SchemaError(
                        f"line {lineno}: frame {frame} after {current}")
                current = frame
                seen = set()
            if rec.identity in seen:
                raise SchemaError(
                    f"line {lineno}: duplicate identity {rec.identity} "
                    f"in frame {frame}")
            seen.add(rec.identity)
            records.append(rec)
    return records


def write_gc_log(records: list[GcRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(_GC_HEADER)
        for r in records:
            out.writerow([r.frame, r.team, r.jersey, r.x, r.y,
                          "|".join(sorted(r.flags))])


# Association ------------------------------------------------------------------

def _track_means(frames: list[RadarFrame], lo: int, hi: int
                 ) -> dict[int, np.ndarray]:
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for fr in frames:
        if not lo <= fr.frame <= hi:
            continue
        for p in fr.robots():
            acc = sums.setdefault(p.track_id, np.zeros(2))
            acc += (p.x, p.y)
            counts[p.track_id] = counts.get(p.track_id, 0) + 1
    return {tid: sums[tid] / counts[tid] for tid in sums}


def _track_spans(frames: list[RadarFrame]) -> dict[int, tuple[int, int]]:
    spans: dict[int, tuple[int, int]] = {}
    for fr in frames:
        for p in fr.points:
            lo, hi = spans.get(p.track_id, (fr.frame, fr.frame))
            spans[p.track_id] = (min(lo, fr.frame), max(hi, fr.frame))
    return spans


def _gc_means(records: list[GcRecord], lo: int, hi: int
              ) -> dict[tuple[int, int], np.ndarray]:
    sums: dict[tuple[int, int], np.ndarray] = {}
    counts: dict[tuple[int, int], int] = {}
    for r in records:
        if not lo <= r.frame <= hi:
            continue
        acc = sums.setdefault(r.identity, np.zeros(2))
        acc += (r.x, r.y)
        counts[r.identity] = counts.get(r.identity, 0) + 1
    return {ident: sums[ident] / counts[ident] for ident in sums}


def _kmeans(points: np.ndarray, seeds: np.ndarray,
            iterations: int) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from fixed seeds; ties go to the lower index."""
    centers = seeds.copy()
    labels = np.full(len(points), -1, dtype=int)
    for _ in range(iterations):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :],
                               axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(len(centers)):
            members = points[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return centers, labels


def _seed_centers(track_means: np.ndarray,
                  gc_means: np.ndarray) -> np.ndarray:
    """K distinct track means, each the closest to one controller mean."""
    chosen: list[int] = []
    for g in gc_means:
        order = np.argsort(np.linalg.norm(track_means - g, axis=1),
                           kind="stable")
        pick = next((int(i) for i in order if int(i) not in chosen), None)
        if pick is None:
            break
        chosen.append(pick)
    return track_means[chosen]


def associate_identities(frames: list[RadarFrame], records: list[GcRecord],
                         params: AssociationParams | None = None
                         ) -> IdentityMap:
    """Assign (team, jersey) to track ids over the opening window."""
    params = params or AssociationParams()
    if not frames:
        raise SchemaError("no localized frames to associate")
    lo = min(fr.frame for fr in frames)
    hi = lo + params.window_frames - 1
    window = (lo, hi)

    track_means = _track_means(frames, lo, hi)
    gc_means = _gc_means(records, lo, hi)
    if not gc_means:
        log.warning("no controller data in frames %d..%d; "
                    "all tracks left unassigned", lo, hi)
        return IdentityMap(unassigned=set(track_means), window=window)
    if not track_means:
        raise SchemaError(f"no robot tracks in frames {lo}..{hi}")

    tids = sorted(track_means)
    pts = np.array([track_means[t] for t in tids])
    idents = sorted(gc_means)
    gc_pts = np.array([gc_means[i] for i in idents])

    k = min(len(idents), len(tids))
    seeds = _seed_centers(pts, gc_pts[:k])
    centers, labels = _kmeans(pts, seeds, params.kmeans_iterations)

    # cluster centers -> controller identities, minimum total distance
    cost = np.linalg.norm(centers[:, None, :] - gc_pts[None, :, :], axis=2)
    matches, _, _ = hungarian_assign(cost)
    cluster_ident = {r: idents[c] for r, c in matches}
    residual = float(np.mean([cost[r, c] for r, c in matches]))

    assignments: dict[int, tuple[int, int]] = {}
    unassigned: set[int] = set()
    dist_to_claim: dict[int, float] = {}
    for i, tid in enumerate(tids):
        ident = cluster_ident.get(int(labels[i]))
        if ident is None:
            unassigned.add(tid)
            continue
        d = float(np.linalg.norm(pts[i] - gc_means[ident]))
        if d > params.reject_threshold_mm:
            unassigned.add(tid)
            continue
        assignments[tid] = ident
        dist_to_claim[tid] = d

    _enforce_injectivity(assignments, unassigned, dist_to_claim,
                         _track_spans(frames))
    return IdentityMap(assignments=assignments, unassigned=unassigned,
                       residual_mm=residual, window=window)


def _enforce_injectivity(assignments: dict[int, tuple[int, int]],
                         unassigned: set[int],
                         dist_to_claim: dict[int, float],
                         spans: dict[int, tuple[int, int]]) -> None:
    """Co-alive tracks may not share an identity; the closest claim wins."""
    by_ident: dict[tuple[int, int], list[int]] = {}
    for tid, ident in assignments.items():
        by_ident.setdefault(ident, []).append(tid)
    for ident, tids in by_ident.items():
        if len(tids) < 2:
            continue
        tids.sort(key=lambda t: (dist_to_claim[t], t))
        kept: list[int] = []
        for tid in tids:
            lo, hi = spans[tid]
            clash = any(not (hi < spans[o][0] or spans[o][1] < lo)
                        for o in kept)
            if clash:
                del assignments[tid]
                unassigned.add(tid)
            else:
                kept.append(tid)


# Propagation -------------------------------------------------------------------

def propagate_identities(identity_map: IdentityMap, frames: list[RadarFrame],
                         records: list[GcRecord] | None = None,
                         params: AssociationParams | None = None
                         ) -> tuple[list[RadarFrame], IdentityMap]:
    """Stamp identities onto every frame; adopt late-born tracks.

    Tracks first seen after the association window take the nearest
    controller identity that no living assigned track holds at their
    birth frame.  Without controller data they stay unassigned.
    """
    params = params or AssociationParams()
    records = records or []
    spans = _track_spans(frames)
    assignments = dict(identity_map.assignments)
    unassigned = set(identity_map.unassigned)

    gc_by_frame: dict[int, list[GcRecord]] = {}
    for r in records:
        gc_by_frame.setdefault(r.frame, []).append(r)
    gc_frames = sorted(gc_by_frame)

    births = sorted((spans[tid][0], tid) for tid in spans
                    if tid not in assignments and tid not in unassigned)
    for birth, tid in births:
        if not gc_frames:
            unassigned.add(tid)
            continue
        # nearest logged frame stands in for the birth frame
        nearest = min(gc_frames, key=lambda f: (abs(f - birth), f))
        first = _first_position(frames, tid, birth)
        if first is None:
            unassigned.add(tid)
            continue
        claimed = {assignments[o] for o in assignments
                   if spans[o][0] <= birth <= spans[o][1]}
        best: tuple[float, GcRecord] | None = None
        for rec in gc_by_frame[nearest]:
            if rec.identity in claimed:
                continue
            d = math.hypot(rec.x - first[0], rec.y - first[1])
            if best is None or d < best[0]:
                best = (d, rec)
        if best is None or best[0] > params.reject_threshold_mm:
            unassigned.add(tid)
        else:
            assignments[tid] = best[1].identity

    out_map = IdentityMap(assignments=assignments, unassigned=unassigned,
                          residual_mm=identity_map.residual_mm,
                          window=identity_map.window)
    annotated = []
    for fr in frames:
        pts = []
        for p in fr.points:
            ident = assignments.get(p.track_id)
            if ident is not None and p.kind == ROBOT:
                pts.append(with_identity(p, team=ident[0], jersey=ident[1]))
            else:
                pts.append(p)
        annotated.append(RadarFrame(frame=fr.frame, points=pts))
    return annotated, out_map


def _first_position(frames: list[RadarFrame], tid: int,
                    birth: int) -> tuple[float, float] | None:
    for fr in frames:
        if fr.frame != birth:
            continue
        for p in fr.points:
            if p.track_id == tid:
                return (p.x, p.y)
    return None
