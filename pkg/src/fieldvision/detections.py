"""Detection stream ingest and filtering.

Detections arrive as CSV with header ``frame,class,x,y,w,h,conf`` plus
optional embedding columns ``e0..e{d-1}`` (all rows carry them or none).
Class is ``robot``, ``ball``, or ``landmark:<kind>.<label>``. Frames must
be non-decreasing. Writing is canonical: stable column order and shortest
round-trip float formatting, so write∘parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, SchemaError
from .field_model import LandmarkId

ROBOT = "robot"
BALL = "ball"
LANDMARK = "landmark"

_BASE_COLUMNS = ["frame", "class", "x", "y", "w", "h", "conf"]


@dataclass
class Detection:
    frame: int
    kind: str
    bbox: tuple[float, float, float, float]  # x, y, w, h, top-left origin
    confidence: float
    landmark: LandmarkId | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (ROBOT, BALL, LANDMARK):
            raise SchemaError(f"unknown detection class {self.kind!r}")
        if self.kind == LANDMARK and self.landmark is None:
            raise SchemaError("landmark detection without a landmark id")
        x, y, w, h = self.bbox
        if not (w > 0 and h > 0):
            raise SchemaError(f"bbox must have positive size, got w={w} h={h}")
        if not (0.0 <= self.confidence <= 1.0):
            raise SchemaError(f"confidence {self.confidence} outside [0, 1]")
        if self.embedding is not None:
            e = np.asarray(self.embedding, dtype=float)
            norm = float(np.linalg.norm(e))
            if abs(norm - 1.0) > 1e-6:
                raise SchemaError(f"embedding norm {norm} is not 1")
            self.embedding = e

    def class_label(self) -> str:
        if self.kind == LANDMARK:
            return f"{LANDMARK}:{self.landmark}"
        return self.kind

    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        if (self.frame, self.kind, self.bbox, self.confidence, self.landmark) != (
                other.frame, other.kind, other.bbox, other.confidence, other.landmark):
            return False
        if (self.embedding is None) != (other.embedding is None):
            return False
        return self.embedding is None or np.array_equal(self.embedding, other.embedding)


@dataclass
class DetectionStream:
    detections: list[Detection]
    image_size: tuple[int, int] | None = None
    fps: float | None = None
    embedding_dim: int | None = None

    def __post_init__(self):
        last = None
        for d in self.detections:
            if last is not None and d.frame < last:
                raise SchemaError(f"frame {d.frame} after frame {last}: not monotone")
            last = d.frame
            has = d.embedding is not None
            if self.embedding_dim is None and has:
                raise SchemaError("stream has no embedding_dim but rows carry embeddings")
            if self.embedding_dim is not None:
                if not has:
                    raise SchemaError("embedding_dim set but a row has no embedding")
                if len(d.embedding) != self.embedding_dim:
                    raise SchemaError(
                        f"embedding dim {len(d.embedding)} != {self.embedding_dim}")

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def by_frame(self) -> dict[int, list[Detection]]:
        out: dict[int, list[Detection]] = {}
        for d in self.detections:
            out.setdefault(d.frame, []).append(d)
        return out

    def frame_range(self) -> tuple[int, int] | None:
        if not self.detections:
            return None
        return self.detections[0].frame, self.detections[-1].frame


def _parse_class(token: str, line: int) -> tuple[str, LandmarkId | None]:
    if token in (ROBOT, BALL):
        return token, None
    if token.startswith(LANDMARK + ":"):
        try:
            return LANDMARK, LandmarkId.parse(token[len(LANDMARK) + 1:])
        except SchemaError as exc:
            raise SchemaError(f"line {line}: {exc}") from None
    raise SchemaError(f"line {line}: unknown class {token!r}")


def parse_detections(source: str | Path | Iterable[str]) -> DetectionStream:
    """Parse the detection CSV; malformed rows are rejected by line number."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    meta: dict[str, str] = {}
    rows: list[tuple[int, str]] = []
    for i, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        if raw.startswith("#"):
            for part in raw[1:].split():
                if "=" in part:
                    key, _, value = part.partition("=")
                    meta[key] = value
            continue
        rows.append((i, raw))
    if not rows:
        raise SchemaError("missing header row")
    header_line, header = rows[0]
    cols = header.split(",")
    if cols[:7] != _BASE_COLUMNS:
        raise SchemaError(
            f"line {header_line}: header must start with {','.join(_BASE_COLUMNS)}")
    embed_cols = cols[7:]
    dim = len(embed_cols) or None
    if embed_cols != [f"e{i}" for i in range(len(embed_cols))]:
        raise SchemaError(f"line {header_line}: embedding columns must be e0..e{{d-1}}")

    detections: list[Detection] = []
    for line, raw in rows[1:]:
        parts = raw.split(",")
        if len(parts) != len(cols):
            raise SchemaError(f"line {line}: expected {len(cols)} fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            kind, lid = _parse_class(parts[1], line)
            bbox = tuple(float(v) for v in parts[2:6])
            conf = float(parts[6])
            emb = np.array([float(v) for v in parts[7:]], dtype=float) if dim else None
        except ValueError as exc:
            raise SchemaError(f"line {line}: {exc}") from None
        try:
            detections.append(Detection(frame=frame, kind=kind, bbox=bbox,
                                        confidence=conf, landmark=lid, embedding=emb))
        except SchemaError as exc:
            raise SchemaError(f"line {line}: {exc}") from None

    image_size = None
    if "image_size" in meta:
        try:
            w, h = meta["image_size"].split("x")
            image_size = (int(w), int(h))
        except ValueError:
            raise SchemaError(f"bad image_size metadata {meta['image_size']!r}") from None
    fps = float(meta["fps"]) if "fps" in meta else None
    try:
        return DetectionStream(detections, image_size=image_size, fps=fps,
                               embedding_dim=dim)
    except SchemaError as exc:
        raise SchemaError(str(exc)) from None


def _fmt(v: float) -> str:
    # shortest round-trip decimal; integers lose the trailing ".0"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_detections(stream: DetectionStream, path: str | Path) -> None:
    """Canonical CSV emission (see module docstring)."""
    out = ["# detections schema_version=1"]
    if stream.image_size is not None:
        out[0] += f" image_size={stream.image_size[0]}x{stream.image_size[1]}"
    if stream.fps is not None:
        out[0] += f" fps={_fmt(stream.fps)}"
    cols = list(_BASE_COLUMNS)
    if stream.embedding_dim:
        cols += [f"e{i}" for i in range(stream.embedding_dim)]
    out.append(",".join(cols))
    for d in stream:
        row = [str(d.frame), d.class_label()]
        row += [_fmt(v) for v in d.bbox]
        row.append(_fmt(d.confidence))
        if d.embedding is not None:
            row += [_fmt(v) for v in d.embedding]
        out.append(",".join(row))
    Path(path).write_text("\n".join(out) + "\n")


def _foreground_fraction(bbox, mask: np.ndarray) -> float:
    x, y, w, h = bbox
    mh, mw = mask.shape
    x0 = max(int(np.floor(x)), 0)
    y0 = max(int(np.floor(y)), 0)
    x1 = min(int(np.ceil(x + w)), mw)
    y1 = min(int(np.ceil(y + h)), mh)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    region = mask[y0:y1, x0:x1]
    return float((region > 0).mean())


def filter_detections(
    stream: DetectionStream,
    min_confidence: float = 0.0,
    masks: Mapping[int, np.ndarray] | None = None,
    min_foreground: float = 0.2,
) -> DetectionStream:
    """Confidence gate plus optional foreground-overlap gate.

    With masks supplied, a detection survives only when at least
    ``min_foreground`` of its (pixel-rasterized) box lies on foreground.
    Landmarks are exempt from the mask gate: field lines are background by
    definition. Order-preserving and idempotent.
    """
    kept = []
    for d in stream:
        if d.confidence < min_confidence:
            continue
        if masks is not None and d.kind != LANDMARK:
            mask = masks.get(d.frame)
            if mask is not None:
                if stream.image_size is not None:
                    if (mask.shape[1], mask.shape[0]) != stream.image_size:
                        raise DataError(
                            f"mask {mask.shape} does not match image size "
                            f"{stream.image_size}")
                if _foreground_fraction(d.bbox, mask) < min_foreground:
                    continue
        kept.append(d)
    return DetectionStream(kept, image_size=stream.image_size, fps=stream.fps,
                           embedding_dim=stream.embedding_dim)


def split_by_kind(frame_detections: list[Detection]) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {ROBOT: [], BALL: [], LANDMARK: []}
    for d in frame_detections:
        out[d.kind].append(d)
    return out
