"""Deterministic synthetic scenes: the test oracle for the whole pipeline.

A scene scripts rectangular objects moving linearly over a static textured
background, with optional occlusion intervals, a flickering region (two
colors alternating on a fixed period, still background by definition),
detector dropout, center jitter, and per-identity appearance embeddings.
All randomness is pre-drawn at construction from one seed, so every
product (frames, masks, detections, ground truth) is bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detections import BALL, ROBOT, Detection, DetectionStream
from .errors import SchemaError


@dataclass
class SceneObject:
    label: str
    kind: str  # robot | ball
    start: tuple[float, float]       # center at frame 0, px
    velocity: tuple[float, float]    # px per frame
    size: tuple[float, float]        # w, h px
    color: tuple[int, int, int] = (200, 60, 60)
    confidence: float = 0.95
    birth: int = 0
    death: int | None = None         # exclusive; None = whole scene
    occlusions: list[tuple[int, int]] = field(default_factory=list)  # [start, end)

    def present(self, frame: int, n_frames: int) -> bool:
        death = self.death if self.death is not None else n_frames
        if not (self.birth <= frame < death):
            return False
        return not self.occluded(frame)

    def occluded(self, frame: int) -> bool:
        return any(s <= frame < e for s, e in self.occlusions)

    def center_at(self, frame: int) -> tuple[float, float]:
        return (self.start[0] + self.velocity[0] * frame,
                self.start[1] + self.velocity[1] * frame)

    def bbox_at(self, frame: int) -> tuple[float, float, float, float]:
        cx, cy = self.center_at(frame)
        w, h = self.size
        return (cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass
class FlickerRegion:
    rect: tuple[int, int, int, int]            # x, y, w, h px
    colors: tuple[tuple[int, int, int], tuple[int, int, int]]
    period: int = 10                           # frames per phase

    def color_at(self, frame: int) -> tuple[int, int, int]:
        return self.colors[(frame // self.period) % 2]


@dataclass
class TruthBox:
    label: str
    kind: str
    bbox: tuple[float, float, float, float]
    occluded: bool


class SyntheticScene:
    def __init__(
        self,
        objects: list[SceneObject],
        n_frames: int,
        image_size: tuple[int, int] = (320, 240),
        seed: int = 0,
        dropout: float = 0.0,
        jitter_sigma: float = 0.0,
        embedding_dim: int | None = None,
        embedding_noise: float = 0.0,
        flicker: FlickerRegion | None = None,
        background_seed_shade: int = 110,
    ):
        labels = [o.label for o in objects]
        if len(set(labels)) != len(labels):
            raise SchemaError(f"duplicate object labels in scene: {labels}")
        self.objects = objects
        self.n_frames = n_frames
        self.image_size = image_size
        self.dropout = dropout
        self.jitter_sigma = jitter_sigma
        self.embedding_dim = embedding_dim
        self.flicker = flicker

        w, h = image_size
        children = np.random.SeedSequence(seed).spawn(1 + 4 * len(objects))
        bg_rng = np.random.default_rng(children[0])
        # mild texture around a base shade keeps blobs clearly off-background
        self.background = np.clip(
            bg_rng.integers(-40, 41, size=(h, w, 3))
            + background_seed_shade, 0, 255).astype(np.uint8)

        self._dropout_keep: list[np.ndarray] = []
        self._jitter: list[np.ndarray] = []
        self._embeddings: list[np.ndarray | None] = []
        for i in range(len(objects)):
            drop_rng = np.random.default_rng(children[1 + 4 * i])
            jit_rng = np.random.default_rng(children[2 + 4 * i])
            base_rng = np.random.default_rng(children[3 + 4 * i])
            noise_rng = np.random.default_rng(children[4 + 4 * i])
            self._dropout_keep.append(drop_rng.random(n_frames) >= dropout)
            self._jitter.append(jit_rng.normal(0.0, jitter_sigma, size=(n_frames, 2))
                                if jitter_sigma > 0 else np.zeros((n_frames, 2)))
            if embedding_dim:
                base = base_rng.standard_normal(embedding_dim)
                base /= np.linalg.norm(base)
                noisy = base[None, :] + (
                    noise_rng.normal(0.0, embedding_noise, size=(n_frames, embedding_dim))
                    if embedding_noise > 0 else 0.0)
                norms = np.linalg.norm(noisy, axis=1, keepdims=True)
                self._embeddings.append(noisy / norms)
            else:
                self._embeddings.append(None)

    # ------------------------------------------------------------------
    # rendering

    def _int_rect(self, bbox) -> tuple[int, int, int, int]:
        x, y, bw, bh = bbox
        w, h = self.image_size
        x0 = max(int(round(x)), 0)
        y0 = max(int(round(y)), 0)
        x1 = min(int(round(x + bw)), w)
        y1 = min(int(round(y + bh)), h)
        return x0, y0, x1, y1

    def render_frame(self, frame: int) -> np.ndarray:
        img = self.background.copy()
        if self.flicker is not None:
            fx, fy, fw, fh = self.flicker.rect
            img[fy:fy + fh, fx:fx + fw] = self.flicker.color_at(frame)
        for obj in self.objects:
            if not obj.present(frame, self.n_frames):
                continue
            x0, y0, x1, y1 = self._int_rect(obj.bbox_at(frame))
            if x1 > x0 and y1 > y0:
                img[y0:y1, x0:x1] = obj.color
        return img

    def truth_mask(self, frame: int) -> np.ndarray:
        w, h = self.image_size
        mask = np.zeros((h, w), dtype=np.uint8)
        for obj in self.objects:
            if not obj.present(frame, self.n_frames):
                continue
            x0, y0, x1, y1 = self._int_rect(obj.bbox_at(frame))
            if x1 > x0 and y1 > y0:
                mask[y0:y1, x0:x1] = 255
        return mask

    def write_frames(self, directory: str | Path) -> list[Path]:
        from PIL import Image

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i in range(self.n_frames):
            p = directory / f"{i:06d}.png"
            Image.fromarray(self.render_frame(i)).save(p)
            paths.append(p)
        return paths

    # ------------------------------------------------------------------
    # detector simulation and ground truth

    def detections(self) -> DetectionStream:
        rows: list[Detection] = []
        for frame in range(self.n_frames):
            for i, obj in enumerate(self.objects):
                if not obj.present(frame, self.n_frames):
                    continue
                if not self._dropout_keep[i][frame]:
                    continue
                cx, cy = obj.center_at(frame)
                jx, jy = self._jitter[i][frame]
                w, h = obj.size
                emb = None
                if self._embeddings[i] is not None:
                    emb = self._embeddings[i][frame].copy()
                rows.append(Detection(
                    frame=frame, kind=obj.kind,
                    bbox=(cx + jx - w / 2.0, cy + jy - h / 2.0, w, h),
                    confidence=obj.confidence, embedding=emb))
        return DetectionStream(rows, image_size=self.image_size,
                               embedding_dim=self.embedding_dim)

    def ground_truth(self) -> dict[int, list[TruthBox]]:
        """Per-frame true boxes; occluded objects included but flagged."""
        out: dict[int, list[TruthBox]] = {}
        for frame in range(self.n_frames):
            boxes = []
            for obj in self.objects:
                death = obj.death if obj.death is not None else self.n_frames
                if not (obj.birth <= frame < death):
                    continue
                boxes.append(TruthBox(label=obj.label, kind=obj.kind,
                                      bbox=obj.bbox_at(frame),
                                      occluded=obj.occluded(frame)))
            out[frame] = boxes
        return out


def lane_scene(
    n_robots: int = 10,
    n_frames: int = 500,
    image_size: tuple[int, int] = (1280, 720),
    seed: int = 0,
    crossing_pairs: int = 0,
    **scene_kwargs,
) -> SyntheticScene:
    """Standard tracking testbed: robots in horizontal lanes plus a ball.

    With crossing_pairs > 0, that many adjacent lane pairs swap lanes mid
    scene by symmetric diagonal motion, forcing genuine path crossings.
    """
    w, h = image_size
    objects: list[SceneObject] = []
    lane_gap = h / (n_robots + 2)
    palette = [(220, 50, 50), (50, 90, 220)]
    for i in range(n_robots):
        y = lane_gap * (i + 1)
        direction = 1 if i % 2 == 0 else -1
        x0 = 60.0 if direction == 1 else w - 60.0
        vx = direction * (w - 120.0) / n_frames
        vy = 0.0
        if i // 2 < crossing_pairs:
            # adjacent pair drifts toward each other's lane, crossing midway
            partner_y = lane_gap * (i + 2) if i % 2 == 0 else lane_gap * i
            vy = (partner_y - y) / n_frames
            x0 = 60.0
            vx = (w - 120.0) / n_frames
        objects.append(SceneObject(
            label=f"robot{i}", kind=ROBOT, start=(x0, y), velocity=(vx, vy),
            size=(34.0, 56.0), color=palette[i % 2]))
    objects.append(SceneObject(
        label="ball", kind=BALL,
        start=(w / 2.0, h - lane_gap), velocity=(0.3, -0.2),
        size=(16.0, 16.0), color=(240, 240, 240)))
    return SyntheticScene(objects, n_frames=n_frames, image_size=image_size,
                          seed=seed, **scene_kwargs)
