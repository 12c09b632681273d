"""Per-pixel multimodal background model with tiled foreground extraction.

Each pixel keeps up to M color modes as (channel sums, weight) pairs so the
association test |c - sum/w| <= A runs in exact integer arithmetic as
|c*w - sum| <= A*w. The model is non-recursive: a second bank accumulates
fresh samples while the first classifies, and they swap every N absorbed
samples, replacing old statistics outright instead of blending.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DataError, SchemaError

SNAPSHOT_MAGIC = b"FVBG"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class BgParams:
    num_samples: int = 30
    sampling_period: int = 10
    association_threshold: int = 5
    min_weight: int = 2
    max_modes: int = 5
    tile_grid: tuple[int, int] = (4, 4)

    def __post_init__(self):
        if not (self.num_samples >= self.min_weight >= 1):
            raise SchemaError("require num_samples >= min_weight >= 1")
        if self.max_modes < 1 or self.sampling_period < 1:
            raise SchemaError("max_modes and sampling_period must be >= 1")
        if self.tile_grid[0] < 1 or self.tile_grid[1] < 1:
            raise SchemaError("tile_grid must be at least 1x1")


@njit(cache=True, nogil=True)
def _absorb_kernel(frame, sums, weights, a, max_modes):
    h, w = frame.shape[0], frame.shape[1]
    for y in range(h):
        for x in range(w):
            c0 = np.int32(frame[y, x, 0])
            c1 = np.int32(frame[y, x, 1])
            c2 = np.int32(frame[y, x, 2])
            matched = -1
            for m in range(max_modes):
                wt = weights[y, x, m]
                if wt <= 0:
                    continue
                if (abs(c0 * wt - sums[y, x, m, 0]) <= a * wt
                        and abs(c1 * wt - sums[y, x, m, 1]) <= a * wt
                        and abs(c2 * wt - sums[y, x, m, 2]) <= a * wt):
                    matched = m
                    break
            if matched >= 0:
                sums[y, x, matched, 0] += c0
                sums[y, x, matched, 1] += c1
                sums[y, x, matched, 2] += c2
                weights[y, x, matched] += 1
            else:
                slot = -1
                for m in range(max_modes):
                    if weights[y, x, m] == 0:
                        slot = m
                        break
                if slot < 0:
                    slot = 0
                    for m in range(1, max_modes):
                        if weights[y, x, m] < weights[y, x, slot]:
                            slot = m
                sums[y, x, slot, 0] = c0
                sums[y, x, slot, 1] = c1
                sums[y, x, slot, 2] = c2
                weights[y, x, slot] = 1


@njit(cache=True, nogil=True)
def _classify_kernel(frame, sums, weights, a, d, max_modes, mask, y0, y1, x0, x1):
    for y in range(y0, y1):
        for x in range(x0, x1):
            c0 = np.int32(frame[y, x, 0])
            c1 = np.int32(frame[y, x, 1])
            c2 = np.int32(frame[y, x, 2])
            fg = np.uint8(255)
            for m in range(max_modes):
                wt = weights[y, x, m]
                if wt < d:
                    continue
                if (abs(c0 * wt - sums[y, x, m, 0]) <= a * wt
                        and abs(c1 * wt - sums[y, x, m, 1]) <= a * wt
                        and abs(c2 * wt - sums[y, x, m, 2]) <= a * wt):
                    fg = np.uint8(0)
                    break
            mask[y, x] = fg


class BackgroundModel:
    """Dual-bank background model; see module docstring for the design."""

    def __init__(self, params: BgParams | None = None):
        self.params = params or BgParams()
        self.shape: tuple[int, int] | None = None  # (H, W)
        self._front_sums = None
        self._front_weights = None
        self._back_sums = None
        self._back_weights = None
        self.front_count = 0  # samples in the classifying bank (N once swapped)
        self.back_count = 0   # samples in the accumulating bank
        self.step_index = 0

    def _alloc(self, h: int, w: int) -> None:
        m = self.params.max_modes
        self.shape = (h, w)
        self._front_sums = np.zeros((h, w, m, 3), dtype=np.int32)
        self._front_weights = np.zeros((h, w, m), dtype=np.int32)
        self._back_sums = np.zeros_like(self._front_sums)
        self._back_weights = np.zeros_like(self._front_weights)

    def _check_frame(self, frame: np.ndarray) -> np.ndarray:
        frame = np.ascontiguousarray(frame)
        if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
            raise DataError(f"expected uint8 HxWx3 frame, got {frame.shape} {frame.dtype}")
        if self.shape is None:
            self._alloc(frame.shape[0], frame.shape[1])
        elif frame.shape[:2] != self.shape:
            raise DataError(f"frame size {frame.shape[:2]} does not match model {self.shape}")
        return frame

    @property
    def sample_count(self) -> int:
        """Samples behind the bank used for classification."""
        return self.front_count if self.front_count > 0 else self.back_count

    def quality(self) -> float:
        return min(1.0, self.sample_count / self.params.num_samples)

    def absorb(self, frame: np.ndarray) -> None:
        """Add one sample to the accumulating bank; swap banks at N."""
        frame = self._check_frame(frame)
        _absorb_kernel(frame, self._back_sums, self._back_weights,
                       np.int32(self.params.association_threshold),
                       self.params.max_modes)
        self.back_count += 1
        if self.back_count >= self.params.num_samples:
            self._front_sums, self._back_sums = self._back_sums, self._front_sums
            self._front_weights, self._back_weights = (self._back_weights,
                                                       self._front_weights)
            self.front_count = self.back_count
            self._back_sums[:] = 0
            self._back_weights[:] = 0
            self.back_count = 0

    def _classify_bank(self):
        # before the first swap the accumulating bank classifies, so output
        # is usable while the model is still warming up
        if self.front_count > 0:
            return self._front_sums, self._front_weights
        return self._back_sums, self._back_weights

    def classify(self, frame: np.ndarray, workers: int = 1) -> np.ndarray:
        """Foreground mask (uint8, 255=foreground) for one frame."""
        frame = self._check_frame(frame)
        if self.sample_count == 0:
            raise DataError("model has absorbed no samples yet")
        sums, weights = self._classify_bank()
        h, w = self.shape
        mask = np.empty((h, w), dtype=np.uint8)
        a = np.int32(self.params.association_threshold)
        d = np.int32(self.params.min_weight)
        m = self.params.max_modes
        rows, cols = self.params.tile_grid
        if workers <= 1 and rows * cols == 1:
            _classify_kernel(frame, sums, weights, a, d, m, mask, 0, h, 0, w)
            return mask
        ys = np.linspace(0, h, rows + 1).astype(int)
        xs = np.linspace(0, w, cols + 1).astype(int)
        tiles = [(ys[i], ys[i + 1], xs[j], xs[j + 1])
                 for i in range(rows) for j in range(cols)]
        if workers <= 1:
            for y0, y1, x0, x1 in tiles:
                _classify_kernel(frame, sums, weights, a, d, m, mask, y0, y1, x0, x1)
            return mask
        # kernels release the GIL, so threads run tiles truly in parallel;
        # tiles are disjoint, so the result is bit-identical for any count
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_classify_kernel, frame, sums, weights, a, d, m,
                            mask, y0, y1, x0, x1)
                for y0, y1, x0, x1 in tiles
            ]
            for f in futures:
                f.result()
        return mask

    def step(self, frame: np.ndarray, workers: int = 1) -> np.ndarray:
        """Absorb every P-th frame, classify every frame."""
        if self.step_index % self.params.sampling_period == 0:
            self.absorb(frame)
        self.step_index += 1
        return self.classify(frame, workers=workers)

    def background_image(self) -> np.ndarray:
        """Mean color of each pixel's heaviest usable mode (black if none)."""
        if self.shape is None:
            raise DataError("model has no dimensions yet")
        sums, weights = self._classify_bank()
        best = weights.argmax(axis=2)
        h, w = self.shape
        yy, xx = np.mgrid[0:h, 0:w]
        top_w = weights[yy, xx, best]
        top_s = sums[yy, xx, best]
        usable = top_w >= self.params.min_weight
        img = np.zeros((h, w, 3), dtype=np.uint8)
        safe_w = np.where(top_w > 0, top_w, 1)
        img[usable] = np.rint(top_s[usable] / safe_w[usable, None]).astype(np.uint8)
        return img

    # ------------------------------------------------------------------
    # persistence

    def save(self, path: str | Path) -> None:
        if self.shape is None:
            raise DataError("cannot snapshot a model with no dimensions")
        h, w = self.shape
        p = self.params
        header = struct.pack(
            "<4sI6I2I3q",
            SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
            h, w, p.max_modes, p.num_samples, p.sampling_period,
            p.association_threshold,
            p.min_weight, 0,
            self.front_count, self.back_count, self.step_index,
        )
        tile = struct.pack("<2I", p.tile_grid[0], p.tile_grid[1])
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(tile)
            for arr in (self._front_sums, self._front_weights,
                        self._back_sums, self._back_weights):
                fh.write(np.ascontiguousarray(arr, dtype="<i4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "BackgroundModel":
        with open(path, "rb") as fh:
            blob = fh.read()
        head_fmt = "<4sI6I2I3q"
        head_size = struct.calcsize(head_fmt)
        if len(blob) < head_size + 8:
            raise DataError("snapshot truncated")
        (magic, version, h, w, m, n, period, a, d, _pad,
         front_count, back_count, step_index) = struct.unpack_from(head_fmt, blob)
        if magic != SNAPSHOT_MAGIC:
            raise DataError("not a background snapshot (bad magic)")
        if version != SNAPSHOT_VERSION:
            raise DataError(f"unsupported snapshot version {version}")
        rows, cols = struct.unpack_from("<2I", blob, head_size)
        params = BgParams(num_samples=n, sampling_period=period,
                          association_threshold=a, min_weight=d, max_modes=m,
                          tile_grid=(rows, cols))
        model = cls(params)
        model._alloc(h, w)
        offset = head_size + 8
        counts = {
            "_front_sums": h * w * m * 3,
            "_front_weights": h * w * m,
            "_back_sums": h * w * m * 3,
            "_back_weights": h * w * m,
        }
        for name, count in counts.items():
            nbytes = count * 4
            if offset + nbytes > len(blob):
                raise DataError("snapshot truncated")
            arr = np.frombuffer(blob, dtype="<i4", count=count, offset=offset)
            getattr(model, name)[:] = arr.astype(np.int32).reshape(
                getattr(model, name).shape)
            offset += nbytes
        model.front_count = front_count
        model.back_count = back_count
        model.step_index = step_index
        return model


def mask_to_pgm(mask: np.ndarray) -> bytes:
    """Binary PGM (P5) encoding of a 0/255 mask."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.uint8:
        raise DataError("mask must be a 2-D uint8 array")
    h, w = mask.shape
    return b"P5\n%d %d\n255\n" % (w, h) + mask.tobytes()


def pgm_to_mask(blob: bytes) -> np.ndarray:
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise DataError("not a supported PGM stream")
    try:
        w, h = (int(t) for t in parts[1].split())
    except ValueError:
        raise DataError("bad PGM dimensions") from None
    data = parts[3]
    if len(data) != w * h:
        raise DataError("PGM payload size mismatch")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(mask: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(mask_to_pgm(mask))
