"""Camera intrinsics and lens distortion.

The distortion model is the usual radial/tangential polynomial on
normalized image coordinates. Undistortion inverts it by fixed-point
iteration, tight enough that a distort/undistort round trip is exact to
well under a thousandth of a pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SchemaError


@dataclass(frozen=True)
class Distortion:
    """Radial (k1, k2, k3) and tangential (p1, p2) coefficients."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.p1, self.p2])

    @classmethod
    def from_array(cls, a) -> "Distortion":
        k1, k2, k3, p1, p2 = (float(v) for v in a)
        return cls(k1, k2, k3, p1, p2)

    @property
    def is_zero(self) -> bool:
        return not any(self.as_array())


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise SchemaError(f"focal lengths must be positive: {self.fx}, {self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, self.skew, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @classmethod
    def from_matrix(cls, k: np.ndarray) -> "Intrinsics":
        k = np.asarray(k, dtype=float)
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]),
                   cx=float(k[0, 2]), cy=float(k[1, 2]), skew=float(k[0, 1]))


@dataclass
class CameraProfile:
    """Everything needed to map pixels to undistorted pixels and back."""

    intrinsics: Intrinsics
    distortion: Distortion
    image_size: tuple[int, int]  # (width, height)

    def to_dict(self) -> dict:
        return {
            "intrinsics": {
                "fx": self.intrinsics.fx, "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx, "cy": self.intrinsics.cy,
                "skew": self.intrinsics.skew,
            },
            "distortion": {
                "k1": self.distortion.k1, "k2": self.distortion.k2,
                "k3": self.distortion.k3,
                "p1": self.distortion.p1, "p2": self.distortion.p2,
            },
            "image_size": [int(self.image_size[0]), int(self.image_size[1])],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CameraProfile":
        try:
            intr = doc["intrinsics"]
            dist = doc["distortion"]
            w, h = doc["image_size"]
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad camera profile document: {exc}") from None
        return cls(
            intrinsics=Intrinsics(
                fx=float(intr["fx"]), fy=float(intr["fy"]),
                cx=float(intr["cx"]), cy=float(intr["cy"]),
                skew=float(intr.get("skew", 0.0)),
            ),
            distortion=Distortion(
                k1=float(dist.get("k1", 0.0)), k2=float(dist.get("k2", 0.0)),
                k3=float(dist.get("k3", 0.0)),
                p1=float(dist.get("p1", 0.0)), p2=float(dist.get("p2", 0.0)),
            ),
            image_size=(int(w), int(h)),
        )


def identity_profile(image_size: tuple[int, int]) -> CameraProfile:
    """Pinhole pass-through profile: useful when no calibration exists."""
    w, h = image_size
    f = float(max(w, h))
    return CameraProfile(
        intrinsics=Intrinsics(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0),
        distortion=Distortion(),
        image_size=(int(w), int(h)),
    )


def distort_normalized(dist: Distortion, pts: np.ndarray) -> np.ndarray:
    """Forward distortion on normalized coordinates, shape (N, 2)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
    xd = x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def undistort_normalized(
    dist: Distortion,
    pts: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> np.ndarray:
    """Invert the distortion by fixed-point iteration.

    Converges for the moderate coefficients of real lenses; raises if the
    iteration fails to contract within ``max_iter`` rounds.
    """
    pts = np.asarray(pts, dtype=float)
    if dist.is_zero:
        return pts.copy()
    xd, yd = pts[..., 0], pts[..., 1]
    x, y = xd.copy(), yd.copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (dist.k1 + r2 * (dist.k2 + r2 * dist.k3))
        dx = 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x)
        dy = dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y
        xn = (xd - dx) / radial
        yn = (yd - dy) / radial
        delta = max(np.abs(xn - x).max(initial=0.0), np.abs(yn - y).max(initial=0.0))
        x, y = xn, yn
        if delta < tol:
            return np.stack([x, y], axis=-1)
    raise ConvergenceError(
        f"undistortion did not converge in {max_iter} iterations", residual=delta)


def pixels_to_normalized(intr: Intrinsics, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    y = (pts[..., 1] - intr.cy) / intr.fy
    x = (pts[..., 0] - intr.cx - intr.skew * y) / intr.fx
    return np.stack([x, y], axis=-1)


def normalized_to_pixels(intr: Intrinsics, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    u = intr.fx * pts[..., 0] + intr.skew * pts[..., 1] + intr.cx
    v = intr.fy * pts[..., 1] + intr.cy
    return np.stack([u, v], axis=-1)


def distort_pixels(profile: CameraProfile, pts: np.ndarray) -> np.ndarray:
    """Ideal pinhole pixels -> observed (distorted) pixels."""
    n = pixels_to_normalized(profile.intrinsics, pts)
    return normalized_to_pixels(profile.intrinsics,
                                distort_normalized(profile.distortion, n))


def undistort_pixels(profile: CameraProfile, pts: np.ndarray) -> np.ndarray:
    """Observed pixels -> ideal pinhole pixels."""
    n = pixels_to_normalized(profile.intrinsics, pts)
    return normalized_to_pixels(profile.intrinsics,
                                undistort_normalized(profile.distortion, n))


def undistort_image(image: np.ndarray, profile: CameraProfile) -> np.ndarray:
    """Resample an image onto the undistorted pixel grid.

    Inverse mapping: each output pixel is forward-distorted to find its
    source location, then bilinearly sampled. Samples falling outside the
    source frame come out black.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    gray = image.ndim == 2
    src = image[..., None].astype(np.float64) if gray else image.astype(np.float64)

    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    grid = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    sample = distort_pixels(profile, grid)
    sx = sample[:, 0].reshape(h, w)
    sy = sample[:, 1].reshape(h, w)

    valid = (sx >= 0) & (sy >= 0) & (sx <= w - 1) & (sy <= h - 1)
    x0c = np.clip(np.floor(sx).astype(np.int64), 0, w - 2)
    y0c = np.clip(np.floor(sy).astype(np.int64), 0, h - 2)
    fx = sx - x0c
    fy = sy - y0c

    tl = src[y0c, x0c]
    tr = src[y0c, x0c + 1]
    bl = src[y0c + 1, x0c]
    br = src[y0c + 1, x0c + 1]
    wtl = ((1 - fx) * (1 - fy))[..., None]
    wtr = (fx * (1 - fy))[..., None]
    wbl = ((1 - fx) * fy)[..., None]
    wbr = (fx * fy)[..., None]
    out = tl * wtl + tr * wtr + bl * wbl + br * wbr
    out[~valid] = 0.0
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    out = out.astype(image.dtype)
    return out[..., 0] if gray else out
