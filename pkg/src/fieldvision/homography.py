"""Plane-to-plane homography estimation between image and field plan view.

Fits map undistorted image pixels to plan-view pixels (field millimeters
times ``model_image_scale``). Estimation uses the normalized direct linear
transform; with enough correspondences a RANSAC loop rejects outliers
before the final least-squares fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError
from .field_model import FieldModel, LandmarkId


def _normalization_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to origin, mean distance to sqrt(2)."""
    centroid = points.mean(axis=0)
    d = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _apply_h(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    p = np.column_stack([points, np.ones(len(points))]) @ h.T
    w = p[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise DegenerateGeometryError("point maps to infinity under homography")
    return p[:, :2] / w[:, None]


def canonicalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale to unit Frobenius norm with a deterministic sign.

    Sign is chosen so h[2,2] > 0; if that entry is ~0 the largest-magnitude
    entry decides instead.
    """
    h = np.asarray(h, dtype=float)
    norm = np.linalg.norm(h)
    if norm < 1e-12:
        raise DegenerateGeometryError("zero homography")
    h = h / norm
    if abs(h[2, 2]) > 1e-9:
        sign = np.sign(h[2, 2])
    else:
        flat = h.ravel()
        sign = np.sign(flat[np.argmax(np.abs(flat))])
    return h * sign


def estimate_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares DLT homography from src to dst (>= 4 points each)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise DegenerateGeometryError("point arrays must both be (N, 2)")
    n = len(src)
    if n < 4:
        raise DegenerateGeometryError(f"need at least 4 correspondences, got {n}")
    t_src = _normalization_transform(src)
    t_dst = _normalization_transform(dst)
    sn = _apply_h(t_src, src)
    dn = _apply_h(t_dst, dst)

    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = sn[i]
        u, v = dn[i]
        a[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        a[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-10 * max(s[0], 1.0):
        raise DegenerateGeometryError("correspondences are degenerate")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return canonicalize_homography(h)


def reprojection_error(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> float:
    """RMS distance between h(src) and dst."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) == 0:
        return 0.0
    residual = _apply_h(h, src) - dst
    return float(np.sqrt((residual ** 2).sum(axis=1).mean()))


def _residuals(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    p = np.column_stack([src, np.ones(len(src))]) @ h.T
    w = p[:, 2]
    bad = np.abs(w) < 1e-12
    w = np.where(bad, 1.0, w)
    proj = p[:, :2] / w[:, None]
    d = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    d[bad] = np.inf
    return d


def estimate_homography_ransac(
    src: np.ndarray,
    dst: np.ndarray,
    threshold: float = 3.0,
    iterations: int = 500,
    seed: int = 7,
) -> tuple[np.ndarray, np.ndarray]:
    """RANSAC homography; returns (H, inlier mask).

    Inlier score counts points within ``threshold`` pixels; the best
    consensus set gets a final least-squares refit.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = len(src)
    if n < 4:
        raise DegenerateGeometryError(f"need at least 4 correspondences, got {n}")
    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = -1
    best_err = np.inf
    for _ in range(iterations):
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography(src[idx], dst[idx])
        except DegenerateGeometryError:
            continue
        d = _residuals(h, src, dst)
        mask = d <= threshold
        count = int(mask.sum())
        err = float(d[mask].sum()) if count else np.inf
        if count > best_count or (count == best_count and err < best_err):
            best_count, best_err, best_mask = count, err, mask
    if best_mask is None or best_count < 4:
        raise DegenerateGeometryError("no consensus set found")
    h = estimate_homography(src[best_mask], dst[best_mask])
    # one re-evaluation so the mask matches the refit model
    final_mask = _residuals(h, src, dst) <= threshold
    if final_mask.sum() >= 4:
        h = estimate_homography(src[final_mask], dst[final_mask])
    else:
        final_mask = best_mask
    return h, final_mask


@dataclass
class HomographyFit:
    """Accepted image-to-plan homography with its fit diagnostics."""

    h: np.ndarray
    rms: float
    landmarks_used: list[LandmarkId]
    inlier_mask: list[bool]

    def to_dict(self) -> dict:
        return {
            "h": [[float(v) for v in row] for row in self.h],
            "rms": float(self.rms),
            "landmarks_used": [str(l) for l in self.landmarks_used],
            "inlier_mask": list(self.inlier_mask),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HomographyFit":
        return cls(
            h=np.array(doc["h"], dtype=float),
            rms=float(doc["rms"]),
            landmarks_used=[LandmarkId.parse(s) for s in doc["landmarks_used"]],
            inlier_mask=[bool(b) for b in doc["inlier_mask"]],
        )


@dataclass
class NeedsManual:
    """Automatic fit was not trustworthy; a human must place points."""

    reason: str
    rms: float | None = None
    landmarks_seen: list[LandmarkId] = field(default_factory=list)


def auto_homography(
    model: FieldModel,
    landmark_points: dict[LandmarkId, tuple[float, float]],
    rms_gate: float = 5.0,
    ransac_threshold: float = 3.0,
    ransac_iterations: int = 500,
    ransac_seed: int = 7,
    min_points_for_ransac: int = 7,
) -> HomographyFit | NeedsManual:
    """Fit image -> plan-view homography from detected landmark classes.

    Landmarks unknown to the field model are ignored. Fewer than 4 usable
    points, a degenerate layout, or an RMS above ``rms_gate`` all yield
    NeedsManual rather than a bad fit.
    """
    usable = [(lid, landmark_points[lid]) for lid in sorted(landmark_points)
              if lid in model.landmarks]
    if len(usable) < 4:
        return NeedsManual(
            reason=f"only {len(usable)} usable landmarks, need 4",
            landmarks_seen=[lid for lid, _ in usable],
        )
    ids = [lid for lid, _ in usable]
    src = np.array([p for _, p in usable], dtype=float)
    s = model.model_image_scale
    dst = np.array([model.landmarks[lid] for lid in ids], dtype=float) * s
    try:
        if len(usable) >= min_points_for_ransac:
            h, mask = estimate_homography_ransac(
                src, dst, threshold=ransac_threshold,
                iterations=ransac_iterations, seed=ransac_seed,
            )
        else:
            h = estimate_homography(src, dst)
            mask = np.ones(len(usable), dtype=bool)
    except DegenerateGeometryError as exc:
        return NeedsManual(reason=str(exc), landmarks_seen=ids)
    rms = reprojection_error(h, src[mask], dst[mask])
    if rms > rms_gate:
        return NeedsManual(
            reason=f"rms {rms:.2f} px exceeds gate {rms_gate:.2f} px",
            rms=rms,
            landmarks_seen=ids,
        )
    return HomographyFit(
        h=h,
        rms=rms,
        landmarks_used=[lid for lid, keep in zip(ids, mask) if keep],
        inlier_mask=[bool(b) for b in mask],
    )


def manual_homography(
    model: FieldModel,
    pairs: list[tuple[tuple[float, float], tuple[float, float]]],
    rms_gate: float | None = None,
) -> HomographyFit:
    """Fit from hand-picked (image px, field mm) pairs."""
    if len(pairs) < 4:
        raise DegenerateGeometryError(f"need at least 4 point pairs, got {len(pairs)}")
    src = np.array([p for p, _ in pairs], dtype=float)
    dst = np.array([q for _, q in pairs], dtype=float) * model.model_image_scale
    h = estimate_homography(src, dst)
    rms = reprojection_error(h, src, dst)
    if rms_gate is not None and rms > rms_gate:
        raise DegenerateGeometryError(
            f"manual fit rms {rms:.2f} px exceeds gate {rms_gate:.2f} px")
    return HomographyFit(h=h, rms=rms, landmarks_used=[],
                         inlier_mask=[True] * len(pairs))


def project_points(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a homography to an (N, 2) array of points."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    out = _apply_h(np.asarray(h, dtype=float), points)
    return out[0] if single else out


def plan_to_field_mm(model: FieldModel, plan_xy: np.ndarray) -> np.ndarray:
    """Convert plan-view pixels back to field millimeters."""
    return np.asarray(plan_xy, dtype=float) / model.model_image_scale
