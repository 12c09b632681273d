"""Planar camera calibration from views of a flat point grid.

Closed-form intrinsics come from the image-of-the-absolute-conic
constraints of per-view homographies, extrinsics from the decomposed
homography columns. A damped least-squares refinement then polishes all
parameters against the raw reprojection residuals. Skew is held at zero
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import (
    CameraProfile,
    Distortion,
    Intrinsics,
    distort_normalized,
    normalized_to_pixels,
)
from .errors import ConvergenceError, DegenerateGeometryError
from .homography import estimate_homography


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_from_rvec(rvec: np.ndarray) -> np.ndarray:
    """Axis-angle vector to rotation matrix."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        k = _skew(rvec)
        return np.eye(3) + k + 0.5 * (k @ k)
    k = _skew(rvec / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rvec_from_rotation(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector (inverse of rotation_from_rvec)."""
    r = np.asarray(r, dtype=float)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    axis_raw = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    sin_theta = np.sin(theta)
    if theta < 1e-7:
        return 0.5 * axis_raw
    if sin_theta > 1e-7:
        return (theta / (2.0 * sin_theta)) * axis_raw
    # theta ~ pi: axis from the symmetric part
    b = (r + np.eye(3)) / 2.0
    k = np.sqrt(np.clip(np.diag(b), 0.0, None))
    i = int(np.argmax(k))
    axis = b[i] / k[i]
    axis = axis / np.linalg.norm(axis)
    # sign is free at pi; pin it so the largest component is positive
    j = int(np.argmax(np.abs(axis)))
    if axis[j] < 0:
        axis = -axis
    return theta * axis


def project_board(
    board: np.ndarray,
    rvec: np.ndarray,
    tvec: np.ndarray,
    intr: Intrinsics,
    dist: Distortion,
) -> np.ndarray:
    """Project planar board points (Z=0) to distorted image pixels."""
    board = np.asarray(board, dtype=float)
    r = rotation_from_rvec(rvec)
    pts3 = np.column_stack([board[:, 0], board[:, 1], np.zeros(len(board))])
    cam = pts3 @ r.T + np.asarray(tvec, dtype=float)
    z = cam[:, 2]
    z = np.where(np.abs(z) < 1e-12, 1e-12, z)
    norm = cam[:, :2] / z[:, None]
    return normalized_to_pixels(intr, distort_normalized(dist, norm))


def _vij(h: np.ndarray, i: int, j: int) -> np.ndarray:
    return np.array([
        h[0, i] * h[0, j],
        h[0, i] * h[1, j] + h[1, i] * h[0, j],
        h[1, i] * h[1, j],
        h[2, i] * h[0, j] + h[0, i] * h[2, j],
        h[2, i] * h[1, j] + h[1, i] * h[2, j],
        h[2, i] * h[2, j],
    ])


def _intrinsics_from_conic(b: np.ndarray) -> Intrinsics:
    b11, b12, b22, b13, b23, b33 = b
    denom = b11 * b22 - b12 * b12
    if abs(denom) < 1e-18 or abs(b11) < 1e-18:
        raise DegenerateGeometryError("conic system is degenerate")
    v0 = (b12 * b13 - b11 * b23) / denom
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 < 0:
        raise DegenerateGeometryError("conic is not positive definite")
    alpha = float(np.sqrt(lam / b11))
    beta_sq = lam * b11 / denom
    if beta_sq < 0:
        raise DegenerateGeometryError("conic is not positive definite")
    beta = float(np.sqrt(beta_sq))
    gamma = -b12 * alpha * alpha * beta / lam
    u0 = gamma * v0 / beta - b13 * alpha * alpha / lam
    return Intrinsics(fx=alpha, fy=beta, cx=float(u0), cy=float(v0), skew=float(gamma))


def _intrinsics_from_homographies(homographies: list[np.ndarray]) -> Intrinsics:
    rows = []
    for h in homographies:
        rows.append(_vij(h, 0, 1))
        rows.append(_vij(h, 0, 0) - _vij(h, 1, 1))
    # pin skew to zero; the refinement never frees it either
    rows.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    v = np.array(rows)
    _, _, vt = np.linalg.svd(v)
    b = vt[-1]
    try:
        return _intrinsics_from_conic(b)
    except DegenerateGeometryError:
        return _intrinsics_from_conic(-b)


def _extrinsics_from_homography(k: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k_inv = np.linalg.inv(k)
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    n1 = np.linalg.norm(k_inv @ h1)
    n2 = np.linalg.norm(k_inv @ h2)
    if n1 < 1e-12 or n2 < 1e-12:
        raise DegenerateGeometryError("homography collapses a board axis")
    scale = 2.0 / (n1 + n2)
    r1 = scale * (k_inv @ h1)
    r2 = scale * (k_inv @ h2)
    t = scale * (k_inv @ h3)
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    q = np.column_stack([r1, r2, np.cross(r1, r2)])
    u, _, vt = np.linalg.svd(q)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return rvec_from_rotation(r), t


def _numeric_jacobian(fun, x: np.ndarray, r0_len: int) -> np.ndarray:
    jac = np.empty((r0_len, len(x)))
    for i in range(len(x)):
        step = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        jac[:, i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return jac


def levenberg_marquardt(
    fun,
    x0: np.ndarray,
    max_iterations: int = 100,
    cost_tol: float = 1e-14,
) -> tuple[np.ndarray, list[float]]:
    """Damped least squares with numeric Jacobian.

    Returns the solution and the accepted-cost trajectory (sum of squared
    residuals, starting with the initial cost; strictly decreasing after
    the first entry).
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = float(r @ r)
    trajectory = [cost]
    lam = 1e-3
    for _ in range(max_iterations):
        jac = _numeric_jacobian(fun, x, len(r))
        g = jac.T @ r
        a = jac.T @ jac
        d = np.diag(a).copy()
        d[d < 1e-12] = 1e-12
        accepted = False
        delta = None
        for _ in range(15):
            try:
                delta = np.linalg.solve(a + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = fun(x + delta)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                prev = cost
                x, r, cost = x + delta, r_new, cost_new
                trajectory.append(cost)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            break
        if prev - cost <= cost_tol * max(cost, 1.0):
            break
        if delta is not None and np.abs(delta).max() < 1e-14:
            break
    return x, trajectory


@dataclass
class CalibrationResult:
    profile: CameraProfile
    rms: float
    view_extrinsics: list[tuple[np.ndarray, np.ndarray]]
    cost_trajectory: list[float]


def calibrate_planar(
    image_points: list[np.ndarray],
    board_points: np.ndarray,
    image_size: tuple[int, int],
    estimate_k3: bool = True,
    estimate_tangential: bool = True,
    max_iterations: int = 100,
) -> CalibrationResult:
    """Calibrate from one or more views of the same planar point grid.

    ``image_points[i]`` holds the observed pixels of ``board_points`` in
    view i. A single view cannot pin down the full model, so that path
    fixes the principal point at the image center and the distortion at
    zero, estimating focal lengths and pose only.
    """
    board = np.asarray(board_points, dtype=float)
    if board.ndim != 2 or board.shape[1] != 2 or len(board) < 4:
        raise DegenerateGeometryError("board_points must be (N>=4, 2)")
    views = [np.asarray(v, dtype=float) for v in image_points]
    if not views:
        raise DegenerateGeometryError("need at least one view")
    for v in views:
        if v.shape != board.shape:
            raise DegenerateGeometryError("each view must match board_points shape")

    homographies = [estimate_homography(board, v) for v in views]

    if len(views) == 1:
        return _calibrate_single_view(views[0], board, homographies[0],
                                      image_size, max_iterations)

    intr0 = _intrinsics_from_homographies(homographies)
    if not (intr0.fx > 0 and intr0.fy > 0):
        raise DegenerateGeometryError("closed-form intrinsics are invalid")
    intr0 = Intrinsics(fx=intr0.fx, fy=intr0.fy, cx=intr0.cx, cy=intr0.cy, skew=0.0)
    k = intr0.matrix()
    extr0 = [_extrinsics_from_homography(k, h) for h in homographies]

    dist_free = ["k1", "k2"]
    if estimate_tangential:
        dist_free += ["p1", "p2"]
    if estimate_k3:
        dist_free += ["k3"]

    def unpack(x):
        intr = Intrinsics(fx=x[0], fy=x[1], cx=x[2], cy=x[3])
        coeffs = dict.fromkeys(("k1", "k2", "k3", "p1", "p2"), 0.0)
        for name, value in zip(dist_free, x[4:4 + len(dist_free)]):
            coeffs[name] = float(value)
        dist = Distortion(**coeffs)
        extr = []
        base = 4 + len(dist_free)
        for i in range(len(views)):
            extr.append((x[base + 6 * i: base + 6 * i + 3],
                         x[base + 6 * i + 3: base + 6 * i + 6]))
        return intr, dist, extr

    def residuals(x):
        try:
            intr, dist, extr = unpack(x)
        except Exception:
            return np.full(total_residuals, 1e6)
        out = np.empty(total_residuals)
        pos = 0
        for (rvec, tvec), obs in zip(extr, views):
            proj = project_board(board, rvec, tvec, intr, dist)
            n = 2 * len(obs)
            out[pos:pos + n] = (proj - obs).ravel()
            pos += n
        return out

    total_residuals = 2 * len(board) * len(views)
    x0 = np.concatenate([
        [intr0.fx, intr0.fy, intr0.cx, intr0.cy],
        np.zeros(len(dist_free)),
        np.concatenate([np.concatenate([rv, tv]) for rv, tv in extr0]),
    ])
    x, trajectory = levenberg_marquardt(residuals, x0, max_iterations=max_iterations)
    intr, dist, extr = unpack(x)
    rms = float(np.sqrt(trajectory[-1] / (len(board) * len(views))))
    profile = CameraProfile(intrinsics=intr, distortion=dist,
                            image_size=(int(image_size[0]), int(image_size[1])))
    return CalibrationResult(
        profile=profile,
        rms=rms,
        view_extrinsics=[(np.array(rv), np.array(tv)) for rv, tv in extr],
        cost_trajectory=trajectory,
    )


def _calibrate_single_view(
    obs: np.ndarray,
    board: np.ndarray,
    h: np.ndarray,
    image_size: tuple[int, int],
    max_iterations: int,
) -> CalibrationResult:
    w, hgt = image_size
    cx, cy = w / 2.0, hgt / 2.0
    # with the principal point fixed, the two conic constraints of one
    # view become linear in (1/fx^2, 1/fy^2)
    basis_a = np.array([1.0, 0.0, 0.0, -cx, 0.0, cx * cx])
    basis_c = np.array([0.0, 0.0, 1.0, 0.0, -cy, cy * cy])
    basis_1 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    rows = [_vij(h, 0, 1), _vij(h, 0, 0) - _vij(h, 1, 1)]
    m = np.array([[row @ basis_a, row @ basis_c] for row in rows])
    rhs = -np.array([row @ basis_1 for row in rows])
    try:
        a, c = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateGeometryError("single view gives no focal solution") from None
    if a <= 0 or c <= 0:
        raise DegenerateGeometryError("single view implies imaginary focal length")
    intr0 = Intrinsics(fx=float(1.0 / np.sqrt(a)), fy=float(1.0 / np.sqrt(c)),
                       cx=cx, cy=cy)
    rvec0, tvec0 = _extrinsics_from_homography(intr0.matrix(), h)
    dist = Distortion()

    def residuals(x):
        try:
            intr = Intrinsics(fx=x[0], fy=x[1], cx=cx, cy=cy)
        except Exception:
            return np.full(2 * len(board), 1e6)
        proj = project_board(board, x[2:5], x[5:8], intr, dist)
        return (proj - obs).ravel()

    x0 = np.concatenate([[intr0.fx, intr0.fy], rvec0, tvec0])
    x, trajectory = levenberg_marquardt(residuals, x0, max_iterations=max_iterations)
    rms = float(np.sqrt(trajectory[-1] / len(board)))
    profile = CameraProfile(
        intrinsics=Intrinsics(fx=float(x[0]), fy=float(x[1]), cx=cx, cy=cy),
        distortion=dist,
        image_size=(int(w), int(hgt)),
    )
    return CalibrationResult(
        profile=profile,
        rms=rms,
        view_extrinsics=[(x[2:5].copy(), x[5:8].copy())],
        cost_trajectory=trajectory,
    )
