import numpy as np
import pytest

from fieldvision.calibration import (
    CalibrationResult,
    calibrate_planar,
    levenberg_marquardt,
    project_board,
    rotation_from_rvec,
    rvec_from_rotation,
)
from fieldvision.camera import Distortion, Intrinsics
from fieldvision.errors import DegenerateGeometryError


def board_grid(nx=8, ny=6, spacing=30.0):
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    return pts - pts.mean(axis=0)


def synth_views(rng, intr, dist, n_views, board):
    views, poses = [], []
    for _ in range(n_views):
        rvec = np.concatenate([
            rng.uniform(-0.35, 0.35, size=2),
            rng.uniform(-0.5, 0.5, size=1),
        ])
        tvec = np.array([
            rng.uniform(-60.0, 60.0),
            rng.uniform(-40.0, 40.0),
            rng.uniform(450.0, 800.0),
        ])
        views.append(project_board(board, rvec, tvec, intr, dist))
        poses.append((rvec, tvec))
    return views, poses


def test_rotation_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rvec = rng.uniform(-np.pi, np.pi, size=3)
        if np.linalg.norm(rvec) > np.pi:
            rvec = rvec / np.linalg.norm(rvec) * rng.uniform(0, np.pi)
        r = rotation_from_rvec(rvec)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(r), 1.0)
        back = rvec_from_rotation(r)
        assert np.allclose(back, rvec, atol=1e-9)


def test_rotation_small_angle():
    rvec = np.array([1e-9, -2e-9, 5e-10])
    r = rotation_from_rvec(rvec)
    assert np.allclose(rvec_from_rotation(r), rvec, atol=1e-15)
    assert np.allclose(rotation_from_rvec(np.zeros(3)), np.eye(3))


def test_rotation_near_pi():
    axis = np.array([1.0, 2.0, -0.5])
    axis /= np.linalg.norm(axis)
    rvec = axis * (np.pi - 1e-9)
    r = rotation_from_rvec(rvec)
    back = rvec_from_rotation(r)
    # at pi the sign of the axis is ambiguous; compare rotations instead
    assert np.allclose(rotation_from_rvec(back), r, atol=1e-7)


def test_project_board_identity_pose():
    intr = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0)
    board = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    out = project_board(board, np.zeros(3), np.array([0.0, 0.0, 100.0]),
                        intr, Distortion())
    assert np.allclose(out, [[50, 50], [60, 50], [50, 60]])


def test_levenberg_marquardt_converges_and_records_costs():
    # classic curve fit: y = a * exp(b * t)
    t = np.linspace(0, 1, 30)
    y = 2.5 * np.exp(-1.3 * t)

    def fun(x):
        return x[0] * np.exp(x[1] * t) - y

    x, traj = levenberg_marquardt(fun, np.array([1.0, 0.0]))
    assert np.allclose(x, [2.5, -1.3], atol=1e-8)
    assert all(b < a for a, b in zip(traj, traj[1:]))
    assert traj[-1] < 1e-16


def test_multi_view_round_trip():
    rng = np.random.default_rng(7)
    intr = Intrinsics(fx=900.0, fy=880.0, cx=640.0, cy=360.0)
    dist = Distortion(k1=-0.25, k2=0.08, k3=0.01, p1=0.001, p2=-0.0005)
    board = board_grid()
    views, _ = synth_views(rng, intr, dist, 6, board)
    result = calibrate_planar(views, board, (1280, 720))
    assert isinstance(result, CalibrationResult)
    got = result.profile.intrinsics
    assert abs(got.fx - intr.fx) / intr.fx < 1e-3
    assert abs(got.fy - intr.fy) / intr.fy < 1e-3
    assert abs(got.cx - intr.cx) / intr.cx < 1e-3
    assert abs(got.cy - intr.cy) / intr.cy < 1e-3
    assert abs(result.profile.distortion.k1 - dist.k1) < 5e-3
    assert result.rms < 1e-6
    assert got.skew == 0.0
    assert len(result.view_extrinsics) == 6
    costs = result.cost_trajectory
    assert all(b < a for a, b in zip(costs, costs[1:]))


def test_multi_view_recovers_poses():
    rng = np.random.default_rng(8)
    intr = Intrinsics(fx=850.0, fy=850.0, cx=512.0, cy=384.0)
    dist = Distortion(k1=-0.1)
    board = board_grid()
    views, poses = synth_views(rng, intr, dist, 4, board)
    result = calibrate_planar(views, board, (1024, 768))
    for (rvec, tvec), (true_r, true_t) in zip(result.view_extrinsics, poses):
        assert np.allclose(rvec, true_r, atol=1e-4)
        assert np.allclose(tvec, true_t, atol=0.5)  # mm


def test_noisy_views_stay_reasonable():
    rng = np.random.default_rng(9)
    intr = Intrinsics(fx=900.0, fy=900.0, cx=640.0, cy=360.0)
    dist = Distortion(k1=-0.2, k2=0.05)
    board = board_grid()
    views, _ = synth_views(rng, intr, dist, 8, board)
    views = [v + rng.normal(0.0, 0.3, size=v.shape) for v in views]
    result = calibrate_planar(views, board, (1280, 720))
    got = result.profile.intrinsics
    assert abs(got.fx - intr.fx) / intr.fx < 0.02
    assert abs(got.fy - intr.fy) / intr.fy < 0.02
    assert result.rms < 0.5


def test_single_view_fixed_principal_point():
    intr = Intrinsics(fx=780.0, fy=760.0, cx=640.0, cy=360.0)
    board = board_grid()
    rng = np.random.default_rng(10)
    views, _ = synth_views(rng, intr, Distortion(), 1, board)
    result = calibrate_planar(views, board, (1280, 720))
    got = result.profile.intrinsics
    assert got.cx == 640.0 and got.cy == 360.0
    assert abs(got.fx - intr.fx) / intr.fx < 1e-3
    assert abs(got.fy - intr.fy) / intr.fy < 1e-3
    assert result.profile.distortion.is_zero
    assert result.rms < 1e-6


def test_rejects_bad_inputs():
    board = board_grid()
    with pytest.raises(DegenerateGeometryError):
        calibrate_planar([], board, (100, 100))
    with pytest.raises(DegenerateGeometryError):
        calibrate_planar([board[:10]], board, (100, 100))
    with pytest.raises(DegenerateGeometryError):
        calibrate_planar([np.zeros((3, 2))], np.zeros((3, 2)), (100, 100))
