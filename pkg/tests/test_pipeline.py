import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pytest
import yaml

import fieldvision
from fieldvision.association import GcRecord, write_gc_log
from fieldvision.calibration import project_board
from fieldvision.camera import CameraProfile, Distortion, Intrinsics
from fieldvision.config import hash_file, load_config
from fieldvision.detections import (
    BALL,
    LANDMARK,
    ROBOT,
    Detection,
    DetectionStream,
    write_detections,
)
from fieldvision.errors import DataError, SchemaError
from fieldvision.field_model import LandmarkId, default_field_model
from fieldvision.homography import HomographyFit
from fieldvision.pipeline import (
    GAME_DATA_HEADER,
    GameDataRow,
    radar_frames_from_game_data,
    read_game_data,
    run_bgsub,
    run_calibrate,
    run_homography,
    run_stats,
    run_track,
    write_game_data,
)
from fieldvision.synthetic import SceneObject, SyntheticScene

N_FRAMES = 40

# identity homography fixture: detections live directly in plan pixels
# (field mm x 0.1), so landmark fits must come out as the identity
CORNERS = [
    ("L_corner.left_bottom", (0.0, 0.0)),
    ("L_corner.left_top", (0.0, 600.0)),
    ("L_corner.right_bottom", (900.0, 0.0)),
    ("L_corner.right_top", (900.0, 600.0)),
    ("T_junction.halfway_bottom", (450.0, 0.0)),
]

ROBOT_A = (200.0, 200.0)   # plan px -> field (2000, 2000) mm
ROBOT_B = (700.0, 400.0)   # plan px -> field (7000, 4000) mm
BALL_AT = (450.0, 300.0)   # equidistant from both robots


def landmark_detection(frame, name, point):
    return Detection(
        frame=frame, kind=LANDMARK,
        bbox=(point[0] - 5.0, point[1] - 5.0, 10.0, 10.0),
        confidence=0.9, landmark=LandmarkId.parse(name))


def robot_detection(frame, foot):
    # upright robot: field anchor is the bottom-center of the box
    return Detection(frame=frame, kind=ROBOT,
                     bbox=(foot[0] - 10.0, foot[1] - 40.0, 20.0, 40.0),
                     confidence=0.9)


def ball_detection(frame, center):
    return Detection(frame=frame, kind=BALL,
                     bbox=(center[0] - 5.0, center[1] - 5.0, 10.0, 10.0),
                     confidence=0.9)


def build_detections(n_frames=N_FRAMES):
    rows = []
    for f in range(n_frames):
        for name, point in CORNERS:
            rows.append(landmark_detection(f, name, point))
        rows.append(robot_detection(f, ROBOT_A))
        rows.append(robot_detection(f, ROBOT_B))
        rows.append(ball_detection(f, BALL_AT))
    return DetectionStream(rows, image_size=(960, 640))


def build_gc(n_frames=N_FRAMES):
    records = []
    for f in range(n_frames):
        records.append(GcRecord(frame=f, team=0, jersey=1,
                                x=2000.0, y=2000.0,
                                flags=frozenset({"active"})))
        records.append(GcRecord(frame=f, team=1, jersey=1,
                                x=7000.0, y=4000.0,
                                flags=frozenset({"active"})))
    return records


@pytest.fixture
def game_dir(tmp_path):
    write_detections(build_detections(), tmp_path / "detections.csv")
    write_gc_log(build_gc(), tmp_path / "gc.csv")
    (tmp_path / "pipeline.yml").write_text(
        "detections: detections.csv\n"
        "gc_log: gc.csv\n"
        "output_dir: out\n")
    return tmp_path


def load_game_config(game_dir):
    return load_config(game_dir / "pipeline.yml")


def tree_digest(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hash_file(p)
            for p in sorted(root.rglob("*")) if p.is_file()}


# game_data round trip ---------------------------------------------------------

SAMPLE_ROWS = [
    GameDataRow(frame=0, track_id=1, kind=ROBOT,
                bbox=(10.0, 20.0, 30.0, 40.0),
                field_x=1234.5, field_y=678.9, team=0, jersey=3),
    GameDataRow(frame=0, track_id=2, kind=BALL,
                bbox=(1.0, 2.0, 3.0, 4.0)),
    GameDataRow(frame=1, track_id=1, kind=ROBOT,
                bbox=(11.0, 21.0, 30.0, 40.0),
                field_x=1300.0, field_y=700.0, team=0, jersey=3,
                fallen=True),
]


def test_game_data_round_trip(tmp_path):
    path = tmp_path / "game_data.csv"
    write_game_data(SAMPLE_ROWS, path)
    assert read_game_data(path) == SAMPLE_ROWS


def test_game_data_rows_are_sorted_on_write(tmp_path):
    path = tmp_path / "game_data.csv"
    write_game_data(list(reversed(SAMPLE_ROWS)), path)
    back = read_game_data(path)
    assert [(r.frame, r.track_id) for r in back] == [(0, 1), (0, 2), (1, 1)]


def test_write_rejects_duplicate_frame_track(tmp_path):
    rows = [SAMPLE_ROWS[0], SAMPLE_ROWS[0]]
    with pytest.raises(DataError, match="duplicate"):
        write_game_data(rows, tmp_path / "game_data.csv")


def test_read_rejects_duplicate_frame_track(tmp_path):
    path = tmp_path / "game_data.csv"
    line = "0,1,robot,1.00,2.00,3.00,4.00,,,,,0"
    path.write_text(",".join(GAME_DATA_HEADER) + "\n" + line + "\n" + line + "\n")
    with pytest.raises(SchemaError, match="duplicate"):
        read_game_data(path)


def test_read_rejects_bad_header(tmp_path):
    path = tmp_path / "game_data.csv"
    path.write_text("frame,track\n0,1\n")
    with pytest.raises(SchemaError, match="header"):
        read_game_data(path)


def test_radar_frames_skip_rows_without_field_coords():
    frames = radar_frames_from_game_data(SAMPLE_ROWS)
    assert [fr.frame for fr in frames] == [0, 1]
    # the ball row has no field position, so frame 0 holds one point
    assert len(frames[0].points) == 1
    p = frames[0].points[0]
    assert (p.track_id, p.team, p.jersey) == (1, 0, 3)
    assert frames[1].points[0].fallen


# track command -----------------------------------------------------------------

def test_run_track_writes_all_artifacts(game_dir):
    cfg = load_game_config(game_dir)
    summary = run_track(cfg)
    out = cfg.output_dir
    assert (out / "game_data.csv").exists()
    assert (out / "events.csv").exists()
    assert (out / "identity_map.json").exists()
    assert (out / "manifest.json").exists()
    radar = sorted((out / "radar").glob("*.png"))
    assert len(radar) == summary["frames"] > 0
    rows = read_game_data(out / "game_data.csv")
    assert summary["rows"] == len(rows) > 0


def test_run_track_localizes_and_identifies(game_dir):
    cfg = load_game_config(game_dir)
    run_track(cfg)
    rows = read_game_data(cfg.output_dir / "game_data.csv")
    robots = [r for r in rows if r.kind == ROBOT]
    balls = [r for r in rows if r.kind == BALL]
    assert robots and balls
    for r in robots:
        assert r.team is not None and r.jersey == 1
        # identity homography: field mm = plan px * 10
        expected = (2000.0, 2000.0) if r.team == 0 else (7000.0, 4000.0)
        assert r.field_x == pytest.approx(expected[0], abs=20.0)
        assert r.field_y == pytest.approx(expected[1], abs=20.0)
    teams = {r.team for r in robots}
    assert teams == {0, 1}
    for b in balls:
        assert b.team is None and b.jersey is None
        assert b.field_x == pytest.approx(4500.0, abs=20.0)


def test_run_track_without_gc_leaves_identities_empty(game_dir):
    cfg = load_game_config(game_dir)
    run_track(cfg, use_gc=False)
    rows = read_game_data(cfg.output_dir / "game_data.csv")
    assert rows
    assert all(r.team is None and r.jersey is None for r in rows)
    assert not (cfg.output_dir / "identity_map.json").exists()


def test_run_track_rerun_is_byte_identical(game_dir):
    cfg = load_game_config(game_dir)
    run_track(cfg)
    first = tree_digest(cfg.output_dir)
    run_track(cfg)
    assert tree_digest(cfg.output_dir) == first


def test_manifest_records_digests_and_no_timestamps(game_dir):
    cfg = load_game_config(game_dir)
    run_track(cfg)
    with open(cfg.output_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["tool_version"] == fieldvision.__version__
    assert manifest["parameter_digest"] == cfg.parameter_digest()
    assert manifest["inputs"]["detections"]["sha256"] == \
        hash_file(game_dir / "detections.csv")
    assert manifest["inputs"]["gc_log"]["sha256"] == \
        hash_file(game_dir / "gc.csv")
    for rel, digest in manifest["outputs"].items():
        assert hash_file(cfg.output_dir / rel) == digest
    blob = json.dumps(manifest).lower()
    assert "time" not in blob and "date" not in blob


def test_run_track_empty_detections_is_data_error(tmp_path):
    write_detections(DetectionStream([]), tmp_path / "detections.csv")
    (tmp_path / "pipeline.yml").write_text(
        "detections: detections.csv\noutput_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    with pytest.raises(DataError, match="empty"):
        run_track(cfg)


# homography command -------------------------------------------------------------

def test_run_homography_recovers_identity(game_dir):
    cfg = load_game_config(game_dir)
    fit = run_homography(cfg)
    assert fit.rms < 1e-6
    assert np.allclose(fit.h / fit.h[2, 2], np.eye(3), atol=1e-6)
    with open(cfg.output_dir / "homography.json") as fh:
        stored = HomographyFit.from_dict(json.load(fh))
    assert np.allclose(stored.h, fit.h)


def test_run_homography_with_too_few_landmarks_is_data_error(tmp_path):
    rows = [landmark_detection(0, name, point)
            for name, point in CORNERS[:3]]
    write_detections(DetectionStream(rows), tmp_path / "detections.csv")
    (tmp_path / "pipeline.yml").write_text(
        "detections: detections.csv\noutput_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    with pytest.raises(DataError, match="manual"):
        run_homography(cfg)


def test_run_track_reuses_stored_homography(game_dir):
    cfg = load_game_config(game_dir)
    run_homography(cfg)
    (game_dir / "pipeline.yml").write_text(
        "detections: detections.csv\n"
        "gc_log: gc.csv\n"
        "homography: out/homography.json\n"
        "output_dir: out2\n")
    cfg2 = load_config(game_dir / "pipeline.yml")
    run_track(cfg2)
    with open(cfg2.output_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    assert "homography" in manifest["inputs"]


# stats command -------------------------------------------------------------------

@pytest.fixture
def tracked_dir(game_dir):
    cfg = load_game_config(game_dir)
    run_track(cfg)
    return game_dir


def test_run_stats_writes_artifacts(tracked_dir):
    cfg = load_game_config(tracked_dir)
    result = run_stats(cfg)
    out = cfg.output_dir
    assert (out / "scoreboard.json").exists()
    assert (out / "heatmap_ball.png").exists()
    assert (out / "heatmap_ball.csv").exists()
    assert (out / "trackmap_ball.png").exists()
    assert (out / "pass_shot_map.png").exists()
    assert result["rows"] > 0


def test_run_stats_possession_tie_goes_to_team1(tracked_dir):
    # the ball sits exactly equidistant from both robots all game
    cfg = load_game_config(tracked_dir)
    run_stats(cfg)
    with open(cfg.output_dir / "scoreboard.json") as fh:
        board = json.load(fh)
    assert board["0"]["possession_pct"] == pytest.approx(0.0)
    assert board["1"]["possession_pct"] == pytest.approx(100.0)


def test_run_stats_track_entity_heatmap(tracked_dir):
    cfg = load_game_config(tracked_dir)
    rows = read_game_data(cfg.output_dir / "game_data.csv")
    tid = next(r.track_id for r in rows if r.kind == ROBOT)
    run_stats(cfg, entity=tid, heatmap_only=True)
    assert (cfg.output_dir / f"heatmap_track{tid}.png").exists()
    assert not (cfg.output_dir / f"trackmap_track{tid}.png").exists()


def test_run_stats_without_game_data_is_data_error(tmp_path):
    (tmp_path / "pipeline.yml").write_text("output_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    with pytest.raises(DataError, match="track"):
        run_stats(cfg)


def test_run_stats_empty_game_data_zeroes_scoreboard(tmp_path, caplog):
    (tmp_path / "pipeline.yml").write_text("output_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    cfg.output_dir.mkdir()
    write_game_data([], cfg.output_dir / "game_data.csv")
    with caplog.at_level(logging.WARNING):
        result = run_stats(cfg)
    assert result["rows"] == 0
    with open(cfg.output_dir / "scoreboard.json") as fh:
        board = json.load(fh)
    assert board["0"]["goals"] == 0
    assert board["1"]["attempts"] == 0
    assert any("empty" in rec.message for rec in caplog.records)
    assert not (cfg.output_dir / "heatmap_ball.png").exists()


def test_run_stats_rerun_is_byte_identical(tracked_dir):
    cfg = load_game_config(tracked_dir)
    run_stats(cfg)
    first = tree_digest(cfg.output_dir)
    run_stats(cfg)
    assert tree_digest(cfg.output_dir) == first


# calibrate command ---------------------------------------------------------------

def make_calibration_input(tmp_path, n_views=3):
    nx, ny, spacing = 7, 5, 40.0
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    board = np.column_stack([xs.ravel(), ys.ravel()])
    board = board - board.mean(axis=0)
    intr = Intrinsics(fx=700.0, fy=720.0, cx=480.0, cy=360.0)
    dist = Distortion(k1=-0.08, k2=0.01)
    rng = np.random.default_rng(11)
    views = []
    for _ in range(n_views):
        rvec = np.concatenate([rng.uniform(-0.3, 0.3, size=2),
                               rng.uniform(-0.5, 0.5, size=1)])
        tvec = np.array([rng.uniform(-50, 50), rng.uniform(-30, 30),
                         rng.uniform(500, 800)])
        views.append(project_board(board, rvec, tvec, intr, dist))
    doc = {
        "image_size": [960, 720],
        "board_points": board.tolist(),
        "views": [{"image_points": v.tolist()} for v in views],
    }
    path = tmp_path / "calibration_input.yml"
    path.write_text(yaml.safe_dump(doc))
    return path, intr


def test_run_calibrate_writes_profile(tmp_path, capsys):
    make_calibration_input(tmp_path)
    (tmp_path / "pipeline.yml").write_text(
        "calibration_input: calibration_input.yml\noutput_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    profile = run_calibrate(cfg)
    assert "rms" in capsys.readouterr().out
    with open(cfg.output_dir / "camera.json") as fh:
        stored = CameraProfile.from_dict(json.load(fh))
    assert stored.intrinsics.fx == pytest.approx(profile.intrinsics.fx)
    # noise-free synthetic views recover the camera nearly exactly
    assert profile.intrinsics.fx == pytest.approx(700.0, rel=1e-3)
    assert profile.distortion.k1 == pytest.approx(-0.08, abs=5e-3)


def test_run_calibrate_rerun_is_byte_identical(tmp_path):
    make_calibration_input(tmp_path)
    (tmp_path / "pipeline.yml").write_text(
        "calibration_input: calibration_input.yml\noutput_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    run_calibrate(cfg)
    first = (cfg.output_dir / "camera.json").read_bytes()
    run_calibrate(cfg)
    assert (cfg.output_dir / "camera.json").read_bytes() == first


def test_run_calibrate_bad_input_is_schema_error(tmp_path):
    (tmp_path / "calibration_input.yml").write_text("views: 3\n")
    (tmp_path / "pipeline.yml").write_text(
        "calibration_input: calibration_input.yml\noutput_dir: out\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    with pytest.raises(SchemaError):
        run_calibrate(cfg)


# bgsub command -------------------------------------------------------------------

def test_run_bgsub_writes_masks_and_report(tmp_path):
    scene = SyntheticScene(
        objects=[SceneObject(label="r", kind=ROBOT, start=(8.0, 20.0),
                             velocity=(1.2, 0.0), size=(10.0, 14.0),
                             color=(230, 40, 40))],
        n_frames=20, image_size=(64, 48), seed=3)
    scene.write_frames(tmp_path / "frames")
    (tmp_path / "pipeline.yml").write_text(
        "frames_dir: frames\n"
        "output_dir: out\n"
        "background:\n"
        "  num_samples: 5\n"
        "  sampling_period: 1\n"
        "  min_weight: 2\n")
    cfg = load_config(tmp_path / "pipeline.yml")
    report = run_bgsub(cfg)
    masks = sorted((cfg.output_dir / "masks").glob("*.pgm"))
    assert len(masks) == 20
    assert report["frames"] == 20
    assert (cfg.output_dir / "background.fvbg").exists()
    with open(cfg.output_dir / "bgsub_report.json") as fh:
        stored = json.load(fh)
    assert stored == report
    # once the model has warmed up, the moving blob is foreground
    from fieldvision.background import pgm_to_mask
    late = pgm_to_mask(masks[-1].read_bytes())
    assert late.sum() > 0
