"""End-to-end orchestration of the processing stages.

Each run_* function implements one CLI subcommand over a validated
PipelineConfig.  All outputs land in the config's output directory and
are listed in a manifest of content digests, so a rerun on identical
inputs can be checked byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .association import (
    IdentityMap,
    associate_identities,
    parse_gc_log,
    propagate_identities,
)
from .background import BackgroundModel, mask_to_pgm, pgm_to_mask
from .calibration import calibrate_planar
from .camera import CameraProfile
from .config import PipelineConfig, hash_file, hash_path
from .detections import BALL, LANDMARK, ROBOT, parse_detections, filter_detections
from .errors import DataError, SchemaError, UsageError
from .field_model import FieldModel
from .homography import HomographyFit, NeedsManual, auto_homography
from .localization import (
    FieldTrackPoint,
    RadarFrame,
    localize_tracks,
    render_radar,
)
from .rules import (
    ball_trajectory,
    detect_ball_events,
    fall_events,
    illegal_defender_events,
    parse_events,
    team_positions,
    write_events,
)
from .stats import (
    BALL_ENTITY,
    heatmap,
    heatmap_to_csv,
    pass_shot_map,
    possession,
    render_heatmap,
    render_pass_shot_map,
    render_trackmap,
    scoreboard,
    trackmap,
)
from .tracker import CONFIRMED, Tracker

log = logging.getLogger(__name__)

GAME_DATA_HEADER = ["frame", "track_id", "class", "x", "y", "w", "h",
                    "field_x", "field_y", "team", "jersey", "fallen"]


@dataclass(frozen=True)
class GameDataRow:
    frame: int
    track_id: int
    kind: str
    bbox: tuple[float, float, float, float]
    field_x: float | None = None
    field_y: float | None = None
    team: int | None = None
    jersey: int | None = None
    fallen: bool = False


def write_game_data(rows: list[GameDataRow], path: str | Path) -> None:
    seen: set[tuple[int, int]] = set()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(GAME_DATA_HEADER)
        for r in sorted(rows, key=lambda r: (r.frame, r.track_id)):
            key = (r.frame, r.track_id)
            if key in seen:
                raise DataError(f"duplicate game_data row for {key}")
            seen.add(key)
            out.writerow([
                r.frame, r.track_id, r.kind,
                f"{r.bbox[0]:.2f}", f"{r.bbox[1]:.2f}",
                f"{r.bbox[2]:.2f}", f"{r.bbox[3]:.2f}",
                "" if r.field_x is None else f"{r.field_x:.1f}",
                "" if r.field_y is None else f"{r.field_y:.1f}",
                "" if r.team is None else r.team,
                "" if r.jersey is None else r.jersey,
                int(r.fallen),
            ])


def read_game_data(path: str | Path) -> list[GameDataRow]:
    rows: list[GameDataRow] = []
    seen: set[tuple[int, int]] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != GAME_DATA_HEADER:
            raise SchemaError(f"bad game_data header: {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(GAME_DATA_HEADER):
                raise SchemaError(f"line {lineno}: wrong field count")
            try:
                key = (int(row[0]), int(row[1]))
                if key in seen:
                    raise SchemaError(
                        f"line {lineno}: duplicate row for {key}")
                seen.add(key)
                rows.append(GameDataRow(
                    frame=key[0], track_id=key[1], kind=row[2],
                    bbox=tuple(float(v) for v in row[3:7]),
                    field_x=float(row[7]) if row[7] else None,
                    field_y=float(row[8]) if row[8] else None,
                    team=int(row[9]) if row[9] else None,
                    jersey=int(row[10]) if row[10] else None,
                    fallen=bool(int(row[11])),
                ))
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    return rows


def radar_frames_from_game_data(rows: list[GameDataRow]) -> list[RadarFrame]:
    by_frame: dict[int, list[FieldTrackPoint]] = {}
    for r in rows:
        if r.field_x is None or r.field_y is None:
            continue
        by_frame.setdefault(r.frame, []).append(FieldTrackPoint(
            frame=r.frame, track_id=r.track_id, kind=r.kind,
            x=r.field_x, y=r.field_y, team=r.team, jersey=r.jersey,
            fallen=r.fallen))
    return [RadarFrame(frame=f, points=pts)
            for f, pts in sorted(by_frame.items())]


# Manifest -------------------------------------------------------------------

def write_manifest(cfg: PipelineConfig, inputs: dict[str, Path],
                   outputs: list[Path]) -> Path:
    doc = {
        "tool_version": __version__,
        "parameter_digest": cfg.parameter_digest(),
        "inputs": {name: {"path": str(p), "sha256": hash_path(p)}
                   for name, p in sorted(inputs.items())},
        "outputs": {p.name if p.parent == cfg.output_dir
                    else str(p.relative_to(cfg.output_dir)): hash_file(p)
                    for p in sorted(outputs)},
    }
    path = cfg.output_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# Calibrate -------------------------------------------------------------------

def run_calibrate(cfg: PipelineConfig) -> CameraProfile:
    """Planar calibration from a correspondence file; writes camera.json."""
    cfg.require("calibration_input")
    with open(cfg.calibration_input) as fh:
        doc = yaml.safe_load(fh)
    try:
        image_size = tuple(doc["image_size"])
        board_points = np.asarray(doc["board_points"], dtype=float)
        image_points = [np.asarray(v["image_points"], dtype=float)
                        for v in doc["views"]]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad calibration input: {exc}") from None
    result = calibrate_planar(image_points, board_points, image_size)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "camera.json"
    with open(out, "w") as fh:
        json.dump(result.profile.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(cfg, {"calibration_input": cfg.calibration_input}, [out])
    print(f"calibration rms: {result.rms:.6f} px -> {out}")
    return result.profile


# Background subtraction --------------------------------------------------------

def run_bgsub(cfg: PipelineConfig) -> dict:
    """Feed the frame directory through the background model."""
    from PIL import Image

    cfg.require("frames_dir")
    frames = sorted(Path(cfg.frames_dir).glob("*.png"))
    if not frames:
        raise UsageError(f"no .png frames in {cfg.frames_dir}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    masks_dir = cfg.output_dir / "masks"
    masks_dir.mkdir(exist_ok=True)

    model = BackgroundModel(cfg.background)
    outputs = []
    for i, frame_path in enumerate(frames):
        image = np.asarray(Image.open(frame_path).convert("RGB"))
        mask = model.step(image, workers=cfg.bg_workers)
        mask_path = masks_dir / (frame_path.stem + ".pgm")
        mask_path.write_bytes(mask_to_pgm(mask))
        outputs.append(mask_path)

    snapshot = cfg.output_dir / "background.fvbg"
    model.save(snapshot)
    outputs.append(snapshot)
    report = {"frames": len(frames), "quality": model.quality()}
    report_path = cfg.output_dir / "bgsub_report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(report_path)
    write_manifest(cfg, {"frames_dir": cfg.frames_dir}, outputs)
    print(f"processed {len(frames)} frames, model quality "
          f"{report['quality']:.3f}")
    return report


# Homography ---------------------------------------------------------------------

def landmark_image_points(stream) -> dict:
    """Mean observed center per landmark id across the whole stream."""
    sums: dict = {}
    counts: dict = {}
    for d in stream.detections:
        if d.kind != LANDMARK or d.landmark is None:
            continue
        cx, cy = d.center()
        acc = sums.setdefault(d.landmark, [0.0, 0.0])
        acc[0] += cx
        acc[1] += cy
        counts[d.landmark] = counts.get(d.landmark, 0) + 1
    return {lid: (sums[lid][0] / counts[lid], sums[lid][1] / counts[lid])
            for lid in sums}


def run_homography(cfg: PipelineConfig) -> HomographyFit:
    cfg.require("detections")
    model = cfg.load_field_model()
    stream = parse_detections(cfg.detections)
    points = landmark_image_points(stream)
    hp = cfg.homography_auto
    fit = auto_homography(
        model, points, rms_gate=hp.rms_gate,
        ransac_threshold=hp.ransac_threshold,
        ransac_iterations=hp.ransac_iterations,
        ransac_seed=hp.ransac_seed,
        min_points_for_ransac=hp.min_points_for_ransac)
    if isinstance(fit, NeedsManual):
        raise DataError(
            f"automatic homography rejected: {fit.reason} "
            f"(rms {fit.rms if fit.rms is not None else 'n/a'}); "
            "place manual correspondences through the console")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "homography.json"
    with open(out, "w") as fh:
        json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(cfg, {"detections": cfg.detections}, [out])
    print(f"homography rms: {fit.rms:.4f} px "
          f"({len(fit.landmarks_used)} landmarks) -> {out}")
    return fit


# Track ---------------------------------------------------------------------------

def _load_homography(cfg: PipelineConfig, model: FieldModel,
                     stream) -> HomographyFit:
    if cfg.homography is not None:
        with open(cfg.homography) as fh:
            return HomographyFit.from_dict(json.load(fh))
    points = landmark_image_points(stream)
    hp = cfg.homography_auto
    fit = auto_homography(
        model, points, rms_gate=hp.rms_gate,
        ransac_threshold=hp.ransac_threshold,
        ransac_iterations=hp.ransac_iterations,
        ransac_seed=hp.ransac_seed,
        min_points_for_ransac=hp.min_points_for_ransac)
    if isinstance(fit, NeedsManual):
        raise DataError(f"no stored homography and automatic fit "
                        f"rejected: {fit.reason}")
    return fit


def _load_masks(cfg: PipelineConfig) -> dict[int, np.ndarray] | None:
    if cfg.masks_dir is None:
        return None
    masks = {}
    for p in sorted(Path(cfg.masks_dir).glob("*.pgm")):
        try:
            frame = int(p.stem)
        except ValueError:
            continue
        masks[frame] = pgm_to_mask(p.read_bytes())
    return masks or None


def run_track(cfg: PipelineConfig, use_gc: bool = True) -> dict:
    """detections -> tracks -> field positions -> identities -> events."""
    cfg.require("detections")
    model = cfg.load_field_model()
    stream = parse_detections(cfg.detections)
    masks = _load_masks(cfg)
    stream = filter_detections(
        stream, min_confidence=cfg.detection_filter.min_confidence,
        masks=masks, min_foreground=cfg.detection_filter.min_foreground)
    span = stream.frame_range()
    if span is None:
        raise DataError("detection stream is empty after filtering")
    fit = _load_homography(cfg, model, stream)

    profile = None
    if cfg.calibration is not None:
        with open(cfg.calibration) as fh:
            profile = CameraProfile.from_dict(json.load(fh))
    tracker = Tracker(cfg.tracker)
    by_frame = stream.by_frame()
    for frame in range(span[0], span[1] + 1):
        tracker.step(frame, by_frame.get(frame, []))
    tracks = tracker.all_tracks()

    frames = localize_tracks(tracks, fit.h, model, profile,
                             margin=cfg.localization_margin_mm)

    identity_map = None
    if use_gc and cfg.gc_log is not None:
        cfg.require("gc_log")
        records = parse_gc_log(cfg.gc_log)
        base = associate_identities(frames, records, cfg.association)
        frames, identity_map = propagate_identities(
            base, frames, records, cfg.association)

    events = detect_ball_events(
        ball_trajectory(frames), model, cfg.rules,
        robots=team_positions(frames) or None)
    events += illegal_defender_events(team_positions(frames), model,
                                      cfg.rules)
    team_of = identity_map.team_of() if identity_map else None
    events += fall_events(tracks, team_of)

    field_points = {(p.frame, p.track_id): p
                    for fr in frames for p in fr.points}
    rows = []
    for t in tracks:
        for entry in t.history:
            if entry.status != CONFIRMED:
                continue
            p = field_points.get((entry.frame, t.id))
            ident = identity_map.assignments.get(t.id) \
                if identity_map else None
            rows.append(GameDataRow(
                frame=entry.frame, track_id=t.id, kind=t.kind,
                bbox=entry.bbox,
                field_x=p.x if p else None, field_y=p.y if p else None,
                team=ident[0] if ident else None,
                jersey=ident[1] if ident else None,
                fallen=entry.fallen))

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    game_data_path = cfg.output_dir / "game_data.csv"
    write_game_data(rows, game_data_path)
    outputs.append(game_data_path)
    events_path = cfg.output_dir / "events.csv"
    write_events(events, events_path)
    outputs.append(events_path)
    if identity_map is not None:
        ident_path = cfg.output_dir / "identity_map.json"
        identity_map.save(ident_path)
        outputs.append(ident_path)
    if cfg.write_radar:
        radar_dir = cfg.output_dir / "radar"
        radar_dir.mkdir(exist_ok=True)
        for fr in frames:
            path = radar_dir / f"{fr.frame:06d}.png"
            render_radar(fr, model).save(path)
            outputs.append(path)

    inputs = {"detections": cfg.detections}
    if use_gc and cfg.gc_log is not None:
        inputs["gc_log"] = cfg.gc_log
    if cfg.homography is not None:
        inputs["homography"] = cfg.homography
    if cfg.calibration is not None:
        inputs["calibration"] = cfg.calibration
    if masks is not None:
        inputs["masks_dir"] = cfg.masks_dir
    write_manifest(cfg, inputs, outputs)
    summary = {"tracks": len(tracks), "frames": len(frames),
               "events": len(events), "rows": len(rows)}
    print(f"tracked {summary['tracks']} tracks over {summary['frames']} "
          f"frames; {summary['events']} events")
    return summary


# Stats ----------------------------------------------------------------------------

def run_stats(cfg: PipelineConfig, entity: int | str = BALL_ENTITY,
              heatmap_only: bool = False) -> dict:
    game_data_path = cfg.output_dir / "game_data.csv"
    if not game_data_path.exists():
        raise DataError(f"game_data not found at {game_data_path}; "
                        "run the track command first")
    rows = read_game_data(game_data_path)
    events_path = cfg.output_dir / "events.csv"
    events = parse_events(events_path) if events_path.exists() else []
    frames = radar_frames_from_game_data(rows)
    model = cfg.load_field_model()

    tally = possession(frames)
    board = scoreboard(events, tally)
    outputs = []
    score_path = cfg.output_dir / "scoreboard.json"
    with open(score_path, "w") as fh:
        fh.write(board.to_json())
        fh.write("\n")
    outputs.append(score_path)
    print(board.format_table())

    if not rows:
        log.warning("game_data is empty; skipping map artifacts")
        write_manifest(cfg, {"game_data": game_data_path}, outputs)
        return {"rows": 0, "outputs": [str(p) for p in outputs]}

    sp = cfg.stats
    entities = [entity]
    try:
        hm = heatmap(frames, model, entity=entities[0],
                     cell_mm=sp.cell_mm, blur_sigma=sp.blur_sigma)
    except DataError as exc:
        log.warning("heatmap skipped: %s", exc)
        hm = None
    if hm is not None:
        tag = entities[0] if isinstance(entities[0], str) \
            else f"track{entities[0]}"
        png = cfg.output_dir / f"heatmap_{tag}.png"
        render_heatmap(hm, model).save(png)
        outputs.append(png)
        grid_csv = cfg.output_dir / f"heatmap_{tag}.csv"
        heatmap_to_csv(hm, grid_csv)
        outputs.append(grid_csv)
        if not heatmap_only:
            lines = trackmap(frames, entities[0], gap_break=sp.gap_break)
            tm_png = cfg.output_dir / f"trackmap_{tag}.png"
            render_trackmap(lines, model).save(tm_png)
            outputs.append(tm_png)

    if not heatmap_only:
        segments = pass_shot_map(events, ball_trajectory(frames),
                                 window=cfg.rules.window)
        ps_png = cfg.output_dir / "pass_shot_map.png"
        render_pass_shot_map(segments, model).save(ps_png)
        outputs.append(ps_png)

    write_manifest(cfg, {"game_data": game_data_path}, outputs)
    return {"rows": len(rows), "outputs": [str(p) for p in outputs]}
