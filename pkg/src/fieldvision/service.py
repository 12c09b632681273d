"""JSON-over-HTTP service backing the browser console.

Read endpoints expose processed artifacts from the output directory.
The homography flow is two-step: POST /homography/manual fits a
candidate and returns its diagnostics plus a field-line overlay in
image coordinates (the console renders numbers, it never computes
geometry); POST /homography/accept promotes the candidate to the
stored fit.  Mutations serialize through one lock and persist with an
atomic replace, so readers see either the old file or the new one.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import os
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse, Response

from .config import PipelineConfig
from .detections import LANDMARK, parse_detections
from .errors import DataError, DegenerateGeometryError, FieldVisionError
from .field_model import FieldModel, LandmarkId, serialize_field_model
from .homography import HomographyFit, manual_homography, project_points
from .localization import RadarFrame, render_radar
from .pipeline import radar_frames_from_game_data, read_game_data
from .rules import parse_events
from .stats import BALL_ENTITY, heatmap, possession, render_heatmap, scoreboard

CIRCLE_SAMPLES = 64
SEGMENT_SAMPLES = 16


def field_line_segments(model: FieldModel) -> list[list[tuple[float, float]]]:
    """Field markings as polylines in field millimeters."""
    length, width = model.length, model.width
    lines = [
        [(0.0, 0.0), (length, 0.0), (length, width), (0.0, width), (0.0, 0.0)],
        [(length / 2.0, 0.0), (length / 2.0, width)],
    ]
    areas = list(model.penalty_area.values())
    if model.goal_area is not None:
        areas += list(model.goal_area.values())
    for rect in areas:
        lines.append([(rect.x0, rect.y0), (rect.x1, rect.y0),
                      (rect.x1, rect.y1), (rect.x0, rect.y1),
                      (rect.x0, rect.y0)])
    radius = model.extra.get("center_circle_radius", width / 8.0)
    cx, cy = length / 2.0, width / 2.0
    circle = [(cx + radius * math.cos(2 * math.pi * i / CIRCLE_SAMPLES),
               cy + radius * math.sin(2 * math.pi * i / CIRCLE_SAMPLES))
              for i in range(CIRCLE_SAMPLES + 1)]
    lines.append(circle)
    return lines


def _densify(line: list[tuple[float, float]], per_edge: int) -> np.ndarray:
    points = []
    for (x0, y0), (x1, y1) in zip(line, line[1:]):
        for i in range(per_edge):
            t = i / per_edge
            points.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
    points.append(line[-1])
    return np.array(points, dtype=float)


def overlay_polylines(fit: HomographyFit,
                      model: FieldModel) -> list[list[list[float]]]:
    """Field markings mapped into image pixels through the fitted H."""
    h_inv = np.linalg.inv(fit.h)
    out = []
    for line in field_line_segments(model):
        plan = _densify(line, SEGMENT_SAMPLES) * model.model_image_scale
        image = project_points(h_inv, plan)
        out.append([[float(x), float(y)] for x, y in image])
    return out


class ServiceState:
    """Mutable server state plus its single-writer lock."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.model = cfg.load_field_model()
        self.lock = threading.Lock()
        self.pending: HomographyFit | None = None

    # stored (accepted) homography -----------------------------------

    def stored_path(self) -> Path:
        return self.cfg.output_dir / "homography.json"

    def load_stored(self) -> HomographyFit | None:
        for path in (self.stored_path(), self.cfg.homography):
            if path is not None and Path(path).exists():
                with open(path) as fh:
                    return HomographyFit.from_dict(json.load(fh))
        return None

    def store(self, fit: HomographyFit) -> Path:
        path = self.stored_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w") as fh:
            json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
        return path

    # cached inputs ---------------------------------------------------

    def game_rows(self):
        path = self.cfg.output_dir / "game_data.csv"
        if not path.exists():
            raise HTTPException(404, "game_data.csv not found; run track")
        return read_game_data(path)

    def landmark_detections(self, frame: int):
        if self.cfg.detections is None:
            raise HTTPException(404, "no detections file configured")
        stream = parse_detections(self.cfg.detections)
        return [d for d in stream.by_frame().get(frame, [])
                if d.kind == LANDMARK]


def create_app(cfg: PipelineConfig) -> FastAPI:
    state = ServiceState(cfg)
    app = FastAPI(title="fieldvision", docs_url=None, redoc_url=None)
    app.state.fieldvision = state

    @app.exception_handler(FieldVisionError)
    def _domain_error(request, exc: FieldVisionError):
        return PlainTextResponse(str(exc), status_code=400)

    @app.get("/field")
    def get_field():
        doc = serialize_field_model(state.model)
        w, h = state.model.plan_size()
        return {
            "model": doc,
            "plan_size": [w, h],
            "landmarks": [
                {"id": str(lid), "x": x, "y": y}
                for lid, (x, y) in sorted(state.model.landmarks.items())
            ],
            "rms_gate": cfg.homography_auto.rms_gate,
        }

    @app.get("/frame/{n}")
    def get_frame(n: int):
        if cfg.frames_dir is None:
            raise HTTPException(404, "no frames directory configured")
        path = Path(cfg.frames_dir) / f"{n:06d}.png"
        if not path.exists():
            raise HTTPException(404, f"frame {n} not found")
        return Response(path.read_bytes(), media_type="image/png")

    @app.get("/radar/{n}")
    def get_radar(n: int):
        rows = [r for r in state.game_rows() if r.frame == n]
        frames = radar_frames_from_game_data(rows)
        radar = frames[0] if frames else RadarFrame(frame=n)
        buf = io.BytesIO()
        render_radar(radar, state.model).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.get("/landmarks/{n}")
    def get_landmarks(n: int):
        out = []
        for d in state.landmark_detections(n):
            cx, cy = d.center()
            out.append({
                "id": str(d.landmark),
                "center": [cx, cy],
                "bbox": list(d.bbox),
                "confidence": d.confidence,
            })
        return out

    @app.get("/tracks")
    def get_tracks(frame: int = Query(...)):
        rows = [r for r in state.game_rows() if r.frame == frame]
        return [{
            "frame": r.frame, "track_id": r.track_id, "class": r.kind,
            "bbox": list(r.bbox),
            "field_x": r.field_x, "field_y": r.field_y,
            "team": r.team, "jersey": r.jersey, "fallen": r.fallen,
        } for r in rows]

    @app.get("/stats/scoreboard")
    def get_scoreboard():
        path = cfg.output_dir / "scoreboard.json"
        if path.exists():
            with open(path) as fh:
                return json.load(fh)
        rows = state.game_rows()
        events_path = cfg.output_dir / "events.csv"
        events = parse_events(events_path) if events_path.exists() else []
        frames = radar_frames_from_game_data(rows)
        return scoreboard(events, possession(frames)).to_dict()

    @app.get("/stats/heatmap")
    def get_heatmap(entity: str = BALL_ENTITY):
        subject: int | str = entity
        if entity != BALL_ENTITY:
            try:
                subject = int(entity)
            except ValueError:
                raise HTTPException(
                    400, f"entity must be {BALL_ENTITY!r} or a track id")
        frames = radar_frames_from_game_data(state.game_rows())
        try:
            hm = heatmap(frames, state.model, entity=subject,
                         cell_mm=cfg.stats.cell_mm,
                         blur_sigma=cfg.stats.blur_sigma)
        except DataError as exc:
            raise HTTPException(404, str(exc)) from None
        buf = io.BytesIO()
        render_heatmap(hm, state.model).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.get("/homography")
    def get_homography():
        fit = state.load_stored()
        if fit is None:
            raise HTTPException(404, "no stored homography")
        return fit.to_dict()

    @app.post("/homography/manual")
    def post_manual(body: dict):
        points = body.get("points")
        if not isinstance(points, list) or len(points) < 4:
            raise HTTPException(
                400, f"need at least 4 correspondences, "
                     f"got {0 if not isinstance(points, list) else len(points)}")
        pairs = []
        ids = []
        seen = set()
        for entry in points:
            try:
                lid = LandmarkId.parse(entry["landmark"])
                image = (float(entry["image"][0]), float(entry["image"][1]))
            except (KeyError, TypeError, IndexError, ValueError,
                    FieldVisionError) as exc:
                raise HTTPException(400, f"bad correspondence: {exc}") \
                    from None
            if lid not in state.model.landmarks:
                raise HTTPException(400, f"unknown landmark {lid}")
            if lid in seen:
                raise HTTPException(400, f"landmark {lid} used twice")
            seen.add(lid)
            ids.append(lid)
            pairs.append((image, state.model.landmark_point(lid)))
        try:
            fit = manual_homography(state.model, pairs)
        except DegenerateGeometryError as exc:
            raise HTTPException(400, str(exc)) from None
        fit = dataclasses.replace(fit, landmarks_used=ids)
        gate = cfg.homography_auto.rms_gate
        with state.lock:
            state.pending = fit
        return {
            "rms": fit.rms,
            "h": fit.to_dict()["h"],
            "gate": gate,
            "above_gate": fit.rms > gate,
            "landmarks": [str(l) for l in ids],
            "overlay": overlay_polylines(fit, state.model),
        }

    @app.post("/homography/accept")
    def post_accept(body: dict | None = None):
        force = bool((body or {}).get("force", False))
        gate = cfg.homography_auto.rms_gate
        with state.lock:
            fit = state.pending
            if fit is None:
                raise HTTPException(400, "no candidate homography to accept")
            if fit.rms > gate and not force:
                raise HTTPException(
                    409, f"candidate rms {fit.rms:.2f} px exceeds gate "
                         f"{gate:.2f} px; pass force to accept anyway")
            path = state.store(fit)
            state.pending = None
        return {"stored": True, "rms": fit.rms, "path": str(path)}

    return app


def serve(cfg: PipelineConfig, port: int | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host="127.0.0.1",
                port=port or cfg.service_port, log_level="info")
