"""Pipeline configuration: one YAML file wiring paths and parameters.

Every module's tunables sit in a named block whose fields mirror the
module's parameter dataclass, so constructing the config validates the
whole parameter set at load time.  Paths are resolved relative to the
config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .association import AssociationParams
from .background import BgParams
from .errors import SchemaError, UsageError
from .field_model import (
    FieldModel,
    default_field_document,
    load_field_model,
    load_field_model_file,
)
from .localization import DEFAULT_FIELD_MARGIN_MM
from .rules import RuleParams
from .tracker import TrackerParams


@dataclass(frozen=True)
class DetectionFilterParams:
    min_confidence: float = 0.1
    min_foreground: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_confidence <= 1.0:
            raise SchemaError("min_confidence must be in [0, 1]")
        if not 0.0 <= self.min_foreground <= 1.0:
            raise SchemaError("min_foreground must be in [0, 1]")


@dataclass(frozen=True)
class HomographyAutoParams:
    rms_gate: float = 5.0
    ransac_threshold: float = 3.0
    ransac_iterations: int = 500
    ransac_seed: int = 7
    min_points_for_ransac: int = 7

    def __post_init__(self) -> None:
        if self.rms_gate <= 0 or self.ransac_threshold <= 0:
            raise SchemaError("gates and thresholds must be positive")


@dataclass(frozen=True)
class StatsParams:
    cell_mm: float = 100.0
    blur_sigma: float = 1.5
    gap_break: int = 10

    def __post_init__(self) -> None:
        if self.cell_mm <= 0 or self.blur_sigma < 0 or self.gap_break < 0:
            raise SchemaError("bad stats parameters")


_BLOCKS = {
    "background": BgParams,
    "detection_filter": DetectionFilterParams,
    "tracker": TrackerParams,
    "rules": RuleParams,
    "association": AssociationParams,
    "homography_auto": HomographyAutoParams,
    "stats": StatsParams,
}

_PATH_KEYS = ("frames_dir", "detections", "gc_log", "calibration",
              "calibration_input", "homography", "field_model", "masks_dir")


@dataclass
class PipelineConfig:
    output_dir: Path = Path("out")
    frames_dir: Path | None = None
    detections: Path | None = None
    gc_log: Path | None = None
    calibration: Path | None = None
    calibration_input: Path | None = None
    homography: Path | None = None
    field_model: Path | None = None
    masks_dir: Path | None = None
    background: BgParams = field(default_factory=BgParams)
    detection_filter: DetectionFilterParams = field(
        default_factory=DetectionFilterParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    rules: RuleParams = field(default_factory=RuleParams)
    association: AssociationParams = field(default_factory=AssociationParams)
    homography_auto: HomographyAutoParams = field(
        default_factory=HomographyAutoParams)
    stats: StatsParams = field(default_factory=StatsParams)
    localization_margin_mm: float = DEFAULT_FIELD_MARGIN_MM
    write_radar: bool = True
    bg_workers: int = 1
    service_port: int = 8000

    def load_field_model(self) -> FieldModel:
        if self.field_model is not None:
            return load_field_model_file(self.field_model)
        return load_field_model(default_field_document())

    def require(self, *names: str) -> None:
        """Usage error unless every named input path is set and exists."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise UsageError(f"config is missing required path {name!r}")
            if not Path(value).exists():
                raise UsageError(f"{name} path does not exist: {value}")

    def canonical_dict(self) -> dict:
        """Stable parameter view used for the manifest digest.

        Paths and worker counts stay out: inputs are digested by content
        in the manifest, and worker count must not change any output.
        """
        doc: dict = {}
        for name, cls in _BLOCKS.items():
            block = getattr(self, name)
            doc[name] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in vars(block).items()}
        doc["localization_margin_mm"] = self.localization_margin_mm
        return doc

    def parameter_digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def _coerce_block(name: str, cls, doc: dict):
    if not isinstance(doc, dict):
        raise SchemaError(f"config block {name!r} must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaError(f"config block {name!r} has unknown keys "
                          f"{sorted(unknown)}")
    kwargs = dict(doc)
    if "tile_grid" in kwargs and isinstance(kwargs["tile_grid"], list):
        kwargs["tile_grid"] = tuple(kwargs["tile_grid"])
    return cls(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise SchemaError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("config must be a mapping")
    base = path.parent
    cfg = PipelineConfig()
    known = set(_PATH_KEYS) | set(_BLOCKS) | {
        "output_dir", "localization_margin_mm", "write_radar",
        "bg_workers", "service_port"}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"unknown config keys {sorted(unknown)}")
    for key in _PATH_KEYS:
        if doc.get(key) is not None:
            setattr(cfg, key, (base / doc[key]).resolve())
    if doc.get("output_dir") is not None:
        cfg.output_dir = (base / doc["output_dir"]).resolve()
    for name, cls in _BLOCKS.items():
        if name in doc:
            setattr(cfg, name, _coerce_block(name, cls, doc[name]))
    for scalar in ("localization_margin_mm", "write_radar", "bg_workers",
                   "service_port"):
        if scalar in doc:
            setattr(cfg, scalar, doc[scalar])
    return cfg


def hash_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_path(path: str | Path) -> str:
    """Content digest of a file, or of a directory's files by name."""
    path = Path(path)
    if not path.is_dir():
        return hash_file(path)
    digest = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            rel = p.relative_to(path)
            digest.update(f"{rel}:{hash_file(p)}\n".encode())
    return digest.hexdigest()
