"""Pipeline configuration: one JSON file, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from . import corners as corners_mod
from . import segment, wlan
from .fuse import RansacConfig
from .geometry import CameraModel


class ConfigError(ValueError):
    pass


def _from_dict(cls, block_name: str, doc: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in {block_name}: {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {block_name} block: {e}") from e


@dataclass(frozen=True)
class CameraConfig:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    height_m: float = 1.4
    pitch_rad: float = 0.55

    def model(self) -> CameraModel:
        return CameraModel(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
                           height=self.height_m, pitch=self.pitch_rad)


@dataclass(frozen=True)
class SegmentationConfig:
    h_s: float = segment.DEFAULT_H_S
    h_r: float = segment.DEFAULT_H_R
    max_iter: int = segment.DEFAULT_MAX_ITER
    eps: float = segment.DEFAULT_EPS
    min_region_size: int = segment.DEFAULT_MIN_REGION

    def __post_init__(self):
        if self.h_s < 1 or self.h_r <= 0 or self.max_iter < 1 or self.eps <= 0:
            raise ValueError("segmentation parameters out of range")

    def filter_kwargs(self) -> dict:
        return {"h_s": self.h_s, "h_r": self.h_r, "max_iter": self.max_iter,
                "eps": self.eps, "min_region_size": self.min_region_size}


@dataclass(frozen=True)
class CornerConfig:
    k: int = corners_mod.DEFAULT_K
    threshold: float = corners_mod.DEFAULT_THRESHOLD
    nms_window: int = corners_mod.DEFAULT_NMS_WINDOW
    border_margin: int = corners_mod.DEFAULT_BORDER_MARGIN

    def __post_init__(self):
        if self.k < 1 or self.threshold <= 0 or self.nms_window < 1:
            raise ValueError("corner parameters out of range")

    def kwargs(self) -> dict:
        return {"k": self.k, "threshold": self.threshold,
                "nms_window": self.nms_window,
                "border_margin": self.border_margin}


@dataclass(frozen=True)
class WlanConfig:
    k: int = wlan.DEFAULT_K
    missing_penalty_db: float = wlan.DEFAULT_MISSING_PENALTY
    radius_floor_m: float = wlan.DEFAULT_RADIUS_FLOOR

    def __post_init__(self):
        if self.k < 1 or self.missing_penalty_db < 0 or self.radius_floor_m <= 0:
            raise ValueError("wlan parameters out of range")

    def kwargs(self) -> dict:
        return {"k": self.k, "missing_penalty": self.missing_penalty_db,
                "radius_floor": self.radius_floor_m}


@dataclass(frozen=True)
class PathsConfig:
    plan: str = ""
    fingerprints: str = ""


@dataclass(frozen=True)
class Config:
    camera: CameraConfig = field(default_factory=CameraConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    corners: CornerConfig = field(default_factory=CornerConfig)
    wlan: WlanConfig = field(default_factory=WlanConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @staticmethod
    def from_json(text: str) -> "Config":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        blocks = {
            "camera": CameraConfig,
            "segmentation": SegmentationConfig,
            "corners": CornerConfig,
            "wlan": WlanConfig,
            "ransac": RansacConfig,
            "paths": PathsConfig,
        }
        unknown = set(doc) - set(blocks)
        if unknown:
            raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
        kwargs = {}
        for name, cls in blocks.items():
            if name in doc:
                if not isinstance(doc[name], dict):
                    raise ConfigError(f"{name} block must be an object")
                kwargs[name] = _from_dict(cls, name, doc[name])
        return Config(**kwargs)

    @staticmethod
    def load(path: str) -> "Config":
        with open(path, encoding="utf-8") as f:
            return Config.from_json(f.read())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)
