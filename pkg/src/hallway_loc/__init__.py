"""Hybrid WLAN/camera indoor localization for hallway environments."""

from .config import Config
from .fuse import (
    FloorPlan,
    Landmark,
    LocalizationResult,
    RansacConfig,
    count_hypotheses,
    locate,
    ransac_locate,
)
from .geometry import CameraModel, GroundPoint, Pose2D
from .image import PixelCoord, RgbImage, decode_ppm, encode_ppm
from .wlan import CoarseEstimate, FingerprintDb, RssScan, ingest_fingerprints, knn_locate

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "CoarseEstimate", "Config", "FingerprintDb", "FloorPlan",
    "GroundPoint", "Landmark", "LocalizationResult", "PixelCoord", "Pose2D",
    "RansacConfig", "RgbImage", "RssScan", "count_hypotheses", "decode_ppm",
    "encode_ppm", "ingest_fingerprints", "knn_locate", "locate", "ransac_locate",
]
