"""Camera model, ground-plane projection, edge-line fitting, rigid 2-D fit.

Camera-centered ground frame: x forward (meters), y left.  Image frame:
u right, v down.  A pixel ray that fails to hit the floor in front of the
camera (at or above the horizon row) has no ground point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import PixelCoord


class HorizonError(ValueError):
    """Pixel ray does not intersect the floor in front of the camera."""

    def __init__(self, horizon_row: float):
        super().__init__(
            f"ray at or above the horizon (row {horizon_row:.2f}) never meets the floor"
        )
        self.horizon_row = horizon_row


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    height: float
    pitch: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.height <= 0:
            raise ValueError("camera height must be positive")
        if not 0 <= self.pitch < math.pi / 2:
            raise ValueError("pitch must lie in [0, pi/2)")

    @property
    def horizon_row(self) -> float:
        return self.cy - self.fy * math.tan(self.pitch)


@dataclass(frozen=True)
class GroundPoint:
    x: float  # forward, meters
    y: float  # left, meters

    def __post_init__(self):
        if self.x <= 0:
            raise ValueError("ground point must lie in front of the camera (x > 0)")


@dataclass(frozen=True)
class Line2D:
    direction: tuple[float, float]  # unit vector, dx > 0
    point: tuple[float, float]
    support: int

    def __post_init__(self):
        n = math.hypot(*self.direction)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")

    def offset_of(self, p: tuple[float, float]) -> float:
        """Signed perpendicular distance of p from the line."""
        dx, dy = self.direction
        return (p[0] - self.point[0]) * (-dy) + (p[1] - self.point[1]) * dx


def wrap_angle(theta: float) -> float:
    """Normalize to (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def transform(self, p: tuple[float, float]) -> tuple[float, float]:
        """Map a camera-ground-frame point into the map frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return (self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1])


def _pixel_ray(p: PixelCoord | tuple[float, float], cam: CameraModel) -> np.ndarray:
    """World-frame direction (forward, left, up) of the pixel ray."""
    u, v = (p.u, p.v) if isinstance(p, PixelCoord) else p
    xc = (u - cam.cx) / cam.fx   # right in camera frame
    yc = (v - cam.cy) / cam.fy   # down in camera frame
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    # camera basis in world coords: right=(0,-1,0), down=(-sp,0,-cp),
    # optical axis=(cp,0,-sp)
    return np.array([
        -sp * yc + cp,
        -xc,
        -cp * yc - sp,
    ])


def image_to_ground(p: PixelCoord | tuple[float, float], cam: CameraModel) -> GroundPoint:
    """Back-project a pixel onto the floor plane.

    Raises HorizonError when the ray points at or above the horizon.
    """
    d = _pixel_ray(p, cam)
    if d[2] >= -1e-12:
        raise HorizonError(cam.horizon_row)
    t = cam.height / -d[2]
    return GroundPoint(x=float(t * d[0]), y=float(t * d[1]))


def ground_to_image(g: GroundPoint | tuple[float, float], cam: CameraModel) -> tuple[float, float]:
    """Forward-project a floor point to (sub-pixel) image coordinates."""
    x, y = (g.x, g.y) if isinstance(g, GroundPoint) else g
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    # world vector from camera center to the floor point
    w = np.array([x, y, -cam.height])
    zc = w[0] * cp - w[2] * sp
    if zc <= 1e-12:
        raise ValueError("point behind the camera")
    xc = -w[1]
    yc = -w[0] * sp - w[2] * cp
    return (cam.cx + cam.fx * xc / zc, cam.cy + cam.fy * yc / zc)


def _tls_line(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line through pts: (unit direction, centroid)."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    d = vt[0]
    if d[0] < 0 or (d[0] == 0 and d[1] < 0):
        d = -d
    return d, centroid


def _fit_side(pts: np.ndarray) -> Line2D | None:
    if len(pts) < 2:
        return None
    d, c = _tls_line(pts)
    resid = np.abs((pts - c) @ np.array([-d[1], d[0]]))
    med = float(np.median(resid))
    mad = float(np.median(np.abs(resid - med)))
    # MAD floor keeps the rule meaningful on exactly-collinear supports
    keep = resid <= med + 3.0 * max(mad, 1e-9)
    if 2 <= keep.sum() < len(pts):
        pts = pts[keep]
        d, c = _tls_line(pts)
    return Line2D(direction=(float(d[0]), float(d[1])),
                  point=(float(c[0]), float(c[1])), support=len(pts))


def fit_edge_lines(points: list[GroundPoint]) -> tuple[Line2D | None, Line2D | None]:
    """Fit the left (y > 0) and right (y < 0) floor-edge lines.

    Total least squares after discarding points more than 3 MAD from a
    provisional fit.  A side with fewer than 2 surviving points comes back
    None; both sides missing raises DegenerateFitError.
    """
    arr = np.array([(p.x, p.y) for p in points], dtype=np.float64).reshape(-1, 2)
    left = _fit_side(arr[arr[:, 1] > 0])
    right = _fit_side(arr[arr[:, 1] < 0])
    if left is None and right is None:
        raise DegenerateFitError("fewer than 2 usable points on both sides")
    return left, right


def estimate_rigid_2d(
    pairs: list[tuple[GroundPoint | tuple[float, float], tuple[float, float]]],
) -> tuple[Pose2D, float]:
    """Least-squares rotation + translation mapping ground points onto map points.

    Returns (camera pose in the map frame, residual RMS in meters).  The
    2-D orthogonal Procrustes solution: theta from atan2 of the cross/dot
    sums about the centroids, then translation.
    """
    n = len(pairs)
    if n < 2:
        raise DegenerateFitError("need at least 2 correspondences")
    # plain scalar arithmetic: this sits inside the RANSAC loop, where numpy
    # call overhead on 4-element arrays dominates the actual flops
    src = [(g.x, g.y) if isinstance(g, GroundPoint) else g for g, _ in pairs]
    dst = [m for _, m in pairs]
    scx = sum(p[0] for p in src) / n
    scy = sum(p[1] for p in src) / n
    dcx = sum(p[0] for p in dst) / n
    dcy = sum(p[1] for p in dst) / n
    dot = cross = 0.0
    spread = 0.0
    for (sx, sy), (dx, dy) in zip(src, dst):
        ax, ay = sx - scx, sy - scy
        bx, by = dx - dcx, dy - dcy
        spread = max(spread, abs(ax), abs(ay))
        dot += ax * bx + ay * by
        cross += ax * by - ay * bx
    if spread <= 1e-12:
        raise DegenerateFitError("ground points are coincident")
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = dcx - (c * scx - s * scy)
    ty = dcy - (s * scx + c * scy)
    sq = 0.0
    for (sx, sy), (dx, dy) in zip(src, dst):
        rx = c * sx - s * sy + tx - dx
        ry = s * sx + c * sy + ty - dy
        sq += rx * rx + ry * ry
    rms = math.sqrt(sq / n)
    return Pose2D(x=tx, y=ty, theta=theta), rms
