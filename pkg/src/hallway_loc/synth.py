"""Deterministic synthetic hallway scenes with analytic ground truth.

Flat-shaded perspective rendering of a floor plane, two walls, and doorway
rectangles; defects (shadow polygons, dichromatic highlight blobs, wall
notches) corrupt appearance only; ground truth stays geometric, which is
what lets tests measure detector degradation honestly.  Also simulates RSS
with the log-distance path-loss model for the WLAN side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from matplotlib.path import Path as PolyPath

from .fuse import FloorPlan, Hallway, Landmark
from .geometry import CameraModel, Pose2D, ground_to_image
from .image import RgbImage
from .wlan import RssScan


def _unit_chroma(c) -> tuple[float, float, float]:
    c = tuple(float(x) for x in c)
    if abs(sum(c) - 1.0) > 1e-9:
        raise ValueError(f"chromaticity {c} must sum to 1")
    return c


@dataclass(frozen=True)
class Doorway:
    side: str          # "left" or "right"
    start: float       # along-hallway position of the near jamb, meters
    width: float
    id: str            # landmark id prefix; jambs are <id>a and <id>b


@dataclass(frozen=True)
class ShadowDefect:
    polygon: list[tuple[float, float]]  # floor coords, map frame
    gain: float                         # multiplies shading inside, in (0, 1]


@dataclass(frozen=True)
class HighlightDefect:
    center: tuple[float, float]         # floor coords, map frame
    radius: float
    amplitude: float
    gamma: tuple[float, float, float]   # illuminant chromaticity of the lobe


@dataclass(frozen=True)
class NotchDefect:
    side: str
    start: float
    width: float
    height: float


@dataclass(frozen=True)
class SceneSpec:
    camera_pose: Pose2D
    doorways: list[Doorway]
    hallway_half_width: float = 1.2
    hallway_center_y: float = 0.0
    hallway_x: tuple[float, float] = (0.0, 60.0)
    floor_chroma: tuple = (0.25, 0.45, 0.30)
    wall_chroma: tuple = (0.42, 0.33, 0.25)
    door_chroma: tuple = (0.30, 0.28, 0.42)
    notch_chroma: tuple = (0.36, 0.40, 0.24)
    door_height: float = 2.1
    wall_height: float = 3.0
    gain0: float = 0.9
    falloff: float = 40.0      # shading gain = gain0 / (1 + distance/falloff)
    shadows: list[ShadowDefect] = field(default_factory=list)
    highlights: list[HighlightDefect] = field(default_factory=list)
    notches: list[NotchDefect] = field(default_factory=list)
    seed: int = 0
    noise_sigma: float = 0.004

    def __post_init__(self):
        for c in (self.floor_chroma, self.wall_chroma, self.door_chroma,
                  self.notch_chroma):
            _unit_chroma(c)
        for d in self.doorways:
            if not self.hallway_x[0] <= d.start <= d.start + d.width <= self.hallway_x[1]:
                raise ValueError(f"doorway {d.id} outside hallway extent")
        for s in self.shadows:
            if not 0.0 < s.gain <= 1.0:
                raise ValueError("shadow gain must lie in (0, 1]")

    def wall_y(self, side: str) -> float:
        off = self.hallway_half_width
        return self.hallway_center_y + (off if side == "left" else -off)


@dataclass(frozen=True)
class TruthCorner:
    u: float
    v: float
    floor: bool
    landmark_id: str
    ground: tuple[float, float]  # map frame


@dataclass(frozen=True)
class GroundTruth:
    corners: list[TruthCorner]
    pose: Pose2D
    landmark_ids: list[str]


def doorway_landmarks(spec_or_doorways, half_width: float | None = None,
                      center_y: float | None = None) -> list[Landmark]:
    """Jamb-base landmarks (two per doorway) in map coordinates."""
    if isinstance(spec_or_doorways, SceneSpec):
        spec = spec_or_doorways
        doorways = spec.doorways
        half_width = spec.hallway_half_width
        center_y = spec.hallway_center_y
    else:
        doorways = spec_or_doorways
    out = []
    for d in doorways:
        y = center_y + (half_width if d.side == "left" else -half_width)
        out.append(Landmark(id=f"{d.id}a", x=d.start, y=y, kind="doorway_jamb"))
        out.append(Landmark(id=f"{d.id}b", x=d.start + d.width, y=y,
                            kind="doorway_jamb"))
    return out


def scene_floor_plan(spec: SceneSpec, margin: float = 1.0) -> FloorPlan:
    """The floor plan a SceneSpec's hallway and doorways imply."""
    x0, x1 = spec.hallway_x
    yl = spec.wall_y("left")
    yr = spec.wall_y("right")
    return FloorPlan(
        width=x1 + margin,
        depth=yl + margin,
        hallways=[Hallway(left=[(x0, yl), (x1, yl)], right=[(x0, yr), (x1, yr)])],
        landmarks=doorway_landmarks(spec),
    )


def _camera_frame(pose: Pose2D, x: np.ndarray, y: np.ndarray):
    """Map-frame points -> camera ground frame (forward, left)."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx, dy = x - pose.x, y - pose.y
    return c * dx + s * dy, -s * dx + c * dy


def render_hallway(spec: SceneSpec, cam: CameraModel,
                   width: int = 640, height: int = 480,
                   truth_max_distance: float = 12.0,
                   truth_border_margin: int = 10) -> tuple[RgbImage, GroundTruth]:
    """Render the scene and compute analytic ground truth.

    Ground-truth corners are the doorway jamb base points visible within
    truth_max_distance of the camera and truth_border_margin pixels of the
    frame edge; no pixel search is involved.
    """
    x0c, y0c = spec.camera_pose.x, spec.camera_pose.y
    hx0, hx1 = spec.hallway_x
    ycen, hw = spec.hallway_center_y, spec.hallway_half_width
    if not (hx0 < x0c < hx1 and abs(y0c - ycen) < hw):
        raise ValueError("camera must be inside the hallway")

    u = np.arange(width, dtype=np.float64)[None, :].repeat(height, axis=0)
    v = np.arange(height, dtype=np.float64)[:, None].repeat(width, axis=1)
    xc = (u - cam.cx) / cam.fx
    yc = (v - cam.cy) / cam.fy
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    dxg = -sp * yc + cp       # camera ground frame: forward
    dyg = -xc                 # left
    dzg = -cp * yc - sp       # up
    ct, st = math.cos(spec.camera_pose.theta), math.sin(spec.camera_pose.theta)
    dxm = ct * dxg - st * dyg
    dym = st * dxg + ct * dyg

    t_best = np.full((height, width), np.inf)
    chroma = np.zeros((height, width, 3))
    is_floor = np.zeros((height, width), dtype=bool)
    hit_x = np.zeros((height, width))
    hit_y = np.zeros((height, width))

    # floor plane z = 0
    down = dzg < -1e-12
    t = np.where(down, cam.height / np.where(down, -dzg, 1.0), np.inf)
    fx_ = x0c + t * dxm
    fy_ = y0c + t * dym
    hit = down & (np.abs(fy_ - ycen) <= hw) & (fx_ >= hx0) & (fx_ <= hx1) & (t < t_best)
    t_best[hit] = t[hit]
    chroma[hit] = spec.floor_chroma
    is_floor[hit] = True
    hit_x[hit] = fx_[hit]
    hit_y[hit] = fy_[hit]

    # side walls (with doorway and notch rectangles)
    for side in ("left", "right"):
        yw = spec.wall_y(side)
        denom = np.where(np.abs(dym) > 1e-12, dym, 1e-12)
        t = (yw - y0c) / denom
        z = cam.height + t * dzg
        wx = x0c + t * dxm
        ok = (t > 1e-9) & (np.sign(dym) == np.sign(yw - y0c)) \
            & (z >= 0.0) & (z <= spec.wall_height) \
            & (wx >= hx0) & (wx <= hx1) & (t < t_best)
        if not ok.any():
            continue
        surf = np.empty((height, width, 3))
        surf[:] = spec.wall_chroma
        for d in spec.doorways:
            if d.side != side:
                continue
            in_door = ok & (wx >= d.start) & (wx <= d.start + d.width) \
                & (z <= spec.door_height)
            surf[in_door] = spec.door_chroma
        for nt in spec.notches:
            if nt.side != side:
                continue
            in_notch = ok & (wx >= nt.start) & (wx <= nt.start + nt.width) \
                & (z <= nt.height)
            surf[in_notch] = spec.notch_chroma
        t_best[ok] = t[ok]
        chroma[ok] = surf[ok]
        is_floor[ok] = False
        hit_x[ok] = wx[ok]
        hit_y[ok] = yw

    gain = np.where(np.isfinite(t_best), spec.gain0 / (1.0 + t_best / spec.falloff), 0.0)
    for sh in spec.shadows:
        inside = PolyPath(sh.polygon).contains_points(
            np.column_stack([hit_x.ravel(), hit_y.ravel()])
        ).reshape(height, width)
        gain = np.where(is_floor & inside, gain * sh.gain, gain)

    img = chroma * gain[:, :, None]
    for hl in spec.highlights:
        d2 = (hit_x - hl.center[0]) ** 2 + (hit_y - hl.center[1]) ** 2
        lobe = hl.amplitude * np.exp(-d2 / (2.0 * hl.radius ** 2))
        lobe = np.where(is_floor, lobe, 0.0)
        img = img + lobe[:, :, None] * np.asarray(_unit_chroma(hl.gamma))

    rng = np.random.default_rng(spec.seed)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    img = np.clip(img, 0.0, 1.0)

    truth = scene_ground_truth(spec, cam, width, height,
                               truth_max_distance, truth_border_margin)
    return RgbImage(img), truth


def scene_ground_truth(spec: SceneSpec, cam: CameraModel, width: int, height: int,
                       truth_max_distance: float, border_margin: int) -> GroundTruth:
    corners = []
    ids = []
    for lm in doorway_landmarks(spec):
        gx, gy = _camera_frame(spec.camera_pose, np.float64(lm.x), np.float64(lm.y))
        if gx <= 0.3 or gx > truth_max_distance:
            continue
        try:
            pu, pv = ground_to_image((float(gx), float(gy)), cam)
        except ValueError:
            continue
        if not (border_margin <= pu < width - border_margin
                and border_margin <= pv < height - border_margin):
            continue
        corners.append(TruthCorner(u=pu, v=pv, floor=True,
                                   landmark_id=lm.id, ground=(lm.x, lm.y)))
        ids.append(lm.id)
    return GroundTruth(corners=corners, pose=spec.camera_pose, landmark_ids=ids)


# ---------------------------------------------------------------------------
# defect presets mirroring the five observed failure narratives:
# A dark shadow from poor lighting, B a sun stripe across the floor,
# C scattered occlusion shadows, D one architectural notch, E two.

def _ahead(pose: Pose2D, forward: float, left: float) -> tuple[float, float]:
    return Pose2D(pose.x, pose.y, pose.theta).transform((forward, left))


def preset_defects(name: str, spec: SceneSpec) -> SceneSpec:
    pose = spec.camera_pose
    hw = spec.hallway_half_width
    if name == "A":
        poly = [_ahead(pose, f, l) for f, l in
                [(2.0, hw), (6.0, hw), (6.0, 0.1), (2.0, 0.3)]]
        return replace(spec, shadows=[ShadowDefect(polygon=poly, gain=0.12)])
    if name == "B":
        poly = [_ahead(pose, f, l) for f, l in
                [(3.0, hw), (4.4, hw), (6.8, -hw), (5.4, -hw)]]
        return replace(spec, shadows=[ShadowDefect(polygon=poly, gain=0.45)])
    if name == "C":
        shs = []
        for i, (f, l) in enumerate([(2.5, 0.5), (4.5, -0.4), (6.5, 0.2)]):
            c = _ahead(pose, f, l)
            r = 0.45 + 0.1 * i
            poly = [(c[0] + r * math.cos(a), c[1] + r * math.sin(a))
                    for a in np.linspace(0.3, 2 * math.pi + 0.3, 7)[:-1]]
            shs.append(ShadowDefect(polygon=poly, gain=0.5))
        return replace(spec, shadows=shs)
    if name == "D":
        s = _nearest_free_wall_spot(spec, "left", 4.0)
        return replace(spec, notches=[
            NotchDefect(side="left", start=s, width=0.5, height=1.6)])
    if name == "E":
        sl = _nearest_free_wall_spot(spec, "left", 3.5)
        sr = _nearest_free_wall_spot(spec, "right", 5.0)
        return replace(spec, notches=[
            NotchDefect(side="left", start=sl, width=0.5, height=1.6),
            NotchDefect(side="right", start=sr, width=0.5, height=1.6)])
    raise ValueError(f"unknown defect preset {name!r}")


PRESET_NAMES = ("A", "B", "C", "D", "E")


def _nearest_free_wall_spot(spec: SceneSpec, side: str, forward: float,
                            width: float = 0.5) -> float:
    """Along-hallway start for a notch that does not overlap a doorway."""
    want = spec.camera_pose.x + forward if abs(spec.camera_pose.theta) < math.pi / 2 \
        else spec.camera_pose.x - forward - width
    spans = sorted((d.start - 0.3, d.start + d.width + 0.3)
                   for d in spec.doorways if d.side == side)
    s = max(want, spec.hallway_x[0] + 0.1)
    for lo, hi in spans:
        if s + width > lo and s < hi:
            s = hi
    return min(s, spec.hallway_x[1] - width - 0.1)


# ---------------------------------------------------------------------------
# paper-testbed fixtures: 45 ft x 105 ft floor, hallway down the long axis

TESTBED_WIDTH = 32.004
TESTBED_DEPTH = 13.716
TESTBED_CENTER_Y = TESTBED_DEPTH / 2.0
TESTBED_HALF_WIDTH = 1.2


# Aperiodic door layout: a regular hallway is ambiguous under a shift or
# flip-and-shift of the pose, which no matcher can resolve.  These spacings
# were searched so no shifted or mirrored copy of the jamb pattern aligns
# closely with itself inside a single camera's visibility window.
_LEFT_DOORS = [(4.81, 0.85), (8.37, 0.80), (13.74, 0.90), (17.49, 1.05),
               (21.73, 0.85), (25.94, 1.05)]
_RIGHT_DOORS = [(4.80, 1.15), (9.49, 1.05), (14.33, 0.90), (18.11, 0.95),
                (21.47, 0.95), (24.77, 0.80)]


def testbed_doorways() -> list[Doorway]:
    out = []
    for i, (start, width) in enumerate(_LEFT_DOORS):
        out.append(Doorway(side="left", start=start, width=width, id=f"L{i:02d}"))
    for i, (start, width) in enumerate(_RIGHT_DOORS):
        out.append(Doorway(side="right", start=start, width=width, id=f"R{i:02d}"))
    return out


def make_testbed_plan() -> FloorPlan:
    yl = TESTBED_CENTER_Y + TESTBED_HALF_WIDTH
    yr = TESTBED_CENTER_Y - TESTBED_HALF_WIDTH
    landmarks = doorway_landmarks(testbed_doorways(), TESTBED_HALF_WIDTH,
                                  TESTBED_CENTER_Y)
    for x, tag in ((0.0, "near"), (TESTBED_WIDTH, "far")):
        landmarks.append(Landmark(id=f"FC_{tag}_l", x=x, y=yl, kind="floor_corner"))
        landmarks.append(Landmark(id=f"FC_{tag}_r", x=x, y=yr, kind="floor_corner"))
    return FloorPlan(
        width=TESTBED_WIDTH,
        depth=TESTBED_DEPTH,
        hallways=[Hallway(left=[(0.0, yl), (TESTBED_WIDTH, yl)],
                          right=[(0.0, yr), (TESTBED_WIDTH, yr)])],
        landmarks=landmarks,
    )


def make_testbed_scene(pose: Pose2D, seed: int = 0,
                       noise_sigma: float = 0.004) -> SceneSpec:
    return SceneSpec(
        camera_pose=pose,
        doorways=testbed_doorways(),
        hallway_half_width=TESTBED_HALF_WIDTH,
        hallway_center_y=TESTBED_CENTER_Y,
        hallway_x=(0.0, TESTBED_WIDTH),
        seed=seed,
        noise_sigma=noise_sigma,
    )


DEFAULT_TEST_CAMERA = CameraModel(fx=500.0, fy=500.0, cx=320.0, cy=240.0,
                                  height=1.4, pitch=0.55)


# ---------------------------------------------------------------------------
# RF simulation: log-distance path loss

def simulate_rss(ap_positions: list[tuple[float, float]], query: tuple[float, float],
                 p0: float = -40.0, exponent: float = 3.0,
                 noise_sigma: float = 3.0, seed: int = 0) -> RssScan:
    """rss_i = p0 - 10 n log10(max(d_i, 1 m)) + noise, clamped to [-120, 0]."""
    if not ap_positions:
        raise ValueError("need at least one access point")
    rng = np.random.default_rng(seed)
    readings = {}
    for i, (ax, ay) in enumerate(ap_positions):
        d = max(math.hypot(query[0] - ax, query[1] - ay), 1.0)
        rss = p0 - 10.0 * exponent * math.log10(d)
        if noise_sigma > 0:
            rss += rng.normal(0.0, noise_sigma)
        readings[f"ap{i:02d}"] = float(np.clip(rss, -120.0, 0.0))
    return RssScan(readings=readings)


def fingerprint_rows(ap_positions: list[tuple[float, float]],
                     plan: FloorPlan, spacing: float = 3.0,
                     p0: float = -40.0, exponent: float = 3.0) -> list:
    """Noise-free survey rows on a regular grid, for ingest_fingerprints."""
    rows = []
    for x in np.arange(spacing / 2.0, plan.width, spacing):
        for y in np.arange(spacing / 2.0, plan.depth, spacing):
            scan = simulate_rss(ap_positions, (float(x), float(y)),
                                p0=p0, exponent=exponent, noise_sigma=0.0)
            for ap, rss in scan.readings.items():
                rows.append((float(x), float(y), ap, rss))
    return rows


def testbed_ap_positions() -> list[tuple[float, float]]:
    return [(4.0, 2.0), (16.0, 11.5), (28.0, 2.5), (10.0, 12.5),
            (22.0, 1.5), (31.0, 12.0)]
