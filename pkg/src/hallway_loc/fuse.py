"""RANSAC correspondence search between image micro-landmarks and the floor
plan, gated by the WLAN coarse estimate, producing the final localization.

Hypotheses pair 2 points from each image floor-edge line with 2 map
landmarks per hallway side.  Image pairs are sampled with probability
proportional to their separation (wider pairs give a steadier pose); map
pairs are pruned to those whose separation matches the image pair, since
point-to-point distance is pose-invariant.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import corners as corners_mod
from . import illum, segment
from .geometry import (
    CameraModel,
    DegenerateFitError,
    GroundPoint,
    HorizonError,
    Pose2D,
    estimate_rigid_2d,
    image_to_ground,
)
from .image import RgbImage
from .wlan import CoarseEstimate, FingerprintDb, RssScan, knn_locate

STATUS_OK = "ok"
STATUS_DEGRADED = "degraded_wlan_only"
STATUS_FAILED = "failed"

LANDMARK_KINDS = ("doorway_jamb", "floor_corner")


@dataclass(frozen=True)
class Landmark:
    id: str
    x: float
    y: float
    kind: str

    def __post_init__(self):
        if self.kind not in LANDMARK_KINDS:
            raise ValueError(f"unknown landmark kind {self.kind!r}")


@dataclass(frozen=True)
class Hallway:
    left: list[tuple[float, float]]
    right: list[tuple[float, float]]

    def __post_init__(self):
        if len(self.left) < 1 or len(self.right) < 1:
            raise ValueError("hallway needs at least one edge point per side")


@dataclass(frozen=True)
class FloorPlan:
    width: float
    depth: float
    hallways: list[Hallway]
    landmarks: list[Landmark]

    def __post_init__(self):
        for lm in self.landmarks:
            if not (0 <= lm.x <= self.width and 0 <= lm.y <= self.depth):
                raise ValueError(f"landmark {lm.id} outside plan bounds")

    @staticmethod
    def from_json(text: str) -> "FloorPlan":
        doc = json.loads(text)
        return FloorPlan(
            width=doc["width_m"],
            depth=doc["depth_m"],
            hallways=[Hallway(left=[tuple(p) for p in h["left"]],
                              right=[tuple(p) for p in h["right"]])
                      for h in doc["hallways"]],
            landmarks=[Landmark(id=l["id"], x=l["x_m"], y=l["y_m"], kind=l["kind"])
                       for l in doc["landmarks"]],
        )

    def to_json(self) -> str:
        return json.dumps({
            "width_m": self.width,
            "depth_m": self.depth,
            "hallways": [{"left": [list(p) for p in h.left],
                          "right": [list(p) for p in h.right]}
                         for h in self.hallways],
            "landmarks": [{"id": l.id, "x_m": l.x, "y_m": l.y, "kind": l.kind}
                          for l in self.landmarks],
        }, indent=2)


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 2000
    # half the smallest plan-landmark gap; a looser bound lets shifted
    # copies of the door pattern absorb chance matches and outvote the truth
    inlier_threshold: float = 0.3
    min_pair_separation: float = 0.5
    pair_separation_tol: float = 0.75
    seed: int = 0
    min_inliers: int = 6
    candidate_margin: float = 12.0
    dedup_radius: float = 0.25
    coarse_slack: float = 0.2

    def __post_init__(self):
        if (self.max_iterations < 1 or self.inlier_threshold <= 0
                or self.min_pair_separation <= 0 or self.min_inliers < 1):
            raise ValueError("RANSAC parameters must be positive")


class HypothesisCount(NamedTuple):
    count: int
    underflow: bool


@dataclass(frozen=True)
class CorrespondenceHypothesis:
    # 4 (ground point, map point) pairs: 2 from the left line, 2 right
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]


class HypothesisExhausted(RuntimeError):
    """No admissible hypothesis after the bounded rejection attempts."""


@dataclass
class LocalizationResult:
    status: str
    pose: Pose2D
    heading_valid: bool
    inliers: int
    rms: float
    iterations: int
    coarse: CoarseEstimate
    diagnostics: dict = field(default_factory=dict)


def count_hypotheses(n_image: int, n_map: int) -> HypothesisCount:
    """Number of ordered four-point correspondences: P(n_image,4) * P(n_map,4)."""
    if n_image < 4 or n_map < 4:
        return HypothesisCount(0, True)

    def perm4(n):
        return n * (n - 1) * (n - 2) * (n - 3)

    return HypothesisCount(perm4(n_image) * perm4(n_map), False)


def candidate_landmarks(plan: FloorPlan, coarse: CoarseEstimate,
                        margin: float = 0.0) -> list[Landmark]:
    """Landmarks inside the coarse disc (grown by margin), in stable id order.

    The disc bounds the camera position; detected landmarks can sit a full
    vision range beyond it, so callers pass that range as the margin.
    """
    cx, cy = coarse.center
    reach = coarse.radius + margin
    out = [lm for lm in plan.landmarks
           if np.hypot(lm.x - cx, lm.y - cy) <= reach]
    if not out:
        raise ValueError(
            f"no landmarks within {reach:.1f} m of ({cx:.1f}, {cy:.1f}); "
            "increase the search radius"
        )
    return sorted(out, key=lambda l: l.id)


def _polyline_distance(p: tuple[float, float], poly: list[tuple[float, float]]) -> float:
    best = float("inf")
    pt = np.asarray(p)
    if len(poly) == 1:
        return float(np.linalg.norm(pt - np.asarray(poly[0])))
    for a, b in zip(poly[:-1], poly[1:]):
        a = np.asarray(a)
        b = np.asarray(b)
        ab = b - a
        t = np.clip(np.dot(pt - a, ab) / max(np.dot(ab, ab), 1e-12), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(pt - (a + t * ab))))
    return best


def group_landmarks_by_side(plan: FloorPlan, landmarks: list[Landmark]):
    """Split landmarks into (left, right) by nearest hallway edge polyline,
    plus the along-hallway axis (unit vector) of the dominant hallway."""
    hall = plan.hallways[0]
    axis = np.asarray(hall.left[-1]) - np.asarray(hall.left[0])
    n = np.linalg.norm(axis)
    axis = axis / n if n > 1e-9 else np.array([1.0, 0.0])
    left, right = [], []
    for lm in landmarks:
        dl = min(_polyline_distance((lm.x, lm.y), h.left) for h in plan.hallways)
        dr = min(_polyline_distance((lm.x, lm.y), h.right) for h in plan.hallways)
        (left if dl <= dr else right).append(lm)
    return left, right, (float(axis[0]), float(axis[1]))


def _admissible_image_pairs(pts: list[GroundPoint], min_sep: float):
    pairs = []
    weights = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            sep = np.hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y)
            if sep >= min_sep:
                # nearer to the camera first
                a, b = (i, j) if pts[i].x <= pts[j].x else (j, i)
                pairs.append((a, b, float(sep)))
                weights.append(float(sep))
    return pairs, np.array(weights)


def _map_pairs_matching(cands: list[Landmark], sep: float, tol: float,
                        axis: tuple[float, float], forward: bool):
    """Ordered candidate landmark pairs whose separation matches sep +- tol,
    ordered along the hallway axis (reversed when forward is False)."""
    out = []
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            a, b = cands[i], cands[j]
            d = float(np.hypot(a.x - b.x, a.y - b.y))
            if abs(d - sep) > tol:
                continue
            sa = a.x * axis[0] + a.y * axis[1]
            sb = b.x * axis[0] + b.y * axis[1]
            first, second = (a, b) if (sa <= sb) == forward else (b, a)
            out.append((first, second))
    return out


def generate_hypothesis(rng: np.random.Generator,
                        left_pts: list[GroundPoint], right_pts: list[GroundPoint],
                        left_cands: list[Landmark], right_cands: list[Landmark],
                        axis: tuple[float, float], cfg: RansacConfig,
                        max_attempts: int = 64,
                        cache: dict | None = None) -> CorrespondenceHypothesis:
    """Sample one four-point correspondence.

    2 points per image line, chosen with probability proportional to their
    separation (pairs closer than min_pair_separation are inadmissible); 2
    map landmarks per side with a matching separation, ordered consistently
    along the hallway.  The travel direction and the left/right assignment
    are sampled, since the camera may face either way down the hallway.
    """
    if len(left_pts) < 2 or len(right_pts) < 2:
        raise HypothesisExhausted("need 2 points on each image line")
    # the image pairs and matching map pairs repeat across iterations, so a
    # caller-held cache makes repeated calls cheap
    cache = {} if cache is None else cache
    if "pairs" not in cache:
        lp, lw = _admissible_image_pairs(left_pts, cfg.min_pair_separation)
        rp, rw = _admissible_image_pairs(right_pts, cfg.min_pair_separation)
        lcum = np.cumsum(lw) if lp else lw
        rcum = np.cumsum(rw) if rp else rw
        cache["pairs"] = (lp, lcum, rp, rcum)
    lp, lcum, rp, rcum = cache["pairs"]
    if not lp or not rp:
        raise HypothesisExhausted("all image pairs below min_pair_separation")

    def matching(cands_key, cands, sep, forward):
        key = (cands_key, round(sep, 9), forward)
        if key not in cache:
            cache[key] = _map_pairs_matching(cands, sep, cfg.pair_separation_tol,
                                             axis, forward)
        return cache[key]

    for _ in range(max_attempts):
        # separation-weighted pick via inverse-cdf; cheaper than rng.choice
        li = int(np.searchsorted(lcum, rng.random() * lcum[-1], side="right"))
        ri = int(np.searchsorted(rcum, rng.random() * rcum[-1], side="right"))
        li = min(li, len(lp) - 1)
        ri = min(ri, len(rp) - 1)
        forward = bool(rng.integers(2))
        flip = bool(rng.integers(2))
        cl, cr = (right_cands, left_cands) if flip else (left_cands, right_cands)
        la, lb, lsep = lp[li]
        ra, rb, rsep = rp[ri]
        lmaps = matching(flip, cl, lsep, forward)
        rmaps = matching(not flip, cr, rsep, forward)
        if not lmaps or not rmaps:
            continue
        li_lm = int(rng.integers(len(lmaps)))
        lm = lmaps[li_lm]
        # both sides must place the camera at the same hallway-axis station,
        # otherwise the 4-point fit is wasted on an impossible pairing
        rm_key = ("rm", li, ri, forward, flip, li_lm)
        if rm_key not in cache:
            sign = 1.0 if forward else -1.0
            off_l = (lm[0].x * axis[0] + lm[0].y * axis[1]
                     - sign * left_pts[la].x)
            cache[rm_key] = [rm for rm in rmaps
                             if abs(rm[0].x * axis[0] + rm[0].y * axis[1]
                                    - sign * right_pts[ra].x - off_l)
                             <= cfg.pair_separation_tol]
        rm_ok = cache[rm_key]
        if not rm_ok:
            continue
        rm = rm_ok[int(rng.integers(len(rm_ok)))]
        pts = [left_pts[la], left_pts[lb], right_pts[ra], right_pts[rb]]
        maps = [lm[0], lm[1], rm[0], rm[1]]
        return CorrespondenceHypothesis(pairs=[
            ((p.x, p.y), (m.x, m.y)) for p, m in zip(pts, maps)
        ])
    raise HypothesisExhausted(f"no admissible hypothesis in {max_attempts} attempts")


def score_hypothesis(h: CorrespondenceHypothesis,
                     ground_pts: list[GroundPoint],
                     candidates: list[Landmark],
                     cfg: RansacConfig,
                     arrays: tuple[np.ndarray, np.ndarray] | None = None):
    """Fit a pose to the 4 pairs and count supporting micro-landmarks.

    Inliers use greedy nearest-first one-to-one assignment between the
    transformed micro-landmarks and the candidate plan landmarks.  Returns
    (pose, inlier (ground_idx, landmark_idx) pairs, rms over inliers).
    """
    pose, _ = estimate_rigid_2d(h.pairs)
    inliers, rms = _assign_inliers(pose, ground_pts, candidates,
                                   cfg.inlier_threshold, arrays)
    return pose, inliers, rms


def _point_arrays(ground_pts: list[GroundPoint], candidates: list[Landmark]):
    return (np.array([(p.x, p.y) for p in ground_pts]),
            np.array([(l.x, l.y) for l in candidates]))


def _assign_inliers(pose: Pose2D, ground_pts: list[GroundPoint],
                    candidates: list[Landmark], threshold: float,
                    arrays: tuple[np.ndarray, np.ndarray] | None = None):
    """Greedy nearest-first one-to-one assignment under a pose."""
    pts, cand_xy = arrays if arrays is not None else _point_arrays(
        ground_pts, candidates)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    mapped = pts @ np.array([[c, s], [-s, c]]) + (pose.x, pose.y)
    diff = mapped[:, None, :] - cand_xy[None, :, :]
    d = np.sqrt(diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2)
    order = np.argsort(d, axis=None, kind="stable")
    used_g: set[int] = set()
    used_c: set[int] = set()
    inliers: list[tuple[int, int]] = []
    dists: list[float] = []
    for flat in order:
        gi, ci = divmod(int(flat), len(candidates))
        dist = d[gi, ci]
        if dist > threshold:
            break
        if gi in used_g or ci in used_c:
            continue
        used_g.add(gi)
        used_c.add(ci)
        inliers.append((gi, ci))
        dists.append(float(dist))
    rms = float(np.sqrt(np.mean(np.square(dists)))) if dists else float("inf")
    return inliers, rms


def _local_refine(pose: Pose2D, inliers: list[tuple[int, int]], rms: float,
                  ground_pts: list[GroundPoint], cands: list[Landmark],
                  cfg: RansacConfig, max_rounds: int = 10,
                  arrays: tuple[np.ndarray, np.ndarray] | None = None):
    """Refit on the inlier pairs, re-select inliers, repeat to a fixed point.

    Accepts a round only when (count, -rms) improves and the residual stays
    at or below the raw 4-point hypothesis residual.
    """
    raw_rms = rms

    def refit(pairs_idx):
        return estimate_rigid_2d([
            ((ground_pts[gi].x, ground_pts[gi].y), (cands[ci].x, cands[ci].y))
            for gi, ci in pairs_idx])

    if len(inliers) < 2:
        return pose, inliers, rms
    try:
        pose, rms = refit(inliers)
    except DegenerateFitError:
        return pose, inliers, rms
    for _ in range(max_rounds):
        new_inliers, _ = _assign_inliers(pose, ground_pts, cands,
                                         cfg.inlier_threshold, arrays)
        if new_inliers == inliers or len(new_inliers) < 2:
            break
        try:
            new_pose, new_rms = refit(new_inliers)
        except DegenerateFitError:
            break
        if ((len(new_inliers), -new_rms) <= (len(inliers), -rms)
                or new_rms > raw_rms):
            break
        inliers, pose, rms = new_inliers, new_pose, new_rms
    return pose, inliers, rms


def _dedup_points(points: list[GroundPoint], radius: float) -> list[GroundPoint]:
    """Merge ground points closer than radius (cluster mean, first-seen order).

    Repeated detections of one physical jamb must not claim two plan
    landmarks each, which inflates consensus for aliased poses.
    """
    if radius <= 0:
        return list(points)
    clusters: list[list[GroundPoint]] = []
    for p in points:
        for cl in clusters:
            cx = sum(q.x for q in cl) / len(cl)
            cy = sum(q.y for q in cl) / len(cl)
            if np.hypot(p.x - cx, p.y - cy) <= radius:
                cl.append(p)
                break
        else:
            clusters.append([p])
    return [GroundPoint(x=sum(q.x for q in cl) / len(cl),
                        y=sum(q.y for q in cl) / len(cl)) for cl in clusters]


def _degraded(coarse: CoarseEstimate, reason: str,
              diagnostics: dict | None = None) -> LocalizationResult:
    diag = dict(diagnostics or {})
    diag["degraded_reason"] = reason
    return LocalizationResult(
        status=STATUS_DEGRADED,
        pose=Pose2D(x=coarse.center[0], y=coarse.center[1], theta=0.0),
        heading_valid=False,
        inliers=0,
        rms=float("inf"),
        iterations=0,
        coarse=coarse,
        diagnostics=diag,
    )


def ransac_locate(micro_landmarks: list[GroundPoint], plan: FloorPlan,
                  coarse: CoarseEstimate, cfg: RansacConfig) -> LocalizationResult:
    """Best-consensus pose over seeded hypothesis/score rounds.

    Best is lexicographic (inlier count, -rms), earliest iteration winning
    ties; the winner is refined by refitting on all its inlier pairs.
    Precondition failures degrade to the WLAN-only answer, never crash.
    """
    diag: dict = {"micro_landmarks": len(micro_landmarks), "degenerate_hypotheses": 0}
    micro_landmarks = _dedup_points(micro_landmarks, cfg.dedup_radius)
    diag["unique_landmarks"] = len(micro_landmarks)
    if len(micro_landmarks) < 4:
        return _degraded(coarse, "fewer than 4 micro-landmarks", diag)
    try:
        cands = candidate_landmarks(plan, coarse, cfg.candidate_margin)
    except ValueError as e:
        return _degraded(coarse, str(e), diag)
    left_cands, right_cands, axis = group_landmarks_by_side(plan, cands)
    left_pts = sorted([p for p in micro_landmarks if p.y > 0], key=lambda p: p.x)
    right_pts = sorted([p for p in micro_landmarks if p.y < 0], key=lambda p: p.x)
    diag["candidates"] = len(cands)
    if len(left_pts) < 2 or len(right_pts) < 2:
        return _degraded(coarse, "need 2 micro-landmarks per side", diag)
    if len(left_cands) < 2 or len(right_cands) < 2:
        return _degraded(coarse, "need 2 candidate landmarks per side", diag)
    rng = np.random.default_rng(cfg.seed)
    best = None  # (inliers, -rms, -iteration, pose, inlier_pairs)
    iterations = 0
    hyp_cache: dict = {}
    arrays = _point_arrays(micro_landmarks, cands)
    for it in range(cfg.max_iterations):
        iterations = it + 1
        try:
            h = generate_hypothesis(rng, left_pts, right_pts,
                                    left_cands, right_cands, axis, cfg,
                                    cache=hyp_cache)
        except HypothesisExhausted:
            break
        try:
            pose, inliers, rms = score_hypothesis(h, micro_landmarks, cands,
                                                  cfg, arrays)
        except DegenerateFitError:
            diag["degenerate_hypotheses"] += 1
            continue
        # the RF disc bounds the camera position; poses outside it are
        # aliases of the door pattern, not answers
        off = np.hypot(pose.x - coarse.center[0], pose.y - coarse.center[1])
        if off > coarse.radius * (1.0 + cfg.coarse_slack):
            diag["degenerate_hypotheses"] += 1
            continue
        if best is not None and len(inliers) + 2 < best[0][0]:
            continue
        # local refinement on every hypothesis near the best so far: refit on
        # the inliers, re-select under the refitted pose, repeat while
        # (count, -rms) improves; a raw score slightly behind the leader can
        # still refine past it, so the trigger is loose by 2 inliers; the
        # refined residual never exceeds the raw hypothesis residual
        r_pose, r_inliers, r_rms = _local_refine(
            pose, inliers, rms, micro_landmarks, cands, cfg, arrays=arrays)
        off = np.hypot(r_pose.x - coarse.center[0],
                       r_pose.y - coarse.center[1])
        if off > coarse.radius * (1.0 + cfg.coarse_slack):
            diag["degenerate_hypotheses"] += 1
            continue
        key = (len(r_inliers), -r_rms, -it)
        if best is None or key > best[0]:
            best = (key, r_pose, r_inliers, rms)
        if len(r_inliers) == len(micro_landmarks) and r_rms < 1e-12:
            break
    diag["iterations"] = iterations
    if best is None or best[0][0] < cfg.min_inliers:
        found = 0 if best is None else best[0][0]
        return _degraded(coarse, f"best hypothesis had {found} inliers "
                                 f"(min {cfg.min_inliers})", diag)
    _, pose, inlier_pairs, raw_rms = best
    rms = -best[0][1]
    diag["raw_rms"] = raw_rms
    return LocalizationResult(
        status=STATUS_OK,
        pose=pose,
        heading_valid=True,
        inliers=len(inlier_pairs),
        rms=rms,
        iterations=iterations,
        coarse=coarse,
        diagnostics=diag,
    )


def whole_plan_coarse(plan: FloorPlan) -> CoarseEstimate:
    """Fallback disc covering the entire plan, for when RF gives nothing."""
    cx, cy = plan.width / 2.0, plan.depth / 2.0
    return CoarseEstimate(center=(cx, cy),
                          radius=float(np.hypot(cx, cy) + 1.0))


def detect_micro_landmarks(img: RgbImage, cam: CameraModel,
                           seg_cfg: dict | None = None,
                           corner_cfg: dict | None = None,
                           features: np.ndarray | None = None):
    """Vision half of the pipeline: image -> ground-frame micro-landmarks.

    Returns (ground points, corner points, stage-count diagnostics).  The
    `features` override lets callers substitute an ablation feature image.
    """
    seg_cfg = seg_cfg or {}
    corner_cfg = corner_cfg or {}
    diag: dict = {}
    if features is None:
        est = illum.estimate_illuminant(img)
        features = illum.normalize_illumination(img, est)
        diag["illuminant_confidence"] = est.confidence
    h_r = seg_cfg.get("h_r", segment.DEFAULT_H_R)
    min_region = seg_cfg.get("min_region_size", segment.DEFAULT_MIN_REGION)
    filter_cfg = {k: v for k, v in seg_cfg.items() if k != "min_region_size"}
    filtered = segment.mean_shift_filter(features, **filter_cfg)
    labels = segment.label_segments(filtered, h_r=h_r, min_region_size=min_region)
    contours = segment.extract_boundaries(labels)
    detected = corners_mod.detect_corners(
        contours, image_size=(img.width, img.height), **corner_cfg)
    micro, degraded = corners_mod.filter_micro_landmarks(detected, labels)
    diag.update(regions=labels.region_count, corners=len(detected),
                micro_corners=len(micro), floor_filter_degraded=degraded)
    ground = []
    kept_corners = []
    for c in micro:
        try:
            g = image_to_ground(c.coord, cam)
        except (HorizonError, ValueError):
            continue
        ground.append(g)
        kept_corners.append(c)
    diag["ground_points"] = len(ground)
    return ground, kept_corners, diag


def locate(img: RgbImage, scan: RssScan | None, db: FingerprintDb | None,
           plan: FloorPlan, cam: CameraModel, ransac_cfg: RansacConfig,
           wlan_cfg: dict | None = None, seg_cfg: dict | None = None,
           corner_cfg: dict | None = None) -> LocalizationResult:
    """Full two-input pipeline: camera + WLAN scan -> absolute 2-D pose.

    The WLAN branch supplies the coarse search disc; when the scan shares no
    APs with the database (or is absent) the disc falls back to the whole
    plan so vision alone can still answer.
    """
    wlan_cfg = wlan_cfg or {}
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    coarse = None
    if scan is not None and db is not None and len(db) > 0:
        if set(scan.readings) & db.ap_universe:
            coarse = knn_locate(scan, db, **wlan_cfg)
    if coarse is None:
        coarse = whole_plan_coarse(plan)
    timings["wlan_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ground, _, vision_diag = detect_micro_landmarks(img, cam, seg_cfg, corner_cfg)
    timings["vision_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = ransac_locate(ground, plan, coarse, ransac_cfg)
    timings["ransac_s"] = time.perf_counter() - t0
    result.diagnostics.update(vision_diag)
    result.diagnostics["timings"] = timings
    return result
