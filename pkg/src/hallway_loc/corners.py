"""Boundary-based corner detection and micro-landmark filtering.

A contour point's cornerity is its perpendicular distance from the chord
spanning its +-k neighbors, normalized by half the chord length: near zero
on straight runs, around 1 at right angles, above 1 for acute spikes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import PixelCoord
from .segment import Contour, SegmentMap

DEFAULT_K = 7
DEFAULT_THRESHOLD = 0.45
DEFAULT_NMS_WINDOW = 7
DEFAULT_BORDER_MARGIN = 2
DEFAULT_SPUR_LIMIT = 8.0
_EPS = 1e-9


@dataclass(frozen=True)
class CornerPoint:
    coord: PixelCoord
    cornerity: float
    contour_id: int
    boundary_index: int


def cornerity(contour: Contour, i: int, k: int = DEFAULT_K) -> float:
    """Chord-distance cornerity score at boundary index i (indices wrap)."""
    n = len(contour)
    if n < 2 * k + 1:
        raise ValueError(
            f"contour length {n} below minimum {2 * k + 1} for k={k}"
        )
    p = contour.points[i % n]
    a = contour.points[(i - k) % n]
    b = contour.points[(i + k) % n]
    ax, ay = float(a.u), float(a.v)
    bx, by = float(b.u), float(b.v)
    px, py = float(p.u), float(p.v)
    chord = np.hypot(bx - ax, by - ay)
    if chord < _EPS:
        d = np.hypot(px - ax, py - ay)
    else:
        d = abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / chord
    return d / (chord / 2.0 + _EPS)


def _contour_scores(contour: Contour, k: int) -> np.ndarray:
    pts = np.array([(p.u, p.v) for p in contour.points], dtype=np.float64)
    a = np.roll(pts, k, axis=0)
    b = np.roll(pts, -k, axis=0)
    chord = np.hypot(*(b - a).T)
    cross = np.abs((b[:, 0] - a[:, 0]) * (a[:, 1] - pts[:, 1])
                   - (a[:, 0] - pts[:, 0]) * (b[:, 1] - a[:, 1]))
    d = np.where(chord < _EPS, np.hypot(*(pts - a).T), cross / np.maximum(chord, _EPS))
    return d / (chord / 2.0 + _EPS)


def detect_corners(contours: list[Contour], k: int = DEFAULT_K,
                   threshold: float = DEFAULT_THRESHOLD,
                   nms_window: int = DEFAULT_NMS_WINDOW,
                   image_size: tuple[int, int] | None = None,
                   border_margin: int = DEFAULT_BORDER_MARGIN,
                   spur_limit: float = DEFAULT_SPUR_LIMIT) -> list[CornerPoint]:
    """Threshold + circular non-maximum suppression along each contour.

    When image_size=(width, height) is given, corners within border_margin
    of the image edge are dropped; the frame boundary produces corners that
    belong to the crop, not the scene.  Scores at or above spur_limit are
    contour reversals (1-px spurs), not corners, and are suppressed.
    """
    out: list[CornerPoint] = []
    for cid, contour in enumerate(contours):
        n = len(contour)
        if n < 2 * k + 1:
            continue
        scores = _contour_scores(contour, k)
        for i in range(n):
            s = scores[i]
            if s < threshold or s >= spur_limit:
                continue
            # strictly greater than what precedes in the window, at least as
            # great as what follows: first point of a tie plateau wins
            if any(scores[(i + d) % n] >= s for d in range(-nms_window, 0)):
                continue
            if any(scores[(i + d) % n] > s for d in range(1, nms_window + 1)):
                continue
            p = contour.points[i]
            if image_size is not None:
                w, h = image_size
                if (p.u < border_margin or p.v < border_margin
                        or p.u >= w - border_margin or p.v >= h - border_margin):
                    continue
            out.append(CornerPoint(coord=p, cornerity=float(s),
                                   contour_id=cid, boundary_index=i))
    out.sort(key=lambda c: (c.contour_id, c.boundary_index))
    return out


def floor_region(seg: SegmentMap) -> int | None:
    """The region claiming the most bottom-row pixels, or None if degenerate."""
    bottom = seg.labels[-1, :]
    if bottom.size == 0:
        return None
    counts = np.bincount(bottom, minlength=seg.region_count)
    return int(np.argmax(counts))


def filter_micro_landmarks(corners: list[CornerPoint], seg: SegmentMap,
                           reach: int = 2) -> tuple[list[CornerPoint], bool]:
    """Keep corners touching the floor region's boundary.

    A corner survives if any pixel within Chebyshev distance `reach` of it is
    labeled floor.  Returns (corners, degraded): degraded is True when no
    floor region could be determined, in which case the input passes through
    unfiltered.
    """
    floor = floor_region(seg)
    if floor is None:
        return list(corners), True
    h, w = seg.labels.shape
    kept = []
    for c in corners:
        u0, u1 = max(0, c.coord.u - reach), min(w, c.coord.u + reach + 1)
        v0, v1 = max(0, c.coord.v - reach), min(h, c.coord.v + reach + 1)
        if np.any(seg.labels[v0:v1, u0:u1] == floor):
            kept.append(c)
    return kept, False
