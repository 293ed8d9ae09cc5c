"""Mean shift segmentation of the chromaticity feature image.

Filtering runs joint spatial-range mode seeking with a flat kernel; labeling
merges 4-connected pixels whose converged range vectors agree within the
range bandwidth; boundaries are traced with the Moore neighborhood.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .image import PixelCoord, RgbImage

DEFAULT_H_S = 8.0
DEFAULT_H_R = 0.04
DEFAULT_MAX_ITER = 30
DEFAULT_EPS = 1e-3
DEFAULT_MIN_REGION = 64


@dataclass(frozen=True)
class SegmentMap:
    labels: np.ndarray            # (H, W) int32, dense ids 0..R-1
    region_count: int
    region_sizes: np.ndarray      # (R,)
    region_means: np.ndarray      # (R, C) mean filtered feature


@dataclass(frozen=True)
class Contour:
    region_id: int
    points: list[PixelCoord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)


@njit(cache=True, parallel=True)
def _mode_seek(feat, h_s, h_r, max_iter, eps):
    h, w, c = feat.shape
    out = np.empty_like(feat)
    h_s2 = h_s * h_s
    h_r2 = h_r * h_r
    for p in prange(h * w):
        v0 = p // w
        u0 = p % w
        cu = float(u0)
        cv = float(v0)
        cf = feat[v0, u0].copy()
        for _ in range(max_iter):
            lo_v = max(0, int(np.ceil(cv - h_s)))
            hi_v = min(h - 1, int(np.floor(cv + h_s)))
            lo_u = max(0, int(np.ceil(cu - h_s)))
            hi_u = min(w - 1, int(np.floor(cu + h_s)))
            su = 0.0
            sv = 0.0
            sf = np.zeros(c)
            n = 0
            for vv in range(lo_v, hi_v + 1):
                dv = vv - cv
                for uu in range(lo_u, hi_u + 1):
                    du = uu - cu
                    if du * du + dv * dv > h_s2:
                        continue
                    d2 = 0.0
                    for k in range(c):
                        d = feat[vv, uu, k] - cf[k]
                        d2 += d * d
                    if d2 <= h_r2:
                        su += uu
                        sv += vv
                        for k in range(c):
                            sf[k] += feat[vv, uu, k]
                        n += 1
            if n == 0:
                break
            nu = su / n
            nv = sv / n
            step = ((nu - cu) ** 2 + (nv - cv) ** 2) / h_s2
            for k in range(c):
                d = sf[k] / n - cf[k]
                step += d * d / h_r2
                cf[k] = sf[k] / n
            cu = nu
            cv = nv
            if np.sqrt(step) < eps:
                break
        out[v0, u0] = cf
    return out


def mean_shift_filter(features: np.ndarray, h_s: float = DEFAULT_H_S,
                      h_r: float = DEFAULT_H_R, max_iter: int = DEFAULT_MAX_ITER,
                      eps: float = DEFAULT_EPS) -> np.ndarray:
    """Replace each pixel's range vector by its joint-space mean shift mode."""
    if h_s < 1 or h_r <= 0 or max_iter < 1:
        raise ValueError("require h_s >= 1, h_r > 0, max_iter >= 1")
    feat = np.ascontiguousarray(features, dtype=np.float64)
    return _mode_seek(feat, float(h_s), float(h_r), int(max_iter), float(eps))


def _dense_relabel(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel so ids appear in row-major first-occurrence order."""
    flat = raw.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    remap = np.empty(int(flat.max()) + 1, dtype=np.int32)
    remap[order] = np.arange(len(order), dtype=np.int32)
    return remap[raw].astype(np.int32), len(order)


def _connected_labels(filtered: np.ndarray, h_r: float) -> tuple[np.ndarray, int]:
    h, w, _ = filtered.shape
    idx = np.arange(h * w).reshape(h, w)
    dr = np.sqrt(((filtered[:, 1:] - filtered[:, :-1]) ** 2).sum(axis=2))
    dd = np.sqrt(((filtered[1:, :] - filtered[:-1, :]) ** 2).sum(axis=2))
    rows = np.concatenate([idx[:, :-1][dr < h_r], idx[:-1, :][dd < h_r]])
    cols = np.concatenate([idx[:, 1:][dr < h_r], idx[1:, :][dd < h_r]])
    graph = coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(h * w, h * w)
    )
    _, comp = connected_components(graph, directed=False)
    return _dense_relabel(comp.reshape(h, w))


def _adjacency(labels: np.ndarray, n: int) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = a != b
        for x, y in zip(a[diff].ravel(), b[diff].ravel()):
            adj[x].add(int(y))
            adj[y].add(int(x))
    return adj


def label_segments(filtered: np.ndarray, h_r: float = DEFAULT_H_R,
                   min_region_size: int = DEFAULT_MIN_REGION) -> SegmentMap:
    """Cluster the filtered grid into 4-connected regions and prune slivers.

    Regions below min_region_size are merged into their most similar
    adjacent region (smallest label wins ties), smallest region first.
    """
    labels, n = _connected_labels(filtered, h_r)
    flat_feat = filtered.reshape(-1, filtered.shape[2])
    while True:
        sizes = np.bincount(labels.ravel(), minlength=n)
        means = np.zeros((n, flat_feat.shape[1]))
        np.add.at(means, labels.ravel(), flat_feat)
        means /= sizes[:, None]
        small = [r for r in range(n) if sizes[r] < min_region_size]
        if not small or n == 1:
            break
        small.sort(key=lambda r: (sizes[r], r))
        victim = small[0]
        adj = _adjacency(labels, n)
        neighbors = sorted(adj[victim])
        if not neighbors:
            break
        dists = [np.linalg.norm(means[victim] - means[r]) for r in neighbors]
        target = neighbors[int(np.argmin(dists))]
        labels[labels == victim] = target
        labels, n = _dense_relabel(labels)
    sizes = np.bincount(labels.ravel(), minlength=n)
    means = np.zeros((n, flat_feat.shape[1]))
    np.add.at(means, labels.ravel(), flat_feat)
    means /= sizes[:, None]
    return SegmentMap(labels=labels, region_count=n,
                      region_sizes=sizes, region_means=means)


# Moore neighborhood, clockwise starting east
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def _trace_moore(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Outer boundary of the True pixels containing `start` (topmost-leftmost)."""
    h, w = mask.shape
    su, sv = start

    def solid(u, v):
        return 0 <= u < w and 0 <= v < h and mask[v, u]

    contour = [(su, sv)]
    # backtrack starts west of the start pixel (guaranteed background for
    # a topmost-leftmost start)
    prev_dir = 4  # direction we came FROM relative to current (west)
    cu, cv = su, sv
    limit = 4 * (h * w + 1)
    for _ in range(limit):
        # scan clockwise from the neighbor after the backtrack
        found = False
        for k in range(8):
            d = (prev_dir + 1 + k) % 8
            du, dv = _MOORE[d]
            nu, nv = cu + du, cv + dv
            if solid(nu, nv):
                if (nu, nv) == (su, sv) and len(contour) > 1:
                    return contour
                contour.append((nu, nv))
                cu, cv = nu, nv
                prev_dir = (d + 4) % 8  # came from the opposite direction
                found = True
                break
        if not found:
            return contour  # isolated pixel
    return contour


def _despur(pts: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Collapse immediate backtracking (1-px spurs) left by tracing noise
    tendrils: wherever the walk visits a, t, a the tip t and the duplicate
    a are dropped, repeatedly, so multi-pixel tendrils unwind too."""
    changed = True
    while changed and len(pts) > 2:
        changed = False
        out = []
        i = 0
        n = len(pts)
        while i < n:
            if n - i >= 3 and pts[i] == pts[(i + 2) % n]:
                i += 2  # skip tip and the returning duplicate
                changed = True
            elif (out and pts[i] == out[-1]) or (i == n - 1 and pts[i] == pts[0]):
                i += 1  # collapse duplicates from wrapped spurs
                changed = True
            else:
                out.append(pts[i])
                i += 1
        pts = out
    return pts


def _signed_area(points: list[tuple[int, int]]) -> float:
    a = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return a / 2.0


def extract_boundaries(seg: SegmentMap) -> list[Contour]:
    """One outer contour per region, 8-connected, counter-clockwise.

    Counter-clockwise means positive shoelace area in (u, v) coordinates.
    The image border acts as background for tracing purposes.
    """
    contours = []
    labels = seg.labels
    for r in range(seg.region_count):
        mask = labels == r
        vs, us = np.nonzero(mask)
        start = (int(us[0]), int(vs[0]))  # row-major first pixel
        pts = _despur(_trace_moore(mask, start))
        if len(pts) >= 3 and _signed_area(pts) < 0:
            pts = [pts[0]] + pts[1:][::-1]
        contours.append(Contour(region_id=r,
                                points=[PixelCoord(u, v) for u, v in pts]))
    return contours


def label_palette_image(seg: SegmentMap) -> RgbImage:
    """Debug rendering: label id -> hue via golden-ratio rotation."""
    colors = np.zeros((seg.region_count, 3))
    for r in range(seg.region_count):
        colors[r] = colorsys.hsv_to_rgb((r * 0.6180339887498949) % 1.0, 0.65, 0.95)
    return RgbImage(colors[seg.labels])
