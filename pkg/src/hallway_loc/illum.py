"""Inverse intensity chromaticity analysis.

Chromaticity sigma_c = c / (r+g+b) is invariant to brightness scaling, which
is what makes the downstream segmentation robust to shadows.  Specular
(highlight) pixels of one surface fall on a line in the (1/s, sigma_c) plane
whose y-intercept is the illuminant chromaticity, so the illuminant is
recovered by voting pairwise line intercepts into a histogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import RgbImage

S_MIN = 0.02          # total-intensity floor below which a pixel counts as black
N_MIN_CANDIDATES = 50  # minimum highlight candidates per channel for a vote
_INTERCEPT_BINS = 200


@dataclass(frozen=True)
class IlluminantEstimate:
    gamma_r: float
    gamma_g: float
    gamma_b: float
    confidence: float

    def __post_init__(self):
        s = self.gamma_r + self.gamma_g + self.gamma_b
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"illuminant chromaticity sums to {s}, not 1")

    @property
    def gamma(self) -> np.ndarray:
        return np.array([self.gamma_r, self.gamma_g, self.gamma_b])


NEUTRAL_ILLUMINANT = IlluminantEstimate(1 / 3, 1 / 3, 1 / 3, 0.0)


def intensity_sum(img: RgbImage) -> np.ndarray:
    return img.data.sum(axis=2)


def black_mask(img: RgbImage) -> np.ndarray:
    """Pixels too dark for a meaningful chromaticity (s < S_MIN)."""
    return intensity_sum(img) < S_MIN


def chromaticity(img: RgbImage) -> np.ndarray:
    """Per-pixel (sigma_r, sigma_g, sigma_b); black pixels map to (1/3, 1/3, 1/3)."""
    s = intensity_sum(img)
    black = s < S_MIN
    s_safe = np.where(black, 1.0, s)
    sigma = img.data / s_safe[:, :, None]
    sigma[black] = 1.0 / 3.0
    return sigma


_CHANNELS = {"r": 0, "g": 1, "b": 2}


def iic_project(img: RgbImage, channel: str) -> np.ndarray:
    """(1/s, sigma_c) points for every non-black pixel, row-major order.

    Returns an (N, 2) array: column 0 is inverse intensity, column 1 the
    chosen channel's chromaticity.
    """
    c = _CHANNELS[channel]
    s = intensity_sum(img).ravel()
    keep = s >= S_MIN
    s = s[keep]
    sigma = img.data.reshape(-1, 3)[keep, c] / s
    return np.column_stack([1.0 / s, sigma])


def highlight_candidates(img: RgbImage, percentile: float = 90.0,
                         grad_limit: float = 0.05) -> np.ndarray:
    """Boolean mask of likely specular pixels.

    Bright (total intensity above the given percentile) and locally flat in
    chromaticity, so textured bright surfaces do not vote.
    """
    s = intensity_sum(img)
    sigma = chromaticity(img)
    gu = np.zeros_like(s)
    gv = np.zeros_like(s)
    gu[:, 1:] = np.abs(np.diff(sigma, axis=1)).sum(axis=2)
    gv[1:, :] = np.abs(np.diff(sigma, axis=0)).sum(axis=2)
    grad = np.maximum(gu, gv)
    thresh = np.percentile(s, percentile)
    return (s >= thresh) & (grad < grad_limit) & (s >= S_MIN)


def _intercept_votes(points: np.ndarray) -> np.ndarray:
    """Pairwise line intercepts at x=0 from IIC points of one channel.

    Points are sorted by x and paired across a half-length stride so each
    pair spans a wide x gap (stable slope estimate).
    """
    pts = points[np.argsort(points[:, 0], kind="stable")]
    n = len(pts)
    half = n // 2
    a, b = pts[:half], pts[half : 2 * half]
    dx = b[:, 0] - a[:, 0]
    ok = np.abs(dx) > 1e-4
    slope = (b[:, 1] - a[:, 1])[ok] / dx[ok]
    intercept = a[ok, 1] - slope * a[ok, 0]
    # near-zero slope means diffuse (no intensity-chromaticity coupling):
    # such pairs carry no illuminant evidence and would vote the surface
    # chromaticity instead
    specular = np.abs(slope) >= 0.01
    intercept = intercept[specular]
    return intercept[(intercept >= 0.0) & (intercept <= 1.0)]


def estimate_illuminant(img: RgbImage,
                        candidates: np.ndarray | None = None) -> IlluminantEstimate:
    """Estimate illuminant chromaticity from specular-pixel intercept votes.

    Falls back to the neutral illuminant with confidence 0 when there is too
    little highlight evidence (fewer than N_MIN_CANDIDATES usable pixels or
    an empty vote in any channel).
    """
    if candidates is None:
        candidates = highlight_candidates(img)
    flat = candidates.ravel()
    gammas = []
    confs = []
    for ch in ("r", "g", "b"):
        pts = iic_project(img, ch)
        # iic_project drops black pixels; align the mask the same way
        s = intensity_sum(img).ravel()
        mask = flat[s >= S_MIN]
        pts = pts[mask]
        if len(pts) < N_MIN_CANDIDATES:
            return NEUTRAL_ILLUMINANT
        votes = _intercept_votes(pts)
        if len(votes) < 10:
            return NEUTRAL_ILLUMINANT
        hist, edges = np.histogram(votes, bins=_INTERCEPT_BINS, range=(0.0, 1.0))
        mode = int(np.argmax(hist))
        lo = edges[max(0, mode - 1)]
        hi = edges[min(_INTERCEPT_BINS, mode + 2)]
        in_mode = votes[(votes >= lo) & (votes <= hi)]
        gammas.append(float(np.mean(in_mode)))
        confs.append(len(in_mode) / len(votes))
    g = np.array(gammas)
    g = g / g.sum()
    g[2] = 1.0 - g[0] - g[1]  # exact renormalization for the sum invariant
    return IlluminantEstimate(g[0], g[1], g[2], float(min(confs)))


def _masked_median_pass(sigma: np.ndarray, bad: np.ndarray) -> int:
    """One synchronous repair pass: every bad pixel with at least one clean
    pixel in its 5x5 window takes the per-channel median of those clean
    neighbors.  Returns the number of pixels repaired."""
    h, w, c = sigma.shape
    vs, us = np.nonzero(bad)
    if len(vs) == 0:
        return 0
    v0, v1 = vs.min(), vs.max()
    u0, u1 = us.min(), us.max()
    lo_v, hi_v = max(0, v0 - 2), min(h, v1 + 3)
    lo_u, hi_u = max(0, u0 - 2), min(w, u1 + 3)
    sub = sigma[lo_v:hi_v, lo_u:hi_u]
    sub_bad = bad[lo_v:hi_v, lo_u:hi_u]
    sh, sw = sub_bad.shape
    stack = np.full((25, sh, sw, c), np.nan)
    i = 0
    for dv in range(-2, 3):
        for du in range(-2, 3):
            av0, av1 = max(0, dv), min(sh, sh + dv)
            au0, au1 = max(0, du), min(sw, sw + du)
            bv0, bv1 = max(0, -dv), min(sh, sh - dv)
            bu0, bu1 = max(0, -du), min(sw, sw - du)
            src = sub[av0:av1, au0:au1].copy()
            src[sub_bad[av0:av1, au0:au1]] = np.nan
            stack[i, bv0:bv1, bu0:bu1] = src
            i += 1
    has_clean = ~np.isnan(stack[:, :, :, 0]).all(axis=0)
    stack[:, ~has_clean] = 0.0  # keep nanmedian off all-NaN columns
    med = np.nanmedian(stack, axis=0)
    fixable = sub_bad & has_clean
    sub[fixable] = med[fixable]
    sub_bad[fixable] = False
    return int(fixable.sum())


def normalize_illumination(img: RgbImage, est: IlluminantEstimate,
                           candidates: np.ndarray | None = None,
                           anomaly_limit: float = 0.02,
                           max_passes: int = 64) -> np.ndarray:
    """Illumination-normalized feature image: per pixel (sigma_r, sigma_g).

    Specular pixels whose chromaticity deviates from the local (9x9 median)
    reference are replaced by the median chromaticity of their non-specular
    5x5 neighborhood, filled inward pass by pass so blob interiors inherit
    the surrounding diffuse chromaticity.  Everything else passes its
    chromaticity through unchanged, so the output is invariant to per-pixel
    brightness scaling of the input.
    """
    from scipy.ndimage import median_filter

    sigma = chromaticity(img)[:, :, :2].copy()
    if candidates is None:
        candidates = highlight_candidates(img)
    if candidates.any():
        ref = median_filter(sigma, size=(9, 9, 1))
        anomalous = np.abs(sigma - ref).max(axis=2) > anomaly_limit
        bad = candidates & anomalous
        for _ in range(max_passes):
            if _masked_median_pass(sigma, bad) == 0:
                break
    return sigma


def intensity_features(img: RgbImage) -> np.ndarray:
    """Raw (r, g) features, the illumination-sensitive ablation baseline."""
    return img.data[:, :, :2].copy()
