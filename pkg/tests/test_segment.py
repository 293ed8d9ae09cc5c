import numpy as np
import pytest

from hallway_loc.segment import (
    Contour,
    extract_boundaries,
    label_palette_image,
    label_segments,
    mean_shift_filter,
)


def brute_mode_seek(features, u, v, h_s, h_r, max_iter, eps):
    """Reference mean shift for one pixel: flat joint kernel, plain loops."""
    h, w, c = features.shape
    pu, pv = float(u), float(v)
    f = features[v, u].astype(np.float64).copy()
    for _ in range(max_iter):
        su = sv = 0.0
        sf = np.zeros(c)
        n = 0
        for vv in range(h):
            for uu in range(w):
                if (uu - pu) ** 2 + (vv - pv) ** 2 > h_s * h_s:
                    continue
                if np.sqrt(((features[vv, uu] - f) ** 2).sum()) > h_r:
                    continue
                su += uu
                sv += vv
                sf += features[vv, uu]
                n += 1
        nu, nv, nf = su / n, sv / n, sf / n
        step = np.sqrt(((nu - pu) ** 2 + (nv - pv) ** 2) / h_s ** 2
                       + ((nf - f) ** 2).sum() / h_r ** 2)
        pu, pv, f = nu, nv, nf
        if step < eps:
            break
    return f


def test_constant_image_is_fixed_point():
    feats = np.full((10, 12, 2), 0.4)
    out = mean_shift_filter(feats)
    np.testing.assert_allclose(out, feats, atol=1e-12)
    seg = label_segments(out)
    assert seg.region_count == 1
    assert np.all(seg.labels == 0)
    assert seg.region_sizes[0] == 120


def test_two_tone_split():
    feats = np.zeros((12, 16, 2))
    feats[:, 8:] = 0.5
    seg = label_segments(mean_shift_filter(feats), min_region_size=4)
    assert seg.region_count == 2
    assert np.all(seg.labels[:, :8] == seg.labels[0, 0])
    assert np.all(seg.labels[:, 8:] == seg.labels[0, 8])
    np.testing.assert_allclose(seg.region_means[seg.labels[0, 0]], 0.0, atol=1e-9)
    np.testing.assert_allclose(seg.region_means[seg.labels[0, 8]], 0.5, atol=1e-9)


def test_matches_reference_mode_seek():
    rng = np.random.default_rng(7)
    feats = np.zeros((14, 14, 2))
    feats[:, 7:] = 0.2
    feats += rng.normal(0.0, 0.01, size=feats.shape)
    feats = np.clip(feats, -0.5, 1.0)
    out = mean_shift_filter(feats, h_s=4.0, h_r=0.06, max_iter=20, eps=1e-3)
    for u, v in [(0, 0), (6, 3), (7, 3), (10, 13), (13, 0)]:
        ref = brute_mode_seek(feats, u, v, 4.0, 0.06, 20, 1e-3)
        np.testing.assert_allclose(out[v, u], ref, atol=1e-9)


def test_filter_deterministic():
    rng = np.random.default_rng(8)
    feats = rng.uniform(0.0, 1.0, size=(20, 20, 2))
    a = mean_shift_filter(feats)
    b = mean_shift_filter(feats)
    np.testing.assert_array_equal(a, b)


def test_small_regions_merge():
    feats = np.zeros((10, 10, 2))
    feats[4:6, 4:6] = 0.3  # 4-pixel island, below min size
    seg = label_segments(feats, min_region_size=8)
    assert seg.region_count == 1
    assert seg.region_sizes[0] == 100


def test_labels_row_major_order():
    feats = np.zeros((6, 6, 2))
    feats[:, 3:] = 0.5
    seg = label_segments(feats, min_region_size=4)
    # first-seen region (top-left) gets label 0
    assert seg.labels[0, 0] == 0
    assert seg.labels[0, 5] == 1


def square_segmap(size=21, lo=5, hi=16):
    feats = np.zeros((size + 10, size + 10, 2))
    feats[lo + 5 : hi + 5, lo + 5 : hi + 5] = 0.5
    return label_segments(feats, min_region_size=4)


def test_boundary_of_centered_block():
    feats = np.zeros((5, 5, 2))
    feats[1:4, 1:4] = 0.5
    seg = label_segments(feats, min_region_size=4)
    contours = extract_boundaries(seg)
    assert len(contours) == 2
    inner = [c for c in contours if c.region_id == seg.labels[2, 2]][0]
    pts = {(p.u, p.v) for p in inner.points}
    # the 3x3 block's boundary is its 8-pixel ring
    ring = {(u, v) for u in range(1, 4) for v in range(1, 4)} - {(2, 2)}
    assert pts == ring
    assert len(inner.points) == 8


def test_boundary_counter_clockwise():
    feats = np.zeros((8, 8, 2))
    feats[2:6, 2:6] = 0.5
    seg = label_segments(feats, min_region_size=4)
    inner = [c for c in extract_boundaries(seg)
             if c.region_id == seg.labels[3, 3]][0]
    pts = np.array([(p.u, p.v) for p in inner.points], dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area2 > 0


def test_full_frame_contour():
    feats = np.full((6, 9, 2), 0.2)
    contours = extract_boundaries(label_segments(feats))
    assert len(contours) == 1
    pts = {(p.u, p.v) for p in contours[0].points}
    border = {(u, v) for u in range(9) for v in range(6)
              if u in (0, 8) or v in (0, 5)}
    assert pts == border


def test_one_contour_per_region():
    feats = np.zeros((10, 10, 2))
    feats[:, 5:] = 0.5
    seg = label_segments(feats, min_region_size=4)
    contours = extract_boundaries(seg)
    assert sorted(c.region_id for c in contours) == list(range(seg.region_count))


def test_palette_image_shape():
    feats = np.zeros((7, 9, 2))
    feats[:, 4:] = 0.5
    seg = label_segments(feats, min_region_size=4)
    img = label_palette_image(seg)
    assert (img.height, img.width) == (7, 9)
    # pixels of one region share a color, different regions differ
    assert np.all(img.data[0, 0] == img.data[6, 0])
    assert np.any(img.data[0, 0] != img.data[0, 8])
