import numpy as np
import pytest

from hallway_loc.illum import (
    NEUTRAL_ILLUMINANT,
    IlluminantEstimate,
    chromaticity,
    estimate_illuminant,
    highlight_candidates,
    iic_project,
    intensity_features,
    normalize_illumination,
)
from hallway_loc.image import RgbImage


def dichromatic_scene(gamma, body=(0.2, 0.5, 0.3), size=64, seed=0, power=1):
    """Shaded diffuse field plus a specular lobe of the given illuminant color.

    `power` sharpens the lobe falloff; 1 gives a broad soft highlight.
    """
    rng = np.random.default_rng(seed)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w]
    shading = 0.25 + 0.55 * (xx + yy) / (2.0 * (size - 1))
    body = np.asarray(body)
    img = shading[:, :, None] * body[None, None, :]
    cx, cy, r = 0.62 * w, 0.40 * h, 0.22 * size
    lobe = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * (r / 2) ** 2)))
    lobe = lobe ** power
    img = img + 0.9 * lobe[:, :, None] * np.asarray(gamma)[None, None, :]
    img += rng.normal(0.0, 5e-4, size=img.shape)
    return RgbImage(np.clip(img, 0.0, 1.0))


def test_chromaticity_sums_to_one():
    rng = np.random.default_rng(2)
    img = RgbImage(rng.uniform(0.05, 1.0, size=(16, 16, 3)))
    sigma = chromaticity(img)
    np.testing.assert_allclose(sigma.sum(axis=2), 1.0, atol=1e-12)


def test_chromaticity_black_pixel_neutral():
    img = RgbImage(np.zeros((1, 2, 3)))
    sigma = chromaticity(img)
    np.testing.assert_allclose(sigma, 1.0 / 3.0)


def test_chromaticity_scale_invariant():
    rng = np.random.default_rng(3)
    base = rng.uniform(0.1, 0.5, size=(10, 10, 3))
    gain = rng.uniform(0.3, 1.8, size=(10, 10, 1))
    a = chromaticity(RgbImage(base))
    b = chromaticity(RgbImage(np.clip(base * gain, 0.0, 1.0)))
    assert np.max(np.abs(a - b)) <= 1e-12


def test_iic_project_values():
    px = np.array([[[0.30, 0.20, 0.10], [0.10, 0.20, 0.30]]])
    pts = iic_project(RgbImage(px), "r")
    # row-major: x = 1/(r+g+b), y = r/(r+g+b)
    np.testing.assert_allclose(pts[0], [1 / 0.6, 0.5])
    np.testing.assert_allclose(pts[1], [1 / 0.6, 1 / 6])


def test_iic_project_skips_black():
    px = np.zeros((2, 2, 3))
    px[0, 0] = (0.3, 0.3, 0.3)
    pts = iic_project(RgbImage(px), "g")
    assert pts.shape == (1, 2)


def test_highlight_candidates_mask_shape():
    img = dichromatic_scene((0.4, 0.35, 0.25))
    mask = highlight_candidates(img)
    assert mask.shape == (img.height, img.width)
    assert mask.sum() >= 50


def test_estimate_illuminant_recovers_gamma():
    gamma = (0.40, 0.35, 0.25)
    est = estimate_illuminant(dichromatic_scene(gamma))
    assert est.confidence > 0.0
    np.testing.assert_allclose(est.gamma, gamma, atol=0.03)
    assert abs(est.gamma.sum() - 1.0) <= 1e-12


def test_estimate_illuminant_white():
    est = estimate_illuminant(dichromatic_scene((1 / 3, 1 / 3, 1 / 3)))
    np.testing.assert_allclose(est.gamma, 1 / 3, atol=0.03)


def test_estimate_illuminant_diffuse_falls_back():
    # shading only, no specular: intercept evidence is absent
    yy, xx = np.mgrid[0:48, 0:48]
    shading = 0.2 + 0.6 * xx / 47.0
    img = RgbImage(shading[:, :, None] * np.array([0.5, 0.3, 0.2]))
    est = estimate_illuminant(img)
    assert est == NEUTRAL_ILLUMINANT
    assert est.confidence == 0.0


def test_estimate_illuminant_tiny_image_falls_back():
    img = RgbImage(np.full((3, 3, 3), 0.5))
    assert estimate_illuminant(img) == NEUTRAL_ILLUMINANT


def test_illuminant_estimate_validates_sum():
    with pytest.raises(ValueError):
        IlluminantEstimate(0.5, 0.5, 0.5, 1.0)


def test_normalize_passes_diffuse_through():
    # smooth shading, constant chromaticity: nothing to replace
    yy, xx = np.mgrid[0:12, 0:12]
    shading = 0.2 + 0.5 * xx / 11.0
    img = RgbImage(shading[:, :, None] * np.array([0.5, 0.3, 0.2]))
    feats = normalize_illumination(img, NEUTRAL_ILLUMINANT)
    sigma = chromaticity(img)
    np.testing.assert_allclose(feats, sigma[:, :, :2], atol=1e-12)
    assert feats.shape == (12, 12, 2)


def test_normalize_shrinks_specular_blob():
    # sharp-edged lobe, the kind the local-median gate is built to catch
    gamma = (0.45, 0.35, 0.20)
    img = dichromatic_scene(gamma, body=(0.2, 0.5, 0.3), power=4)
    est = estimate_illuminant(img)
    feats = normalize_illumination(img, est)
    sigma = chromaticity(img)[:, :, :2]
    body_sigma = np.array([0.2, 0.5])
    raw_dev = np.abs(sigma - body_sigma).sum(axis=2)
    new_dev = np.abs(feats - body_sigma).sum(axis=2)
    # replacement pulls highlight pixels toward the surrounding body color
    # and never pushes any pixel further from it
    assert new_dev.sum() < raw_dev.sum()
    assert np.all(new_dev <= raw_dev + 0.02)


def test_intensity_features_are_raw_channels():
    rng = np.random.default_rng(5)
    img = RgbImage(rng.uniform(0.0, 1.0, size=(6, 5, 3)))
    feats = intensity_features(img)
    np.testing.assert_array_equal(feats, img.data[:, :, :2])
