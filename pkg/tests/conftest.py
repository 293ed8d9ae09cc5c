"""Shared fixtures.

Rendered scenes and the fingerprint survey are expensive, so anything a
test only reads is session-scoped and built once.
"""

import numpy as np
import pytest

from hallway_loc import fuse, synth
from hallway_loc.geometry import CameraModel, Pose2D
from hallway_loc.wlan import ingest_fingerprints


# Half-resolution camera for bulk tests; same field of view as the
# 640x480 default, so geometry expectations carry over.
CAM_320 = CameraModel(fx=250.0, fy=250.0, cx=160.0, cy=120.0,
                      height=1.4, pitch=0.55)


@pytest.fixture(scope="session")
def cam320():
    return CAM_320


@pytest.fixture(scope="session")
def testbed_plan():
    return synth.make_testbed_plan()


@pytest.fixture(scope="session")
def ap_positions():
    return synth.testbed_ap_positions()


@pytest.fixture(scope="session")
def fingerprint_db(ap_positions, testbed_plan):
    return ingest_fingerprints(synth.fingerprint_rows(ap_positions, testbed_plan))


@pytest.fixture(scope="session")
def clean_pose():
    return Pose2D(5.0, synth.TESTBED_CENTER_Y + 0.2, 0.02)


@pytest.fixture(scope="session")
def clean_scene_640(clean_pose):
    """Defect-free testbed render at full resolution, with ground truth."""
    spec = synth.make_testbed_scene(clean_pose, seed=3)
    img, truth = synth.render_hallway(spec, synth.DEFAULT_TEST_CAMERA)
    return spec, img, truth


@pytest.fixture(scope="session")
def clean_scene_320(clean_pose):
    spec = synth.make_testbed_scene(clean_pose, seed=3)
    img, truth = synth.render_hallway(spec, CAM_320, width=320, height=240)
    return spec, img, truth


@pytest.fixture(scope="session")
def vision_640(clean_scene_640):
    """Micro-landmarks extracted from the full-resolution clean scene."""
    _, img, _ = clean_scene_640
    ground, corners, diag = fuse.detect_micro_landmarks(
        img, synth.DEFAULT_TEST_CAMERA)
    return ground, corners, diag


def rigid_points(rng, n, scale=5.0):
    """Random planar point cloud for fit tests."""
    return rng.uniform(-scale, scale, size=(n, 2))
