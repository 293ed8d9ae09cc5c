import math

import numpy as np
import pytest

from hallway_loc.wlan import (
    Fingerprint,
    IngestError,
    RssScan,
    ingest_fingerprints,
    knn_locate,
    signal_distance,
)


def grid_db(ap_xy, nx=5, ny=4, spacing=4.0, p0=-40.0, n=3.0):
    rows = []
    for i in range(nx):
        for j in range(ny):
            x, y = i * spacing, j * spacing
            for a, (ax, ay) in enumerate(ap_xy):
                d = max(math.hypot(x - ax, y - ay), 1.0)
                rows.append((x, y, f"ap{a}", p0 - 10 * n * math.log10(d)))
    return ingest_fingerprints(rows)


def test_ingest_basic():
    db = ingest_fingerprints([(0, 0, "a", -50), (0, 0, "b", "-60"),
                              (3, 0, "a", -70)])
    assert len(db.fingerprints) == 2
    assert db.fingerprints[0].readings == {"a": -50.0, "b": -60.0}
    assert db.ap_universe == {"a", "b"}


def test_ingest_dedups_nearby_surveys():
    db = ingest_fingerprints([(0, 0, "a", -50), (0.05, 0, "a", -60)])
    assert len(db.fingerprints) == 1
    assert db.fingerprints[0].readings["a"] == -55.0


def test_ingest_rejects_bad_rows():
    with pytest.raises(IngestError, match="2"):
        ingest_fingerprints([(0, 0, "a", -50), (1, 1, "a", "strong")])
    with pytest.raises(IngestError):
        ingest_fingerprints([(0, 0, "a", 5.0)])  # positive dBm
    with pytest.raises(IngestError):
        ingest_fingerprints([(0, 0, "a", -300.0)])


def test_scan_validation():
    with pytest.raises(ValueError):
        RssScan(readings={})
    with pytest.raises(ValueError):
        RssScan(readings={"a": 10.0})


def test_signal_distance_identical_zero():
    scan = RssScan(readings={"a": -50.0, "b": -60.0})
    fp = Fingerprint(position=(0.0, 0.0), readings={"a": -50.0, "b": -60.0})
    assert signal_distance(scan, fp) == 0.0


def test_signal_distance_rms():
    scan = RssScan(readings={"a": -50.0, "b": -60.0})
    fp = Fingerprint(position=(0.0, 0.0), readings={"a": -53.0, "b": -64.0})
    assert abs(signal_distance(scan, fp) - math.sqrt((9 + 16) / 2)) < 1e-12


def test_signal_distance_missing_penalty():
    # each side misses one AP of the union: both legs cost the penalty
    scan = RssScan(readings={"a": -50.0})
    fp = Fingerprint(position=(0.0, 0.0), readings={"b": -60.0})
    assert abs(signal_distance(scan, fp) - 15.0) < 1e-12


def test_signal_distance_symmetric_in_union():
    scan = RssScan(readings={"a": -40.0, "c": -70.0})
    fp = Fingerprint(position=(0.0, 0.0), readings={"a": -45.0, "b": -55.0})
    d = signal_distance(scan, fp)
    rev = signal_distance(RssScan(readings=fp.readings),
                          Fingerprint(position=(0.0, 0.0), readings=scan.readings))
    assert abs(d - rev) < 1e-12


def test_knn_exact_match_centers_on_fingerprint():
    db = grid_db([(0.0, 0.0), (16.0, 12.0), (2.0, 14.0)])
    target = db.fingerprints[7]
    est = knn_locate(RssScan(readings=dict(target.readings)), db)
    assert math.hypot(est.center[0] - target.position[0],
                      est.center[1] - target.position[1]) < 2.0
    assert est.radius >= 10.0


def test_knn_radius_floor():
    db = grid_db([(0.0, 0.0), (16.0, 12.0), (2.0, 14.0)])
    rng = np.random.default_rng(11)
    for _ in range(20):
        readings = {f"ap{a}": float(rng.uniform(-90, -40)) for a in range(3)}
        est = knn_locate(RssScan(readings=readings), db)
        assert est.radius >= 10.0


def test_knn_center_inside_survey_hull():
    db = grid_db([(0.0, 0.0), (16.0, 12.0), (2.0, 14.0)])
    xs = [fp.position[0] for fp in db.fingerprints]
    ys = [fp.position[1] for fp in db.fingerprints]
    rng = np.random.default_rng(12)
    for _ in range(20):
        readings = {f"ap{a}": float(rng.uniform(-90, -40)) for a in range(3)}
        est = knn_locate(RssScan(readings=readings), db)
        assert min(xs) - 1e-9 <= est.center[0] <= max(xs) + 1e-9
        assert min(ys) - 1e-9 <= est.center[1] <= max(ys) + 1e-9


def test_knn_tie_break_stable():
    db = ingest_fingerprints([(0, 0, "a", -50), (10, 0, "a", -50),
                              (20, 0, "a", -50)])
    est = knn_locate(RssScan(readings={"a": -50.0}), db, k=2)
    # equidistant: insertion order wins, so the first two fingerprints
    assert est.center == (5.0, 0.0)


def test_knn_argument_validation():
    db = grid_db([(0.0, 0.0)])
    with pytest.raises(ValueError):
        knn_locate(RssScan(readings={"ap0": -50.0}), db, k=0)
