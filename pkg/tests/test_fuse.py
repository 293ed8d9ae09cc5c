import itertools
import math

import numpy as np
import pytest

from hallway_loc import fuse, synth
from hallway_loc.fuse import (
    CorrespondenceHypothesis,
    FloorPlan,
    Hallway,
    HypothesisExhausted,
    Landmark,
    RansacConfig,
    candidate_landmarks,
    count_hypotheses,
    generate_hypothesis,
    group_landmarks_by_side,
    ransac_locate,
    score_hypothesis,
    whole_plan_coarse,
)
from hallway_loc.geometry import GroundPoint, Pose2D
from hallway_loc.wlan import CoarseEstimate


def test_count_hypotheses_anchor():
    assert count_hypotheses(10, 32) == (4_349_721_600, False)


def test_count_hypotheses_brute_force():
    for n in range(8):
        for m in range(8):
            img_tuples = sum(1 for _ in itertools.permutations(range(n), 4))
            map_tuples = sum(1 for _ in itertools.permutations(range(m), 4))
            got = count_hypotheses(n, m)
            assert got.count == img_tuples * map_tuples
            assert got.underflow == (n < 4 or m < 4)


def small_plan():
    lms = [
        Landmark(id="a", x=2.0, y=7.0, kind="doorway_jamb"),
        Landmark(id="b", x=4.5, y=7.0, kind="doorway_jamb"),
        Landmark(id="c", x=7.0, y=7.0, kind="doorway_jamb"),
        Landmark(id="d", x=3.0, y=5.0, kind="doorway_jamb"),
        Landmark(id="e", x=5.5, y=5.0, kind="doorway_jamb"),
        Landmark(id="f", x=8.0, y=5.0, kind="doorway_jamb"),
    ]
    hall = Hallway(left=[(0.0, 7.0), (10.0, 7.0)],
                   right=[(0.0, 5.0), (10.0, 5.0)])
    return FloorPlan(width=10.0, depth=12.0, hallways=[hall], landmarks=lms)


def test_floor_plan_json_round_trip():
    plan = small_plan()
    clone = FloorPlan.from_json(plan.to_json())
    assert clone.width == plan.width and clone.depth == plan.depth
    assert clone.landmarks == plan.landmarks
    assert clone.hallways == plan.hallways


def test_floor_plan_rejects_bad_kind():
    with pytest.raises(ValueError):
        Landmark(id="x", x=0.0, y=0.0, kind="window")


def test_candidate_landmarks_disc():
    plan = small_plan()
    got = candidate_landmarks(plan, CoarseEstimate(center=(3.0, 6.0), radius=2.0))
    assert [lm.id for lm in got] == ["a", "b", "d"]
    with pytest.raises(ValueError):
        candidate_landmarks(plan, CoarseEstimate(center=(50.0, 50.0), radius=1.0))


def test_group_landmarks_by_side():
    plan = small_plan()
    lms = plan.landmarks
    left, right, axis = group_landmarks_by_side(plan, lms)
    assert {lm.id for lm in left} == {"a", "b", "c"}
    assert {lm.id for lm in right} == {"d", "e", "f"}
    assert abs(np.hypot(*axis) - 1.0) < 1e-12


def test_generate_hypothesis_structure():
    plan = small_plan()
    left, right, axis = group_landmarks_by_side(plan, plan.landmarks)
    lpts = [GroundPoint(2.0, 1.0), GroundPoint(4.5, 1.0), GroundPoint(7.0, 1.0)]
    rpts = [GroundPoint(3.0, -1.0), GroundPoint(5.5, -1.0)]
    rng = np.random.default_rng(0)
    cfg = RansacConfig()
    h = generate_hypothesis(rng, lpts, rpts, left, right, axis, cfg)
    assert len(h.pairs) == 4
    (g0, _), (g1, _) = h.pairs[0], h.pairs[1]
    assert math.dist(g0, g1) >= cfg.min_pair_separation
    for (gx, gy), _ in h.pairs[:2]:
        assert gy > 0
    for (gx, gy), _ in h.pairs[2:]:
        assert gy < 0


def test_generate_hypothesis_exhausts():
    plan = small_plan()
    left, right, axis = group_landmarks_by_side(plan, plan.landmarks)
    # both image pairs closer than min separation: nothing admissible
    lpts = [GroundPoint(2.0, 1.0), GroundPoint(2.1, 1.0)]
    rpts = [GroundPoint(3.0, -1.0), GroundPoint(3.1, -1.0)]
    with pytest.raises(HypothesisExhausted):
        generate_hypothesis(np.random.default_rng(0), lpts, rpts,
                            left, right, axis, RansacConfig())


def test_score_hypothesis_perfect():
    plan = small_plan()
    pose = Pose2D(1.0, 6.0, 0.0)
    cands = plan.landmarks
    ground = [GroundPoint(lm.x - 1.0, lm.y - 6.0) for lm in cands]
    h = CorrespondenceHypothesis(pairs=[
        ((g.x, g.y), (lm.x, lm.y))
        for g, lm in list(zip(ground, cands))[:4]
    ])
    fit, inliers, rms = score_hypothesis(h, ground, cands, RansacConfig())
    assert len(inliers) == len(cands)
    assert rms < 1e-9
    assert abs(fit.x - pose.x) < 1e-9 and abs(fit.y - pose.y) < 1e-9


def test_score_hypothesis_one_to_one():
    plan = small_plan()
    cands = plan.landmarks
    # two ground points near the same landmark: only one may claim it
    ground = [GroundPoint(1.0, 1.0), GroundPoint(1.2, 1.0),
              GroundPoint(3.5, 1.0), GroundPoint(2.0, -1.0),
              GroundPoint(4.5, -1.0)]
    h = CorrespondenceHypothesis(pairs=[
        ((1.0, 1.0), (2.0, 7.0)), ((3.5, 1.0), (4.5, 7.0)),
        ((2.0, -1.0), (3.0, 5.0)), ((4.5, -1.0), (5.5, 5.0)),
    ])
    _, inliers, _ = score_hypothesis(h, ground, cands, RansacConfig())
    claimed = [ci for _, ci in inliers]
    assert len(claimed) == len(set(claimed))


def test_ransac_degrades_without_landmarks():
    plan = small_plan()
    coarse = CoarseEstimate(center=(5.0, 6.0), radius=10.0)
    res = ransac_locate([], plan, coarse, RansacConfig())
    assert res.status == fuse.STATUS_DEGRADED
    assert not res.heading_valid
    assert res.pose.x == coarse.center[0] and res.pose.y == coarse.center[1]
    assert "degraded_reason" in res.diagnostics


def test_ransac_degrades_one_sided():
    plan = small_plan()
    coarse = CoarseEstimate(center=(5.0, 6.0), radius=10.0)
    pts = [GroundPoint(2.0, 1.0), GroundPoint(4.0, 1.2),
           GroundPoint(6.0, 0.9), GroundPoint(8.0, 1.1)]
    res = ransac_locate(pts, plan, coarse, RansacConfig())
    assert res.status == fuse.STATUS_DEGRADED


def test_ransac_recovers_known_pose():
    plan = small_plan()
    true_pose = Pose2D(1.0, 6.2, 0.05)
    rng = np.random.default_rng(20)
    ground = []
    c, s = math.cos(true_pose.theta), math.sin(true_pose.theta)
    for lm in plan.landmarks:
        dx, dy = lm.x - true_pose.x, lm.y - true_pose.y
        gx = c * dx + s * dy
        gy = -s * dx + c * dy
        ground.append(GroundPoint(gx + rng.normal(0, 0.02),
                                  gy + rng.normal(0, 0.02)))
    coarse = CoarseEstimate(center=(3.0, 6.0), radius=10.0)
    res = ransac_locate(ground, plan, coarse,
                        RansacConfig(seed=1, min_inliers=4))
    assert res.status == fuse.STATUS_OK
    assert math.hypot(res.pose.x - true_pose.x, res.pose.y - true_pose.y) < 0.2
    assert abs(res.pose.theta - true_pose.theta) < math.radians(2.0)
    assert res.heading_valid


def test_ransac_deterministic():
    plan = small_plan()
    ground = [GroundPoint(1.0, 0.8), GroundPoint(3.5, 0.85),
              GroundPoint(6.1, 0.78), GroundPoint(2.0, -1.2),
              GroundPoint(4.4, -1.15), GroundPoint(7.0, -1.22)]
    coarse = CoarseEstimate(center=(4.0, 6.0), radius=10.0)
    cfg = RansacConfig(seed=9, min_inliers=4)
    a = ransac_locate(ground, plan, coarse, cfg)
    b = ransac_locate(ground, plan, coarse, cfg)
    assert (a.status, a.inliers, a.iterations) == (b.status, b.inliers, b.iterations)
    assert a.pose == b.pose and a.rms == b.rms


def test_whole_plan_coarse_covers_plan():
    plan = small_plan()
    coarse = whole_plan_coarse(plan)
    for lm in plan.landmarks:
        assert math.hypot(lm.x - coarse.center[0],
                          lm.y - coarse.center[1]) <= coarse.radius + 1e-9


def test_ransac_config_validation():
    with pytest.raises(ValueError):
        RansacConfig(max_iterations=0)
    with pytest.raises(ValueError):
        RansacConfig(inlier_threshold=0.0)
