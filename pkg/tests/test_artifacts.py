import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import map_from_states
from oracles import freeze_oracle
from owlsim.artifacts import (
    ArtifactReport,
    BluetoothLog,
    HypothesisConfig,
    append_reports,
    finalize_bluetooth,
    localize_detection,
    logit,
    read_reports,
    record_bluetooth,
    report_frozen,
    update_hypotheses,
)
from owlsim.geometry import Pose
from owlsim.mapping import VoxelState
from owlsim.sensing import CameraModel, Detection
from owlsim.world import ARTIFACT_CLASSES

EDGE = 0.2
CAM = CameraModel()
CFG = HypothesisConfig()


def _wall_map(wall_i=20, far_i=None, hole=None):
    """Free box with an Occupied plane at voxel x-index ``wall_i`` (and optionally ``far_i``)."""
    s = np.full((40, 20, 20), VoxelState.FREE, dtype=np.uint8)
    s[wall_i] = VoxelState.OCCUPIED
    if far_i is not None:
        s[far_i] = VoxelState.OCCUPIED
    if hole is not None:
        s[(wall_i, *hole)] = VoxelState.FREE
    return map_from_states(s, EDGE)


def _lattice_rays(det, pose, n=5):
    u0, v0, u1, v1 = det.bbox
    frac = (np.arange(n) + 0.5) / n
    return [CAM.pixel_ray(pose, float(u), float(v)) for v in v0 + frac * (v1 - v0) for u in u0 + frac * (u1 - u0)]


def _plane_hit_center(origin, ray, wall_i):
    """Centre of the voxel where a ray first crosses the face x = wall_i * EDGE."""
    t = (wall_i * EDGE - origin[0]) / ray[0]
    p = origin + t * ray
    return (np.array([wall_i, math.floor(p[1] / EDGE), math.floor(p[2] / EDGE)]) + 0.5) * EDGE


def _sorted_median(values):
    vals = sorted(values)
    n = len(vals)
    return vals[n // 2] if n % 2 else 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def test_config_validation():
    with pytest.raises(ValueError):
        HypothesisConfig(radius=0.0)
    with pytest.raises(ValueError):
        HypothesisConfig(p_true_pos=0.2, p_false_pos=0.9)
    with pytest.raises(ValueError):
        HypothesisConfig(freeze_threshold=0.4)
    with pytest.raises(ValueError):
        HypothesisConfig(class_thresholds={"toaster": 0.9})
    with pytest.raises(ValueError):
        HypothesisConfig(grid_n=1)
    assert CFG.threshold("rope") == 0.95
    assert HypothesisConfig(class_thresholds={"rope": 0.99}).threshold("rope") == 0.99


# ---------------------------------------------------------------- localization


def test_localize_on_flat_wall_is_componentwise_median():
    pose = Pose(np.array([1.05, 2.03, 2.01]), 0.0)
    det = Detection(0.0, "drill", (250.0, 190.0, 400.0, 300.0))
    got = localize_detection(det, pose, CAM, _wall_map(), 5)
    hits = np.array([_plane_hit_center(pose.position, r, 20) for r in _lattice_rays(det, pose)])
    expected = [_sorted_median(hits[:, k]) for k in range(3)]
    assert np.allclose(got, expected)
    assert got[0] == pytest.approx(20.5 * EDGE)


def test_localize_no_return():
    empty = map_from_states(np.full((40, 20, 20), VoxelState.FREE, dtype=np.uint8), EDGE)
    pose = Pose(np.array([1.05, 2.03, 2.01]), 0.0)
    assert localize_detection(Detection(0.0, "drill", (300.0, 220.0, 340.0, 260.0)), pose, CAM, empty) is None
    with pytest.raises(ValueError):
        localize_detection(Detection(0.0, "drill", (0, 0, 1, 1)), pose, CAM, empty, grid_n=1)


def test_localize_single_outlier_is_ignored():
    pose = Pose(np.array([1.05, 2.03, 2.01]), 0.0)
    det = Detection(0.0, "drill", (200.0, 140.0, 440.0, 340.0))
    rays = _lattice_rays(det, pose)
    centre_hit = _plane_hit_center(pose.position, rays[12], 16)
    hole = tuple(int(v) for v in np.floor(centre_hit[1:] / EDGE))
    m = _wall_map(16, far_i=36, hole=hole)
    ranges = [m.raycast(pose.position, r, 20.0).distance for r in rays]
    far = [k for k, d in enumerate(ranges) if d > 5.0]
    assert far == [12]  # precondition: exactly one ray slips through the hole
    got = localize_detection(det, pose, CAM, m)
    near = np.array([_plane_hit_center(pose.position, r, 16) for k, r in enumerate(rays) if k != 12])
    assert np.all(got >= near.min(axis=0) - 1e-12) and np.all(got <= near.max(axis=0) + 1e-12)


def test_range_gate_rejects_hits_off_the_bbox_depth():
    pose = Pose(np.array([1.05, 2.03, 2.01]), 0.0)
    # a 0.25 m-radius object 2 m ahead spans 2 * fx * 0.25 / 2 pixels
    hw = CAM.fx * 0.25 / 2.0
    det = Detection(0.0, "drill", (CAM.cx - hw, CAM.cy - hw, CAM.cx + hw, CAM.cy + hw))
    far_wall = _wall_map(30)  # ~4.9 m ahead
    assert localize_detection(det, pose, CAM, far_wall) is not None
    assert localize_detection(det, pose, CAM, far_wall, range_gate=0.75) is None
    near_wall = _wall_map(15)  # ~1.95 m ahead
    assert localize_detection(det, pose, CAM, near_wall, range_gate=0.75) is not None


# ---------------------------------------------------------------- hypotheses


def test_first_detection_and_midpoint():
    hyps = update_hypotheses([], "rope", (1.0, 2.0, 3.0), CFG)
    assert len(hyps) == 1 and hyps[0].detection_count == 1
    assert np.allclose(hyps[0].center, [1.0, 2.0, 3.0])
    hyps = update_hypotheses(hyps, "rope", (1.1, 2.0, 3.0), CFG)
    assert len(hyps) == 1 and np.allclose(hyps[0].center, [1.05, 2.0, 3.0])
    hyps = update_hypotheses(hyps, "rope", (5.0, 2.0, 3.0), CFG)
    assert len(hyps) == 2
    with pytest.raises(ValueError):
        update_hypotheses(hyps, "rope", (np.nan, 0.0, 0.0), CFG)
    with pytest.raises(ValueError):
        update_hypotheses(hyps, "toaster", (0.0, 0.0, 0.0), CFG)


def test_freeze_after_two_detections():
    n = math.ceil(logit(0.95) / math.log(0.9 / 0.2))
    assert n == 2
    hyps = update_hypotheses([], "drill", (0.0, 0.0, 0.0), CFG)
    assert not hyps[0].frozen
    hyps = update_hypotheses(hyps, "drill", (0.0, 0.0, 0.0), CFG)
    assert hyps[0].frozen and hyps[0].frozen_class == "drill"
    assert hyps[0].posterior("drill") >= 0.95


def test_frozen_hypothesis_never_changes():
    hyps = update_hypotheses([], "drill", (0.0, 0.0, 0.0), CFG)
    hyps = update_hypotheses(hyps, "drill", (0.2, 0.0, 0.0), CFG)
    h = hyps[0]
    before = (h.center.copy(), h.detection_count, h.frozen_class, dict(h.class_log_odds))
    for _ in range(5):
        hyps = update_hypotheses(hyps, "rope", (0.3, 0.1, 0.0), CFG)
    assert len(hyps) == 1
    assert np.array_equal(h.center, before[0]) and h.detection_count == before[1]
    assert h.frozen_class == before[2] and h.class_log_odds == before[3]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_bayes_freeze_matches_log_odds_oracle(seed):
    rng = np.random.default_rng(seed)
    p_fp = float(rng.uniform(0.05, 0.4))
    p_tp = float(rng.uniform(p_fp + 0.05, 0.99))
    thresholds = {c: float(rng.uniform(0.6, 0.999)) for c in ARTIFACT_CLASSES}
    cfg = HypothesisConfig(p_true_pos=p_tp, p_false_pos=p_fp, class_thresholds=thresholds)
    truth = ARTIFACT_CLASSES[int(rng.integers(8))]
    obs = [truth if rng.random() < 0.7 else ARTIFACT_CLASSES[int(rng.integers(8))] for _ in range(40)]
    k, cls = freeze_oracle(obs, list(ARTIFACT_CLASSES), p_tp, p_fp, thresholds)
    hyps = []
    for o in obs:
        hyps = update_hypotheses(hyps, o, (0.0, 0.0, 0.0), cfg)
    h = hyps[0]
    if k is None:
        assert not h.frozen and h.detection_count == len(obs)
    else:
        assert h.frozen and h.frozen_class == cls and h.detection_count == k + 1
        assert h.class_history == obs[: k + 1]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_sphere_consistency_and_posterior_associativity(seed):
    rng = np.random.default_rng(seed)
    cfg = HypothesisConfig(freeze_threshold=0.99999999)
    hyps, absorbed = [], {}
    for _ in range(60):
        p = rng.uniform(0, 6, 3)
        cls = ARTIFACT_CLASSES[int(rng.integers(8))]
        near = [(np.linalg.norm(h.center - p), h.id) for h in hyps if np.linalg.norm(h.center - p) <= h.radius]
        hyps = update_hypotheses(hyps, cls, p, cfg)
        hid = min(near)[1] if near else hyps[-1].id
        absorbed.setdefault(hid, []).append(p)
    for h in hyps:
        assert np.allclose(h.center, np.mean(absorbed[h.id], axis=0), rtol=0, atol=1e-12)
        assert h.detection_count == len(absorbed[h.id]) == len(h.class_history)
        for c in ARTIFACT_CLASSES:
            hits = sum(1 for o in h.class_history if o == c)
            batch = hits * cfg.hit_increment + (len(h.class_history) - hits) * cfg.miss_increment
            assert h.class_log_odds[c] == pytest.approx(batch, rel=1e-12, abs=1e-12)


def test_report_frozen_is_idempotent(tmp_path):
    assert report_frozen([]) == []
    hyps = update_hypotheses([], "vent", (1.0, 1.0, 1.0), CFG)
    hyps = update_hypotheses(hyps, "vent", (1.0, 1.0, 1.2), CFG)
    reports = report_frozen(hyps, 3.0)
    assert len(reports) == 1
    r = reports[0]
    assert r.artifact_class == "vent" and np.allclose(r.location, hyps[0].center)
    assert r.class_probabilities["vent"] >= 0.95
    assert all(0.0 <= p <= 1.0 for p in r.class_probabilities.values())
    assert report_frozen(hyps, 4.0) == []
    append_reports(tmp_path / "r.jsonl", reports)
    back = read_reports(tmp_path / "r.jsonl")
    assert back[0].artifact_class == "vent" and np.allclose(back[0].location, r.location)


# ---------------------------------------------------------------- bluetooth


def test_bluetooth_mean_of_detection_poses():
    log = BluetoothLog()
    record_bluetooth(log, [3], Pose(np.array([0.0, 0.0, 0.0]), 0.0), 0.0)
    record_bluetooth(log, [3], Pose(np.array([2.0, 0.0, 0.0]), 0.0), 1.0)
    record_bluetooth(log, [], Pose(np.array([9.0, 9.0, 9.0]), 0.0), 2.0)
    reports = finalize_bluetooth(log)
    assert len(reports) == 1
    assert reports[0].artifact_class == "cellphone" and np.allclose(reports[0].location, [1.0, 0.0, 0.0])
    assert finalize_bluetooth(BluetoothLog()) == []


def test_bluetooth_segment_centroid():
    log = BluetoothLog()
    a, b = np.array([1.0, -2.0, 0.5]), np.array([7.0, 4.0, 1.5])
    for t in np.linspace(0, 1, 100):
        record_bluetooth(log, [0], Pose(a + t * (b - a), 0.0), float(t))
    (r,) = finalize_bluetooth(log)
    assert np.allclose(r.location, 0.5 * (a + b), atol=1e-12)
    assert isinstance(r, ArtifactReport) and r.source == "bluetooth"
