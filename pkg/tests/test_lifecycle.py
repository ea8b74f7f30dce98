"""Lifecycle checks: score arithmetic, the Fig-style occlusion persistence
mechanism, a hand-traced five-frame pool evolution, and pool boundedness."""

import math

import numpy as np
import pytest

from spbtrack.assoc import AssocConfig
from spbtrack.errors import EmptyInput, OutOfOrderFrame
from spbtrack.filters import FilterConfig
from spbtrack.geometry import Box3D
from spbtrack.io import Detection3D, FrameInput
from spbtrack.lifecycle import (EgoPose, LifecycleConfig, Tracker, TrackStatus,
                                cdd, compute_f1_threshold, decay_lost,
                                lpf_score, step_frame)


def ped_box(x, y, z=0.9, yaw=0.0, w=0.6, l=0.6, h=1.8):
    return Box3D(x=x, y=y, z=z, yaw=yaw, w=w, l=l, h=h)


def frame_at(idx, dets, rate=10.0):
    return FrameInput(frame=idx, timestamp=idx / rate, detections=dets, ego=EgoPose())


def det(x, y, conf, **kw):
    return Detection3D(frame=0, box=ped_box(x, y, **kw), confidence=conf)


def make_tracker(**life_kw):
    return Tracker(FilterConfig(variant="dukf"), AssocConfig(),
                   LifecycleConfig(**life_kw))


# --- score arithmetic ---------------------------------------------------------

def test_lpf_score_values():
    assert lpf_score(0.8, 0.2, 0.999) == pytest.approx(0.7994, abs=1e-12)
    assert lpf_score(0.6, 0.6, 0.3) == pytest.approx(0.6, abs=1e-12)
    assert lpf_score(0.9, 0.5, 0.7) == pytest.approx(0.78, abs=1e-12)


def test_cdd_values():
    ego = EgoPose()
    assert cdd((0.0, 0.0, 0.0), ego, 50.0) == 0.0
    assert cdd((50.0, 0.0, 0.0), ego, 50.0) == pytest.approx(1.0)
    assert cdd((3.0, 4.0, 0.0), ego, 50.0) == pytest.approx(0.1)
    assert cdd((3.0, 4.0, 0.0), EgoPose(3.0, 4.0, 0.0), 50.0) == 0.0


def test_decay_lost_cases():
    cfg = LifecycleConfig()
    tracker = make_tracker()
    tracker.step(frame_at(0, [det(0.0, 0.0, 0.9)]))
    trk = tracker.pool[0]

    trk.score = 0.8
    decay_lost(trk, EgoPose(trk.filter.mean.x, trk.filter.mean.y, trk.filter.mean.z),
               cfg)
    assert trk.score == pytest.approx(0.8)  # zero distance: no decay
    assert trk.status is TrackStatus.LOST and trk.frames_lost == 1

    trk.score = 0.8
    decay_lost(trk, EgoPose(1000.0, 0.0, 0.0), cfg)
    assert trk.score == 0.0  # at or beyond max range: immediate full decay

    trk.score = 0.8
    mean = trk.filter.mean
    dist = math.sqrt((mean.x - 12.5) ** 2 + mean.y ** 2 + mean.z ** 2)
    expected = 0.8 * (1.0 - dist / 50.0)
    decay_lost(trk, EgoPose(12.5, 0.0, 0.0), cfg)
    assert trk.score == pytest.approx(expected, abs=1e-12)


# --- birth / output rules --------------------------------------------------------

def test_birth_creates_candidate_without_output():
    tracker = make_tracker()
    outputs = tracker.step(frame_at(0, [det(1.0, 2.0, 0.9)]))
    assert outputs == []
    assert len(tracker.pool) == 1
    trk = tracker.pool[0]
    assert trk.status is TrackStatus.CANDIDATE
    assert trk.score == 0.9 and trk.hits == 1


def test_low_confidence_unmatched_detection_is_dropped():
    tracker = make_tracker(f1_threshold=0.5, death_threshold=0.1)
    outputs = tracker.step(frame_at(0, [det(1.0, 2.0, 0.2)]))
    assert outputs == [] and tracker.pool == []


def test_candidate_promotes_on_second_match():
    tracker = make_tracker()
    tracker.step(frame_at(0, [det(0.0, 0.0, 0.9)]))
    outputs = tracker.step(frame_at(1, [det(0.0, 0.0, 0.9)]))
    assert len(outputs) == 1
    assert outputs[0].id == 1
    assert tracker.pool[0].status is TrackStatus.ACTIVE


def test_out_of_order_frame_raises():
    tracker = make_tracker()
    tracker.step(frame_at(1, []))
    with pytest.raises(OutOfOrderFrame):
        tracker.step(frame_at(1, []))
    with pytest.raises(OutOfOrderFrame):
        tracker.step(frame_at(0, []))


# --- occlusion persistence --------------------------------------------------------

def occlusion_run(max_lost_frames):
    """Stationary pedestrian 4 m from the sensor: seen in frames 1-2, occluded
    in 3-20, visible again from 21 on (frame 0 carries nothing)."""
    tracker = make_tracker(max_lost_frames=max_lost_frames)
    seen = {}
    for idx in range(24):
        if idx in (1, 2) or idx >= 21:
            dets = [det(4.0, 0.0, 0.9)]
        else:
            dets = []
        for out in tracker.step(frame_at(idx, dets)):
            seen.setdefault(idx, []).append(out.id)
    return tracker, seen


def test_long_occlusion_keeps_identity():
    tracker, seen = occlusion_run(max_lost_frames=60)
    assert seen[2] == [1]
    assert seen[21] == [1], "the reappearing pedestrian must keep its id"
    assert seen[22] == [1] and seen[23] == [1]
    assert 3 not in seen  # hidden object is not emitted
    assert tracker.pool[0].id == 1


def test_disabling_lost_retention_forces_new_identity():
    tracker, seen = occlusion_run(max_lost_frames=0)
    assert seen[2] == [1]
    assert 21 not in seen  # the newborn candidate resurfaces one frame later
    assert seen.get(22) == [2], "with no memory the reappearance births a new id"


def test_lost_score_decays_monotonically():
    tracker = make_tracker()
    tracker.step(frame_at(0, [det(10.0, 0.0, 0.9)]))
    tracker.step(frame_at(1, [det(10.0, 0.0, 0.9)]))
    scores = []
    idx = 2
    while tracker.pool:
        tracker.step(frame_at(idx, []))
        if tracker.pool:
            scores.append(tracker.pool[0].score)
        idx += 1
    assert all(b < a for a, b in zip(scores, scores[1:]))
    assert idx < 100  # decay eventually deletes the track


# --- hand-traced five-frame fixture ----------------------------------------------

def test_five_frame_pool_evolution_matches_hand_trace():
    """Two stationary pedestrians; B drops out in frame 2. Scores follow the
    blend/decay arithmetic exactly because zero innovations keep the filter
    means pinned to the detections."""
    tracker = make_tracker()  # omega_lpf 0.7, f1 0.3, death 0.1, promote 2
    a = (0.0, 0.0)
    b = (3.0, 0.0)
    conf_a = [0.9, 0.8, 0.7, 0.6, 0.5]
    conf_b = [0.4, 0.9, None, 0.9, 0.9]

    dist_b = math.sqrt(3.0 ** 2 + 0.9 ** 2)  # box center z = 0.9
    decay_b = 1.0 - dist_b / 50.0

    # frame 0: two births
    outs = tracker.step(frame_at(0, [det(*a, conf_a[0]), det(*b, conf_b[0])]))
    assert outs == []
    assert [t.id for t in tracker.pool] == [1, 2]
    assert all(t.status is TrackStatus.CANDIDATE for t in tracker.pool)

    # frame 1: both match and promote
    outs = tracker.step(frame_at(1, [det(*a, conf_a[1]), det(*b, conf_b[1])]))
    score_a = 0.7 * 0.9 + 0.3 * 0.8
    score_b = 0.7 * 0.4 + 0.3 * 0.9
    assert [o.id for o in outs] == [1, 2]
    assert tracker.pool[0].score == pytest.approx(score_a, abs=1e-12)
    assert tracker.pool[1].score == pytest.approx(score_b, abs=1e-12)
    assert all(t.status is TrackStatus.ACTIVE for t in tracker.pool)

    # frame 2: B misses and decays into the lost pool
    outs = tracker.step(frame_at(2, [det(*a, conf_a[2])]))
    score_a = 0.7 * score_a + 0.3 * 0.7
    score_b = score_b * decay_b
    assert [o.id for o in outs] == [1]
    assert tracker.pool[1].status is TrackStatus.LOST
    assert tracker.pool[1].frames_lost == 1
    assert tracker.pool[1].score == pytest.approx(score_b, abs=1e-9)

    # frame 3: B reappears at its old spot and is re-acquired, same id
    outs = tracker.step(frame_at(3, [det(*a, conf_a[3]), det(*b, conf_b[3])]))
    score_a = 0.7 * score_a + 0.3 * 0.6
    score_b = 0.7 * score_b + 0.3 * 0.9
    assert [o.id for o in outs] == [1, 2]
    assert tracker.pool[1].id == 2
    assert tracker.pool[1].frames_lost == 0
    assert tracker.pool[1].score == pytest.approx(score_b, abs=1e-9)

    # frame 4: steady state
    outs = tracker.step(frame_at(4, [det(*a, conf_a[4]), det(*b, conf_b[4])]))
    score_a = 0.7 * score_a + 0.3 * 0.5
    score_b = 0.7 * score_b + 0.3 * 0.9
    assert [o.id for o in outs] == [1, 2]
    assert tracker.pool[0].score == pytest.approx(score_a, abs=1e-9)
    assert tracker.pool[1].score == pytest.approx(score_b, abs=1e-9)
    assert [t.hits for t in tracker.pool] == [5, 4]


# --- F1 threshold ------------------------------------------------------------------

def test_f1_threshold_all_true_positives():
    conf = np.linspace(0.1, 0.9, 20)
    assert compute_f1_threshold(conf, np.ones(20, dtype=bool)) == 0.0


def test_f1_threshold_separable_case_tie_rule():
    conf = np.array([0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 0.3, 0.39])
    is_tp = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=bool)
    assert compute_f1_threshold(conf, is_tp) == pytest.approx(0.40)


def test_f1_threshold_matches_vectorized_sweep():
    rng = np.random.default_rng(53)
    for _ in range(20):
        n = int(rng.integers(5, 60))
        conf = rng.uniform(0, 1, size=n)
        is_tp = rng.uniform(size=n) < 0.6
        if not is_tp.any():
            is_tp[0] = True
        taus = np.round(np.arange(101) / 100.0, 10)
        kept = conf[None, :] >= taus[:, None]
        tp = (kept & is_tp[None, :]).sum(axis=1)
        fp = (kept & ~is_tp[None, :]).sum(axis=1)
        fn = is_tp.sum() - tp
        denom = 2 * tp + fp + fn
        f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
        expected = taus[int(np.argmax(f1))]
        assert compute_f1_threshold(conf, is_tp) == pytest.approx(expected, abs=1e-9)


def test_f1_threshold_empty_raises():
    with pytest.raises(EmptyInput):
        compute_f1_threshold([], [])


# --- pool invariants ------------------------------------------------------------------

def test_ids_stable_unique_and_never_reused():
    rng = np.random.default_rng(59)
    tracker = Tracker(FilterConfig(variant="kf"), AssocConfig(),
                      LifecycleConfig(max_lost_frames=3))
    born = set()
    for idx in range(300):
        dets = [det(float(rng.uniform(-8, 8)), float(rng.uniform(-8, 8)),
                    float(rng.uniform(0.2, 1.0)))
                for _ in range(int(rng.integers(0, 3)))]
        outs = tracker.step(frame_at(idx, dets))
        ids = [o.id for o in outs]
        assert len(set(ids)) == len(ids)
        pool_ids = [t.id for t in tracker.pool]
        assert len(set(pool_ids)) == len(pool_ids)
        for t in tracker.pool:
            if t.id not in born:
                born.add(t.id)
        assert max(pool_ids, default=0) < tracker._next_id


def test_pool_stays_bounded_over_long_run():
    rng = np.random.default_rng(61)
    tracker = Tracker(FilterConfig(variant="kf"), AssocConfig(),
                      LifecycleConfig(max_lost_frames=20))
    max_pool = 0
    for idx in range(10_000):
        dets = [det(float(rng.uniform(-30, 30)), float(rng.uniform(-30, 30)),
                    float(rng.uniform(0.3, 1.0)))]
        tracker.step(frame_at(idx, dets))
        max_pool = max(max_pool, len(tracker.pool))
    assert max_pool <= 25  # births are one per frame; deaths must keep pace


def test_step_frame_alias():
    tracker = make_tracker()
    assert step_frame(tracker, frame_at(0, [det(0, 0, 0.9)])) == []
    assert len(tracker.pool) == 1
