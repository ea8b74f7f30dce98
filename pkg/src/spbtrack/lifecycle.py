"""Track lifecycle: birth, candidate/active pools, confidence smoothing,
distance-driven decay, death, and long-term re-identification memory.

Lost tracks are not discarded immediately: they keep coasting through the
motion model and take part in association every frame, which is what lets an
identity survive a long occlusion and be re-acquired without a switch. Their
confidence decays each missed frame in proportion to their distance from the
ego sensor, and they are deleted once it falls below the death threshold (or
after a hard frame cap).
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import filters
from .assoc import AssocConfig, TrackView, two_stage_associate
from .errors import EmptyInput, OutOfOrderFrame
from .filters import FilterConfig, FilterState
from .geometry import Box3D

FEATURE_EMA_DECAY = 0.9  # weight kept by the track's running feature on match


class TrackStatus(enum.Enum):
    CANDIDATE = "candidate"
    ACTIVE = "active"
    LOST = "lost"


@dataclass(frozen=True)
class EgoPose:
    """Sensor origin in the tracking frame."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0


@dataclass(frozen=True)
class LifecycleConfig:
    f1_threshold: float = 0.3        # confidence operating point for active status
    death_threshold: float = 0.1
    omega_lpf: float = 0.7           # weight of the track score in the blend
    max_range: float = 50.0          # meters; normalizes decay distance
    candidate_promote_hits: int = 2
    max_lost_frames: int = 60
    covariance_freeze_after: int = 10  # missed frames before P stops growing

    def __post_init__(self):
        if not 0.0 < self.omega_lpf < 1.0:
            raise ValueError("omega_lpf must lie strictly between 0 and 1")
        if not self.death_threshold < self.f1_threshold:
            raise ValueError("death_threshold must be below f1_threshold")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.candidate_promote_hits < 1:
            raise ValueError("candidate_promote_hits must be >= 1")


@dataclass
class Tracklet:
    id: int
    filter: FilterState
    status: TrackStatus
    score: float
    feature: Optional[np.ndarray]
    hits: int = 1
    age: int = 0
    frames_lost: int = 0
    last_box: Optional[Box3D] = None

    def box(self) -> Box3D:
        return self.filter.mean.box()


@dataclass(frozen=True)
class TrackOutput:
    id: int
    box: Box3D
    score: float


def lpf_score(t_score: float, d_score: float, omega: float) -> float:
    """Convex blend of the running track score and the detection score."""
    return omega * t_score + (1.0 - omega) * d_score


def cdd(track_pos: tuple[float, float, float], ego: EgoPose, max_range: float) -> float:
    """Distance from the ego sensor, normalized by the usable range."""
    dx = track_pos[0] - ego.x
    dy = track_pos[1] - ego.y
    dz = track_pos[2] - ego.z
    return math.sqrt(dx * dx + dy * dy + dz * dz) / max_range


def decay_lost(t: Tracklet, ego: EgoPose, cfg: LifecycleConfig) -> Tracklet:
    """Apply one missed-frame decay: the further from the sensor, the faster
    the score decays (full decay at or beyond max_range)."""
    mean = t.filter.mean
    ratio = min(cdd((mean.x, mean.y, mean.z), ego, cfg.max_range), 1.0)
    t.score *= 1.0 - ratio
    t.frames_lost += 1
    t.status = TrackStatus.LOST
    return t


def _ema_feature(old: Optional[np.ndarray], new: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if new is None:
        return old
    if old is None:
        merged = np.asarray(new, dtype=float)
    else:
        merged = FEATURE_EMA_DECAY * old + (1.0 - FEATURE_EMA_DECAY) * new
    norm = np.linalg.norm(merged)
    return merged / norm if norm > 0.0 else old


class Tracker:
    """Single-sequence tracker; owns the pool and all of its mutation.

    ``step`` consumes frames in timestamp order and returns the active
    tracks. Per-stage wall-clock totals accumulate in ``stage_seconds``.
    """

    def __init__(self, filter_cfg: FilterConfig, assoc_cfg: AssocConfig,
                 life_cfg: LifecycleConfig):
        self.filter_cfg = filter_cfg
        self.assoc_cfg = assoc_cfg
        self.life_cfg = life_cfg
        self.pool: list[Tracklet] = []
        self._next_id = 1
        self._last_timestamp: Optional[float] = None
        self.frames_processed = 0
        self.stage_seconds = {"predict": 0.0, "associate": 0.0, "lifecycle": 0.0}

    def step(self, frame) -> list[TrackOutput]:
        if self._last_timestamp is not None and frame.timestamp <= self._last_timestamp:
            raise OutOfOrderFrame(
                f"frame {frame.frame}: timestamp {frame.timestamp} does not advance "
                f"past {self._last_timestamp}")
        dt = (frame.timestamp - self._last_timestamp
              if self._last_timestamp is not None else self.filter_cfg.dt)
        self._last_timestamp = frame.timestamp
        self.frames_processed += 1
        lcfg = self.life_cfg

        t0 = time.perf_counter()
        for trk in self.pool:
            frozen_p = (trk.filter.P if trk.frames_lost >= lcfg.covariance_freeze_after
                        else None)
            trk.filter = filters.predict(trk.filter, self.filter_cfg, dt)
            if frozen_p is not None:
                trk.filter = FilterState(mean=trk.filter.mean, P=frozen_p,
                                         R=trk.filter.R, Q=trk.filter.Q)
            trk.age += 1

        t1 = time.perf_counter()
        views = [TrackView(box=t.box(), feature=t.feature) for t in self.pool]
        result = two_stage_associate(views, frame.detections, self.assoc_cfg)

        t2 = time.perf_counter()
        for ti, dj in result.matches:
            trk = self.pool[ti]
            det = frame.detections[dj]
            z = np.array([det.box.x, det.box.y, det.box.z, det.box.yaw,
                          det.box.w, det.box.l, det.box.h])
            trk.filter = filters.update(trk.filter, z, det.confidence, self.filter_cfg)
            trk.score = lpf_score(trk.score, det.confidence, lcfg.omega_lpf)
            trk.hits += 1
            trk.frames_lost = 0
            trk.feature = _ema_feature(trk.feature, det.feature)
            trk.last_box = trk.box()
            if trk.score >= lcfg.f1_threshold and trk.hits >= lcfg.candidate_promote_hits:
                trk.status = TrackStatus.ACTIVE
            else:
                trk.status = TrackStatus.CANDIDATE

        survivors = []
        matched_tracks = {ti for ti, _ in result.matches}
        for ti, trk in enumerate(self.pool):
            if ti in matched_tracks:
                survivors.append(trk)
                continue
            decay_lost(trk, frame.ego, lcfg)
            if trk.score < lcfg.death_threshold or trk.frames_lost > lcfg.max_lost_frames:
                continue
            survivors.append(trk)
        self.pool = survivors

        for dj in result.unmatched_detections:
            det = frame.detections[dj]
            if det.confidence < lcfg.f1_threshold:
                continue
            z = np.array([det.box.x, det.box.y, det.box.z, det.box.yaw,
                          det.box.w, det.box.l, det.box.h])
            feature = det.feature
            if feature is not None:
                norm = np.linalg.norm(feature)
                feature = feature / norm if norm > 0.0 else None
            born_active = (lcfg.candidate_promote_hits <= 1
                           and det.confidence >= lcfg.f1_threshold)
            self.pool.append(Tracklet(
                id=self._next_id,
                filter=filters.make_filter_state(z, self.filter_cfg),
                status=TrackStatus.ACTIVE if born_active else TrackStatus.CANDIDATE,
                score=det.confidence,
                feature=feature,
                hits=1,
                age=0,
                frames_lost=0,
                last_box=det.box,
            ))
            self._next_id += 1

        t3 = time.perf_counter()
        self.stage_seconds["predict"] += t1 - t0
        self.stage_seconds["associate"] += t2 - t1
        self.stage_seconds["lifecycle"] += t3 - t2

        return [TrackOutput(id=t.id, box=t.box(), score=t.score)
                for t in self.pool if t.status is TrackStatus.ACTIVE]


def step_frame(tracker: Tracker, frame) -> list[TrackOutput]:
    """Functional alias for one tracker step."""
    return tracker.step(frame)


def compute_f1_threshold(confidences, is_true_positive) -> float:
    """Confidence threshold maximizing detection F1 over a 101-point sweep.

    ``is_true_positive`` flags each detection as matching ground truth (at
    the evaluation overlap threshold). Ties resolve to the lowest threshold,
    favoring recall.
    """
    conf = np.asarray(confidences, dtype=float)
    tp_flags = np.asarray(is_true_positive, dtype=bool)
    if conf.size == 0:
        raise EmptyInput("cannot sweep F1 over zero detections")
    total_tp = int(tp_flags.sum())
    best_f1 = -1.0
    best_tau = 0.0
    for i in range(101):
        tau = i / 100.0
        kept = conf >= tau
        tp = int((kept & tp_flags).sum())
        fp = int((kept & ~tp_flags).sum())
        fn = total_tp - tp
        denom = 2 * tp + fp + fn
        f1 = 2.0 * tp / denom if denom > 0 else 0.0
        if f1 > best_f1 + 1e-12:
            best_f1 = f1
            best_tau = tau
    return best_tau
