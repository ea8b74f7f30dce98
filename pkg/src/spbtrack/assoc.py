"""Track-to-detection association.

Scores combine a rotated-box overlap metric with an appearance term
(exponentiated cosine similarity of detector embeddings), solved as an
optimal one-to-one assignment. Matching runs in two confidence stages, with
a feature-similarity rescue pass for pairs the geometric gate rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch
from .geometry import Box3D, giou3d, mciou

METRIC_GIOU = "giou"
METRIC_MCIOU = "mciou"
METRIC_MCIOU_FS = "mciou_fs"
METRICS = (METRIC_GIOU, METRIC_MCIOU, METRIC_MCIOU_FS)

# Placeholder overlap for pairs beyond the gating radius; must stay below any
# usable mciou_gate so such pairs can never match geometrically.
FAR_SCORE = -1.0


@dataclass(frozen=True)
class AssocConfig:
    omega: float = 0.5             # weight of the overlap term vs. appearance
    mciou_gate: float = 0.1        # minimum overlap score for a geometric match
    fs_gate: float = math.exp(0.7) # minimum feature similarity for a rescue
    high_conf_split: float = 0.3   # stage-1 / stage-2 detection confidence split
    metric: str = METRIC_MCIOU_FS
    gating_radius: float = 15.0    # meters; 0 disables distance pre-gating

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie strictly between 0 and 1")
        if self.metric not in METRICS:
            raise ValueError(f"unknown association metric {self.metric!r}")


class TrackView(NamedTuple):
    """What association needs to know about a track: predicted box + feature."""

    box: Box3D
    feature: Optional[np.ndarray]


@dataclass(frozen=True)
class AssocResult:
    matches: list[tuple[int, int]]       # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def feature_similarity(f_s: np.ndarray, f_t: np.ndarray) -> float:
    """exp(cosine similarity); ranges over [1/e, e]."""
    f_s = np.asarray(f_s, dtype=float)
    f_t = np.asarray(f_t, dtype=float)
    if f_s.shape != f_t.shape:
        raise DimensionMismatch(f"feature lengths differ: {f_s.shape} vs {f_t.shape}")
    norm = np.linalg.norm(f_s) * np.linalg.norm(f_t)
    if norm <= 0.0:
        raise ValueError("feature vectors must be non-zero")
    cos = float(np.dot(f_s, f_t) / norm)
    return math.exp(max(-1.0, min(1.0, cos)))


def _geo_score(track_box: Box3D, det_box: Box3D, metric: str) -> float:
    if metric == METRIC_GIOU:
        return giou3d(track_box, det_box)
    return mciou(track_box, det_box)


def pair_score(track_box: Box3D, det_box: Box3D,
               track_feat: Optional[np.ndarray], det_feat: Optional[np.ndarray],
               cfg: AssocConfig) -> float:
    """Blended association score; falls back to overlap alone when either
    feature is missing or the configured metric ignores appearance."""
    geo = _geo_score(track_box, det_box, cfg.metric)
    if cfg.metric != METRIC_MCIOU_FS or track_feat is None or det_feat is None:
        return geo
    return cfg.omega * geo + (1.0 - cfg.omega) * feature_similarity(track_feat, det_feat)


def solve_assignment(score_matrix, gate: float) -> AssocResult:
    """Maximum-total-score one-to-one assignment; matched pairs scoring below
    ``gate`` are demoted to unmatched."""
    scores = np.atleast_2d(np.asarray(score_matrix, dtype=float))
    n_rows, n_cols = scores.shape
    if n_rows == 0 or n_cols == 0:
        return AssocResult([], list(range(n_rows)), list(range(n_cols)))
    rows, cols = linear_sum_assignment(scores, maximize=True)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if scores[r, c] >= gate]
    matched_r = {r for r, _ in matches}
    matched_c = {c for _, c in matches}
    return AssocResult(
        matches=sorted(matches),
        unmatched_tracks=[r for r in range(n_rows) if r not in matched_r],
        unmatched_detections=[c for c in range(n_cols) if c not in matched_c],
    )


def _build_matrices(tracks, detections, cfg: AssocConfig):
    """Overlap matrix (with distance pre-gating) and, when the metric uses
    appearance, the feature-similarity matrix (NaN where unavailable)."""
    n_t, n_d = len(tracks), len(detections)
    geo = np.full((n_t, n_d), FAR_SCORE)
    radius = cfg.gating_radius
    for i, trk in enumerate(tracks):
        tb = trk.box
        for j, det in enumerate(detections):
            db = det.box
            if radius and math.hypot(tb.x - db.x, tb.y - db.y) > radius:
                continue
            geo[i, j] = _geo_score(tb, db, cfg.metric)

    fs = None
    if cfg.metric == METRIC_MCIOU_FS:
        t_feats = [t.feature for t in tracks]
        d_feats = [d.feature for d in detections]
        if any(f is not None for f in t_feats) and any(f is not None for f in d_feats):
            fs = np.full((n_t, n_d), np.nan)
            for i, tf in enumerate(t_feats):
                if tf is None:
                    continue
                for j, df in enumerate(d_feats):
                    if df is None:
                        continue
                    fs[i, j] = feature_similarity(tf, df)
    return geo, fs


def _blend(geo: np.ndarray, fs: Optional[np.ndarray], omega: float) -> np.ndarray:
    if fs is None:
        return geo
    blended = omega * geo + (1.0 - omega) * fs
    return np.where(np.isnan(blended), geo, blended)


def two_stage_associate(tracks: Sequence[TrackView], detections, cfg: AssocConfig) -> AssocResult:
    """Confidence-split matching with a feature rescue pass.

    Stage 1 assigns high-confidence detections to all tracks; stage 2 assigns
    the rest to the leftovers. Both stages maximize the blended score but
    gate acceptance on the overlap value alone. Finally, still-unmatched
    pairs whose overlap failed the gate can be rescued one-to-one, greedily
    by descending feature similarity.
    """
    n_t, n_d = len(tracks), len(detections)
    if n_t == 0 or n_d == 0:
        return AssocResult([], list(range(n_t)), list(range(n_d)))

    geo, fs = _build_matrices(tracks, detections, cfg)
    score = _blend(geo, fs, cfg.omega)

    matches: list[tuple[int, int]] = []
    free_tracks = list(range(n_t))
    stage1 = [j for j in range(n_d) if detections[j].confidence >= cfg.high_conf_split]
    stage2 = [j for j in range(n_d) if j not in set(stage1)]

    for det_idx in (stage1, stage2):
        if not det_idx or not free_tracks:
            continue
        sub = score[np.ix_(free_tracks, det_idx)]
        rows, cols = linear_sum_assignment(sub, maximize=True)
        taken_tracks = []
        for r, c in zip(rows, cols):
            ti, dj = free_tracks[r], det_idx[c]
            if geo[ti, dj] >= cfg.mciou_gate:
                matches.append((ti, dj))
                taken_tracks.append(ti)
        free_tracks = [t for t in free_tracks if t not in set(taken_tracks)]

    matched_t = {t for t, _ in matches}
    matched_d = {d for _, d in matches}
    if fs is not None:
        candidates = []
        for ti in range(n_t):
            if ti in matched_t:
                continue
            for dj in range(n_d):
                if dj in matched_d:
                    continue
                if geo[ti, dj] < cfg.mciou_gate and not np.isnan(fs[ti, dj]) \
                        and fs[ti, dj] >= cfg.fs_gate:
                    candidates.append((-fs[ti, dj], ti, dj))
        for _, ti, dj in sorted(candidates):
            if ti in matched_t or dj in matched_d:
                continue
            matches.append((ti, dj))
            matched_t.add(ti)
            matched_d.add(dj)

    return AssocResult(
        matches=sorted(matches),
        unmatched_tracks=[t for t in range(n_t) if t not in matched_t],
        unmatched_detections=[d for d in range(n_d) if d not in matched_d],
    )
