"""Tracking evaluation: CLEAR-MOT counts plus recall-swept AMOTA variants.

Per frame, predictions are matched one-to-one to ground truth by maximizing
total 3D IoU, accepting pairs at or above the IoU threshold (0.25 for
pedestrians). An identity switch is charged when a ground-truth identity's
matched predicted id differs from the id of its most recent previous match.

The swept metrics evaluate the tracker at 40 evenly spaced recall targets:
for each target the lowest-scoring predictions are dropped until recall just
reaches the target, CLEAR-MOT is recomputed, and the (scaled) MOTA values are
averaged. Unreachable targets contribute zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .assoc import solve_assignment
from .errors import MissingScores
from .geometry import iou3d
from .io import TrackedBox

N_RECALL_POINTS = 40


@dataclass(frozen=True)
class FrameMatch:
    """Per-frame matching outcome."""

    pairs: list[tuple]        # (gt_id, pred_id, iou) for each accepted match
    unmatched_gt: list
    unmatched_pred: list


def match_frame(gt_boxes, pred_boxes, iou_thres: float = 0.25) -> FrameMatch:
    """Optimal one-to-one IoU matching of one frame."""
    if not gt_boxes or not pred_boxes:
        return FrameMatch(pairs=[],
                          unmatched_gt=[g.track_id for g in gt_boxes],
                          unmatched_pred=[p.track_id for p in pred_boxes])
    scores = [[iou3d(g.box, p.box) for p in pred_boxes] for g in gt_boxes]
    result = solve_assignment(scores, gate=iou_thres)
    pairs = [(gt_boxes[i].track_id, pred_boxes[j].track_id, scores[i][j])
             for i, j in result.matches]
    return FrameMatch(
        pairs=pairs,
        unmatched_gt=[gt_boxes[i].track_id for i in result.unmatched_tracks],
        unmatched_pred=[pred_boxes[j].track_id for j in result.unmatched_detections],
    )


@dataclass
class ClearCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    gt: int = 0
    ids: int = 0
    iou_sum: float = 0.0
    tp_scores: list = field(default_factory=list)

    @property
    def mota(self) -> float:
        return 1.0 - (self.fp + self.fn + self.ids) / self.gt if self.gt else 0.0

    @property
    def motp(self) -> float:
        return self.iou_sum / self.tp if self.tp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.gt if self.gt else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2.0 * self.tp / denom if denom else 0.0


def clear_mot(gt_frames: dict, pred_frames: dict, iou_thres: float = 0.25) -> ClearCounts:
    """Accumulate CLEAR-MOT counts over a sequence.

    Both arguments map a sortable frame key to a list of TrackedBox.
    """
    counts = ClearCounts()
    last_match: dict = {}
    for frame_key in sorted(set(gt_frames) | set(pred_frames)):
        gt = gt_frames.get(frame_key, [])
        pred = pred_frames.get(frame_key, [])
        score_of = {p.track_id: p.score for p in pred}
        fm = match_frame(gt, pred, iou_thres)
        counts.gt += len(gt)
        counts.tp += len(fm.pairs)
        counts.fp += len(fm.unmatched_pred)
        counts.fn += len(fm.unmatched_gt)
        for gt_id, pred_id, iou in fm.pairs:
            counts.iou_sum += iou
            counts.tp_scores.append(score_of.get(pred_id))
            prev = last_match.get(gt_id)
            if prev is not None and prev != pred_id:
                counts.ids += 1
            last_match[gt_id] = pred_id
    return counts


def _filter_by_score(pred_frames: dict, threshold: float) -> dict:
    return {k: [p for p in boxes if p.score >= threshold]
            for k, boxes in pred_frames.items()}


@dataclass(frozen=True)
class SweptMetrics:
    samota: float
    amota: float
    amotp: float
    ids_best_mota: int


def samota(gt_frames: dict, pred_frames: dict, iou_thres: float = 0.25,
           n_points: int = N_RECALL_POINTS) -> SweptMetrics:
    """Recall-swept summary metrics.

    At a sweep point with achieved recall r, the scaled value is
    ``max(0, 1 - (FP + FN + IDS - (1-r)*GT) / (r*GT))`` and the plain value
    ``max(0, 1 - (FP + FN + IDS)/GT)``; both average over the sweep.
    """
    full = clear_mot(gt_frames, pred_frames, iou_thres)
    if any(s is None for s in full.tp_scores) or any(
            p.score is None for boxes in pred_frames.values() for p in boxes):
        raise MissingScores("swept metrics need confidence scores on every prediction")
    n_gt = full.gt
    if n_gt == 0:
        return SweptMetrics(0.0, 0.0, 0.0, 0)
    tp_scores = sorted((float(s) for s in full.tp_scores), reverse=True)
    max_recall = full.tp / n_gt

    sum_smota = 0.0
    sum_mota = 0.0
    sum_motp = 0.0
    best_mota = -math.inf
    ids_best = full.ids
    for k in range(1, n_points + 1):
        target = k / n_points
        if target > max_recall + 1e-12 or not tp_scores:
            continue  # unreachable target contributes zero
        idx = max(0, math.ceil(target * n_gt) - 1)
        idx = min(idx, len(tp_scores) - 1)
        threshold = tp_scores[idx]
        counts = clear_mot(gt_frames, _filter_by_score(pred_frames, threshold), iou_thres)
        if counts.tp == 0:
            continue
        r = counts.tp / n_gt
        mota_r = max(0.0, 1.0 - (counts.fp + counts.fn + counts.ids) / n_gt)
        smota_r = max(0.0, 1.0 - (counts.fp + counts.fn + counts.ids
                                  - (1.0 - r) * n_gt) / (r * n_gt))
        sum_mota += mota_r
        sum_smota += smota_r
        sum_motp += counts.motp
        if mota_r > best_mota:
            best_mota = mota_r
            ids_best = counts.ids
    return SweptMetrics(samota=sum_smota / n_points, amota=sum_mota / n_points,
                        amotp=sum_motp / n_points, ids_best_mota=ids_best)


@dataclass(frozen=True)
class SeqMetrics:
    samota: float
    amota: float
    amotp: float
    mota: float
    motp: float
    recall: float
    precision: float
    f1: float
    ids: int
    ids_best_mota: int
    tp: int
    fp: int
    fn: int
    gt: int


@dataclass(frozen=True)
class EvalReport:
    per_sequence: dict[str, SeqMetrics]
    aggregate: SeqMetrics

    CSV_COLUMNS = ("sequence", "sAMOTA", "AMOTA", "AMOTP", "MOTA", "MOTP",
                   "recall", "precision", "F1", "IDs", "IDs_best_MOTA",
                   "TP", "FP", "FN", "GT")

    def to_csv(self) -> str:
        lines = [",".join(self.CSV_COLUMNS)]
        rows = list(self.per_sequence.items()) + [("ALL", self.aggregate)]
        for name, m in rows:
            lines.append(",".join([name] + [
                f"{v:.6f}" if isinstance(v, float) else str(v)
                for v in (m.samota, m.amota, m.amotp, m.mota, m.motp,
                          m.recall, m.precision, m.f1, m.ids, m.ids_best_mota,
                          m.tp, m.fp, m.fn, m.gt)]))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = (f"{'sequence':<12}{'sAMOTA':>9}{'AMOTA':>9}{'AMOTP':>9}"
                  f"{'MOTA':>9}{'MOTP':>9}{'recall':>9}{'prec':>9}"
                  f"{'IDs':>6}{'TP':>7}{'FP':>7}{'FN':>7}{'GT':>7}")
        lines = [header, "-" * len(header)]
        rows = list(self.per_sequence.items()) + [("ALL", self.aggregate)]
        for name, m in rows:
            lines.append(
                f"{name:<12}{m.samota:>9.4f}{m.amota:>9.4f}{m.amotp:>9.4f}"
                f"{m.mota:>9.4f}{m.motp:>9.4f}{m.recall:>9.4f}{m.precision:>9.4f}"
                f"{m.ids:>6d}{m.tp:>7d}{m.fp:>7d}{m.fn:>7d}{m.gt:>7d}")
        return "\n".join(lines)


def _seq_metrics(gt_frames: dict, pred_frames: dict, iou_thres: float) -> SeqMetrics:
    counts = clear_mot(gt_frames, pred_frames, iou_thres)
    have_scores = all(p.score is not None
                      for boxes in pred_frames.values() for p in boxes)
    if have_scores:
        swept = samota(gt_frames, pred_frames, iou_thres)
    else:
        swept = SweptMetrics(math.nan, math.nan, math.nan, counts.ids)
    return SeqMetrics(
        samota=swept.samota, amota=swept.amota, amotp=swept.amotp,
        mota=counts.mota, motp=counts.motp, recall=counts.recall,
        precision=counts.precision, f1=counts.f1, ids=counts.ids,
        ids_best_mota=swept.ids_best_mota,
        tp=counts.tp, fp=counts.fp, fn=counts.fn, gt=counts.gt,
    )


def evaluate_sequences(sequences: dict[str, tuple[dict, dict]],
                       iou_thres: float = 0.25) -> EvalReport:
    """Evaluate named sequences and a pooled aggregate.

    ``sequences`` maps name -> (gt_frames, pred_frames). The aggregate pools
    every frame under sequence-scoped frame keys and identities, so switches
    never leak across sequences and the recall sweep is global.
    """
    per_seq = {}
    pooled_gt: dict = {}
    pooled_pred: dict = {}
    for name in sorted(sequences):
        gt_frames, pred_frames = sequences[name]
        per_seq[name] = _seq_metrics(gt_frames, pred_frames, iou_thres)
        for frame_key, boxes in gt_frames.items():
            pooled_gt[(name, frame_key)] = [
                _rekey(b, (name, b.track_id)) for b in boxes]
        for frame_key, boxes in pred_frames.items():
            pooled_pred[(name, frame_key)] = [
                _rekey(b, (name, b.track_id)) for b in boxes]
    aggregate = _seq_metrics(pooled_gt, pooled_pred, iou_thres)
    return EvalReport(per_sequence=per_seq, aggregate=aggregate)


def _rekey(tracked_box, new_id):
    return TrackedBox(track_id=new_id, box=tracked_box.box, score=tracked_box.score)
