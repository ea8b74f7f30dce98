"""File formats: KITTI-style detection/track text files, the feature sidecar,
ego poses, and the key-value run configuration.

Detection rows (whitespace-separated, one object per line):

    frame type truncated occluded alpha bbox_l bbox_t bbox_r bbox_b h w l x y z rotation_y score

Track rows (ground truth and results) insert the integer track id between
``frame`` and ``type``; ground truth may omit the trailing score.

On disk the location is the BOTTOM CENTER of the box in a frame whose second
coordinate is vertical; internally boxes carry their geometric center with z
up, so reading lifts the vertical coordinate by h/2 and writing lowers it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assoc import AssocConfig, METRICS
from .errors import (ConfigTypeError, DimensionMismatch, MissingDetection,
                     ParseError, RangeViolation, UnknownKeyError)
from .filters import FilterConfig, VARIANTS, meas_diag, state_diag
from .geometry import Box3D
from .lifecycle import EgoPose, LifecycleConfig

PEDESTRIAN_CLASSES = ("Pedestrian", "person")
N_DETECTION_FIELDS = 17
N_TRACK_FIELDS = (17, 18)  # ground truth without score / results with score


@dataclass(frozen=True)
class Detection3D:
    frame: int
    box: Box3D
    confidence: float
    feature: Optional[np.ndarray] = None
    class_label: str = "Pedestrian"


@dataclass
class FrameInput:
    frame: int
    timestamp: float
    detections: list[Detection3D]
    ego: EgoPose = EgoPose()


@dataclass(frozen=True)
class TrackedBox:
    track_id: int
    box: Box3D
    score: Optional[float] = 1.0  # None marks score-less programmatic input


@dataclass
class DetectionLoad:
    """Parsed detection file plus bookkeeping the manifest wants."""

    frames: list[FrameInput]
    skipped_classes: dict[str, int] = field(default_factory=dict)
    confidence_normalized: bool = False


def _floats(tokens, path, line_no):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(path, line_no, f"bad numeric field: {exc}") from None


def _box_from_fields(vals) -> Box3D:
    # vals: [h, w, l, x, y, z, rotation_y] as stored on disk
    h, w, l, x_f, y_f, z_f, rot = vals
    return Box3D(x=x_f, y=z_f, z=y_f + 0.5 * h, yaw=rot, w=w, l=l, h=h)


def _box_to_fields(box: Box3D) -> list[float]:
    return [box.h, box.w, box.l, box.x, box.z - 0.5 * box.h, box.y, box.yaw]


def read_kitti_detections(path, frame_rate: float = 10.0,
                          ego_poses: Optional[dict[int, EgoPose]] = None) -> DetectionLoad:
    """Parse a detection file into per-frame inputs (frames 0..max, empty
    frames included). Sequences whose scores leave [0, 1] are min-max
    normalized and flagged."""
    per_frame: dict[int, list[Detection3D]] = {}
    skipped: dict[str, int] = {}
    max_frame = -1
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != N_DETECTION_FIELDS:
                raise ParseError(path, line_no,
                                 f"expected {N_DETECTION_FIELDS} fields, got {len(tokens)}")
            label = tokens[1]
            try:
                frame = int(tokens[0])
            except ValueError:
                raise ParseError(path, line_no, f"bad frame index {tokens[0]!r}") from None
            if frame < 0:
                raise ParseError(path, line_no, "frame index must be >= 0")
            if label not in PEDESTRIAN_CLASSES:
                skipped[label] = skipped.get(label, 0) + 1
                max_frame = max(max_frame, frame)
                continue
            vals = _floats(tokens[2:], path, line_no)
            box = _box_from_fields(vals[7:14])
            conf = vals[14]
            if not math.isfinite(conf):
                raise ParseError(path, line_no, "confidence must be finite")
            per_frame.setdefault(frame, []).append(
                Detection3D(frame=frame, box=box, confidence=conf, class_label=label))
            max_frame = max(max_frame, frame)

    all_conf = [d.confidence for dets in per_frame.values() for d in dets]
    normalized = False
    if all_conf and (min(all_conf) < 0.0 or max(all_conf) > 1.0):
        lo, hi = min(all_conf), max(all_conf)
        span = hi - lo
        for frame, dets in per_frame.items():
            per_frame[frame] = [
                Detection3D(frame=d.frame, box=d.box,
                            confidence=(d.confidence - lo) / span if span > 0.0 else 1.0,
                            feature=d.feature, class_label=d.class_label)
                for d in dets
            ]
        normalized = True

    ego_poses = ego_poses or {}
    frames = [
        FrameInput(frame=i, timestamp=i / frame_rate,
                   detections=per_frame.get(i, []),
                   ego=ego_poses.get(i, EgoPose()))
        for i in range(max_frame + 1)
    ]
    return DetectionLoad(frames=frames, skipped_classes=skipped,
                         confidence_normalized=normalized)


def read_kitti_tracks(path) -> dict[int, list[TrackedBox]]:
    """Parse a ground-truth or result file into frame -> tracked boxes."""
    per_frame: dict[int, list[TrackedBox]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in N_TRACK_FIELDS:
                raise ParseError(path, line_no,
                                 f"expected {N_TRACK_FIELDS[0]} or {N_TRACK_FIELDS[1]} fields, "
                                 f"got {len(tokens)}")
            try:
                frame = int(tokens[0])
                track_id = int(tokens[1])
            except ValueError:
                raise ParseError(path, line_no, "bad frame or track id") from None
            label = tokens[2]
            if label not in PEDESTRIAN_CLASSES:
                continue
            vals = _floats(tokens[3:], path, line_no)
            box = _box_from_fields(vals[7:14])
            score = vals[14] if len(tokens) == 18 else 1.0
            per_frame.setdefault(frame, []).append(
                TrackedBox(track_id=track_id, box=box, score=score))
    return per_frame


def write_tracks(path, rows) -> None:
    """Write result rows ``(frame, track_id, Box3D, score)`` in KITTI layout,
    sorted by (frame, id)."""
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8") as fh:
        for frame, track_id, box, score in ordered:
            disk = _box_to_fields(box)
            fields = " ".join(f"{v:.6f}" for v in disk)
            fh.write(f"{frame} {track_id} Pedestrian 0 0 0.000000 "
                     f"0.000000 0.000000 0.000000 0.000000 {fields} {score:.6f}\n")


def write_detections(path, detections) -> None:
    """Write detection rows ``(frame, Box3D, confidence)``, sorted by frame."""
    ordered = sorted(detections, key=lambda r: r[0])
    with open(path, "w", encoding="utf-8") as fh:
        for frame, box, conf in ordered:
            disk = _box_to_fields(box)
            fields = " ".join(f"{v:.6f}" for v in disk)
            fh.write(f"{frame} Pedestrian 0 0 0.000000 "
                     f"0.000000 0.000000 0.000000 0.000000 {fields} {conf:.6f}\n")


def read_feature_sidecar(path) -> tuple[int, dict[int, dict[int, np.ndarray]]]:
    """Read the embedding sidecar: first line the dimension D, then rows
    ``frame,det_index,f_1,...,f_D``. Returns (D, frame -> det index -> vector)."""
    table: dict[int, dict[int, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            dim = int(first.strip())
        except ValueError:
            raise ParseError(path, 1, f"expected feature dimension, got {first.strip()!r}") from None
        if dim < 1:
            raise ParseError(path, 1, "feature dimension must be >= 1")
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split(",")
            if len(tokens) != 2 + dim:
                raise DimensionMismatch(
                    f"{path}:{line_no}: expected {2 + dim} comma-separated values, "
                    f"got {len(tokens)}")
            try:
                frame = int(tokens[0])
                det_index = int(tokens[1])
                vec = np.array([float(t) for t in tokens[2:]], dtype=float)
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad field: {exc}") from None
            if not np.all(np.isfinite(vec)) or np.linalg.norm(vec) == 0.0:
                raise ParseError(path, line_no, "feature vector must be finite and non-zero")
            table.setdefault(frame, {})[det_index] = vec
    return dim, table


def write_feature_sidecar(path, dim: int, table: dict[int, dict[int, np.ndarray]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{dim}\n")
        for frame in sorted(table):
            for det_index in sorted(table[frame]):
                vec = table[frame][det_index]
                fh.write(f"{frame},{det_index}," + ",".join(repr(float(v)) for v in vec) + "\n")


def attach_features(frames: list[FrameInput], sidecar: dict[int, dict[int, np.ndarray]]) -> None:
    """Attach sidecar vectors to detections in place; indices must exist."""
    by_frame = {f.frame: f for f in frames}
    for frame_no, per_det in sidecar.items():
        frame = by_frame.get(frame_no)
        if frame is None:
            raise MissingDetection(f"sidecar references missing frame {frame_no}")
        for det_index, vec in per_det.items():
            if det_index < 0 or det_index >= len(frame.detections):
                raise MissingDetection(
                    f"sidecar references detection {det_index} in frame {frame_no}, "
                    f"which has {len(frame.detections)} detections")
            d = frame.detections[det_index]
            frame.detections[det_index] = Detection3D(
                frame=d.frame, box=d.box, confidence=d.confidence,
                feature=vec, class_label=d.class_label)


def read_ego_poses(path) -> dict[int, EgoPose]:
    """Rows ``frame x y z``; frames not listed default to the origin."""
    poses: dict[int, EgoPose] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 4:
                raise ParseError(path, line_no, f"expected 4 fields, got {len(tokens)}")
            try:
                frame = int(tokens[0])
                x, y, z = (float(t) for t in tokens[1:])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad field: {exc}") from None
            if not all(math.isfinite(v) for v in (x, y, z)):
                raise ParseError(path, line_no, "ego pose must be finite")
            poses[frame] = EgoPose(x=x, y=y, z=z)
    return poses


# --- run configuration ------------------------------------------------------

@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    frame_rate: float = 10.0
    prefilter_conf: float = 0.0  # drop detections below this before tracking
    workers: int = 1


def parse_kv_file(path) -> dict[str, str]:
    """Generic ``key = value`` file with # comments."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, line_no, "expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _as_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigTypeError(f"{key}: expected a number, got {value!r}") from None


def _as_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigTypeError(f"{key}: expected an integer, got {value!r}") from None


def _in_open_unit(key, value):
    if not 0.0 < value < 1.0:
        raise RangeViolation(f"{key}: must lie strictly between 0 and 1, got {value}")
    return value


def _positive(key, value):
    if value <= 0:
        raise RangeViolation(f"{key}: must be positive, got {value}")
    return value


def _non_negative(key, value):
    if value < 0:
        raise RangeViolation(f"{key}: must be >= 0, got {value}")
    return value


# key -> (kind, validator or None); defaults come from the config dataclasses
CONFIG_KEYS = {
    "variant": ("choice", VARIANTS),
    "kappa": ("float", None),
    "alpha_adapt": ("float", _in_open_unit),
    "adapt_r_cap": ("float", _positive),
    "dt": ("float", _positive),
    "r_pos": ("float", _positive),
    "r_yaw": ("float", _positive),
    "r_dim": ("float", _positive),
    "q_pos": ("float", _positive),
    "q_yaw": ("float", _positive),
    "q_vel": ("float", _positive),
    "q_acc": ("float", _positive),
    "q_dim": ("float", _positive),
    "p_pos": ("float", _positive),
    "p_yaw": ("float", _positive),
    "p_vel": ("float", _positive),
    "p_acc": ("float", _positive),
    "p_dim": ("float", _positive),
    "omega_assoc": ("float", _in_open_unit),
    "mciou_gate": ("float", None),
    "fs_gate": ("float", None),
    "high_conf_split": ("float", None),
    "metric": ("choice", METRICS),
    "gating_radius": ("float", _non_negative),
    "f1_threshold": ("float", _non_negative),
    "death_threshold": ("float", _non_negative),
    "omega_lpf": ("float", _in_open_unit),
    "max_range": ("float", _positive),
    "candidate_promote_hits": ("int", _positive),
    "max_lost_frames": ("int", _non_negative),
    "covariance_freeze_after": ("int", _non_negative),
    "seed": ("int", None),
    "frame_rate": ("float", _positive),
    "prefilter_conf": ("float", _non_negative),
    "workers": ("int", _positive),
}

_FILTER_SCALARS = {"r": ("r_pos", "r_yaw", "r_dim"),
                   "q": ("q_pos", "q_yaw", "q_vel", "q_acc", "q_dim"),
                   "p": ("p_pos", "p_yaw", "p_vel", "p_acc", "p_dim")}
_FILTER_SCALAR_DEFAULTS = {
    "r_pos": 0.0025, "r_yaw": 0.01, "r_dim": 0.0025,
    "q_pos": 2.5e-3, "q_yaw": 0.05, "q_vel": 0.05, "q_acc": 0.25, "q_dim": 1e-6,
    "p_pos": 0.01, "p_yaw": 0.05, "p_vel": 2.25, "p_acc": 1.0, "p_dim": 0.01,
}


@dataclass(frozen=True)
class RunConfig:
    filter_cfg: FilterConfig
    assoc_cfg: AssocConfig
    life_cfg: LifecycleConfig
    options: RunOptions

    def as_dict(self) -> dict:
        """Flat snapshot of every effective value (for the run manifest)."""
        f, a, l, o = self.filter_cfg, self.assoc_cfg, self.life_cfg, self.options
        return {
            "variant": f.variant, "kappa": f.kappa, "alpha_adapt": f.alpha_adapt,
            "adapt_r_cap": f.adapt_r_cap, "dt": f.dt,
            "r_diag": np.diagonal(f.r_init).tolist(),
            "q_diag": np.diagonal(f.q).tolist(),
            "p_diag": np.diagonal(f.p_init).tolist(),
            "omega_assoc": a.omega, "mciou_gate": a.mciou_gate, "fs_gate": a.fs_gate,
            "high_conf_split": a.high_conf_split, "metric": a.metric,
            "gating_radius": a.gating_radius,
            "f1_threshold": l.f1_threshold, "death_threshold": l.death_threshold,
            "omega_lpf": l.omega_lpf, "max_range": l.max_range,
            "candidate_promote_hits": l.candidate_promote_hits,
            "max_lost_frames": l.max_lost_frames,
            "covariance_freeze_after": l.covariance_freeze_after,
            "seed": o.seed, "frame_rate": o.frame_rate,
            "prefilter_conf": o.prefilter_conf, "workers": o.workers,
        }


def build_config(values: dict[str, str]) -> RunConfig:
    """Validate raw key-value strings and assemble the config bundle."""
    parsed: dict[str, object] = {}
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise UnknownKeyError(f"unknown config key {key!r}")
        kind, check = CONFIG_KEYS[key]
        if kind == "choice":
            if value not in check:
                raise RangeViolation(f"{key}: must be one of {check}, got {value!r}")
            parsed[key] = value
        elif kind == "float":
            v = _as_float(key, value)
            parsed[key] = check(key, v) if check else v
        else:
            v = _as_int(key, value)
            parsed[key] = check(key, v) if check else v

    def get(key, default):
        return parsed.get(key, default)

    scal = {k: get(k, v) for k, v in _FILTER_SCALAR_DEFAULTS.items()}
    filter_cfg = FilterConfig(
        variant=get("variant", FilterConfig.variant),
        kappa=get("kappa", FilterConfig.kappa),
        alpha_adapt=get("alpha_adapt", FilterConfig.alpha_adapt),
        adapt_r_cap=get("adapt_r_cap", FilterConfig.adapt_r_cap),
        dt=get("dt", FilterConfig.dt),
        r_init=meas_diag(scal["r_pos"], scal["r_yaw"], scal["r_dim"]),
        q=state_diag(scal["q_pos"], scal["q_yaw"], scal["q_vel"],
                         scal["q_acc"], scal["q_dim"]),
        p_init=state_diag(scal["p_pos"], scal["p_yaw"], scal["p_vel"],
                              scal["p_acc"], scal["p_dim"]),
    )
    life_cfg = LifecycleConfig(
        f1_threshold=get("f1_threshold", LifecycleConfig.f1_threshold),
        death_threshold=get("death_threshold", LifecycleConfig.death_threshold),
        omega_lpf=get("omega_lpf", LifecycleConfig.omega_lpf),
        max_range=get("max_range", LifecycleConfig.max_range),
        candidate_promote_hits=get("candidate_promote_hits",
                                   LifecycleConfig.candidate_promote_hits),
        max_lost_frames=get("max_lost_frames", LifecycleConfig.max_lost_frames),
        covariance_freeze_after=get("covariance_freeze_after",
                                    LifecycleConfig.covariance_freeze_after),
    )
    assoc_cfg = AssocConfig(
        omega=get("omega_assoc", AssocConfig.omega),
        mciou_gate=get("mciou_gate", AssocConfig.mciou_gate),
        fs_gate=get("fs_gate", AssocConfig.fs_gate),
        high_conf_split=get("high_conf_split", life_cfg.f1_threshold),
        metric=get("metric", AssocConfig.metric),
        gating_radius=get("gating_radius", AssocConfig.gating_radius),
    )
    options = RunOptions(
        seed=get("seed", RunOptions.seed),
        frame_rate=get("frame_rate", RunOptions.frame_rate),
        prefilter_conf=get("prefilter_conf", RunOptions.prefilter_conf),
        workers=get("workers", RunOptions.workers),
    )
    return RunConfig(filter_cfg=filter_cfg, assoc_cfg=assoc_cfg,
                     life_cfg=life_cfg, options=options)


def read_config(path) -> RunConfig:
    """Parse a key-value config file; an empty file yields all defaults."""
    return build_config(parse_kv_file(path))


def default_config() -> RunConfig:
    return build_config({})
