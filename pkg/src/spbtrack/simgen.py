"""Synthetic pedestrian scenarios: ground truth plus degraded detections.

Agents walk inside a disk around the sensor under one of four motion models
(linear, sinusoidal weave, stop-and-go, random turn). Detections are the true
boxes corrupted by Gaussian noise, thinned by dropout and scripted occlusion
windows, and padded with Poisson false positives. Each agent carries a fixed
latent embedding; its detections observe that embedding plus noise, false
positives draw fresh random ones. Everything is driven by one seeded
generator, so equal specs produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec
from .geometry import Box3D, wrap_angle
from .io import (Detection3D, FrameInput, TrackedBox, parse_kv_file,
                 write_detections, write_feature_sidecar, write_tracks)
from .lifecycle import EgoPose

MOTION_MODELS = ("linear", "sinusoidal", "stop_and_go", "random_turn")

# Pedestrian build priors (meters).
DIM_MEAN = (0.6, 0.6, 1.75)   # w, l, h
DIM_SPREAD = 0.05             # per-agent variation around the prior
MAX_TURN_RATE = 0.4           # rad per frame when steering off the boundary


@dataclass(frozen=True)
class ScenarioSpec:
    n_pedestrians: int = 8
    duration: float = 30.0
    frame_rate: float = 10.0
    motions: tuple[str, ...] = ("linear", "sinusoidal", "stop_and_go", "random_turn")
    occlusions: tuple[tuple[int, int, int], ...] = ()  # (agent, first, last frame)
    noise_pos: float = 0.1
    noise_yaw: float = 0.05
    noise_dim: float = 0.03
    # detector realism: low-confidence boxes are noisier; the per-detection
    # sigma is scaled by (1 + coupling * (1 - confidence))
    conf_noise_coupling: float = 0.0
    dropout: float = 0.0
    fp_rate: float = 0.0
    tp_conf_ab: tuple[float, float] = (6.0, 2.0)
    fp_conf_ab: tuple[float, float] = (2.0, 6.0)
    feature_dim: int = 0          # 0 disables embeddings
    feature_noise: float = 0.1
    arena_radius: float = 12.0
    speed_range: tuple[float, float] = (0.6, 1.4)
    seed: int = 0

    def __post_init__(self):
        if self.n_pedestrians < 1:
            raise InvalidSpec("n_pedestrians must be >= 1")
        if self.duration <= 0 or self.frame_rate <= 0:
            raise InvalidSpec("duration and frame_rate must be positive")
        for m in self.motions:
            if m not in MOTION_MODELS:
                raise InvalidSpec(f"unknown motion model {m!r}")
        for rate in (self.dropout, self.fp_rate):
            if not 0.0 <= rate <= 1.0:
                raise InvalidSpec("rates must lie in [0, 1]")
        for sigma in (self.noise_pos, self.noise_yaw, self.noise_dim, self.feature_noise):
            if sigma < 0.0:
                raise InvalidSpec("noise sigmas must be >= 0")
        if self.feature_dim < 0:
            raise InvalidSpec("feature_dim must be >= 0")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))


def spec_from_file(path) -> ScenarioSpec:
    """Key-value scenario file; occlusions as ``agent:first:last`` triples."""
    raw = parse_kv_file(path)
    kwargs: dict = {}
    casts = {
        "n_pedestrians": int, "duration": float, "frame_rate": float,
        "noise_pos": float, "noise_yaw": float, "noise_dim": float,
        "dropout": float, "fp_rate": float, "feature_dim": int,
        "feature_noise": float, "arena_radius": float, "seed": int,
    }
    for key, value in raw.items():
        if key in casts:
            kwargs[key] = casts[key](value)
        elif key == "motions":
            kwargs["motions"] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "occlusions":
            triples = []
            for chunk in value.split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                parts = chunk.split(":")
                if len(parts) != 3:
                    raise InvalidSpec(f"occlusion must be agent:first:last, got {chunk!r}")
                triples.append(tuple(int(p) for p in parts))
            kwargs["occlusions"] = tuple(triples)
        elif key == "speed_range":
            lo, _, hi = value.partition(":")
            kwargs["speed_range"] = (float(lo), float(hi))
        elif key == "tp_conf_ab":
            a, _, b = value.partition(":")
            kwargs["tp_conf_ab"] = (float(a), float(b))
        elif key == "fp_conf_ab":
            a, _, b = value.partition(":")
            kwargs["fp_conf_ab"] = (float(a), float(b))
        else:
            raise InvalidSpec(f"unknown scenario key {key!r}")
    return ScenarioSpec(**kwargs)


@dataclass
class _Agent:
    motion: str
    pos: np.ndarray           # x, y
    heading: float
    speed: float
    dims: tuple[float, float, float]
    weave_amp: float
    weave_freq: float
    go_period: int
    go_phase: int
    turn_sigma: float
    feature: np.ndarray | None


@dataclass
class Scenario:
    spec: ScenarioSpec
    gt_frames: dict[int, list[TrackedBox]]
    det_frames: list[FrameInput]
    features: dict[int, dict[int, np.ndarray]]


def _spawn_agents(spec: ScenarioSpec, rng: np.random.Generator) -> list[_Agent]:
    agents = []
    for i in range(spec.n_pedestrians):
        motion = spec.motions[i % len(spec.motions)]
        radius = rng.uniform(0.15, 0.8) * spec.arena_radius
        angle = rng.uniform(-math.pi, math.pi)
        dims = tuple(np.maximum(
            rng.normal(DIM_MEAN, DIM_SPREAD), 0.3).tolist())
        feature = None
        if spec.feature_dim > 0:
            feature = rng.normal(size=spec.feature_dim)
            feature /= np.linalg.norm(feature)
        agents.append(_Agent(
            motion=motion,
            pos=np.array([radius * math.cos(angle), radius * math.sin(angle)]),
            heading=rng.uniform(-math.pi, math.pi),
            speed=rng.uniform(*spec.speed_range),
            dims=dims,
            weave_amp=rng.uniform(0.3, 0.8),
            weave_freq=rng.uniform(0.15, 0.4),
            go_period=int(rng.integers(8, 20)),
            go_phase=int(rng.integers(0, 8)),
            turn_sigma=rng.uniform(0.05, 0.2),
            feature=feature,
        ))
    return agents


def _advance(agent: _Agent, t: float, dt: float, arena_radius: float,
             rng: np.random.Generator) -> Box3D:
    """Move the agent one step and return its true box."""
    speed = agent.speed
    heading = agent.heading
    if agent.motion == "stop_and_go":
        phase = (int(round(t / dt)) + agent.go_phase) // agent.go_period
        if phase % 2 == 1:
            speed = 0.0
    elif agent.motion == "random_turn":
        agent.heading = wrap_angle(agent.heading + rng.normal(0.0, agent.turn_sigma))
        heading = agent.heading

    vel = speed * np.array([math.cos(heading), math.sin(heading)])
    if agent.motion == "sinusoidal":
        sway = agent.weave_amp * 2.0 * math.pi * agent.weave_freq \
            * math.cos(2.0 * math.pi * agent.weave_freq * t)
        normal = np.array([-math.sin(heading), math.cos(heading)])
        vel = vel + sway * normal

    nxt = agent.pos + vel * dt
    if np.linalg.norm(nxt) > arena_radius:
        # turn back toward the center at a bounded rate: pedestrians do not
        # reverse instantly, and the motion stays trackable
        desired = wrap_angle(math.atan2(-agent.pos[1], -agent.pos[0])
                             + rng.normal(0.0, 0.2))
        delta = wrap_angle(desired - agent.heading)
        agent.heading = wrap_angle(agent.heading
                                   + max(-MAX_TURN_RATE, min(MAX_TURN_RATE, delta)))
        heading = agent.heading
        vel = speed * np.array([math.cos(heading), math.sin(heading)])
        nxt = agent.pos + vel * dt
    agent.pos = nxt

    w, l, h = agent.dims
    yaw = heading if speed > 0.0 else agent.heading
    return Box3D(x=float(agent.pos[0]), y=float(agent.pos[1]), z=h / 2.0,
                 yaw=yaw, w=w, l=l, h=h)


def _occluded(spec: ScenarioSpec, agent_idx: int, frame: int) -> bool:
    return any(a == agent_idx and first <= frame <= last
               for a, first, last in spec.occlusions)


def generate(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    agents = _spawn_agents(spec, rng)
    dt = 1.0 / spec.frame_rate

    gt_frames: dict[int, list[TrackedBox]] = {}
    det_frames: list[FrameInput] = []
    features: dict[int, dict[int, np.ndarray]] = {}

    for frame in range(spec.n_frames):
        t = frame * dt
        gt_boxes = []
        detections = []
        frame_feats: dict[int, np.ndarray] = {}
        for idx, agent in enumerate(agents):
            box = _advance(agent, t, dt, spec.arena_radius, rng)
            gt_boxes.append(TrackedBox(track_id=idx, box=box, score=1.0))
            if _occluded(spec, idx, frame):
                continue
            if spec.dropout > 0.0 and rng.uniform() < spec.dropout:
                continue
            conf = float(rng.beta(*spec.tp_conf_ab))
            scale = 1.0 + spec.conf_noise_coupling * (1.0 - conf)
            noisy = Box3D(
                x=box.x + rng.normal(0.0, scale * spec.noise_pos),
                y=box.y + rng.normal(0.0, scale * spec.noise_pos),
                z=box.z + rng.normal(0.0, scale * spec.noise_pos),
                yaw=box.yaw + rng.normal(0.0, scale * spec.noise_yaw),
                w=max(0.1, box.w + rng.normal(0.0, scale * spec.noise_dim)),
                l=max(0.1, box.l + rng.normal(0.0, scale * spec.noise_dim)),
                h=max(0.1, box.h + rng.normal(0.0, scale * spec.noise_dim)),
            )
            det = Detection3D(frame=frame, box=noisy, confidence=conf)
            if agent.feature is not None:
                obs = agent.feature + rng.normal(0.0, spec.feature_noise,
                                                 size=spec.feature_dim)
                obs /= np.linalg.norm(obs)
                frame_feats[len(detections)] = obs
                det = replace(det, feature=obs)
            detections.append(det)

        n_fp = int(rng.poisson(spec.fp_rate))
        for _ in range(n_fp):
            radius = rng.uniform(0.0, spec.arena_radius)
            angle = rng.uniform(-math.pi, math.pi)
            dims = np.maximum(rng.normal(DIM_MEAN, 3 * DIM_SPREAD), 0.2)
            fp_box = Box3D(x=radius * math.cos(angle), y=radius * math.sin(angle),
                           z=dims[2] / 2.0, yaw=rng.uniform(-math.pi, math.pi),
                           w=dims[0], l=dims[1], h=dims[2])
            conf = float(rng.beta(*spec.fp_conf_ab))
            det = Detection3D(frame=frame, box=fp_box, confidence=conf)
            if spec.feature_dim > 0:
                vec = rng.normal(size=spec.feature_dim)
                vec /= np.linalg.norm(vec)
                frame_feats[len(detections)] = vec
                det = replace(det, feature=vec)
            detections.append(det)

        gt_frames[frame] = gt_boxes
        det_frames.append(FrameInput(frame=frame, timestamp=t,
                                     detections=detections, ego=EgoPose()))
        if frame_feats:
            features[frame] = frame_feats

    return Scenario(spec=spec, gt_frames=gt_frames, det_frames=det_frames,
                    features=features)


def decimate(frames: list[FrameInput], factor: int = 2) -> list[FrameInput]:
    """Keep every factor-th frame, renumber, preserve original timestamps."""
    if factor < 1:
        raise InvalidSpec("decimation factor must be >= 1")
    out = []
    for new_idx, frame in enumerate(frames[::factor]):
        dets = [replace(d, frame=new_idx) for d in frame.detections]
        out.append(FrameInput(frame=new_idx, timestamp=frame.timestamp,
                              detections=dets, ego=frame.ego))
    return out


def decimate_gt(gt_frames: dict[int, list[TrackedBox]], factor: int = 2) -> dict:
    kept = sorted(k for k in gt_frames if k % factor == 0)
    return {new: gt_frames[old] for new, old in enumerate(kept)}


def write_scenario(scenario: Scenario, out_dir) -> dict[str, str]:
    """Write gt.txt / detections.txt (and features.csv when present); returns
    the paths keyed by role."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    gt_path = os.path.join(out_dir, "gt.txt")
    det_path = os.path.join(out_dir, "detections.txt")
    write_tracks(gt_path, [(f, tb.track_id, tb.box, tb.score)
                           for f, boxes in scenario.gt_frames.items()
                           for tb in boxes])
    write_detections(det_path, [(fi.frame, d.box, d.confidence)
                                for fi in scenario.det_frames
                                for d in fi.detections])
    paths = {"gt": gt_path, "detections": det_path}
    if scenario.features:
        feat_path = os.path.join(out_dir, "features.csv")
        write_feature_sidecar(feat_path, scenario.spec.feature_dim, scenario.features)
        paths["features"] = feat_path
    return paths
