"""Oriented 3D boxes and overlap scores.

Boxes are gravity-aligned: the only rotation is yaw around +Z (right-hand
rule), so every footprint is a rotated rectangle in the ground plane and the
vertical extent is an interval. All overlap scores reduce to convex polygon
clipping in bird's-eye view plus interval arithmetic in z.

The polygon kernels below work on plain float tuples instead of numpy arrays:
the polygons have at most 8 vertices and per-call array overhead dominates at
that size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Intersections whose footprint area falls below this are treated as empty
# (abutting or sliver contact).
DEGENERATE_AREA = 1e-9


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    x = math.fmod(theta + math.pi, 2.0 * math.pi)
    if x <= 0.0:
        x += 2.0 * math.pi
    return x - math.pi


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: geometric center, yaw, and full extents (meters).

    ``l`` runs along the heading axis, ``w`` across it, ``h`` vertically.
    """

    x: float
    y: float
    z: float
    yaw: float
    w: float
    l: float
    h: float

    def __post_init__(self):
        if not (self.w > 0.0 and self.l > 0.0 and self.h > 0.0):
            raise ValueError(f"box dims must be positive, got w={self.w} l={self.l} h={self.h}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def volume(self) -> float:
        return self.w * self.l * self.h

    @property
    def bev_radius(self) -> float:
        """Radius of the circle circumscribing the footprint."""
        return 0.5 * math.hypot(self.l, self.w)

    def z_interval(self) -> tuple[float, float]:
        half = 0.5 * self.h
        return self.z - half, self.z + half


@dataclass(frozen=True)
class OverlapScores:
    """The three overlap scores for one ordered box pair."""

    iou3d: float
    giou3d: float
    mciou: float


def _corners(box: Box3D) -> list[tuple[float, float]]:
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    hl = 0.5 * box.l
    hw = 0.5 * box.w
    return [
        (box.x + c * dx - s * dy, box.y + s * dx + c * dy)
        for dx, dy in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))
    ]


def bev_polygon(box: Box3D) -> np.ndarray:
    """Footprint of the box in the ground plane: 4 CCW vertices, shape (4, 2)."""
    return np.array(_corners(box), dtype=float)


def polygon_area(vertices) -> float:
    """Shoelace area of a simple polygon (any orientation)."""
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = vertices[-1]
    for x1, y1 in vertices:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return 0.5 * abs(acc)


def clip_convex(subject: list[tuple[float, float]], clip: list[tuple[float, float]]):
    """Sutherland-Hodgman intersection of two convex CCW polygons."""
    output = subject
    cx0, cy0 = clip[-1]
    for cx1, cy1 in clip:
        if not output:
            return []
        ex, ey = cx1 - cx0, cy1 - cy0
        inputs = output
        output = []
        px0, py0 = inputs[-1]
        side0 = ex * (py0 - cy0) - ey * (px0 - cx0)
        for px1, py1 in inputs:
            side1 = ex * (py1 - cy0) - ey * (px1 - cx0)
            if side1 >= 0.0:
                if side0 < 0.0:
                    t = side0 / (side0 - side1)
                    output.append((px0 + t * (px1 - px0), py0 + t * (py1 - py0)))
                output.append((px1, py1))
            elif side0 >= 0.0:
                t = side0 / (side0 - side1)
                output.append((px0 + t * (px1 - px0), py0 + t * (py1 - py0)))
            px0, py0, side0 = px1, py1, side1
        cx0, cy0 = cx1, cy1
    return output


def convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; returns the hull CCW without repeated endpoint."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2:
            (ox, oy), (ax, ay) = lower[-2], lower[-1]
            if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0.0:
                lower.pop()
            else:
                break
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2:
            (ox, oy), (ax, ay) = upper[-2], upper[-1]
            if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0.0:
                upper.pop()
            else:
                break
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _bev_intersection_area(a: Box3D, b: Box3D) -> float:
    dx = a.x - b.x
    dy = a.y - b.y
    reach = a.bev_radius + b.bev_radius
    if dx * dx + dy * dy > reach * reach:
        return 0.0
    inter = clip_convex(_corners(a), _corners(b))
    area = polygon_area(inter)
    return area if area >= DEGENERATE_AREA else 0.0


def _overlap_volumes(a: Box3D, b: Box3D) -> tuple[float, float]:
    """(intersection volume, union volume) of the two boxes."""
    lo_a, hi_a = a.z_interval()
    lo_b, hi_b = b.z_interval()
    overlap_z = min(hi_a, hi_b) - max(lo_a, lo_b)
    inter = 0.0
    if overlap_z > 0.0:
        inter = _bev_intersection_area(a, b) * overlap_z
    return inter, a.volume + b.volume - inter


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume intersection-over-union, in [0, 1]."""
    if a == b:
        return 1.0
    inter, union = _overlap_volumes(a, b)
    if inter <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def _enclosure_volume(a: Box3D, b: Box3D) -> float:
    hull = convex_hull(_corners(a) + _corners(b))
    lo_a, hi_a = a.z_interval()
    lo_b, hi_b = b.z_interval()
    span = max(hi_a, hi_b) - min(lo_a, lo_b)
    return polygon_area(hull) * span


def giou3d(a: Box3D, b: Box3D) -> float:
    """Generalized IoU in (-1, 1]: IoU minus the empty fraction of the convex
    enclosure (footprint hull times joint vertical span)."""
    if a == b:
        return 1.0
    inter, union = _overlap_volumes(a, b)
    iou = min(1.0, inter / union) if inter > 0.0 else 0.0
    enclosure = _enclosure_volume(a, b)
    penalty = max(0.0, enclosure - union) / enclosure
    return iou - penalty


def _aspect_divergence(a: Box3D, b: Box3D) -> float:
    # Height-to-footprint ratio difference, mapped through arctan so extreme
    # shapes saturate; ordered a -> b, hence not symmetric.
    return (4.0 / math.pi) * (
        math.atan(a.h / (a.w * a.l)) - math.atan(b.h / (b.w * b.l))
    )


def mciou(a: Box3D, b: Box3D) -> float:
    """Aspect-aware generalized IoU.

    Adds to GIoU a correction that grows with the divergence between the two
    boxes' height-to-footprint ratios, biasing association toward boxes of
    similar build. Not symmetric in its arguments. Unbounded below as
    GIoU -> 1 with unequal aspect; the denominator is clamped at 1e-9.
    """
    giou = giou3d(a, b)
    v = _aspect_divergence(a, b)
    if v == 0.0:
        return giou
    denom = max(1.0 - giou, 1e-9)
    alpha = v * (v / denom + 1.0)
    return giou + alpha


def overlap_scores(a: Box3D, b: Box3D) -> OverlapScores:
    """All three scores for one pair, sharing the clipping work."""
    if a == b:
        return OverlapScores(iou3d=1.0, giou3d=1.0, mciou=1.0)
    inter, union = _overlap_volumes(a, b)
    iou = min(1.0, inter / union) if inter > 0.0 else 0.0
    enclosure = _enclosure_volume(a, b)
    giou = iou - max(0.0, enclosure - union) / enclosure
    v = _aspect_divergence(a, b)
    if v == 0.0:
        mc = giou
    else:
        mc = giou + v * (v / max(1.0 - giou, 1e-9) + 1.0)
    return OverlapScores(iou3d=iou, giou3d=giou, mciou=mc)
