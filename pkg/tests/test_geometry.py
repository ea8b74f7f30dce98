"""Geometry checks: exact small cases, Monte-Carlo volume oracles, and an
independent scalar re-evaluation of the aspect-corrected overlap formula."""

import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from spbtrack.geometry import (Box3D, bev_polygon, clip_convex, convex_hull,
                               giou3d, iou3d, mciou, overlap_scores,
                               polygon_area, wrap_angle)


# --- independent oracles -----------------------------------------------------

def _inside(box, pts):
    """Point-in-box by rotating into the box frame (not corner-based)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = pts[:, 0] - box.x
    dy = pts[:, 1] - box.y
    x_local = c * dx + s * dy
    y_local = -s * dx + c * dy
    return ((np.abs(x_local) <= box.l / 2)
            & (np.abs(y_local) <= box.w / 2)
            & (np.abs(pts[:, 2] - box.z) <= box.h / 2))


def mc_scores(a, b, n, rng):
    """Monte-Carlo IoU and GIoU estimates over the joint bounding region.

    Intersection is sampled; union uses the known exact box volumes; the
    enclosing region is scipy's convex hull of the byte-accurate corners.
    """
    ra, rb = a.bev_radius, b.bev_radius
    lo = np.array([min(a.x - ra, b.x - rb), min(a.y - ra, b.y - rb),
                   min(a.z - a.h / 2, b.z - b.h / 2)])
    hi = np.array([max(a.x + ra, b.x + rb), max(a.y + ra, b.y + rb),
                   max(a.z + a.h / 2, b.z + b.h / 2)])
    pts = rng.uniform(lo, hi, size=(n, 3))
    vol_region = float(np.prod(hi - lo))
    inter = float(np.mean(_inside(a, pts) & _inside(b, pts))) * vol_region
    union = a.volume + b.volume - inter
    iou = inter / union

    corners = np.vstack([bev_polygon(a), bev_polygon(b)])
    hull_area = ConvexHull(corners).volume  # 2-D hull: volume == area
    span = max(a.z + a.h / 2, b.z + b.h / 2) - min(a.z - a.h / 2, b.z - b.h / 2)
    enclosure = hull_area * span
    giou = iou - (enclosure - union) / enclosure
    return iou, giou


def scalar_mciou(giou_value, h_s, area_s, h_t, area_t):
    """Direct scalar evaluation of the aspect-corrected score."""
    v = (4.0 / math.pi) * (math.atan(h_s / area_s) - math.atan(h_t / area_t))
    if v == 0.0:
        return giou_value
    alpha = v * (v / max(1.0 - giou_value, 1e-9) + 1.0)
    return giou_value + alpha


def random_box(rng, spread=1.0):
    return Box3D(
        x=rng.uniform(-spread, spread),
        y=rng.uniform(-spread, spread),
        z=rng.uniform(0.5, 1.5),
        yaw=rng.uniform(-math.pi, math.pi),
        w=rng.uniform(0.3, 1.2),
        l=rng.uniform(0.3, 1.2),
        h=rng.uniform(1.0, 2.2),
    )


# --- footprint ---------------------------------------------------------------

def test_bev_polygon_axis_aligned_unit_box():
    poly = bev_polygon(Box3D(0, 0, 0.5, 0.0, w=1, l=1, h=1))
    expected = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    np.testing.assert_allclose(poly, expected, atol=1e-15)


def test_bev_polygon_quarter_turn_same_vertex_set():
    poly = bev_polygon(Box3D(0, 0, 0.5, math.pi / 2, w=1, l=1, h=1))
    got = sorted(map(tuple, np.round(poly, 12)))
    expected = sorted([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_bev_polygon_area_matches_shoelace():
    poly = bev_polygon(Box3D(0, 0, 0.9, math.pi / 4, w=2, l=1, h=1.8))
    # shoelace evaluated here, independently of the package helper
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert area == pytest.approx(2.0, abs=1e-9)
    assert polygon_area(list(map(tuple, poly))) == pytest.approx(2.0, abs=1e-9)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0
    for a in np.linspace(-10, 10, 101):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)


def test_box_rejects_non_positive_dims():
    with pytest.raises(ValueError):
        Box3D(0, 0, 0, 0, w=0.0, l=1, h=1)


def test_clip_convex_identical_squares():
    sq = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    assert polygon_area(clip_convex(sq, sq)) == pytest.approx(4.0)


def test_convex_hull_of_two_squares():
    sq1 = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    sq2 = [(x + 3.0, y) for x, y in sq1]
    hull = convex_hull(sq1 + sq2)
    assert polygon_area(hull) == pytest.approx(10.0)  # 5 wide, 2 tall


# --- IoU ----------------------------------------------------------------------

def test_iou3d_identical_boxes():
    box = Box3D(1.0, -2.0, 0.9, 0.3, w=0.6, l=0.7, h=1.8)
    assert iou3d(box, box) == pytest.approx(1.0, abs=1e-12)


def test_iou3d_disjoint_heights():
    a = Box3D(0, 0, 0.5, 0.0, w=1, l=1, h=1)
    b = Box3D(0, 0, 5.0, 0.0, w=1, l=1, h=1)
    assert iou3d(a, b) == 0.0


def test_iou3d_matches_monte_carlo():
    rng = np.random.default_rng(7)
    for _ in range(4):
        a = random_box(rng)
        b = random_box(rng)
        iou_mc, _ = mc_scores(a, b, 1_000_000, rng)
        assert iou3d(a, b) == pytest.approx(iou_mc, abs=5e-3)


# --- GIoU ----------------------------------------------------------------------

def test_giou3d_identical_boxes():
    box = Box3D(-1.0, 0.4, 1.0, -0.7, w=0.5, l=0.9, h=2.0)
    assert giou3d(box, box) == pytest.approx(1.0, abs=1e-12)


def test_giou3d_abutting_cubes_is_zero():
    a = Box3D(0.0, 0, 0.5, 0.0, w=1, l=1, h=1)
    b = Box3D(1.0, 0, 0.5, 0.0, w=1, l=1, h=1)
    assert giou3d(a, b) == pytest.approx(0.0, abs=1e-12)


def test_giou3d_matches_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(4):
        a = random_box(rng)
        b = random_box(rng)
        _, giou_mc = mc_scores(a, b, 1_000_000, rng)
        assert giou3d(a, b) == pytest.approx(giou_mc, abs=5e-3)


def test_giou_never_exceeds_iou():
    rng = np.random.default_rng(13)
    for _ in range(200):
        a = random_box(rng, spread=2.0)
        b = random_box(rng, spread=2.0)
        assert giou3d(a, b) <= iou3d(a, b) + 1e-12


# --- aspect-corrected score -----------------------------------------------------

def test_mciou_identical_boxes_exactly_one():
    box = Box3D(0.2, 0.1, 0.9, 1.1, w=0.6, l=0.6, h=1.8)
    assert mciou(box, box) == 1.0


def test_mciou_equal_dims_reduces_to_giou():
    a = Box3D(0.0, 0.0, 0.9, 0.2, w=0.6, l=0.7, h=1.8)
    b = Box3D(0.5, -0.3, 0.9, 0.2, w=0.6, l=0.7, h=1.8)
    assert mciou(a, b) == giou3d(a, b)


def test_mciou_matches_scalar_formula():
    # footprints chosen so w*l equals 0.5 and 0.42
    a = Box3D(0.0, 0.0, 0.9, 0.1, w=0.5, l=1.0, h=1.8)
    b = Box3D(0.3, 0.2, 0.8, -0.2, w=0.6, l=0.7, h=1.6)
    expected = scalar_mciou(giou3d(a, b), 1.8, 0.5, 1.6, 0.42)
    assert mciou(a, b) == pytest.approx(expected, abs=1e-12)


def test_mciou_formula_equivalence_both_directions():
    rng = np.random.default_rng(17)
    for _ in range(50):
        a = random_box(rng)
        b = random_box(rng)
        for s, t in ((a, b), (b, a)):
            expected = scalar_mciou(giou3d(s, t), s.h, s.w * s.l, t.h, t.w * t.l)
            assert mciou(s, t) == pytest.approx(expected, abs=1e-12)


def test_overlap_scores_consistent_with_individual_functions():
    rng = np.random.default_rng(19)
    for _ in range(50):
        a = random_box(rng)
        b = random_box(rng)
        sc = overlap_scores(a, b)
        assert sc.iou3d == pytest.approx(iou3d(a, b), abs=1e-15)
        assert sc.giou3d == pytest.approx(giou3d(a, b), abs=1e-15)
        assert sc.mciou == pytest.approx(mciou(a, b), abs=1e-15)
        assert 0.0 <= sc.iou3d <= 1.0
        assert sc.giou3d <= sc.iou3d + 1e-12


def test_iou_and_giou_symmetric():
    rng = np.random.default_rng(23)
    for _ in range(100):
        a = random_box(rng)
        b = random_box(rng)
        assert iou3d(a, b) == pytest.approx(iou3d(b, a), abs=1e-12)
        assert giou3d(a, b) == pytest.approx(giou3d(b, a), abs=1e-12)


def test_iou_invariant_under_shared_rigid_transform():
    rng = np.random.default_rng(29)
    for _ in range(50):
        a = random_box(rng)
        b = random_box(rng)
        base = iou3d(a, b)
        dx, dy = rng.uniform(-5, 5, size=2)
        rot = rng.uniform(-math.pi, math.pi)
        c, s = math.cos(rot), math.sin(rot)

        def moved(box):
            return Box3D(x=c * box.x - s * box.y + dx,
                         y=s * box.x + c * box.y + dy,
                         z=box.z, yaw=box.yaw + rot, w=box.w, l=box.l, h=box.h)

        assert iou3d(moved(a), moved(b)) == pytest.approx(base, abs=1e-6)
