"""Frame lookup, frontal plane cuts, cross-camera bbox transfer, and depth
image rendering.

Frontal plane geometry check by hand: a centered 40 x 40 px bbox with
fx = fy = 500 cut at distance 10 has corner rays through pixels 20 px off
center, so the cut is a square with half-side 10 * 20 / 500 = 0.4 m at
z = 10 (the axis ray is the z axis and the plane is perpendicular to it).
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasfuse.aggregation import PointCloudBatch
from atlasfuse.dataset import Detection2D
from atlasfuse.fusion import detection_to_frustum
from atlasfuse.geometry import CameraIntrinsics, RigidTransform, TransformChain
from atlasfuse.reproject import (
    DepthImage,
    FrontalPlaneQuad,
    frustum_frontal_plane,
    nearest_frame,
    render_depth_image,
    reproject_quad,
)

from conftest import CAMERA_IR_ID, LIDAR_LEFT_ID

INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
IDENTITY = RigidTransform.identity()
FRAME = (CAMERA_IR_ID, 0)


def _det(x_min, y_min, x_max, y_max, class_id=0, confidence=0.9):
    return Detection2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max,
                       class_id=class_id, confidence=confidence)


def _batch(points, chain=None):
    points = np.asarray(points, dtype=float)
    return PointCloudBatch(points=points, intensities=np.ones(len(points)),
                           chain=chain or TransformChain(), batch_timestamp=0,
                           source=LIDAR_LEFT_ID)


# ---------------------------------------------------------------------------
# nearest frame lookup


def test_nearest_frame_exact_hit():
    assert nearest_frame([10, 20, 30], 20) == 1


def test_nearest_frame_tie_picks_earlier():
    assert nearest_frame([10, 20], 15) == 0


def test_nearest_frame_endpoints():
    assert nearest_frame([10, 20, 30], 5) == 0
    assert nearest_frame([10, 20, 30], 99) == 2


def test_nearest_frame_empty_raises():
    with pytest.raises(ValueError):
        nearest_frame([], 5)


def test_nearest_frame_matches_argmin_oracle():
    rng = np.random.default_rng(101)
    for _ in range(200):
        stamps = sorted(set(int(t) for t in rng.integers(0, 1000, rng.integers(1, 30))))
        query = int(rng.integers(-50, 1050))
        idx = nearest_frame(stamps, query)
        dists = [abs(t - query) for t in stamps]
        assert dists[idx] == min(dists)
        # earlier index wins ties
        assert idx == dists.index(min(dists))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=500), min_size=1, max_size=20),
       st.integers(min_value=-100, max_value=600))
def test_nearest_frame_property(stamps, query):
    stamps = sorted(stamps)
    idx = nearest_frame(stamps, query)
    assert abs(stamps[idx] - query) == min(abs(t - query) for t in stamps)


# ---------------------------------------------------------------------------
# frontal plane


def test_frontal_plane_centered_bbox_is_square_at_distance():
    det = _det(300, 220, 340, 260)
    fd = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    quad = frustum_frontal_plane(fd)
    expected = np.array([
        [-0.4, -0.4, 10.0],
        [0.4, -0.4, 10.0],
        [0.4, 0.4, 10.0],
        [-0.4, 0.4, 10.0],
    ])
    assert np.allclose(quad.corners, expected, atol=1e-9)


def test_frontal_plane_corners_lie_on_their_rays():
    rng = np.random.default_rng(102)
    for _ in range(100):
        x0 = rng.uniform(0, 590)
        y0 = rng.uniform(0, 430)
        det = _det(x0, y0, x0 + rng.uniform(5, 49), y0 + rng.uniform(5, 49))
        fd = detection_to_frustum(det, INTR, IDENTITY, float(rng.uniform(2, 50)),
                                  0.1, FRAME)
        quad = frustum_frontal_plane(fd)
        fr = fd.frustum
        for i in range(4):
            offset = quad.corners[i] - fr.origin
            s = float(np.linalg.norm(offset))
            assert np.allclose(offset, s * fr.corner_rays[i], atol=1e-9)
            # the cut is perpendicular to the axis at the measured distance
            assert float(offset @ fr.axis) == pytest.approx(fd.distance, abs=1e-9)


def test_frontal_plane_at_near_distance_matches_near_cut():
    det = _det(300, 220, 340, 260)
    fd = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    # distance == near when margin makes them coincide: rebuild with the
    # distance at the near plane via a zero-width check instead
    quad = frustum_frontal_plane(fd)
    along = np.array([float((c - fd.frustum.origin) @ fd.frustum.axis)
                      for c in quad.corners])
    assert np.allclose(along, fd.distance, atol=1e-12)
    assert fd.frustum.near_distance <= fd.distance <= fd.frustum.far_distance


def test_frontal_plane_quad_validation():
    with pytest.raises(ValueError):
        FrontalPlaneQuad(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        FrontalPlaneQuad(np.zeros((4, 3)))  # degenerate
    bad = np.array([
        [0.0, 0.0, 10.0],
        [1.0, 0.0, 10.0],
        [1.0, 1.0, 11.0],  # off plane
        [0.0, 1.0, 10.0],
    ])
    with pytest.raises(ValueError, match="coplanar"):
        FrontalPlaneQuad(bad)


# ---------------------------------------------------------------------------
# quad reprojection


def _square_quad(cx=0.0, cy=0.0, z=10.0, half=0.4):
    return FrontalPlaneQuad(np.array([
        [cx - half, cy - half, z],
        [cx + half, cy - half, z],
        [cx + half, cy + half, z],
        [cx - half, cy + half, z],
    ]))


def test_reproject_same_camera_round_trip():
    rng = np.random.default_rng(103)
    for _ in range(100):
        x0 = rng.uniform(1, 590)
        y0 = rng.uniform(1, 430)
        det = _det(x0, y0, x0 + rng.uniform(5, 49), y0 + rng.uniform(5, 45))
        fd = detection_to_frustum(det, INTR, IDENTITY, float(rng.uniform(2, 50)),
                                  0.1, FRAME)
        quad = frustum_frontal_plane(fd)
        back = reproject_quad(quad, IDENTITY, INTR, det.class_id, det.confidence)
        assert back is not None
        assert abs(back.x_min - det.x_min) < 1.0
        assert abs(back.x_max - det.x_max) < 1.0
        assert abs(back.y_min - det.y_min) < 1.0
        assert abs(back.y_max - det.y_max) < 1.0


def test_reproject_fully_behind_returns_none():
    quad = _square_quad(z=-5.0)
    assert reproject_quad(quad, IDENTITY, INTR, 0, 0.9) is None


def test_reproject_off_image_returns_none():
    quad = _square_quad(cx=100.0, z=10.0)
    assert reproject_quad(quad, IDENTITY, INTR, 0, 0.9) is None


def test_reproject_clips_to_image_bounds():
    # a wide quad centered left of the image: hull starts at u < 0
    quad = _square_quad(cx=-6.5, z=10.0, half=0.5)
    det = reproject_quad(quad, IDENTITY, INTR, 1, 0.8)
    assert det is not None
    assert det.x_min == 0.0
    assert det.x_max > 0.0
    assert det.class_id == 1
    assert det.confidence == 0.8


def test_reproject_into_shifted_camera():
    # camera 1 m left of the quad center sees it shifted right by
    # fx * 1.0 / 10 = 50 px
    quad = _square_quad(cx=0.0, z=10.0)
    w2c = RigidTransform.from_translation((1.0, 0.0, 0.0))
    base = reproject_quad(quad, IDENTITY, INTR, 0, 0.9)
    shifted = reproject_quad(quad, w2c, INTR, 0, 0.9)
    assert shifted.x_min == pytest.approx(base.x_min + 50.0, abs=1e-9)
    assert shifted.x_max == pytest.approx(base.x_max + 50.0, abs=1e-9)


def test_reproject_partially_behind_uses_front_corners():
    # a tilted quad with one corner behind the camera; the hull of the
    # three front corners spans u in 320 +- 500 * 0.5 / 3 and v from 240
    # up to 240 + 500 * 0.5 / 7
    quad = FrontalPlaneQuad(np.array([
        [0.0, -0.5, -1.0],
        [0.5, 0.0, 3.0],
        [0.0, 0.5, 7.0],
        [-0.5, 0.0, 3.0],
    ]))
    det = reproject_quad(quad, IDENTITY, INTR, 0, 0.9)
    assert det is not None
    assert det.x_min == pytest.approx(320.0 - 250.0 / 3.0, abs=1e-9)
    assert det.x_max == pytest.approx(320.0 + 250.0 / 3.0, abs=1e-9)
    assert det.y_min == pytest.approx(240.0, abs=1e-9)
    assert det.y_max == pytest.approx(240.0 + 250.0 / 7.0, abs=1e-9)


def test_reproject_edge_on_front_corners_yield_none():
    # the two surviving corners share one pixel row, so the clipped hull
    # has no area
    quad = FrontalPlaneQuad(np.array([
        [-0.5, 0.0, -1.0],
        [0.5, 0.0, -1.0],
        [0.5, 0.0, 5.0],
        [-0.5, 0.0, 5.0],
    ]))
    assert reproject_quad(quad, IDENTITY, INTR, 0, 0.9) is None


# ---------------------------------------------------------------------------
# depth rendering


def test_render_empty_cloud_is_all_zero():
    img = render_depth_image([], IDENTITY, INTR)
    assert img.width == 640
    assert img.height == 480
    assert not img.data.any()


def test_render_single_point_lands_in_one_pixel():
    img = render_depth_image([_batch([[0.0, 0.0, 10.0]])], IDENTITY, INTR)
    assert img.data[240, 320] == pytest.approx(10.0, abs=1e-12)
    assert np.count_nonzero(img.data) == 1


def test_render_same_pixel_keeps_nearest():
    img = render_depth_image([_batch([[0.0, 0.0, 5.0], [0.0, 0.0, 3.0]])],
                             IDENTITY, INTR)
    assert img.data[240, 320] == 3.0


def test_render_wall_fills_pixels_at_wall_depth():
    # fronto-parallel wall at z = 10 sampled on a fine grid
    ys, xs = np.meshgrid(np.linspace(-2.0, 2.0, 160), np.linspace(-3.0, 3.0, 240),
                         indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, 10.0)], axis=1)
    img = render_depth_image([_batch(pts)], IDENTITY, INTR)
    nz = img.data[img.data > 0]
    assert nz.size > 1000
    assert np.abs(nz - 10.0).max() < 1e-3


def test_render_depths_bounded_by_cloud_range():
    rng = np.random.default_rng(104)
    pts = np.stack([rng.uniform(-2, 2, 3000), rng.uniform(-1.5, 1.5, 3000),
                    rng.uniform(4.0, 9.0, 3000)], axis=1)
    img = render_depth_image([_batch(pts)], IDENTITY, INTR)
    nz = img.data[img.data > 0]
    assert nz.min() >= 4.0
    assert nz.max() <= 9.0


def test_depth_image_validation():
    with pytest.raises(ValueError):
        DepthImage(width=4, height=2, data=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        DepthImage(width=2, height=2, data=-np.ones((2, 2)))
    with pytest.raises(ValueError):
        DepthImage(width=2, height=2, data=np.full((2, 2), np.nan))
