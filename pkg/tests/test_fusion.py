"""Camera-LiDAR fusion: cloud projection, bbox depth, frustums, assignment,
and the multi-frame object aggregator.

Assignment oracle: exhaustive permutation search. For a rectangular r x c
matrix the optimum over min(r, c)-sized partial assignments is found by
enumerating column subsets and permutations, which is feasible up to 7.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasfuse.aggregation import PointCloudBatch
from atlasfuse.dataset import Detection2D
from atlasfuse.fusion import (
    FORBIDDEN_COST,
    FrustumDetection,
    FusionConfig,
    ObjectsAggregator,
    ProjectedCloud,
    detection_to_frustum,
    median_depth_in_bbox,
    munkres_assign,
    project_cloud_to_camera,
)
from atlasfuse.geometry import (
    CameraIntrinsics,
    RigidTransform,
    TransformChain,
    quat_from_euler,
)

from conftest import CAMERA_IR_ID, LIDAR_LEFT_ID

INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
IDENTITY = RigidTransform.identity()
FRAME = (CAMERA_IR_ID, 0)


def _batch(points, chain=None, t=0):
    points = np.asarray(points, dtype=float)
    return PointCloudBatch(points=points, intensities=np.ones(len(points)),
                           chain=chain or TransformChain(), batch_timestamp=t,
                           source=LIDAR_LEFT_ID)


def _det(x_min, y_min, x_max, y_max, class_id=0, confidence=0.9):
    return Detection2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max,
                       class_id=class_id, confidence=confidence)


# ---------------------------------------------------------------------------
# projection into the camera


def test_project_cloud_empty_batches():
    cloud = project_cloud_to_camera([], IDENTITY, INTR)
    assert len(cloud) == 0


def test_project_cloud_principal_point():
    cloud = project_cloud_to_camera([_batch([[0.0, 0.0, 10.0]])], IDENTITY, INTR)
    assert len(cloud) == 1
    assert cloud.u[0] == pytest.approx(320.0, abs=1e-9)
    assert cloud.v[0] == pytest.approx(240.0, abs=1e-9)
    assert cloud.depth[0] == pytest.approx(10.0, abs=1e-12)


def test_project_cloud_applies_world_to_camera():
    # pitching by -90 degrees maps world (10, 0, 0) onto the optical axis
    # at (0, 0, 10)
    w2c = RigidTransform(quat_from_euler(0.0, -math.pi / 2, 0.0), (0.0, 0.0, 0.0))
    pt = np.array([[10.0, 0.0, 0.0]])
    cloud = project_cloud_to_camera([_batch(pt)], w2c, INTR)
    assert len(cloud) == 1
    assert cloud.depth[0] == pytest.approx(10.0, abs=1e-9)


def test_project_cloud_concatenates_batches_and_filters():
    behind = _batch([[0.0, 0.0, -5.0]])
    visible = _batch([[0.0, 0.0, 5.0], [0.5, 0.0, 5.0]])
    off_image = _batch([[50.0, 0.0, 5.0]])
    cloud = project_cloud_to_camera([behind, visible, off_image], IDENTITY, INTR)
    assert len(cloud) == 2
    assert cloud.u[1] == pytest.approx(370.0, abs=1e-9)


def test_project_cloud_uses_batch_chain():
    shift = TransformChain((RigidTransform.from_translation((0.0, 0.0, 3.0)),))
    cloud = project_cloud_to_camera([_batch([[0.0, 0.0, 7.0]], chain=shift)],
                                    IDENTITY, INTR)
    assert cloud.depth[0] == pytest.approx(10.0, abs=1e-12)


# ---------------------------------------------------------------------------
# median depth


def _cloud(us, vs, ds):
    return ProjectedCloud(np.asarray(us, float), np.asarray(vs, float),
                          np.asarray(ds, float))


def test_median_depth_odd_count():
    cloud = _cloud([10, 11, 12], [10, 10, 10], [4.0, 5.0, 6.0])
    assert median_depth_in_bbox(cloud, _det(9, 9, 13, 11)) == 5.0


def test_median_depth_even_count_averages_middle_pair():
    cloud = _cloud([10, 11], [10, 10], [4.0, 6.0])
    assert median_depth_in_bbox(cloud, _det(9, 9, 13, 11)) == 5.0


def test_median_depth_none_outside_bbox():
    cloud = _cloud([100], [100], [4.0])
    assert median_depth_in_bbox(cloud, _det(9, 9, 13, 11)) is None


def test_median_depth_boundaries_are_closed():
    cloud = _cloud([9.0, 13.0], [9.0, 11.0], [2.0, 8.0])
    assert median_depth_in_bbox(cloud, _det(9, 9, 13, 11)) == 5.0


def test_median_depth_invariant_to_sample_order():
    rng = np.random.default_rng(91)
    us = rng.uniform(9, 13, 101)
    vs = rng.uniform(9, 11, 101)
    ds = rng.uniform(1, 50, 101)
    det = _det(9, 9, 13, 11)
    base = median_depth_in_bbox(_cloud(us, vs, ds), det)
    perm = rng.permutation(101)
    assert median_depth_in_bbox(_cloud(us[perm], vs[perm], ds[perm]), det) == base


# ---------------------------------------------------------------------------
# frustum construction


def test_detection_to_frustum_near_far_planes():
    det = _det(300, 220, 340, 260, class_id=3)
    fd = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    assert fd.frustum.near_distance == pytest.approx(9.0, abs=1e-12)
    assert fd.frustum.far_distance == pytest.approx(11.0, abs=1e-12)
    assert fd.distance == 10.0
    assert fd.class_id == 3
    assert fd.source_frame == FRAME


def test_detection_centered_bbox_axis_is_optical_axis():
    det = _det(300, 220, 340, 260)
    fd = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    assert np.allclose(fd.frustum.axis, (0.0, 0.0, 1.0), atol=1e-12)
    assert np.allclose(fd.center_point(), (0.0, 0.0, 10.0), atol=1e-12)


def test_detection_frustum_contains_its_own_center():
    rng = np.random.default_rng(92)
    for _ in range(100):
        x0 = rng.uniform(0, 600)
        y0 = rng.uniform(0, 440)
        det = _det(x0, y0, x0 + rng.uniform(4, 39), y0 + rng.uniform(4, 39))
        depth = rng.uniform(2.0, 60.0)
        fd = detection_to_frustum(det, INTR, IDENTITY, depth, 0.1, FRAME)
        assert fd.frustum.contains(fd.center_point())


def test_detection_frustum_corner_rays_match_pixels():
    det = _det(300, 220, 340, 260)
    fd = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    expected = np.stack([
        INTR.pixel_ray(300, 220),
        INTR.pixel_ray(340, 220),
        INTR.pixel_ray(340, 260),
        INTR.pixel_ray(300, 260),
    ])
    assert np.allclose(fd.frustum.corner_rays, expected, atol=1e-12)


def test_detection_frustum_in_local_frame():
    cam_to_local = RigidTransform(quat_from_euler(0.0, math.pi / 2, 0.0),
                                  (2.0, 1.0, 0.5))
    det = _det(300, 220, 340, 260)
    fd = detection_to_frustum(det, INTR, cam_to_local, 10.0, 0.1, FRAME)
    # the optical axis (0, 0, 1) pitched by +90 degrees points along +x
    assert np.allclose(fd.frustum.origin, (2.0, 1.0, 0.5), atol=1e-12)
    assert np.allclose(fd.frustum.axis, (1.0, 0.0, 0.0), atol=1e-9)
    assert np.allclose(fd.center_point(), (12.0, 1.0, 0.5), atol=1e-9)


def test_detection_to_frustum_rejects_non_positive_depth():
    det = _det(300, 220, 340, 260)
    with pytest.raises(ValueError):
        detection_to_frustum(det, INTR, IDENTITY, 0.0, 0.1, FRAME)
    with pytest.raises(ValueError):
        detection_to_frustum(det, INTR, IDENTITY, -5.0, 0.1, FRAME)


def test_frustum_detection_distance_must_lie_between_planes():
    det = _det(300, 220, 340, 260)
    good = detection_to_frustum(det, INTR, IDENTITY, 10.0, 0.1, FRAME)
    with pytest.raises(ValueError):
        FrustumDetection(frustum=good.frustum, class_id=0, confidence=0.5,
                         distance=20.0, source_frame=FRAME)


# ---------------------------------------------------------------------------
# assignment


def _oracle_min_cost(a: np.ndarray) -> float:
    rows, cols = a.shape
    k = min(rows, cols)
    best = math.inf
    for row_subset in itertools.combinations(range(rows), k):
        for col_perm in itertools.permutations(range(cols), k):
            best = min(best, sum(a[r, c] for r, c in zip(row_subset, col_perm)))
    return best


def test_munkres_diagonal():
    cost = np.array([[1.0, 9.0, 9.0], [9.0, 2.0, 9.0], [9.0, 9.0, 3.0]])
    assert munkres_assign(cost) == [(0, 0), (1, 1), (2, 2)]


def test_munkres_singleton():
    assert munkres_assign([[7.0]]) == [(0, 0)]


def test_munkres_empty_dimensions():
    assert munkres_assign(np.zeros((0, 5))) == []
    assert munkres_assign(np.zeros((5, 0))) == []


def test_munkres_rectangular_drops_padded_pairs():
    # 2 rows x 3 cols: both rows must match, one column left out
    cost = np.array([[1.0, 10.0, 2.0], [10.0, 1.0, 10.0]])
    pairs = munkres_assign(cost)
    assert pairs == [(0, 0), (1, 1)]
    tall = np.array([[5.0], [1.0], [3.0]])
    pairs = munkres_assign(tall)
    assert pairs == [(1, 0)]


def test_munkres_matches_brute_force_square():
    rng = np.random.default_rng(93)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        a = rng.integers(0, 40, (n, n)).astype(float)
        pairs = munkres_assign(a)
        assert sorted(p[0] for p in pairs) == list(range(n))
        total = sum(a[i, j] for i, j in pairs)
        assert total == _oracle_min_cost(a)


def test_munkres_matches_brute_force_rectangular():
    rng = np.random.default_rng(94)
    for _ in range(150):
        rows = int(rng.integers(1, 6))
        cols = int(rng.integers(1, 6))
        a = rng.integers(0, 40, (rows, cols)).astype(float)
        pairs = munkres_assign(a)
        assert len(pairs) == min(rows, cols)
        assert len({p[0] for p in pairs}) == len(pairs)
        assert len({p[1] for p in pairs}) == len(pairs)
        total = sum(a[i, j] for i, j in pairs)
        assert total == _oracle_min_cost(a)


def test_munkres_invariant_to_row_constant_shift():
    rng = np.random.default_rng(95)
    a = rng.uniform(0, 10, (5, 5))
    base = sorted(munkres_assign(a))
    shifted = a + rng.uniform(1, 5, (5, 1))
    got = sorted(munkres_assign(shifted))
    total_base = sum(shifted[i, j] for i, j in base)
    total_got = sum(shifted[i, j] for i, j in got)
    assert total_got == pytest.approx(total_base, abs=1e-9)


def test_munkres_rejects_bad_input():
    with pytest.raises(ValueError):
        munkres_assign(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        munkres_assign(np.array([[np.inf, 1.0], [1.0, 1.0]]))


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=5),
       st.integers(min_value=0, max_value=2**31 - 1))
def test_munkres_optimality_property(rows, cols, seed):
    a = np.random.default_rng(seed).uniform(0, 20, (rows, cols))
    pairs = munkres_assign(a)
    total = sum(a[i, j] for i, j in pairs)
    assert total <= _oracle_min_cost(a) + 1e-9


# ---------------------------------------------------------------------------
# object aggregation over time


def _frustum_at(x, y, z, class_id=0):
    """Detection whose frustum center lands at (x, y, z) in local frame.

    Built from a camera at the local origin looking down +z, then shifted:
    simplest is a fixed centered bbox at depth z with origin offset (x, y).
    """
    det = _det(300, 220, 340, 260, class_id=class_id)
    cam_to_local = RigidTransform.from_translation((x, y, 0.0))
    return detection_to_frustum(det, INTR, cam_to_local, float(z), 0.1,
                                (CAMERA_IR_ID, 0))


S = 1_000_000_000


def test_cold_start_assigns_fresh_ids():
    agg = ObjectsAggregator()
    out = agg.update([_frustum_at(0, 0, 10), _frustum_at(5, 0, 10),
                      _frustum_at(-5, 0, 10)], now=0)
    assert [o.id for o in out] == [1, 2, 3]
    assert all(np.array_equal(o.velocity, np.zeros(3)) for o in out)


def test_colocated_detection_keeps_id():
    agg = ObjectsAggregator()
    first = agg.update([_frustum_at(0, 0, 10)], now=0)
    second = agg.update([_frustum_at(0, 0, 10)], now=S // 10)
    assert [o.id for o in first] == [1]
    assert [o.id for o in second] == [1]


def test_class_mismatch_forces_new_id():
    agg = ObjectsAggregator()
    agg.update([_frustum_at(0, 0, 10, class_id=1)], now=0)
    out = agg.update([_frustum_at(0, 0, 10, class_id=2)], now=S // 10)
    assert [o.id for o in out] == [1, 2]
    assert [o.class_id for o in out] == [1, 2]


def test_gate_blocks_distant_match():
    agg = ObjectsAggregator(FusionConfig(gate=5.0))
    agg.update([_frustum_at(0, 0, 10)], now=0)
    out = agg.update([_frustum_at(20, 0, 10)], now=S // 10)
    assert [o.id for o in out] == [1, 2]


def test_stale_objects_expire_after_ttl():
    agg = ObjectsAggregator(FusionConfig(ttl=2.0))
    agg.update([_frustum_at(0, 0, 10)], now=0)
    # 2.0 s later is exactly at the boundary and survives
    out = agg.update([], now=2 * S)
    assert [o.id for o in out] == [1]
    out = agg.update([_frustum_at(0, 0, 10)], now=2 * S + 1)
    assert [o.id for o in out] == [2]


def test_centroid_smoothing_blends_halfway():
    agg = ObjectsAggregator(FusionConfig(centroid_smoothing=0.5))
    agg.update([_frustum_at(0, 0, 10)], now=0)
    out = agg.update([_frustum_at(2.0, 0, 10)], now=S)
    # new centroid = 0.5 * old + 0.5 * observed = (1, 0, 10)
    assert np.allclose(out[0].centroid, (1.0, 0.0, 10.0), atol=1e-9)
    # velocity spans the smoothed step over 1 s
    assert np.allclose(out[0].velocity, (1.0, 0.0, 0.0), atol=1e-9)


def test_velocity_prediction_recovers_moving_object():
    agg = ObjectsAggregator(FusionConfig(gate=3.0, centroid_smoothing=1.0))
    for k in range(5):
        out = agg.update([_frustum_at(2.0 * k, 0, 10)], now=k * S)
    assert [o.id for o in out] == [1]
    assert np.allclose(out[0].velocity, (2.0, 0.0, 0.0), atol=1e-9)


def test_two_objects_tracked_through_crossing():
    agg = ObjectsAggregator(FusionConfig(gate=3.0, centroid_smoothing=1.0))
    # one object heads +x, the other -x; they pass at the origin
    for k in range(9):
        x = -8.0 + 2.0 * k
        out = agg.update([
            _frustum_at(x, 1.0, 10, class_id=1),
            _frustum_at(-x, -1.0, 10, class_id=2),
        ], now=k * S)
    ids = {o.class_id: o.id for o in out}
    assert len(out) == 2
    assert ids[1] == 1 and ids[2] == 2
    by_class = {o.class_id: o for o in out}
    assert by_class[1].centroid[0] == pytest.approx(8.0, abs=1e-9)
    assert by_class[2].centroid[0] == pytest.approx(-8.0, abs=1e-9)


def test_history_trimmed_to_configured_length():
    agg = ObjectsAggregator(FusionConfig(history_length=4, gate=100.0,
                                         centroid_smoothing=1.0))
    for k in range(10):
        out = agg.update([_frustum_at(0.1 * k, 0, 10)], now=k * S)
    assert len(out[0].history) == 4
    assert out[0].history[-1][0] == 9 * S


def test_update_output_sorted_by_id():
    rng = np.random.default_rng(96)
    agg = ObjectsAggregator(FusionConfig(gate=1.0))
    for k in range(6):
        dets = [_frustum_at(float(x) * 4, 0, 10)
                for x in rng.permutation(5)[: rng.integers(1, 6)]]
        out = agg.update(dets, now=k * S // 10)
        ids = [o.id for o in out]
        assert ids == sorted(ids)


def test_matched_count_equals_assignment_size():
    # 3 tracked objects, 2 detections near two of them: exactly 2 matches,
    # no new ids
    agg = ObjectsAggregator(FusionConfig(gate=2.0))
    agg.update([_frustum_at(0, 0, 10), _frustum_at(10, 0, 10),
                _frustum_at(20, 0, 10)], now=0)
    out = agg.update([_frustum_at(0.5, 0, 10), _frustum_at(20.5, 0, 10)],
                     now=S // 10)
    assert [o.id for o in out] == [1, 2, 3]
    assert agg.objects[0].last_seen == S // 10
    assert agg.objects[1].last_seen == 0
    assert agg.objects[2].last_seen == S // 10


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(depth_margin=0.0)
    with pytest.raises(ValueError):
        FusionConfig(depth_margin=1.0)
    with pytest.raises(ValueError):
        FusionConfig(centroid_smoothing=0.0)
    with pytest.raises(ValueError):
        FusionConfig(history_length=1)
    assert FusionConfig().gate == 5.0
    assert FusionConfig().ttl == 2.0
