"""Camera/LiDAR detection fusion: frustums from 2D boxes plus LiDAR depth,
and association of frustum detections into tracked fused objects."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import Detection2D, SensorId
from .geometry import CameraIntrinsics, Frustum, RigidTransform, quat_rotate

log = logging.getLogger(__name__)

# Sentinel cost marking a forbidden pairing; large but finite so the
# assignment stays well defined.
FORBIDDEN_COST = 1e12


@dataclass(frozen=True)
class FusionConfig:
    depth_margin: float = 0.1  # frustum half-depth as a fraction of measured distance
    gate: float = 5.0  # meters; association distance gate
    ttl: float = 2.0  # seconds without sightings before an object is dropped
    centroid_smoothing: float = 0.5  # exponential smoothing factor for centroids
    history_length: int = 10  # retained centroid history entries
    transfer_source: str | None = None  # RGB camera label feeding IR transfer

    def __post_init__(self):
        if not 0.0 < self.depth_margin < 1.0:
            raise ValueError("depth_margin must be in (0, 1)")
        if self.gate <= 0 or self.ttl <= 0:
            raise ValueError("gate and ttl must be positive")
        if not 0.0 < self.centroid_smoothing <= 1.0:
            raise ValueError("centroid_smoothing must be in (0, 1]")
        if self.history_length < 2:
            raise ValueError("history_length must be at least 2")


@dataclass(frozen=True)
class ProjectedCloud:
    """Aggregated cloud samples landing in one camera image."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray  # camera-frame z per sample

    def __len__(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class FrustumDetection:
    """A 2D detection lifted to a local-frame frustum with measured distance."""

    frustum: Frustum
    class_id: int
    confidence: float
    distance: float  # median LiDAR depth of the bbox, meters
    source_frame: tuple  # (SensorId, timestamp)

    def __post_init__(self):
        if not (self.frustum.near_distance <= self.distance <= self.frustum.far_distance):
            raise ValueError("distance outside [near, far]")

    def center_point(self) -> np.ndarray:
        return self.frustum.center_point(self.distance)


@dataclass
class FusedObject:
    id: int
    class_id: int
    centroid: np.ndarray
    velocity: np.ndarray
    history: list  # [(timestamp, centroid)] oldest first
    last_seen: int


def project_cloud_to_camera(batches, world_to_camera: RigidTransform,
                            intrinsics: CameraIntrinsics) -> ProjectedCloud:
    """Project every aggregated batch into a camera.

    The camera transform joins each batch's chain on the world side, so
    the whole sensor-to-camera path collapses to a single transform and
    every batch's points are touched exactly once.
    """
    us, vs, ds = [], [], []
    for batch in batches:
        cam_points = batch.chain.prepend(world_to_camera).transform(batch.points)
        u, v, d = intrinsics.project_points(cam_points)
        if u.shape[0]:
            us.append(u)
            vs.append(v)
            ds.append(d)
    if not us:
        e = np.empty(0)
        return ProjectedCloud(e, e.copy(), e.copy())
    return ProjectedCloud(np.concatenate(us), np.concatenate(vs), np.concatenate(ds))


def median_depth_in_bbox(projected: ProjectedCloud, detection: Detection2D) -> float | None:
    """Median camera depth of samples inside the bbox (closed boundaries).

    An even sample count yields the mean of the two middle values. Returns
    None when no sample falls inside the bbox.
    """
    m = (
        (projected.u >= detection.x_min)
        & (projected.u <= detection.x_max)
        & (projected.v >= detection.y_min)
        & (projected.v <= detection.y_max)
    )
    count = int(np.count_nonzero(m))
    if count == 0:
        return None
    log.debug("bbox depth from %d cloud samples", count)
    return float(np.median(projected.depth[m]))


def detection_to_frustum(detection: Detection2D, intrinsics: CameraIntrinsics,
                         camera_to_local: RigidTransform, depth: float,
                         depth_margin: float, source_frame: tuple) -> FrustumDetection:
    """Lift a 2D detection into a local-frame frustum at the measured depth.

    Corner rays pass through the bbox corners, the axis through its
    center; near/far planes sit at ``depth * (1 -/+ depth_margin)`` along
    the axis.
    """
    if depth <= 0:
        raise ValueError("depth must be positive")
    rot = camera_to_local.rotation
    origin = camera_to_local.translation
    cx, cy = detection.center()
    corners_px = (
        (detection.x_min, detection.y_min),
        (detection.x_max, detection.y_min),
        (detection.x_max, detection.y_max),
        (detection.x_min, detection.y_max),
    )
    rays = np.stack([
        quat_rotate(rot, intrinsics.pixel_ray(u, v)) for (u, v) in corners_px
    ])
    axis = quat_rotate(rot, intrinsics.pixel_ray(cx, cy))
    frustum = Frustum(
        origin=origin,
        corner_rays=rays,
        axis=axis,
        near_distance=depth * (1.0 - depth_margin),
        far_distance=depth * (1.0 + depth_margin),
    )
    return FrustumDetection(
        frustum=frustum,
        class_id=detection.class_id,
        confidence=detection.confidence,
        distance=depth,
        source_frame=source_frame,
    )


def munkres_assign(costs) -> list:
    """Minimum-cost assignment pairs (row, col) for a rectangular cost matrix.

    Rectangular inputs are padded to square with a sentinel larger than
    any real cost, which forces a maximum matching over the real cells.
    Pairs are returned sorted by row.
    """
    a = np.asarray(costs, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    rows, cols = a.shape
    if rows == 0 or cols == 0:
        return []
    if not np.isfinite(a).all():
        raise ValueError("cost matrix must be finite")
    n = max(rows, cols)
    if rows != cols:
        sentinel = float(a.max()) + 1.0
        square = np.full((n, n), sentinel)
        square[:rows, :cols] = a
    else:
        square = a
    col_for_row = _kernels.solve_assignment(square)
    return [(i, int(col_for_row[i])) for i in range(rows) if col_for_row[i] < cols]


class ObjectsAggregator:
    """Associates frustum detections over time into fused objects.

    Matching minimizes distance between each object's predicted centroid
    (constant-velocity extrapolation) and each detection's frustum center
    point; pairs with mismatched classes or distance beyond the gate are
    forbidden. Ids come from a monotone counter and are never reused.
    """

    def __init__(self, config: FusionConfig | None = None):
        self.config = config or FusionConfig()
        self._objects: list = []
        self._next_id = 1

    @property
    def objects(self) -> list:
        return list(self._objects)

    def update(self, detections, now: int) -> list:
        cfg = self.config
        ttl_ns = int(round(cfg.ttl * 1e9))
        objects = [o for o in self._objects if now - o.last_seen <= ttl_ns]
        detections = list(detections)
        points = [d.center_point() for d in detections]
        matched_rows = set()
        matched_cols = set()
        if objects and detections:
            cost = np.empty((len(objects), len(detections)))
            for i, obj in enumerate(objects):
                dt = (now - obj.last_seen) * 1e-9
                predicted = obj.centroid + obj.velocity * dt
                for j, det in enumerate(detections):
                    dist = float(np.linalg.norm(predicted - points[j]))
                    if det.class_id != obj.class_id or dist > cfg.gate:
                        cost[i, j] = FORBIDDEN_COST
                    else:
                        cost[i, j] = dist
            for i, j in munkres_assign(cost):
                if cost[i, j] >= FORBIDDEN_COST:
                    continue
                self._absorb(objects[i], detections[j], points[j], now)
                matched_rows.add(i)
                matched_cols.add(j)
        for j, det in enumerate(detections):
            if j in matched_cols:
                continue
            obj = FusedObject(
                id=self._next_id,
                class_id=det.class_id,
                centroid=points[j].copy(),
                velocity=np.zeros(3),
                history=[(now, points[j].copy())],
                last_seen=now,
            )
            self._next_id += 1
            objects.append(obj)
        objects.sort(key=lambda o: o.id)
        self._objects = objects
        return list(objects)

    def _absorb(self, obj: FusedObject, det, point: np.ndarray, now: int) -> None:
        alpha = self.config.centroid_smoothing
        new_centroid = (1.0 - alpha) * obj.centroid + alpha * point
        prev_t, prev_p = obj.history[-1]
        span = (now - prev_t) * 1e-9
        if span > 0:
            obj.velocity = (new_centroid - prev_p) / span
        obj.centroid = new_centroid
        obj.history.append((now, new_centroid.copy()))
        if len(obj.history) > self.config.history_length:
            del obj.history[: len(obj.history) - self.config.history_length]
        obj.last_seen = now
