"""Cross-camera detection transfer via frontal plane quads, and depth rendering."""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Detection2D
from .fusion import FrustumDetection, project_cloud_to_camera
from .geometry import CameraIntrinsics, RigidTransform, Z_MIN


@dataclass(frozen=True)
class FrontalPlaneQuad:
    """Planar stand-in for a detected object: the frustum cut at its
    measured distance, perpendicular to the frustum axis."""

    corners: np.ndarray  # (4, 3) local frame, ordered like the source bbox corners

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64).copy()
        if c.shape != (4, 3):
            raise ValueError("corners must have shape (4, 3)")
        e1 = c[1] - c[0]
        e2 = c[3] - c[0]
        normal = np.cross(e1, e2)
        area = float(np.linalg.norm(normal))
        if area < 1e-12:
            raise ValueError("degenerate quad")
        if abs(float((c[2] - c[0]) @ (normal / area))) > 1e-6:
            raise ValueError("quad corners are not coplanar")
        c.flags.writeable = False
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters; 0.0 marks pixels with no data."""

    width: int
    height: int
    data: np.ndarray  # (height, width) float64

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (self.height, self.width):
            raise ValueError("data shape does not match width/height")
        if not np.isfinite(d).all() or (d < 0).any():
            raise ValueError("depth values must be finite and non-negative")
        object.__setattr__(self, "data", d)


def nearest_frame(timestamps, query: int) -> int:
    """Index of the timestamp closest to ``query``; ties pick the earlier one.

    ``timestamps`` must be sorted ascending and non-empty.
    """
    stamps = list(timestamps)
    if not stamps:
        raise ValueError("empty frame timeline")
    idx = bisect.bisect_left(stamps, query)
    if idx == 0:
        return 0
    if idx == len(stamps):
        return len(stamps) - 1
    before = query - stamps[idx - 1]
    after = stamps[idx] - query
    return idx - 1 if before <= after else idx


def frustum_frontal_plane(detection: FrustumDetection) -> FrontalPlaneQuad:
    """Cut the frustum with the plane through its measured distance.

    The plane is perpendicular to the axis ray; each corner is the
    intersection of that plane with the matching corner ray.
    """
    fr = detection.frustum
    corners = np.empty((4, 3))
    for i in range(4):
        along = float(fr.corner_rays[i] @ fr.axis)
        if along <= 1e-9:
            raise ValueError("corner ray perpendicular to the frustum axis")
        s = detection.distance / along
        corners[i] = fr.origin + s * fr.corner_rays[i]
    return FrontalPlaneQuad(corners)


def reproject_quad(quad: FrontalPlaneQuad, world_to_camera: RigidTransform,
                   intrinsics: CameraIntrinsics, class_id: int,
                   confidence: float) -> Detection2D | None:
    """Axis-aligned hull of the quad in a target camera, clipped to the image.

    Corners behind the camera plane are dropped from the hull; returns
    None when all corners are behind or the hull misses the image.
    """
    cam = world_to_camera.apply(quad.corners)
    front = cam[:, 2] > Z_MIN
    if not front.any():
        return None
    pts = cam[front]
    u = intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy
    x_min = max(0.0, float(u.min()))
    x_max = min(float(intrinsics.width), float(u.max()))
    y_min = max(0.0, float(v.min()))
    y_max = min(float(intrinsics.height), float(v.max()))
    if x_min >= x_max or y_min >= y_max:
        return None
    return Detection2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max,
                       class_id=class_id, confidence=confidence)


def render_depth_image(batches, world_to_camera: RigidTransform,
                       intrinsics: CameraIntrinsics) -> DepthImage:
    """Z-buffered depth image of the aggregated cloud as seen by a camera."""
    projected = project_cloud_to_camera(batches, world_to_camera, intrinsics)
    data = _kernels.depth_z_buffer(projected.u, projected.v, projected.depth,
                                   intrinsics.width, intrinsics.height)
    return DepthImage(width=intrinsics.width, height=intrinsics.height, data=data)
