"""Local environment model shared by the fusion stages, plus file writers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .dataset import Detection2D, SensorId
from .fusion import FrustumDetection, FusedObject
from .positioning import LocalPosition
from .reproject import DepthImage

DEPTH_PNG_SCALE = 1000.0  # meters to millimeters
DEPTH_PNG_MAX = 65535


@dataclass
class StampedFrustums:
    """Frustum detections from one camera frame, tagged with provenance."""

    sensor: SensorId
    timestamp: int
    detections: list = field(default_factory=list)


@dataclass
class LocalMap:
    """Latest view of the environment: pose, tracked objects, frustums."""

    pose: LocalPosition | None = None
    objects: list = field(default_factory=list)
    frustums: dict = field(default_factory=dict)  # SensorId -> StampedFrustums

    def update_pose(self, pose: LocalPosition) -> None:
        self.pose = pose

    def update_objects(self, objects: list[FusedObject]) -> None:
        self.objects = list(objects)

    def update_frustums(self, sensor: SensorId, timestamp: int,
                        detections: list[FrustumDetection]) -> None:
        self.frustums[sensor] = StampedFrustums(sensor, timestamp, list(detections))


def write_yolo_annotations(path, detections: list[Detection2D],
                           width: int, height: int) -> None:
    """Write detections as normalized ``class cx cy w h`` rows, 6 decimals."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    with open(path, "w", encoding="ascii") as fh:
        for det in detections:
            cx = (det.x_min + det.x_max) / 2.0 / width
            cy = (det.y_min + det.y_max) / 2.0 / height
            w = (det.x_max - det.x_min) / width
            h = (det.y_max - det.y_min) / height
            fh.write("%d %.6f %.6f %.6f %.6f\n" % (det.class_id, cx, cy, w, h))


def read_yolo_annotations(path, width: int, height: int) -> list[Detection2D]:
    """Inverse of write_yolo_annotations, mapping back to pixel boxes."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError("annotation rows need 5 fields, got %d" % len(parts))
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
            out.append(Detection2D(
                x_min=(cx - w / 2.0) * width,
                y_min=(cy - h / 2.0) * height,
                x_max=(cx + w / 2.0) * width,
                y_max=(cy + h / 2.0) * height,
                class_id=class_id,
                confidence=1.0,
            ))
    return out


def write_depth_png(path, depth: DepthImage) -> None:
    """Store depth as 16-bit grayscale PNG in millimeters.

    Pixels with no data stay 0; values beyond 65.535 m clamp to the
    format ceiling.
    """
    mm = np.rint(depth.data * DEPTH_PNG_SCALE)
    mm = np.clip(mm, 0, DEPTH_PNG_MAX).astype(np.uint16)
    img = Image.fromarray(mm)  # uint16 maps to 16-bit grayscale (I;16)
    img.save(path, format="PNG")


def read_depth_png(path) -> DepthImage:
    """Load a depth PNG written by write_depth_png back into meters."""
    with Image.open(path) as img:
        if img.mode != "I;16":
            img = img.convert("I;16")
        arr = np.asarray(img, dtype=np.uint16)
    data = arr.astype(np.float64) / DEPTH_PNG_SCALE
    return DepthImage(width=arr.shape[1], height=arr.shape[0], data=data)
