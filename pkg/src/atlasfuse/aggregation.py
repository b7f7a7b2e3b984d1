"""Motion-compensated LiDAR batching and the time-windowed cloud aggregator.

A sweep is split into contiguous index slices; each slice gets the pose
interpolated at its mid-acquisition time, which bounds the residual
distortion of a scan taken under velocity v over duration T by
``|v| * T / (2 N)`` for N batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import LidarScan, SensorId
from .geometry import RigidTransform, TransformChain, interpolate_pose


@dataclass(frozen=True)
class AggregationConfig:
    batch_count: int = 16
    window: float = 1.5  # seconds of scans kept
    voxel_leaf: float = 0.2  # meters

    def __post_init__(self):
        if self.batch_count < 1:
            raise ValueError("batch_count must be at least 1")
        if self.window <= 0 or self.voxel_leaf <= 0:
            raise ValueError("window and voxel_leaf must be positive")


@dataclass(frozen=True, eq=False)
class PointCloudBatch:
    """Slice of a scan with its own lazy sensor-to-world transform chain."""

    points: np.ndarray  # (N, 3) float64, sensor frame
    intensities: np.ndarray  # (N,)
    chain: TransformChain
    batch_timestamp: int
    source: SensorId

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        i = np.asarray(self.intensities, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or i.shape != (p.shape[0],):
            raise ValueError("malformed batch arrays")
        p = p.copy()
        i = i.copy()
        p.flags.writeable = False
        i.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "intensities", i)

    def world_points(self) -> np.ndarray:
        return self.chain.transform(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]


def downsample(scan: LidarScan, leaf: float) -> LidarScan:
    """Voxel-grid filter keeping the first point per cell, in acquisition order.

    The output is an order-preserving subsequence of the input, so a cloud
    whose points all land in distinct cells comes back unchanged.
    """
    keep = _kernels.voxel_first_indices(scan.points, leaf)
    return LidarScan(
        sensor=scan.sensor,
        start_timestamp=scan.start_timestamp,
        end_timestamp=scan.end_timestamp,
        points=scan.points[keep],
        intensities=scan.intensities[keep],
    )


def split_into_batches(scan: LidarScan, pose_start: RigidTransform,
                       pose_end: RigidTransform, lidar_to_imu: RigidTransform,
                       batch_count: int) -> list:
    """Partition a scan into contiguous batches, each with its own pose.

    Batch k covers indices ``[k*s, (k+1)*s)`` with ``s = ceil(count / N)``
    and carries the chain ``interpolate_pose(pose_start, pose_end, t_k)``
    followed by ``lidar_to_imu`` with ``t_k = (k + 0.5) / N``, the midpoint
    of its share of the sweep.
    """
    if batch_count < 1:
        raise ValueError("batch_count must be at least 1")
    count = len(scan)
    if count == 0:
        raise ValueError("cannot batch an empty scan")
    size = math.ceil(count / batch_count)
    duration = scan.end_timestamp - scan.start_timestamp
    batches = []
    for k in range(batch_count):
        lo = k * size
        if lo >= count:
            break
        hi = min(count, lo + size)
        t_k = (k + 0.5) / batch_count
        pose_k = interpolate_pose(pose_start, pose_end, t_k)
        chain = TransformChain((pose_k, lidar_to_imu))
        batches.append(PointCloudBatch(
            points=scan.points[lo:hi],
            intensities=scan.intensities[lo:hi],
            chain=chain,
            batch_timestamp=scan.start_timestamp + int(round(t_k * duration)),
            source=scan.sensor,
        ))
    return batches


class PointCloudAggregator:
    """Keeps recent batches sorted by batch timestamp (stable for ties)."""

    def __init__(self):
        self._batches: list = []

    @property
    def batches(self) -> tuple:
        return tuple(self._batches)

    @property
    def batch_count(self) -> int:
        return len(self._batches)

    @property
    def point_count(self) -> int:
        return sum(len(b) for b in self._batches)

    def insert_batches(self, batches) -> None:
        self._batches.extend(batches)
        self._batches.sort(key=lambda b: b.batch_timestamp)  # stable, ties keep insert order

    def evict_expired(self, now: int, window: float) -> int:
        """Drop batches older than ``now - window``; the boundary is retained."""
        horizon = now - int(round(window * 1e9))
        kept = [b for b in self._batches if b.batch_timestamp >= horizon]
        dropped = len(self._batches) - len(kept)
        self._batches = kept
        return dropped

    def aggregated_world_cloud(self) -> tuple:
        """All batches evaluated into the local frame.

        Each batch's chain is collapsed at most once (cached on the chain),
        so repeated calls only pay for the point transform.
        """
        if not self._batches:
            return np.empty((0, 3)), np.empty(0)
        points = np.concatenate([b.world_points() for b in self._batches])
        intensities = np.concatenate([b.intensities for b in self._batches])
        return points, intensities
