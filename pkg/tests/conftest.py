"""Shared packet factories used across the test modules."""

from __future__ import annotations

import numpy as np

from atlasfuse.dataset import (
    CameraFrame,
    GnssPacket,
    ImuPacket,
    LidarScan,
    SensorId,
    SensorKind,
    SensorPacket,
)

GNSS_ID = SensorId(SensorKind.GNSS_POSE, "gnss")
IMU_ID = SensorId(SensorKind.IMU, "imu")
LIDAR_LEFT_ID = SensorId(SensorKind.LIDAR_LEFT, "left")
CAMERA_IR_ID = SensorId(SensorKind.CAMERA_IR, "ir")


def gnss_packet(t: int, lat: float = 49.2, lon: float = 16.6, alt: float = 250.0,
                azimuth: float | None = None) -> SensorPacket:
    data = GnssPacket(timestamp=t, latitude=lat, longitude=lon, altitude=alt,
                      azimuth=azimuth)
    return SensorPacket(GNSS_ID, t, data)


def imu_packet(t: int, accel=(0.0, 0.0, 9.81), gyro=(0.0, 0.0, 0.0),
               orientation=(1.0, 0.0, 0.0, 0.0)) -> SensorPacket:
    data = ImuPacket(
        timestamp=t,
        linear_acceleration=np.asarray(accel, dtype=np.float64),
        angular_velocity=np.asarray(gyro, dtype=np.float64),
        absolute_orientation=np.asarray(orientation, dtype=np.float64),
    )
    return SensorPacket(IMU_ID, t, data)


def lidar_packet(start: int, end: int, points, intensities=None,
                 sensor: SensorId = LIDAR_LEFT_ID) -> SensorPacket:
    pts = np.asarray(points, dtype=np.float64)
    if intensities is None:
        intensities = np.ones(pts.shape[0])
    scan = LidarScan(sensor=sensor, start_timestamp=start, end_timestamp=end,
                     points=pts, intensities=np.asarray(intensities, dtype=np.float64))
    return SensorPacket(sensor, end, scan)


def camera_packet(t: int, image=None, detections=(), seq: int = 0,
                  sensor: SensorId = CAMERA_IR_ID) -> SensorPacket:
    if image is None:
        image = np.full((8, 8), 128, dtype=np.uint8)
    frame = CameraFrame(sensor=sensor, timestamp=t, image_path="<memory>",
                        image=image, detections=tuple(detections), seq=seq)
    return SensorPacket(sensor, t, frame)
