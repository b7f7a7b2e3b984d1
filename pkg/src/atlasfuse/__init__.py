"""Offline multi-sensor fusion: GNSS/IMU positioning, motion-compensated
LiDAR aggregation, camera-LiDAR detection fusion, cross-camera detection
transfer, and depth rendering over recorded datasets."""

__version__ = "0.1.0"
