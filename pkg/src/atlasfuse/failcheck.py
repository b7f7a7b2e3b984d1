"""Per-sensor reliability scoring from simple anomaly rules.

Each anomaly halves the sensor's score; between anomalies the score decays
exponentially back toward 1.0 with a configurable half-life.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import CameraFrame, GnssPacket, ImuPacket, LidarScan, SensorId, SensorKind, SensorPacket

log = logging.getLogger(__name__)


def _default_periods() -> dict:
    return {
        SensorKind.GNSS_POSE: 0.1,
        SensorKind.IMU: 0.01,
        SensorKind.LIDAR_LEFT: 0.1,
        SensorKind.LIDAR_RIGHT: 0.1,
        SensorKind.CAMERA_RGB_LEFT: 0.1,
        SensorKind.CAMERA_RGB_RIGHT: 0.1,
        SensorKind.CAMERA_IR: 0.1,
    }


@dataclass
class FailCheckConfig:
    gap_factor: float = 3.0
    imu_accel_saturation: float = 150.0  # m/s^2
    lidar_min_points: int = 1000
    decay_half_life: float = 10.0  # seconds
    expected_period: dict = field(default_factory=_default_periods)  # seconds per kind

    def __post_init__(self):
        if self.gap_factor <= 0 or self.imu_accel_saturation <= 0:
            raise ValueError("gap_factor and imu_accel_saturation must be positive")
        if self.lidar_min_points < 0:
            raise ValueError("lidar_min_points must be non-negative")
        if self.decay_half_life <= 0:
            raise ValueError("decay_half_life must be positive")


@dataclass(frozen=True)
class Anomaly:
    sensor: SensorId
    timestamp: int
    kind: str
    detail: str


@dataclass(frozen=True)
class ReliabilityScore:
    value: float  # in [0, 1]
    last_update: int


class _SensorState:
    __slots__ = ("value", "last_update", "last_packet")

    def __init__(self):
        self.value = 1.0
        self.last_update = None
        self.last_packet = None


class FailChecker:
    """Tracks a reliability score in [0, 1] for every registered sensor."""

    def __init__(self, config: FailCheckConfig | None = None):
        self.config = config or FailCheckConfig()
        self._states: dict = {}

    def register(self, sensor: SensorId) -> None:
        self._states.setdefault(sensor, _SensorState())

    @property
    def sensors(self) -> list:
        return list(self._states)

    def _decayed(self, state: _SensorState, now: int) -> float:
        if state.last_update is None:
            return state.value
        dt = max(0, now - state.last_update) * 1e-9
        half = self.config.decay_half_life
        return 1.0 - (1.0 - state.value) * 0.5 ** (dt / half)

    def ingest(self, packet: SensorPacket) -> list:
        """Score one packet; returns the anomalies it triggered."""
        sensor = packet.sensor
        if sensor not in self._states:
            raise KeyError(sensor)
        state = self._states[sensor]
        now = packet.timestamp
        anomalies = self._detect(sensor, packet, state)
        value = self._decayed(state, now)
        value *= 0.5 ** len(anomalies)
        state.value = value
        state.last_update = now
        state.last_packet = now
        for a in anomalies:
            log.warning("failcheck %s/%s at %d: %s (%s)",
                        sensor.kind.name.lower(), sensor.label, now, a.kind, a.detail)
        return anomalies

    def _detect(self, sensor: SensorId, packet: SensorPacket, state: _SensorState) -> list:
        anomalies = []
        now = packet.timestamp
        period = self.config.expected_period.get(sensor.kind)
        if period is not None and state.last_packet is not None:
            gap = (now - state.last_packet) * 1e-9
            if gap > self.config.gap_factor * period:
                anomalies.append(Anomaly(sensor, now, "gap",
                                         "%.4fs since previous packet, expected %.4fs"
                                         % (gap, period)))
        data = packet.data
        if isinstance(data, ImuPacket):
            fields = np.concatenate([
                data.linear_acceleration, data.angular_velocity, data.absolute_orientation,
            ])
            if not np.isfinite(fields).all():
                anomalies.append(Anomaly(sensor, now, "non_finite", "non-finite IMU field"))
            elif float(np.abs(data.linear_acceleration).max()) >= self.config.imu_accel_saturation:
                anomalies.append(Anomaly(
                    sensor, now, "accel_saturation",
                    "|accel| max %.3f m/s^2" % float(np.abs(data.linear_acceleration).max())))
        elif isinstance(data, CameraFrame):
            if data.image is None:
                anomalies.append(Anomaly(sensor, now, "unreadable_image",
                                         str(data.image_path)))
            elif not np.any(data.image):
                anomalies.append(Anomaly(sensor, now, "blank_image", "image is all zero"))
        elif isinstance(data, LidarScan):
            if len(data) < self.config.lidar_min_points:
                anomalies.append(Anomaly(sensor, now, "sparse_scan",
                                         "%d points" % len(data)))
            if data.end_timestamp <= data.start_timestamp:
                anomalies.append(Anomaly(sensor, now, "timestamp_order",
                                         "scan end %d <= start %d"
                                         % (data.end_timestamp, data.start_timestamp)))
        elif isinstance(data, GnssPacket):
            pass  # field ranges are enforced at load; only the gap rule applies
        return anomalies

    def reliability(self, sensor: SensorId, now: int) -> ReliabilityScore:
        """Current score decayed to ``now``; pure, does not mutate state."""
        if sensor not in self._states:
            raise KeyError(sensor)
        state = self._states[sensor]
        return ReliabilityScore(value=self._decayed(state, now), last_update=now)
