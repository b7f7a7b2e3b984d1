"""GNSS/IMU pose estimation in a local east-north-up frame.

Position and velocity run through three independent per-axis Kalman
filters driven by IMU acceleration (control input) and corrected by GNSS
fixes. Orientation integrates the gyroscope, pulls roll and pitch gently
toward the IMU's own absolute orientation, and corrects yaw from a blend
of GNSS azimuth and the direction of estimated motion.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import geodesy
from .dataset import GnssPacket, ImuPacket
from .errors import DataError
from .geometry import (
    RigidTransform,
    quat_from_euler,
    quat_from_rotvec,
    quat_identity,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    quat_to_euler,
    wrap_angle,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Anchor:
    """Geodetic origin of the local frame (the first GNSS fix)."""

    latitude: float
    longitude: float
    altitude: float

    def as_tuple(self) -> tuple:
        return (self.latitude, self.longitude, self.altitude)


@dataclass
class PositioningConfig:
    gravity: float = 9.81  # m/s^2, local up
    gnss_sigma: float = 0.02  # m, GNSS position noise
    accel_sigma: float = 0.5  # m/s^2, process noise driving the filters
    rollpitch_blend_alpha: float = 0.02  # per-sample blend toward IMU attitude
    heading_full_trust_speed: float = 5.0  # m/s; velocity heading fully trusted above
    gnss_heading_sigma: float = 3.0  # degrees (informational; generator noise level)
    yaw_blend_alpha: float = 0.2  # per-fix blend of yaw toward the fused heading
    min_heading_speed: float = 0.5  # m/s; below this a missing azimuth keeps the old heading
    init_velocity_sigma: float = 5.0  # m/s, initial velocity uncertainty
    pose_history_length: float = 5.0  # seconds of pose history kept for interpolation

    def __post_init__(self):
        for name in ("gravity", "gnss_sigma", "accel_sigma", "heading_full_trust_speed",
                     "init_velocity_sigma", "pose_history_length"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        for name in ("rollpitch_blend_alpha", "yaw_blend_alpha"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError("%s must be within [0, 1]" % name)


class Kalman1D:
    """Position/velocity filter for one axis with acceleration as control input."""

    def __init__(self, accel_sigma: float, measurement_sigma: float,
                 position: float = 0.0, velocity: float = 0.0,
                 position_sigma: float = 1.0, velocity_sigma: float = 1.0):
        self.state = np.array([position, velocity])
        self.covariance = np.diag([position_sigma ** 2, velocity_sigma ** 2]).astype(float)
        self._q = accel_sigma ** 2
        self._r = measurement_sigma ** 2

    @property
    def position(self) -> float:
        return float(self.state[0])

    @property
    def velocity(self) -> float:
        return float(self.state[1])

    def predict(self, dt: float, accel: float = 0.0) -> None:
        if dt < 0:
            raise ValueError("negative prediction interval")
        if dt == 0.0:
            return
        f = np.array([[1.0, dt], [0.0, 1.0]])
        b = np.array([0.5 * dt * dt, dt])
        self.state = f @ self.state + b * accel
        # piecewise-constant white acceleration process noise
        q = self._q * np.array([
            [0.25 * dt ** 4, 0.5 * dt ** 3],
            [0.5 * dt ** 3, dt ** 2],
        ])
        self.covariance = f @ self.covariance @ f.T + q

    def correct(self, measurement: float) -> None:
        p = self.covariance
        s = p[0, 0] + self._r
        k = p[:, 0] / s
        innovation = measurement - self.state[0]
        self.state = self.state + k * innovation
        # Joseph form keeps the covariance symmetric positive semi-definite
        ikh = np.eye(2) - np.outer(k, [1.0, 0.0])
        self.covariance = ikh @ p @ ikh.T + self._r * np.outer(k, k)


@dataclass(frozen=True)
class LocalPosition:
    timestamp: int
    position: np.ndarray  # ENU meters
    orientation: np.ndarray  # body -> local quaternion [w, x, y, z]
    velocity: np.ndarray  # ENU m/s

    def transform(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.position)


def compass_to_yaw(heading: float) -> float:
    """Compass heading (clockwise from north) to math yaw (CCW from east)."""
    return wrap_angle(0.5 * math.pi - heading)


def yaw_to_compass(yaw: float) -> float:
    h = (0.5 * math.pi - yaw) % (2.0 * math.pi)
    return h


def fuse_heading(gnss_heading: float | None, velocity, cfg: PositioningConfig,
                 previous: float | None = None) -> float | None:
    """Blend GNSS azimuth with the direction of horizontal motion.

    Both headings use the compass convention (radians clockwise from
    north). The velocity heading's weight grows linearly with horizontal
    speed and saturates at ``heading_full_trust_speed``. Without a GNSS
    heading, the velocity heading is used above ``min_heading_speed``,
    otherwise ``previous`` is returned unchanged (None when no heading has
    ever been available). The result is wrapped to (-pi, pi].
    """
    ve = float(velocity[0])
    vn = float(velocity[1])
    speed = math.hypot(ve, vn)
    heading_v = math.atan2(ve, vn)
    if gnss_heading is None:
        if speed > cfg.min_heading_speed:
            return wrap_angle(heading_v)
        return previous
    w = min(1.0, max(0.0, speed / cfg.heading_full_trust_speed))
    s = w * math.sin(heading_v) + (1.0 - w) * math.sin(gnss_heading)
    c = w * math.cos(heading_v) + (1.0 - w) * math.cos(gnss_heading)
    if s == 0.0 and c == 0.0:
        return wrap_angle(gnss_heading)
    return wrap_angle(math.atan2(s, c))


def wgs84_to_local(anchor: Anchor, packet: GnssPacket) -> np.ndarray:
    """ENU meters of a GNSS fix relative to the anchor."""
    return geodesy.geodetic_to_enu(anchor.as_tuple(), packet.latitude,
                                   packet.longitude, packet.altitude)


class PoseEstimator:
    """Fuses GNSS and IMU packets into a pose history queryable at any time."""

    def __init__(self, config: PositioningConfig | None = None):
        self.config = config or PositioningConfig()
        self._anchor: Anchor | None = None
        self._filters: list | None = None
        self._orientation = quat_identity()
        self._have_orientation = False
        self._heading: float | None = None
        self._last_accel = np.zeros(3)
        self._last_imu_ts: int | None = None
        self._last_filter_ts: int | None = None
        self._hist_ts: list = []
        self._hist: list = []

    @property
    def anchor(self) -> Anchor | None:
        return self._anchor

    @property
    def latest_timestamp(self) -> int | None:
        return self._hist_ts[-1] if self._hist_ts else None

    def history_span(self) -> tuple | None:
        if not self._hist_ts:
            return None
        return (self._hist_ts[0], self._hist_ts[-1])

    def covers(self, timestamp: int) -> bool:
        return bool(self._hist_ts) and self._hist_ts[0] <= timestamp <= self._hist_ts[-1]

    # -- packet handlers ----------------------------------------------------

    def on_gnss(self, packet: GnssPacket) -> LocalPosition:
        cfg = self.config
        t = packet.timestamp
        self._check_order(t)
        if self._anchor is None:
            self._anchor = Anchor(packet.latitude, packet.longitude, packet.altitude)
            self._filters = [
                Kalman1D(cfg.accel_sigma, cfg.gnss_sigma,
                         position=0.0, velocity=0.0,
                         position_sigma=cfg.gnss_sigma,
                         velocity_sigma=cfg.init_velocity_sigma)
                for _ in range(3)
            ]
            self._last_filter_ts = t
            log.info("anchor set at (%.7f, %.7f, %.2f)",
                     packet.latitude, packet.longitude, packet.altitude)
        else:
            dt = (t - self._last_filter_ts) * 1e-9
            enu = wgs84_to_local(self._anchor, packet)
            for axis, f in enumerate(self._filters):
                f.predict(dt, float(self._last_accel[axis]))
                f.correct(float(enu[axis]))
            self._last_filter_ts = t
        self._update_heading(packet)
        return self._record(t)

    def on_imu(self, packet: ImuPacket) -> LocalPosition:
        t = packet.timestamp
        self._check_order(t)
        fields = np.concatenate([packet.linear_acceleration, packet.angular_velocity,
                                 packet.absolute_orientation])
        if not np.isfinite(fields).all():
            raise DataError("non-finite IMU packet at timestamp %d" % t)
        if self._last_imu_ts is None or not self._have_orientation:
            # seed roll and pitch from the unit's own attitude, keep yaw
            roll, pitch, _ = quat_to_euler(packet.absolute_orientation)
            _, _, yaw = quat_to_euler(self._orientation)
            self._orientation = quat_from_euler(roll, pitch, yaw)
            self._have_orientation = True
        else:
            dt = (t - self._last_imu_ts) * 1e-9
            if dt < 0:
                raise DataError("IMU timestamp %d precedes the previous packet" % t)
            rotvec = packet.angular_velocity * dt
            self._orientation = quat_normalize(
                quat_multiply(self._orientation, quat_from_rotvec(rotvec)))
            self._blend_roll_pitch(packet.absolute_orientation)
        self._last_imu_ts = t
        if self._anchor is not None:
            a_local = quat_rotate(self._orientation, packet.linear_acceleration)
            a_local = a_local - np.array([0.0, 0.0, self.config.gravity])
            self._last_accel = a_local
            dt_f = (t - self._last_filter_ts) * 1e-9
            for axis, f in enumerate(self._filters):
                f.predict(dt_f, float(a_local[axis]))
            self._last_filter_ts = t
        return self._record(t)

    # -- internals ----------------------------------------------------------

    def _check_order(self, t: int) -> None:
        if self._hist_ts and t < self._hist_ts[-1]:
            raise DataError("packet timestamp %d precedes the latest pose %d"
                            % (t, self._hist_ts[-1]))

    def _blend_roll_pitch(self, absolute_orientation) -> None:
        alpha = self.config.rollpitch_blend_alpha
        if alpha == 0.0:
            return
        roll_m, pitch_m, _ = quat_to_euler(absolute_orientation)
        roll, pitch, yaw = quat_to_euler(self._orientation)
        roll = roll + alpha * wrap_angle(roll_m - roll)
        pitch = pitch + alpha * (pitch_m - pitch)
        self._orientation = quat_from_euler(roll, pitch, yaw)

    def _update_heading(self, packet: GnssPacket) -> None:
        gnss_heading = None
        if packet.azimuth is not None:
            gnss_heading = math.radians(packet.azimuth)
        velocity = self._velocity()
        fused = fuse_heading(gnss_heading, velocity, self.config, previous=self._heading)
        if fused is None:
            return
        first = self._heading is None
        self._heading = fused
        yaw_target = compass_to_yaw(fused)
        roll, pitch, yaw = quat_to_euler(self._orientation)
        if first:
            yaw = yaw_target
        else:
            yaw = yaw + self.config.yaw_blend_alpha * wrap_angle(yaw_target - yaw)
        self._orientation = quat_from_euler(roll, pitch, yaw)

    def _velocity(self) -> np.ndarray:
        if self._filters is None:
            return np.zeros(3)
        return np.array([f.velocity for f in self._filters])

    def _position(self) -> np.ndarray:
        if self._filters is None:
            return np.zeros(3)
        return np.array([f.position for f in self._filters])

    def _record(self, t: int) -> LocalPosition:
        pose = LocalPosition(
            timestamp=t,
            position=self._position(),
            orientation=self._orientation.copy(),
            velocity=self._velocity(),
        )
        if self._anchor is None:
            return pose
        if self._hist_ts and self._hist_ts[-1] == t:
            self._hist[-1] = pose  # same-timestamp update replaces, keeping strict order
        else:
            self._hist_ts.append(t)
            self._hist.append(pose)
        horizon = t - int(round(self.config.pose_history_length * 1e9))
        drop = 0
        while drop < len(self._hist_ts) - 1 and self._hist_ts[drop] < horizon:
            drop += 1
        if drop:
            del self._hist_ts[:drop]
            del self._hist[:drop]
        return pose

    def estimate_pose_at(self, timestamp: int) -> LocalPosition:
        """Interpolated pose at ``timestamp``, which must lie inside the history."""
        if not self._hist_ts:
            raise ValueError("pose history is empty")
        lo, hi = self._hist_ts[0], self._hist_ts[-1]
        if not lo <= timestamp <= hi:
            raise ValueError("timestamp %d outside pose history [%d, %d]"
                             % (timestamp, lo, hi))
        idx = bisect.bisect_left(self._hist_ts, timestamp)
        if self._hist_ts[idx] == timestamp:
            return self._hist[idx]
        left = self._hist[idx - 1]
        right = self._hist[idx]
        span = right.timestamp - left.timestamp
        w = (timestamp - left.timestamp) / span
        return LocalPosition(
            timestamp=timestamp,
            position=(1.0 - w) * left.position + w * right.position,
            orientation=quat_slerp(left.orientation, right.orientation, w),
            velocity=(1.0 - w) * left.velocity + w * right.velocity,
        )
