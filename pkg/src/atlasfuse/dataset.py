"""On-disk recording layout, per-sensor loaders, and the timestamp multiplexer.

A recording root contains one directory per sensor::

    gnss/pose.csv                timestamp_ns,latitude_deg,longitude_deg,altitude_m,azimuth_deg
    imu/imu.csv                  timestamp_ns,ax,ay,az,gx,gy,gz,qw,qx,qy,qz
    lidar_<label>/timestamps.csv timestamp_start_ns,timestamp_end_ns,filename
    lidar_<label>/scans/*.ply    binary little-endian, float32 x,y,z,intensity
    camera_<label>/timestamps.csv timestamp_ns,filename
    camera_<label>/frames/*.png
    camera_<label>/detections.csv timestamp_ns,x_min,y_min,x_max,y_max,class_id,confidence

CSV files are UTF-8 with a header row. Timestamps are integer nanoseconds
and must be non-decreasing within each stream. Row indices are read at
open; image and PLY payloads are read only when a packet is emitted.
LiDAR packets are merged into the global timeline keyed by scan end.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import ply
from .errors import DataError

log = logging.getLogger(__name__)


class SensorKind(enum.IntEnum):
    """Sensor kinds; enum order is the merge tie-break order."""

    GNSS_POSE = 0
    IMU = 1
    LIDAR_LEFT = 2
    LIDAR_RIGHT = 3
    CAMERA_RGB_LEFT = 4
    CAMERA_RGB_RIGHT = 5
    CAMERA_IR = 6

    @property
    def is_lidar(self) -> bool:
        return self in (SensorKind.LIDAR_LEFT, SensorKind.LIDAR_RIGHT)

    @property
    def is_camera(self) -> bool:
        return self in (
            SensorKind.CAMERA_RGB_LEFT,
            SensorKind.CAMERA_RGB_RIGHT,
            SensorKind.CAMERA_IR,
        )

    @property
    def is_rgb_camera(self) -> bool:
        return self in (SensorKind.CAMERA_RGB_LEFT, SensorKind.CAMERA_RGB_RIGHT)


@dataclass(frozen=True, order=True)
class SensorId:
    kind: SensorKind
    label: str


def sensor_directory(sensor: SensorId) -> str:
    """Directory name for a sensor inside the recording root."""
    if sensor.kind == SensorKind.GNSS_POSE:
        return "gnss"
    if sensor.kind == SensorKind.IMU:
        return "imu"
    if sensor.kind.is_lidar:
        return "lidar_%s" % sensor.label
    return "camera_%s" % sensor.label


# ---------------------------------------------------------------------------
# packet payloads


@dataclass(frozen=True)
class GnssPacket:
    timestamp: int
    latitude: float
    longitude: float
    altitude: float
    azimuth: float | None  # degrees clockwise from true north, [0, 360)

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError("latitude %r outside [-90, 90]" % (self.latitude,))
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError("longitude %r outside [-180, 180]" % (self.longitude,))
        if self.azimuth is not None and not (0.0 <= self.azimuth < 360.0):
            raise ValueError("azimuth %r outside [0, 360)" % (self.azimuth,))


@dataclass(frozen=True)
class ImuPacket:
    timestamp: int
    linear_acceleration: np.ndarray  # body frame, m/s^2, gravity included
    angular_velocity: np.ndarray  # body frame, rad/s
    absolute_orientation: np.ndarray  # unit quaternion [w, x, y, z]

    def __post_init__(self):
        a = np.asarray(self.linear_acceleration, dtype=np.float64)
        g = np.asarray(self.angular_velocity, dtype=np.float64)
        q = np.asarray(self.absolute_orientation, dtype=np.float64)
        if a.shape != (3,) or g.shape != (3,) or q.shape != (4,):
            raise ValueError("malformed IMU packet fields")
        n = math.sqrt(float(q @ q))
        if not math.isfinite(n) or abs(n - 1.0) > 1e-3:
            raise ValueError("absolute orientation norm %r too far from 1" % (n,))
        object.__setattr__(self, "linear_acceleration", a)
        object.__setattr__(self, "angular_velocity", g)
        object.__setattr__(self, "absolute_orientation", q / n)


@dataclass(frozen=True)
class Detection2D:
    """Axis-aligned 2D bounding box in pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: int
    confidence: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("degenerate bbox")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence %r outside [0, 1]" % (self.confidence,))
        if self.class_id < 0:
            raise ValueError("negative class id")

    def center(self) -> tuple:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def intersects_image(self, width: int, height: int) -> bool:
        return self.x_max > 0.0 and self.y_max > 0.0 and self.x_min < width and self.y_min < height


@dataclass(frozen=True)
class LidarScan:
    """One sweep. ``start/end`` bound point acquisition times; end is expected
    to be greater than start (violations are surfaced by the fail checker,
    not rejected at load)."""

    sensor: SensorId
    start_timestamp: int
    end_timestamp: int
    points: np.ndarray  # (N, 3) float64, sensor frame at each point's fire time
    intensities: np.ndarray  # (N,) float64

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        i = np.asarray(self.intensities, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or i.shape != (p.shape[0],):
            raise ValueError("malformed scan arrays")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "intensities", i)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CameraFrame:
    sensor: SensorId
    timestamp: int
    image_path: Path
    image: np.ndarray | None  # filled when the packet is emitted
    detections: tuple
    seq: int  # index of the frame within its stream


@dataclass(frozen=True)
class SensorPacket:
    """One multiplexed sample; ``timestamp`` is the merge key."""

    sensor: SensorId
    timestamp: int
    data: object


# ---------------------------------------------------------------------------
# CSV helpers


def _read_csv(path: Path, columns: tuple) -> list:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError("cannot open %s: %s" % (path, exc)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("%s: missing header row" % path) from None
        if tuple(header) != columns:
            raise DataError("%s: expected header %s, got %s" % (path, list(columns), header))
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise DataError("%s:%d: expected %d fields, got %d"
                                % (path, lineno, len(columns), len(row)))
            rows.append((lineno, row))
    return rows


def _int_field(path, lineno, name, value) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError("%s:%d: bad %s %r" % (path, lineno, name, value)) from None


def _float_field(path, lineno, name, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError("%s:%d: bad %s %r" % (path, lineno, name, value)) from None


def _check_monotonic(path, sensor: SensorId, stamps: list) -> None:
    for i in range(1, len(stamps)):
        if stamps[i] < stamps[i - 1]:
            raise DataError(
                "%s: timestamps of sensor %s/%s decrease at row %d"
                % (path, sensor.kind.name.lower(), sensor.label, i + 2)
            )


# ---------------------------------------------------------------------------
# loaders


class PacketLoader:
    """Per-sensor stream: peek the next timestamp, then emit the packet."""

    sensor_id: SensorId

    def peek_timestamp(self) -> int | None:
        raise NotImplementedError

    def next_packet(self) -> SensorPacket | None:
        raise NotImplementedError


class InMemoryLoader(PacketLoader):
    """Loader over a pre-built packet list (testing and synthetic feeds)."""

    def __init__(self, sensor_id: SensorId, packets):
        self.sensor_id = sensor_id
        self._packets = list(packets)
        _check_monotonic("<memory>", sensor_id, [p.timestamp for p in self._packets])
        self._pos = 0

    def peek_timestamp(self):
        if self._pos >= len(self._packets):
            return None
        return self._packets[self._pos].timestamp

    def next_packet(self):
        if self._pos >= len(self._packets):
            return None
        pkt = self._packets[self._pos]
        self._pos += 1
        return pkt


class GnssLoader(InMemoryLoader):
    COLUMNS = ("timestamp_ns", "latitude_deg", "longitude_deg", "altitude_m", "azimuth_deg")

    def __init__(self, sensor_id: SensorId, directory: Path):
        path = directory / "pose.csv"
        packets = []
        for lineno, row in _read_csv(path, self.COLUMNS):
            t = _int_field(path, lineno, "timestamp", row[0])
            azimuth = None
            if row[4].strip() != "":
                azimuth = _float_field(path, lineno, "azimuth", row[4])
            try:
                data = GnssPacket(
                    timestamp=t,
                    latitude=_float_field(path, lineno, "latitude", row[1]),
                    longitude=_float_field(path, lineno, "longitude", row[2]),
                    altitude=_float_field(path, lineno, "altitude", row[3]),
                    azimuth=azimuth,
                )
            except ValueError as exc:
                raise DataError("%s:%d: %s" % (path, lineno, exc)) from None
            packets.append(SensorPacket(sensor_id, t, data))
        super().__init__(sensor_id, packets)


class ImuLoader(InMemoryLoader):
    COLUMNS = ("timestamp_ns", "ax", "ay", "az", "gx", "gy", "gz", "qw", "qx", "qy", "qz")

    def __init__(self, sensor_id: SensorId, directory: Path):
        path = directory / "imu.csv"
        packets = []
        for lineno, row in _read_csv(path, self.COLUMNS):
            t = _int_field(path, lineno, "timestamp", row[0])
            vals = [_float_field(path, lineno, self.COLUMNS[i], row[i]) for i in range(1, 11)]
            try:
                data = ImuPacket(
                    timestamp=t,
                    linear_acceleration=np.array(vals[0:3]),
                    angular_velocity=np.array(vals[3:6]),
                    absolute_orientation=np.array(vals[6:10]),
                )
            except ValueError as exc:
                raise DataError("%s:%d: %s" % (path, lineno, exc)) from None
            packets.append(SensorPacket(sensor_id, t, data))
        super().__init__(sensor_id, packets)


class LidarLoader(PacketLoader):
    COLUMNS = ("timestamp_start_ns", "timestamp_end_ns", "filename")

    def __init__(self, sensor_id: SensorId, directory: Path):
        self.sensor_id = sensor_id
        self._directory = directory
        path = directory / "timestamps.csv"
        self._rows = []
        for lineno, row in _read_csv(path, self.COLUMNS):
            start = _int_field(path, lineno, "start timestamp", row[0])
            end = _int_field(path, lineno, "end timestamp", row[1])
            self._rows.append((start, end, row[2]))
        _check_monotonic(path, sensor_id, [r[1] for r in self._rows])
        self._pos = 0

    def peek_timestamp(self):
        if self._pos >= len(self._rows):
            return None
        return self._rows[self._pos][1]

    def next_packet(self):
        if self._pos >= len(self._rows):
            return None
        start, end, filename = self._rows[self._pos]
        self._pos += 1
        scan_path = self._directory / "scans" / filename
        try:
            points, intensities = ply.read_points(scan_path)
        except DataError as exc:
            raise DataError(
                "sensor %s timestamp %d: %s" % (self.sensor_id.label, end, exc)
            ) from exc
        scan = LidarScan(self.sensor_id, start, end, points, intensities)
        return SensorPacket(self.sensor_id, end, scan)


class CameraLoader(PacketLoader):
    COLUMNS = ("timestamp_ns", "filename")
    DET_COLUMNS = ("timestamp_ns", "x_min", "y_min", "x_max", "y_max", "class_id", "confidence")

    def __init__(self, sensor_id: SensorId, directory: Path, width: int, height: int):
        self.sensor_id = sensor_id
        self._directory = directory
        self._width = width
        self._height = height
        path = directory / "timestamps.csv"
        self._rows = []
        for lineno, row in _read_csv(path, self.COLUMNS):
            self._rows.append((_int_field(path, lineno, "timestamp", row[0]), row[1]))
        _check_monotonic(path, sensor_id, [r[0] for r in self._rows])
        self._detections = self._load_detections(directory / "detections.csv",
                                                 {r[0] for r in self._rows})
        self._pos = 0

    def _load_detections(self, path: Path, frame_stamps: set) -> dict:
        # detections.csv is optional (IR cameras usually have none)
        if not path.exists():
            return {}
        by_stamp: dict = {}
        for lineno, row in _read_csv(path, self.DET_COLUMNS):
            t = _int_field(path, lineno, "timestamp", row[0])
            if t not in frame_stamps:
                raise DataError("%s:%d: detection timestamp %d matches no frame"
                                % (path, lineno, t))
            try:
                det = Detection2D(
                    x_min=_float_field(path, lineno, "x_min", row[1]),
                    y_min=_float_field(path, lineno, "y_min", row[2]),
                    x_max=_float_field(path, lineno, "x_max", row[3]),
                    y_max=_float_field(path, lineno, "y_max", row[4]),
                    class_id=_int_field(path, lineno, "class_id", row[5]),
                    confidence=_float_field(path, lineno, "confidence", row[6]),
                )
            except ValueError as exc:
                raise DataError("%s:%d: %s" % (path, lineno, exc)) from None
            if not det.intersects_image(self._width, self._height):
                raise DataError("%s:%d: bbox does not intersect the %dx%d image"
                                % (path, lineno, self._width, self._height))
            by_stamp.setdefault(t, []).append(det)
        return by_stamp

    def peek_timestamp(self):
        if self._pos >= len(self._rows):
            return None
        return self._rows[self._pos][0]

    def next_packet(self):
        if self._pos >= len(self._rows):
            return None
        seq = self._pos
        t, filename = self._rows[self._pos]
        self._pos += 1
        image_path = self._directory / "frames" / filename
        try:
            with Image.open(image_path) as im:
                image = np.asarray(im)
        except (OSError, UnidentifiedImageError) as exc:
            raise DataError(
                "sensor %s timestamp %d: cannot read %s: %s"
                % (self.sensor_id.label, t, image_path, exc)
            ) from exc
        if image.shape[1] != self._width or image.shape[0] != self._height:
            raise DataError(
                "sensor %s timestamp %d: image %s is %dx%d, configured resolution is %dx%d"
                % (self.sensor_id.label, t, image_path, image.shape[1], image.shape[0],
                   self._width, self._height)
            )
        frame = CameraFrame(
            sensor=self.sensor_id,
            timestamp=t,
            image_path=image_path,
            image=image,
            detections=tuple(self._detections.get(t, ())),
            seq=seq,
        )
        return SensorPacket(self.sensor_id, t, frame)


# ---------------------------------------------------------------------------
# multiplexer


class DatasetReader:
    """Merges per-sensor streams into one non-decreasing timeline.

    Ties are broken by sensor kind (gnss, imu, lidar left/right, cameras)
    and then label, so replay order is a pure function of the recording.
    """

    def __init__(self, loaders):
        self._loaders = sorted(loaders, key=lambda l: (l.sensor_id.kind.value, l.sensor_id.label))
        if len({l.sensor_id for l in self._loaders}) != len(self._loaders):
            raise DataError("duplicate sensor ids in the loader set")

    @property
    def sensors(self) -> list:
        return [l.sensor_id for l in self._loaders]

    def next_packet(self) -> SensorPacket | None:
        best = None
        best_t = None
        for loader in self._loaders:
            t = loader.peek_timestamp()
            if t is None:
                continue
            if best_t is None or t < best_t:
                best = loader
                best_t = t
        if best is None:
            return None
        return best.next_packet()

    def __iter__(self):
        while True:
            pkt = self.next_packet()
            if pkt is None:
                return
            yield pkt


def open_dataset(root, config) -> DatasetReader:
    """Open a recording under ``root`` with the sensor set from ``config``.

    Every configured sensor must have its directory, and every sensor-like
    directory must be configured (calibration is required to interpret it).
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError("recording root %s does not exist" % root)
    expected = {}
    missing = []
    for sensor_cfg in config.sensors:
        sensor = SensorId(sensor_cfg.kind, sensor_cfg.label)
        directory = root / sensor_directory(sensor)
        expected[directory.name] = (sensor, sensor_cfg)
        if not directory.is_dir():
            missing.append(directory.name)
    if missing:
        raise DataError("recording %s is missing sensor directories: %s"
                        % (root, ", ".join(sorted(missing))))
    for child in sorted(p.name for p in root.iterdir() if p.is_dir()):
        if child in expected:
            continue
        if child in ("gnss", "imu") or child.startswith(("lidar_", "camera_")):
            raise DataError("sensor directory %s/%s has no calibration entry in the config"
                            % (root, child))
    loaders = []
    for name in sorted(expected):
        sensor, sensor_cfg = expected[name]
        directory = root / name
        if sensor.kind == SensorKind.GNSS_POSE:
            loaders.append(GnssLoader(sensor, directory))
        elif sensor.kind == SensorKind.IMU:
            loaders.append(ImuLoader(sensor, directory))
        elif sensor.kind.is_lidar:
            loaders.append(LidarLoader(sensor, directory))
        else:
            intr = sensor_cfg.intrinsics
            loaders.append(CameraLoader(sensor, directory, intr.width, intr.height))
    if not loaders:
        raise DataError("recording %s has no sensors configured" % root)
    return DatasetReader(loaders)
