"""Synthetic recordings with analytic ground truth.

A scenario is a closed-form trajectory plus a static scene of axis-aligned
boxes and planes. The generator emits the exact on-disk layout the dataset
reader consumes, a ready-to-run config.yaml, and ground-truth sidecars
(`truth.csv` poses, `truth_objects.csv` box centroids). LiDAR scans are
ray-cast from the continuously moving true pose across each sweep, so raw
scans carry genuine motion distortion; cameras get flat placeholder frames
plus detection boxes projected from the true geometry.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .config import SENSOR_NAMES
from .dataset import SensorKind
from .errors import ConfigError
from .geometry import CameraIntrinsics, RigidTransform, Z_MIN, quat_from_euler
from .geodesy import enu_to_geodetic
from .positioning import yaw_to_compass
from . import ply

GRAVITY = 9.81

RGB_INTRINSICS = CameraIntrinsics(fx=580.0, fy=580.0, cx=320.0, cy=240.0,
                                  width=640, height=480)
IR_INTRINSICS = CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=256.0,
                                 width=640, height=512)

# camera axes in the body frame: forward = body x, right = -y, down = -z
CAMERA_ROTATION = quat_from_euler(-0.5 * math.pi, 0.0, -0.5 * math.pi)

EXTRINSICS = {
    "gnss": RigidTransform.identity(),
    "imu": RigidTransform.identity(),
    "lidar_left": RigidTransform.identity(),
    "lidar_right": RigidTransform.from_translation((0.0, -0.5, 0.0)),
    "camera_rgb_left": RigidTransform(CAMERA_ROTATION, (0.0, 0.2, 0.0)),
    "camera_rgb_right": RigidTransform(CAMERA_ROTATION, (0.0, -0.2, 0.0)),
    "camera_ir": RigidTransform(CAMERA_ROTATION, (0.0, 0.0, 0.0)),
}

DETECTION_CONFIDENCE = 0.9


# ---------------------------------------------------------------------------
# scenario description


@dataclass(frozen=True)
class Stationary:
    pass


@dataclass(frozen=True)
class ConstantVelocity:
    velocity: tuple  # m/s, local frame

    def __post_init__(self):
        v = tuple(float(x) for x in self.velocity)
        if len(v) != 3:
            raise ValueError("velocity must have 3 components")
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True)
class Circle:
    radius: float
    angular_rate: float  # rad/s

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.angular_rate == 0:
            raise ValueError("angular_rate must be nonzero")


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple  # full extents per axis
    class_id: int

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        s = tuple(float(x) for x in self.size)
        if len(c) != 3 or len(s) != 3:
            raise ValueError("center and size must have 3 components")
        if min(s) <= 0:
            raise ValueError("box size must be positive")
        if self.class_id < 0:
            raise ValueError("negative class id")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)

    def corners(self) -> np.ndarray:
        c = np.asarray(self.center)
        h = 0.5 * np.asarray(self.size)
        signs = np.array([(sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1)
                          for sz in (-1, 1)], dtype=np.float64)
        return c + signs * h


@dataclass(frozen=True)
class Plane:
    """Infinite plane with an axis-aligned normal, e.g. axis=2 offset=0 ground."""

    axis: int
    offset: float
    class_id: int

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("plane axis must be 0, 1, or 2")
        if self.class_id < 0:
            raise ValueError("negative class id")


@dataclass(frozen=True)
class NoiseSpec:
    gnss_sigma: float = 0.0  # m, per ENU axis
    imu_accel_sigma: float = 0.0  # m/s^2
    imu_gyro_sigma: float = 0.0  # rad/s
    orientation_sigma: float = 0.0  # rad, roll/pitch of the absolute attitude
    azimuth_sigma_deg: float = 0.0

    def __post_init__(self):
        for name in ("gnss_sigma", "imu_accel_sigma", "imu_gyro_sigma",
                     "orientation_sigma", "azimuth_sigma_deg"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be non-negative" % name)


@dataclass(frozen=True)
class LidarModel:
    rings: int = 16
    points_per_ring: int = 360  # azimuth steps per sweep
    vertical_fov_deg: float = 30.0
    min_range: float = 0.5
    max_range: float = 120.0

    def __post_init__(self):
        if self.rings < 1 or self.points_per_ring < 1:
            raise ValueError("rings and points_per_ring must be at least 1")
        if not 0.0 < self.vertical_fov_deg < 180.0:
            raise ValueError("vertical_fov_deg must be in (0, 180)")
        if not 0.0 < self.min_range < self.max_range:
            raise ValueError("need 0 < min_range < max_range")


def _default_rates() -> dict:
    return {
        "gnss": 10.0,
        "imu": 100.0,
        "lidar_left": 10.0,
        "camera_rgb_left": 10.0,
        "camera_ir": 10.0,
    }


@dataclass
class ScenarioSpec:
    trajectory: object = field(default_factory=Stationary)
    duration: float = 10.0
    seed: int = 0
    rates: dict = field(default_factory=_default_rates)  # sensor name -> Hz
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lidar: LidarModel = field(default_factory=LidarModel)
    scene: list = field(default_factory=list)
    anchor: tuple = (49.2, 16.6, 250.0)  # geodetic origin of the local frame
    gnss_azimuth: bool = True  # populate the azimuth column

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not isinstance(self.trajectory, (Stationary, ConstantVelocity, Circle)):
            raise ValueError("unknown trajectory type %r" % type(self.trajectory).__name__)
        for name, rate in self.rates.items():
            if name not in SENSOR_NAMES:
                raise ValueError("unknown sensor %r in rates" % name)
            if rate <= 0:
                raise ValueError("rate of %s must be positive" % name)
        for entity in self.scene:
            if not isinstance(entity, (Box, Plane)):
                raise ValueError("scene entries must be boxes or planes")


# ---------------------------------------------------------------------------
# closed-form kinematics


def _kinematics(trajectory, t):
    """Truth state at time t: position, velocity, yaw, world accel, body rates."""
    if isinstance(trajectory, Stationary):
        return np.zeros(3), np.zeros(3), 0.0, np.zeros(3), np.zeros(3)
    if isinstance(trajectory, ConstantVelocity):
        v = np.asarray(trajectory.velocity)
        yaw = 0.0
        if math.hypot(v[0], v[1]) > 0.0:
            yaw = math.atan2(v[1], v[0])
        return v * t, v.copy(), yaw, np.zeros(3), np.zeros(3)
    r, w = trajectory.radius, trajectory.angular_rate
    theta = w * t
    pos = np.array([r * math.sin(theta), r * (1.0 - math.cos(theta)), 0.0])
    vel = np.array([r * w * math.cos(theta), r * w * math.sin(theta), 0.0])
    acc = np.array([-r * w * w * math.sin(theta), r * w * w * math.cos(theta), 0.0])
    return pos, vel, theta, acc, np.array([0.0, 0.0, w])


def ground_truth_pose(spec: ScenarioSpec, t: float) -> RigidTransform:
    """Closed-form body pose at ``t`` seconds; yaw follows the motion tangent."""
    if not 0.0 <= t <= spec.duration:
        raise ValueError("t=%r outside [0, %r]" % (t, spec.duration))
    pos, _, yaw, _, _ = _kinematics(spec.trajectory, t)
    return RigidTransform(quat_from_euler(0.0, 0.0, yaw), pos)


def ground_truth_velocity(spec: ScenarioSpec, t: float) -> np.ndarray:
    if not 0.0 <= t <= spec.duration:
        raise ValueError("t=%r outside [0, %r]" % (t, spec.duration))
    return _kinematics(spec.trajectory, t)[1]


# ---------------------------------------------------------------------------
# ray casting


def cast_rays(scene, origins: np.ndarray, directions: np.ndarray,
              min_range: float, max_range: float) -> np.ndarray:
    """Nearest-hit distances for unit rays; misses come back as +inf.

    origins/directions are (N, 3); the returned array is (N,) ray lengths
    within [min_range, max_range].
    """
    n = origins.shape[0]
    best = np.full(n, np.inf)
    for entity in scene:
        if isinstance(entity, Plane):
            d_axis = directions[:, entity.axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (entity.offset - origins[:, entity.axis]) / d_axis
            t = np.where(np.abs(d_axis) > 1e-12, t, np.inf)
        else:
            lo = np.asarray(entity.center) - 0.5 * np.asarray(entity.size)
            hi = np.asarray(entity.center) + 0.5 * np.asarray(entity.size)
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - origins) / directions
                t2 = (hi - origins) / directions
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
            # parallel rays hit the slab only if the origin lies inside it
            parallel = np.abs(directions) < 1e-12
            inside = (origins >= lo) & (origins <= hi)
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
            t_near = near.max(axis=1)
            t_far = far.min(axis=1)
            t = np.where((t_near <= t_far) & (t_far > 0.0),
                         np.where(t_near > 0.0, t_near, t_far), np.inf)
        hit = (t >= min_range) & (t <= max_range) & (t < best)
        best = np.where(hit, t, best)
    return best


def _sweep_directions(model: LidarModel) -> tuple:
    """Sensor-frame unit rays for one sweep, in acquisition order.

    Returns (directions (P*R, 3), step_index (P*R,)): the scanner steps
    through P azimuths and fires all R rings at each step.
    """
    p, r = model.points_per_ring, model.rings
    az = 2.0 * math.pi * np.arange(p) / p
    half = math.radians(0.5 * model.vertical_fov_deg)
    el = np.linspace(-half, half, r) if r > 1 else np.zeros(1)
    azg = np.repeat(az, r)
    elg = np.tile(el, p)
    dirs = np.stack([
        np.cos(elg) * np.cos(azg),
        np.cos(elg) * np.sin(azg),
        np.sin(elg),
    ], axis=1)
    return dirs, np.repeat(np.arange(p), r)


def synthesize_scan(spec: ScenarioSpec, start: float, end: float) -> tuple:
    """Ray-cast one sweep from the continuously moving true pose.

    Returns (points (N, 3) sensor frame at fire time, intensities (N,)).
    Points keep acquisition order; rays that hit nothing are dropped.
    """
    model = spec.lidar
    dirs, step = _sweep_directions(model)
    p = model.points_per_ring
    times = start + (end - start) * np.arange(p) / p
    positions = np.empty((p, 3))
    yaws = np.empty(p)
    for j, t in enumerate(times):
        pos, _, yaw, _, _ = _kinematics(spec.trajectory, t)
        positions[j] = pos
        yaws[j] = yaw
    cy, sy = np.cos(yaws), np.sin(yaws)
    # yaw-only attitude: all built-in trajectories stay level
    world_dirs = np.stack([
        cy[step] * dirs[:, 0] - sy[step] * dirs[:, 1],
        sy[step] * dirs[:, 0] + cy[step] * dirs[:, 1],
        dirs[:, 2],
    ], axis=1)
    origins = positions[step]
    dist = cast_rays(spec.scene, origins, world_dirs, model.min_range, model.max_range)
    hit = np.isfinite(dist)
    points = dirs[hit] * dist[hit, None]
    return points, np.ones(points.shape[0])


# ---------------------------------------------------------------------------
# detection projection


def project_box(box: Box, world_to_camera: RigidTransform,
                intrinsics: CameraIntrinsics) -> tuple | None:
    """Image-plane hull of a box, clipped; None if any corner is behind
    the camera or the hull misses the image."""
    cam = world_to_camera.apply(box.corners())
    if (cam[:, 2] <= Z_MIN).any():
        return None
    u = intrinsics.fx * cam[:, 0] / cam[:, 2] + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / cam[:, 2] + intrinsics.cy
    x_min = max(0.0, float(u.min()))
    x_max = min(float(intrinsics.width), float(u.max()))
    y_min = max(0.0, float(v.min()))
    y_max = min(float(intrinsics.height), float(v.max()))
    if x_min >= x_max or y_min >= y_max:
        return None
    return (x_min, y_min, x_max, y_max)


# ---------------------------------------------------------------------------
# generation


def _stream_rng(seed: int, name: str) -> np.random.Generator:
    # label-hashed substream: adding a sensor never shifts another's draws
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def _ns(t: float) -> int:
    return int(round(t * 1e9))


def _sample_times(duration: float, rate: float) -> list:
    count = int(math.floor(duration * rate + 1e-9)) + 1
    return [k / rate for k in range(count)]


def _camera_kinds() -> tuple:
    return ("camera_rgb_left", "camera_rgb_right", "camera_ir")


def _intrinsics_for(name: str) -> CameraIntrinsics:
    return IR_INTRINSICS if name == "camera_ir" else RGB_INTRINSICS


def _write_gnss(spec: ScenarioSpec, directory: Path, rate: float) -> int:
    rng = _stream_rng(spec.seed, "gnss")
    directory.mkdir(parents=True)
    rows = ["timestamp_ns,latitude_deg,longitude_deg,altitude_m,azimuth_deg"]
    for t in _sample_times(spec.duration, rate):
        pos, _, yaw, _, _ = _kinematics(spec.trajectory, t)
        noisy = pos + rng.normal(0.0, spec.noise.gnss_sigma, 3)
        lat, lon, alt = enu_to_geodetic(spec.anchor, noisy)
        if spec.gnss_azimuth:
            az = math.degrees(yaw_to_compass(yaw))
            az = (az + rng.normal(0.0, spec.noise.azimuth_sigma_deg)) % 360.0
            az_text = "%.9f" % az
        else:
            az_text = ""
        rows.append("%d,%.12f,%.12f,%.6f,%s" % (_ns(t), lat, lon, alt, az_text))
    (directory / "pose.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return len(rows) - 1


def _write_imu(spec: ScenarioSpec, directory: Path, rate: float) -> int:
    rng = _stream_rng(spec.seed, "imu")
    directory.mkdir(parents=True)
    rows = ["timestamp_ns,ax,ay,az,gx,gy,gz,qw,qx,qy,qz"]
    for t in _sample_times(spec.duration, rate):
        _, _, yaw, acc_world, omega = _kinematics(spec.trajectory, t)
        specific = acc_world + np.array([0.0, 0.0, GRAVITY])
        cy, sy = math.cos(yaw), math.sin(yaw)
        # rotate into the body frame (yaw-only attitude)
        body = np.array([
            cy * specific[0] + sy * specific[1],
            -sy * specific[0] + cy * specific[1],
            specific[2],
        ])
        body = body + rng.normal(0.0, spec.noise.imu_accel_sigma, 3)
        gyro = omega + rng.normal(0.0, spec.noise.imu_gyro_sigma, 3)
        roll, pitch = rng.normal(0.0, spec.noise.orientation_sigma, 2)
        q = quat_from_euler(roll, pitch, yaw)
        rows.append("%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.12f,%.12f,%.12f,%.12f"
                    % (_ns(t), body[0], body[1], body[2], gyro[0], gyro[1], gyro[2],
                       q[0], q[1], q[2], q[3]))
    (directory / "imu.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return len(rows) - 1


def _write_lidar(spec: ScenarioSpec, directory: Path, rate: float) -> int:
    (directory / "scans").mkdir(parents=True)
    period = 1.0 / rate
    count = int(math.floor(spec.duration * rate + 1e-9))
    rows = ["timestamp_start_ns,timestamp_end_ns,filename"]
    for k in range(count):
        start, end = k * period, (k + 1) * period
        points, intensities = synthesize_scan(spec, start, end)
        filename = "%06d.ply" % k
        ply.write_points(directory / "scans" / filename, points, intensities)
        rows.append("%d,%d,%s" % (_ns(start), _ns(end), filename))
    (directory / "timestamps.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return count


def _placeholder_png(name: str, intrinsics: CameraIntrinsics) -> bytes:
    import io

    shape = (intrinsics.height, intrinsics.width)
    if name != "camera_ir":
        shape = shape + (3,)
    image = Image.fromarray(np.full(shape, 128, dtype=np.uint8))
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def _write_camera(spec: ScenarioSpec, directory: Path, name: str, rate: float) -> int:
    (directory / "frames").mkdir(parents=True)
    intrinsics = _intrinsics_for(name)
    png = _placeholder_png(name, intrinsics)
    extrinsic = EXTRINSICS[name]
    boxes = [e for e in spec.scene if isinstance(e, Box)]
    rows = ["timestamp_ns,filename"]
    det_rows = ["timestamp_ns,x_min,y_min,x_max,y_max,class_id,confidence"]
    for seq, t in enumerate(_sample_times(spec.duration, rate)):
        filename = "%06d.png" % seq
        (directory / "frames" / filename).write_bytes(png)
        rows.append("%d,%s" % (_ns(t), filename))
        if name == "camera_ir":
            continue
        world_to_camera = ground_truth_pose(spec, t).compose(extrinsic).inverse()
        for box in boxes:
            bbox = project_box(box, world_to_camera, intrinsics)
            if bbox is None:
                continue
            det_rows.append("%d,%.6f,%.6f,%.6f,%.6f,%d,%.2f"
                            % (_ns(t), bbox[0], bbox[1], bbox[2], bbox[3],
                               box.class_id, DETECTION_CONFIDENCE))
    (directory / "timestamps.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if name != "camera_ir":
        (directory / "detections.csv").write_text("\n".join(det_rows) + "\n",
                                                  encoding="utf-8")
    return len(rows) - 1


def _write_truth(spec: ScenarioSpec, out_root: Path) -> None:
    stamps = set()
    for name, rate in spec.rates.items():
        kind = SENSOR_NAMES[name][0]
        if kind.is_lidar:
            period = 1.0 / rate
            count = int(math.floor(spec.duration * rate + 1e-9))
            stamps.update(_ns((k + 1) * period) for k in range(count))
        else:
            stamps.update(_ns(t) for t in _sample_times(spec.duration, rate))
    rows = ["timestamp_ns,x,y,z,vx,vy,vz,qw,qx,qy,qz"]
    for ts in sorted(stamps):
        t = ts * 1e-9
        pos, vel, yaw, _, _ = _kinematics(spec.trajectory, t)
        q = quat_from_euler(0.0, 0.0, yaw)
        rows.append("%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.12f,%.12f,%.12f,%.12f"
                    % (ts, pos[0], pos[1], pos[2], vel[0], vel[1], vel[2],
                       q[0], q[1], q[2], q[3]))
    (out_root / "truth.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    obj_rows = ["class_id,x,y,z"]
    for entity in spec.scene:
        if isinstance(entity, Box):
            obj_rows.append("%d,%.6f,%.6f,%.6f" % (entity.class_id, entity.center[0],
                                                   entity.center[1], entity.center[2]))
    (out_root / "truth_objects.csv").write_text("\n".join(obj_rows) + "\n",
                                                encoding="utf-8")


def _config_document(spec: ScenarioSpec) -> dict:
    sensors: dict = {}
    for name in SENSOR_NAMES:
        if name not in spec.rates:
            continue
        kind = SENSOR_NAMES[name][0]
        entry: dict = {}
        extrinsic = EXTRINSICS[name]
        entry["extrinsic"] = {
            "translation": [float(x) for x in extrinsic.translation],
            "rotation": [float(x) for x in extrinsic.rotation],
        }
        if kind.is_camera:
            intr = _intrinsics_for(name)
            entry["intrinsics"] = {
                "width": intr.width, "height": intr.height,
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            }
        sensors[name] = entry
    document = {
        "dataset": {"path": "."},
        "output": {"path": "out"},
        "sensors": sensors,
        "fail_check": {
            "expected_period": {name: 1.0 / rate for name, rate in spec.rates.items()},
        },
    }
    if spec.noise.gnss_sigma > 0:
        document["positioning"] = {"gnss_sigma": float(spec.noise.gnss_sigma)}
    return document


def generate_scenario(spec: ScenarioSpec, out_root) -> dict:
    """Write a full synthetic recording; returns per-sensor record counts."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name in SENSOR_NAMES:
        if name not in spec.rates:
            continue
        rate = spec.rates[name]
        kind, label = SENSOR_NAMES[name]
        if kind == SensorKind.GNSS_POSE:
            counts[name] = _write_gnss(spec, out_root / "gnss", rate)
        elif kind == SensorKind.IMU:
            counts[name] = _write_imu(spec, out_root / "imu", rate)
        elif kind.is_lidar:
            counts[name] = _write_lidar(spec, out_root / ("lidar_%s" % label), rate)
        else:
            counts[name] = _write_camera(spec, out_root / ("camera_%s" % label),
                                         name, rate)
    _write_truth(spec, out_root)
    with open(out_root / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(_config_document(spec), fh, sort_keys=True)
    return counts


# ---------------------------------------------------------------------------
# scenario spec files


def _spec_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError("%s must be a mapping" % path)
    return node


def _spec_number(mapping, key, default, path) -> float:
    value = mapping.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("%s.%s must be a number" % (path, key))
    return float(value)


def _spec_reject(mapping: dict, allowed, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError("unknown key %s.%s" % (path, key))


def _parse_trajectory(node) -> object:
    mapping = _spec_mapping(node, "trajectory")
    kind = mapping.get("kind", "stationary")
    if kind == "stationary":
        _spec_reject(mapping, ("kind",), "trajectory")
        return Stationary()
    if kind == "constant_velocity":
        _spec_reject(mapping, ("kind", "velocity"), "trajectory")
        velocity = mapping.get("velocity")
        if not isinstance(velocity, list) or len(velocity) != 3:
            raise ConfigError("trajectory.velocity must be a list of 3 numbers")
        return ConstantVelocity(tuple(float(v) for v in velocity))
    if kind == "circle":
        _spec_reject(mapping, ("kind", "radius", "angular_rate"), "trajectory")
        return Circle(radius=_spec_number(mapping, "radius", 0.0, "trajectory"),
                      angular_rate=_spec_number(mapping, "angular_rate", 0.0, "trajectory"))
    raise ConfigError("trajectory.kind must be stationary, constant_velocity, or circle")


def _parse_scene(node) -> list:
    if node is None:
        return []
    if not isinstance(node, list):
        raise ConfigError("scene must be a list")
    scene = []
    for i, raw in enumerate(node):
        path = "scene[%d]" % i
        entry = _spec_mapping(raw, path)
        kind = entry.get("kind")
        try:
            if kind == "box":
                _spec_reject(entry, ("kind", "center", "size", "class_id"), path)
                scene.append(Box(center=tuple(entry.get("center", ())),
                                 size=tuple(entry.get("size", ())),
                                 class_id=int(entry.get("class_id", 0))))
            elif kind == "plane":
                _spec_reject(entry, ("kind", "axis", "offset", "class_id"), path)
                scene.append(Plane(axis=int(entry.get("axis", 2)),
                                   offset=_spec_number(entry, "offset", 0.0, path),
                                   class_id=int(entry.get("class_id", 0))))
            else:
                raise ConfigError("%s.kind must be box or plane" % path)
        except (TypeError, ValueError) as exc:
            raise ConfigError("%s: %s" % (path, exc)) from None
    return scene


def load_scenario_spec(path) -> ScenarioSpec:
    """Load a scenario description from YAML."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("cannot read %s: %s" % (path, exc)) from exc
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError("%s:%d: %s" % (path, mark.line + 1,
                                             getattr(exc, "problem", "parse error"))) from None
        raise ConfigError("%s: %s" % (path, exc)) from None
    try:
        return parse_scenario_spec(document)
    except ConfigError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def parse_scenario_spec(document) -> ScenarioSpec:
    root = _spec_mapping(document, "spec")
    allowed = ("trajectory", "duration", "seed", "rates", "noise", "lidar",
               "scene", "anchor", "gnss_azimuth")
    _spec_reject(root, allowed, "spec")

    rates = _spec_mapping(root.get("rates"), "rates") or _default_rates()
    _spec_reject(rates, SENSOR_NAMES, "rates")
    rates = {name: _spec_number(rates, name, 0.0, "rates") for name in rates}

    noise_map = _spec_mapping(root.get("noise"), "noise")
    noise_names = ("gnss_sigma", "imu_accel_sigma", "imu_gyro_sigma",
                   "orientation_sigma", "azimuth_sigma_deg")
    _spec_reject(noise_map, noise_names, "noise")
    noise = NoiseSpec(**{n: _spec_number(noise_map, n, 0.0, "noise") for n in noise_names})

    lidar_map = _spec_mapping(root.get("lidar"), "lidar")
    lidar_defaults = LidarModel()
    _spec_reject(lidar_map, ("rings", "points_per_ring", "vertical_fov_deg",
                             "min_range", "max_range"), "lidar")
    lidar = LidarModel(
        rings=int(_spec_number(lidar_map, "rings", lidar_defaults.rings, "lidar")),
        points_per_ring=int(_spec_number(lidar_map, "points_per_ring",
                                         lidar_defaults.points_per_ring, "lidar")),
        vertical_fov_deg=_spec_number(lidar_map, "vertical_fov_deg",
                                      lidar_defaults.vertical_fov_deg, "lidar"),
        min_range=_spec_number(lidar_map, "min_range", lidar_defaults.min_range, "lidar"),
        max_range=_spec_number(lidar_map, "max_range", lidar_defaults.max_range, "lidar"),
    )

    anchor = root.get("anchor", [49.2, 16.6, 250.0])
    if not isinstance(anchor, list) or len(anchor) != 3:
        raise ConfigError("anchor must be [latitude, longitude, altitude]")
    azimuth = root.get("gnss_azimuth", True)
    if not isinstance(azimuth, bool):
        raise ConfigError("gnss_azimuth must be true or false")

    try:
        return ScenarioSpec(
            trajectory=_parse_trajectory(root.get("trajectory")),
            duration=_spec_number(root, "duration", 10.0, "spec"),
            seed=int(_spec_number(root, "seed", 0, "spec")),
            rates=rates,
            noise=noise,
            lidar=lidar,
            scene=_parse_scene(root.get("scene")),
            anchor=tuple(float(a) for a in anchor),
            gnss_azimuth=azimuth,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
