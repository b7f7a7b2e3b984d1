"""YAML run configuration: schema, defaults, and validation.

Top-level keys::

    dataset:    path (required)
    output:     path (default "out")
    logging:    level (default "info")
    stages:     fail_check, lidar_aggregation, detection_fusion,
                ir_transfer, depth_render (all default true)
    sensors:    mapping keyed by sensor name (gnss, imu, lidar_left,
                lidar_right, camera_rgb_left, camera_rgb_right, camera_ir);
                each entry may set `extrinsic` (sensor to body frame) and,
                for cameras, must set `intrinsics`
    positioning / aggregation / fail_check / fusion: tunables, see the
                dataclasses they fill

Unknown keys are rejected with their dotted path so typos never silently
fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .aggregation import AggregationConfig
from .dataset import SensorId, SensorKind
from .errors import ConfigError
from .failcheck import FailCheckConfig
from .fusion import FusionConfig
from .geometry import CameraIntrinsics, RigidTransform, quat_identity
from .positioning import PositioningConfig

# config key -> (kind, directory label); keys equal the dataset directory names
SENSOR_NAMES = {
    "gnss": (SensorKind.GNSS_POSE, "gnss"),
    "imu": (SensorKind.IMU, "imu"),
    "lidar_left": (SensorKind.LIDAR_LEFT, "left"),
    "lidar_right": (SensorKind.LIDAR_RIGHT, "right"),
    "camera_rgb_left": (SensorKind.CAMERA_RGB_LEFT, "rgb_left"),
    "camera_rgb_right": (SensorKind.CAMERA_RGB_RIGHT, "rgb_right"),
    "camera_ir": (SensorKind.CAMERA_IR, "ir"),
}

LOG_LEVELS = ("debug", "info", "warning", "error")

STAGE_NAMES = ("fail_check", "lidar_aggregation", "detection_fusion",
               "ir_transfer", "depth_render")


@dataclass(frozen=True)
class SensorConfig:
    kind: SensorKind
    label: str
    extrinsic: RigidTransform  # sensor frame to body (IMU) frame
    intrinsics: CameraIntrinsics | None = None

    @property
    def sensor_id(self) -> SensorId:
        return SensorId(self.kind, self.label)


@dataclass
class StageFlags:
    fail_check: bool = True
    lidar_aggregation: bool = True
    detection_fusion: bool = True
    ir_transfer: bool = True
    depth_render: bool = True

    def disable(self, name: str) -> None:
        if name not in STAGE_NAMES:
            raise ConfigError("unknown stage %r; stages are: %s"
                              % (name, ", ".join(STAGE_NAMES)))
        setattr(self, name, False)


@dataclass
class PipelineConfig:
    dataset_root: Path
    output_dir: Path = Path("out")
    log_level: str = "info"
    sensors: list = field(default_factory=list)
    stages: StageFlags = field(default_factory=StageFlags)
    positioning: PositioningConfig = field(default_factory=PositioningConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    fail_check: FailCheckConfig = field(default_factory=FailCheckConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def sensor(self, kind: SensorKind) -> SensorConfig | None:
        for cfg in self.sensors:
            if cfg.kind == kind:
                return cfg
        return None

    def rgb_cameras(self) -> list:
        return [c for c in self.sensors if c.kind.is_rgb_camera]

    def transfer_source(self) -> SensorConfig | None:
        """RGB camera whose detections feed the IR transfer stage."""
        cameras = self.rgb_cameras()
        if self.fusion.transfer_source is None:
            return cameras[0] if cameras else None
        for cam in cameras:
            if cam.label == self.fusion.transfer_source:
                return cam
        raise ConfigError("fusion.transfer_source %r names no configured RGB camera"
                          % (self.fusion.transfer_source,))


# ---------------------------------------------------------------------------
# parsing helpers


def _require_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError("%s must be a mapping" % path)
    return node


def _reject_unknown(mapping: dict, allowed, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError("unknown key %s.%s" % (path, key))


def _get_float(mapping: dict, key: str, default: float, path: str) -> float:
    value = mapping.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("%s.%s must be a number" % (path, key))
    return float(value)


def _get_int(mapping: dict, key: str, default: int, path: str) -> int:
    value = mapping.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("%s.%s must be an integer" % (path, key))
    return value


def _get_bool(mapping: dict, key: str, default: bool, path: str) -> bool:
    value = mapping.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError("%s.%s must be true or false" % (path, key))
    return value


def _get_vector(mapping: dict, key: str, size: int, default, path: str):
    value = mapping.get(key)
    if value is None:
        return np.asarray(default, dtype=np.float64)
    if (not isinstance(value, list) or len(value) != size
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        raise ConfigError("%s.%s must be a list of %d numbers" % (path, key, size))
    return np.asarray(value, dtype=np.float64)


def _parse_extrinsic(node, path: str) -> RigidTransform:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, ("translation", "rotation"), path)
    translation = _get_vector(mapping, "translation", 3, (0.0, 0.0, 0.0), path)
    rotation = _get_vector(mapping, "rotation", 4, quat_identity(), path)
    try:
        return RigidTransform(rotation, translation)
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def _parse_intrinsics(node, path: str) -> CameraIntrinsics:
    if node is None:
        raise ConfigError("%s is required for cameras" % path)
    mapping = _require_mapping(node, path)
    allowed = ("width", "height", "fx", "fy", "cx", "cy", "distortion")
    _reject_unknown(mapping, allowed, path)
    for key in ("width", "height", "fx", "fy", "cx", "cy"):
        if key not in mapping:
            raise ConfigError("%s.%s is required" % (path, key))
    distortion = mapping.get("distortion")
    if distortion is not None:
        if not isinstance(distortion, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in distortion):
            raise ConfigError("%s.distortion must be a list of numbers" % path)
        if any(float(v) != 0.0 for v in distortion):
            raise ConfigError("%s.distortion: only zero coefficients are supported "
                              "(record undistorted frames)" % path)
    try:
        return CameraIntrinsics(
            fx=_get_float(mapping, "fx", 0.0, path),
            fy=_get_float(mapping, "fy", 0.0, path),
            cx=_get_float(mapping, "cx", 0.0, path),
            cy=_get_float(mapping, "cy", 0.0, path),
            width=_get_int(mapping, "width", 0, path),
            height=_get_int(mapping, "height", 0, path),
        )
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def _parse_sensors(node, path: str) -> list:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, SENSOR_NAMES, path)
    sensors = []
    for name in SENSOR_NAMES:  # fixed order keeps the config order-insensitive
        if name not in mapping:
            continue
        kind, label = SENSOR_NAMES[name]
        entry_path = "%s.%s" % (path, name)
        entry = _require_mapping(mapping[name], entry_path)
        allowed = ["extrinsic"]
        if kind.is_camera:
            allowed.append("intrinsics")
        _reject_unknown(entry, allowed, entry_path)
        extrinsic = _parse_extrinsic(entry.get("extrinsic"), entry_path + ".extrinsic")
        intrinsics = None
        if kind.is_camera:
            intrinsics = _parse_intrinsics(entry.get("intrinsics"),
                                           entry_path + ".intrinsics")
        sensors.append(SensorConfig(kind=kind, label=label,
                                    extrinsic=extrinsic, intrinsics=intrinsics))
    return sensors


def _parse_stages(node, path: str) -> StageFlags:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, STAGE_NAMES, path)
    flags = StageFlags()
    for name in STAGE_NAMES:
        setattr(flags, name, _get_bool(mapping, name, True, path))
    return flags


def _parse_positioning(node, path: str) -> PositioningConfig:
    mapping = _require_mapping(node, path)
    defaults = PositioningConfig()
    names = ("gravity", "gnss_sigma", "accel_sigma", "rollpitch_blend_alpha",
             "heading_full_trust_speed", "gnss_heading_sigma", "yaw_blend_alpha",
             "min_heading_speed", "init_velocity_sigma", "pose_history_length")
    _reject_unknown(mapping, names, path)
    kwargs = {n: _get_float(mapping, n, getattr(defaults, n), path) for n in names}
    try:
        return PositioningConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def _parse_aggregation(node, path: str) -> AggregationConfig:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, ("batch_count", "window", "voxel_leaf"), path)
    defaults = AggregationConfig()
    try:
        return AggregationConfig(
            batch_count=_get_int(mapping, "batch_count", defaults.batch_count, path),
            window=_get_float(mapping, "window", defaults.window, path),
            voxel_leaf=_get_float(mapping, "voxel_leaf", defaults.voxel_leaf, path),
        )
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def _parse_fail_check(node, path: str) -> FailCheckConfig:
    mapping = _require_mapping(node, path)
    names = ("gap_factor", "imu_accel_saturation", "lidar_min_points",
             "decay_half_life", "expected_period")
    _reject_unknown(mapping, names, path)
    defaults = FailCheckConfig()
    periods = dict(defaults.expected_period)
    override = _require_mapping(mapping.get("expected_period"), path + ".expected_period")
    _reject_unknown(override, SENSOR_NAMES, path + ".expected_period")
    for name, value in override.items():
        kind, _ = SENSOR_NAMES[name]
        periods[kind] = _get_float(override, name, 0.0, path + ".expected_period")
        if periods[kind] <= 0:
            raise ConfigError("%s.expected_period.%s must be positive" % (path, name))
    try:
        return FailCheckConfig(
            gap_factor=_get_float(mapping, "gap_factor", defaults.gap_factor, path),
            imu_accel_saturation=_get_float(mapping, "imu_accel_saturation",
                                            defaults.imu_accel_saturation, path),
            lidar_min_points=_get_int(mapping, "lidar_min_points",
                                      defaults.lidar_min_points, path),
            decay_half_life=_get_float(mapping, "decay_half_life",
                                       defaults.decay_half_life, path),
            expected_period=periods,
        )
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def _parse_fusion(node, path: str) -> FusionConfig:
    mapping = _require_mapping(node, path)
    names = ("depth_margin", "gate", "ttl", "centroid_smoothing",
             "history_length", "transfer_source")
    _reject_unknown(mapping, names, path)
    defaults = FusionConfig()
    source = mapping.get("transfer_source")
    if source is not None and not isinstance(source, str):
        raise ConfigError("%s.transfer_source must be a camera label" % path)
    try:
        return FusionConfig(
            depth_margin=_get_float(mapping, "depth_margin", defaults.depth_margin, path),
            gate=_get_float(mapping, "gate", defaults.gate, path),
            ttl=_get_float(mapping, "ttl", defaults.ttl, path),
            centroid_smoothing=_get_float(mapping, "centroid_smoothing",
                                          defaults.centroid_smoothing, path),
            history_length=_get_int(mapping, "history_length",
                                    defaults.history_length, path),
            transfer_source=source,
        )
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None


def parse_config(document: dict, base_dir: Path) -> PipelineConfig:
    """Validate a parsed YAML document; relative paths resolve against base_dir."""
    root = _require_mapping(document, "config")
    allowed = ("dataset", "output", "logging", "stages", "sensors",
               "positioning", "aggregation", "fail_check", "fusion")
    _reject_unknown(root, allowed, "config")

    dataset = _require_mapping(root.get("dataset"), "dataset")
    _reject_unknown(dataset, ("path",), "dataset")
    if "path" not in dataset or not isinstance(dataset["path"], str):
        raise ConfigError("dataset.path is required")
    dataset_root = Path(dataset["path"])
    if not dataset_root.is_absolute():
        dataset_root = base_dir / dataset_root

    output = _require_mapping(root.get("output"), "output")
    _reject_unknown(output, ("path",), "output")
    out_value = output.get("path", "out")
    if not isinstance(out_value, str):
        raise ConfigError("output.path must be a string")
    output_dir = Path(out_value)
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir

    logging_node = _require_mapping(root.get("logging"), "logging")
    _reject_unknown(logging_node, ("level",), "logging")
    level = logging_node.get("level", "info")
    if level not in LOG_LEVELS:
        raise ConfigError("logging.level must be one of: %s" % ", ".join(LOG_LEVELS))

    config = PipelineConfig(
        dataset_root=dataset_root,
        output_dir=output_dir,
        log_level=level,
        sensors=_parse_sensors(root.get("sensors"), "sensors"),
        stages=_parse_stages(root.get("stages"), "stages"),
        positioning=_parse_positioning(root.get("positioning"), "positioning"),
        aggregation=_parse_aggregation(root.get("aggregation"), "aggregation"),
        fail_check=_parse_fail_check(root.get("fail_check"), "fail_check"),
        fusion=_parse_fusion(root.get("fusion"), "fusion"),
    )
    config.transfer_source()  # validates fusion.transfer_source against the sensor set
    return config


def load_config(path) -> PipelineConfig:
    """Load and validate a pipeline config file."""
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
        return parse_config(document, path.parent)
    except ConfigError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from None
