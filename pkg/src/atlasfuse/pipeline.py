"""Single-threaded replay loop routing each packet to its processing stage.

Packets arrive in global timestamp order. GNSS and IMU packets update the
pose estimator immediately; LiDAR scans and camera frames wait in a FIFO
until the pose history covers their timestamps, then run through
aggregation, fusion, transfer, and rendering. Packets whose timestamps
precede the first pose can never be processed and are skipped with a
warning.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import ply
from .aggregation import PointCloudAggregator, downsample, split_into_batches
from .config import PipelineConfig
from .dataset import (
    CameraFrame,
    GnssPacket,
    ImuPacket,
    LidarScan,
    SensorId,
    SensorKind,
    SensorPacket,
    open_dataset,
)
from .errors import DataError
from .failcheck import FailChecker
from .fusion import (
    ObjectsAggregator,
    detection_to_frustum,
    median_depth_in_bbox,
    project_cloud_to_camera,
)
from .localmap import LocalMap, write_depth_png, write_yolo_annotations
from .positioning import PoseEstimator
from .reproject import frustum_frontal_plane, nearest_frame, render_depth_image, reproject_quad

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Bookkeeping for one replay."""

    packet_counts: dict = field(default_factory=dict)  # SensorId -> packets read
    anomaly_count: int = 0
    skipped_packets: int = 0
    frames_written: int = 0
    wall_seconds: float = 0.0

    @property
    def total_packets(self) -> int:
        return sum(self.packet_counts.values())


class _Run:
    def __init__(self, config: PipelineConfig, until: int | None,
                 snapshot_every: float | None):
        self.config = config
        self.until = until
        self.snapshot_interval = snapshot_every
        self.report = RunReport()
        self.estimator = PoseEstimator(config.positioning)
        self.checker = FailChecker(config.fail_check)
        for sensor_cfg in config.sensors:
            self.checker.register(sensor_cfg.sensor_id)
        self.aggregator = PointCloudAggregator()
        self.objects = ObjectsAggregator(config.fusion)
        self.local_map = LocalMap()
        self.deferred: deque = deque()
        self.last_snapshot: int | None = None
        transfer = config.transfer_source()
        self.transfer_source_id = transfer.sensor_id if transfer else None
        self.rgb_frame_stamps: list = []
        self.rgb_frame_frustums: list = []

        self.out = Path(config.output_dir)
        (self.out / "ir_annotations").mkdir(parents=True, exist_ok=True)
        (self.out / "depth").mkdir(parents=True, exist_ok=True)
        self._trajectory = open(self.out / "trajectory.csv", "w", encoding="utf-8")
        self._trajectory.write("timestamp_ns,x,y,z,vx,vy,vz,qw,qx,qy,qz\n")
        self._objects_csv = open(self.out / "objects.csv", "w", encoding="utf-8")
        self._objects_csv.write("timestamp_ns,object_id,class_id,x,y,z,vx,vy,vz\n")
        self._failcheck_csv = open(self.out / "failcheck.csv", "w", encoding="utf-8")
        self._failcheck_csv.write("timestamp_ns,sensor,anomaly,detail,reliability\n")

    def close(self) -> None:
        self._trajectory.close()
        self._objects_csv.close()
        self._failcheck_csv.close()

    # -- helpers -------------------------------------------------------------

    def _sensor_name(self, sensor: SensorId) -> str:
        return "%s/%s" % (sensor.kind.name.lower(), sensor.label)

    def _provenance_error(self, sensor: SensorId, timestamp: int, exc: Exception) -> DataError:
        if isinstance(exc, DataError):
            return exc
        return DataError("sensor %s timestamp %d: %s"
                         % (self._sensor_name(sensor), timestamp, exc))

    def _write_trajectory(self, pose) -> None:
        p, v, q = pose.position, pose.velocity, pose.orientation
        self._trajectory.write(
            "%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n"
            % (pose.timestamp, p[0], p[1], p[2], v[0], v[1], v[2],
               q[0], q[1], q[2], q[3]))

    def _write_objects(self, timestamp: int) -> None:
        for obj in self.objects.objects:
            c, v = obj.centroid, obj.velocity
            self._objects_csv.write(
                "%d,%d,%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n"
                % (timestamp, obj.id, obj.class_id, c[0], c[1], c[2], v[0], v[1], v[2]))

    def _ingest_failcheck(self, packet: SensorPacket) -> None:
        if not self.config.stages.fail_check:
            return
        anomalies = self.checker.ingest(packet)
        if not anomalies:
            return
        self.report.anomaly_count += len(anomalies)
        score = self.checker.reliability(packet.sensor, packet.timestamp)
        for a in anomalies:
            log.warning("anomaly on %s at %d: %s (%s)",
                        self._sensor_name(a.sensor), a.timestamp, a.kind, a.detail)
            self._failcheck_csv.write(
                "%d,%s,%s,%s,%.6f\n"
                % (a.timestamp, self._sensor_name(a.sensor), a.kind,
                   a.detail.replace(",", ";"), score.value))

    def _camera_pose(self, sensor_cfg, timestamp: int):
        body = self.estimator.estimate_pose_at(timestamp).transform()
        camera_to_local = body.compose(sensor_cfg.extrinsic)
        return camera_to_local, camera_to_local.inverse()

    def _maybe_snapshot(self, now: int) -> None:
        if self.snapshot_interval is None:
            return
        interval_ns = int(round(self.snapshot_interval * 1e9))
        if self.last_snapshot is not None and now - self.last_snapshot < interval_ns:
            return
        self.last_snapshot = now
        points, intensities = self.aggregator.aggregated_world_cloud()
        path = self.out / ("aggregated_%d.ply" % now)
        ply.write_points(path, points, intensities)
        self.report.frames_written += 1
        log.info("wrote %s (%d points)", path.name, points.shape[0])

    # -- dispatch ------------------------------------------------------------

    def handle(self, packet: SensorPacket) -> None:
        sensor = packet.sensor
        self.report.packet_counts[sensor] = self.report.packet_counts.get(sensor, 0) + 1
        self._ingest_failcheck(packet)
        data = packet.data
        try:
            if isinstance(data, GnssPacket):
                pose = self.estimator.on_gnss(data)
                if self.estimator.anchor is not None:
                    self._write_trajectory(pose)
                    self.local_map.update_pose(pose)
            elif isinstance(data, ImuPacket):
                pose = self.estimator.on_imu(data)
                if self.estimator.anchor is not None:
                    self._write_trajectory(pose)
                    self.local_map.update_pose(pose)
            elif isinstance(data, (LidarScan, CameraFrame)):
                self.deferred.append(packet)
            else:
                raise DataError("unhandled packet payload %r" % type(data).__name__)
        except Exception as exc:
            raise self._provenance_error(sensor, packet.timestamp, exc) from exc
        self.drain_deferred()

    def drain_deferred(self) -> None:
        span = self.estimator.history_span()
        while self.deferred:
            packet = self.deferred[0]
            data = packet.data
            low = data.start_timestamp if isinstance(data, LidarScan) else packet.timestamp
            if span is None or low < span[0]:
                self.deferred.popleft()
                self.report.skipped_packets += 1
                log.warning("skipping %s packet at %d: no pose coverage",
                            self._sensor_name(packet.sensor), packet.timestamp)
                continue
            if packet.timestamp > span[1]:
                return  # wait for the pose history to advance
            self.deferred.popleft()
            try:
                if isinstance(data, LidarScan):
                    self._process_lidar(packet.sensor, data)
                else:
                    self._process_camera(packet.sensor, data)
            except Exception as exc:
                raise self._provenance_error(packet.sensor, packet.timestamp, exc) from exc

    def flush_deferred(self) -> None:
        while self.deferred:
            packet = self.deferred.popleft()
            self.report.skipped_packets += 1
            log.warning("skipping %s packet at %d at end of data: no pose coverage",
                        self._sensor_name(packet.sensor), packet.timestamp)

    # -- stages --------------------------------------------------------------

    def _process_lidar(self, sensor: SensorId, scan: LidarScan) -> None:
        if not self.config.stages.lidar_aggregation:
            return
        if len(scan) == 0:
            log.warning("skipping empty scan from %s at %d",
                        self._sensor_name(sensor), scan.end_timestamp)
            self.report.skipped_packets += 1
            return
        cfg = self.config.aggregation
        sensor_cfg = self.config.sensor(sensor.kind)
        reduced = downsample(scan, cfg.voxel_leaf)
        pose_start = self.estimator.estimate_pose_at(scan.start_timestamp).transform()
        pose_end = self.estimator.estimate_pose_at(scan.end_timestamp).transform()
        batches = split_into_batches(reduced, pose_start, pose_end,
                                     sensor_cfg.extrinsic, cfg.batch_count)
        self.aggregator.insert_batches(batches)
        self.aggregator.evict_expired(scan.end_timestamp, cfg.window)
        self._maybe_snapshot(scan.end_timestamp)

    def _process_camera(self, sensor: SensorId, frame: CameraFrame) -> None:
        if sensor.kind.is_rgb_camera:
            self._process_rgb(sensor, frame)
        else:
            self._process_ir(sensor, frame)

    def _process_rgb(self, sensor: SensorId, frame: CameraFrame) -> None:
        if not self.config.stages.detection_fusion:
            return
        sensor_cfg = self.config.sensor(sensor.kind)
        camera_to_local, world_to_camera = self._camera_pose(sensor_cfg, frame.timestamp)
        projected = project_cloud_to_camera(self.aggregator.batches, world_to_camera,
                                            sensor_cfg.intrinsics)
        frustums = []
        for det in frame.detections:
            depth = median_depth_in_bbox(projected, det)
            if depth is None:
                log.debug("no cloud support for a detection at %d", frame.timestamp)
                continue
            frustums.append(detection_to_frustum(
                det, sensor_cfg.intrinsics, camera_to_local, depth,
                self.config.fusion.depth_margin, (sensor, frame.timestamp)))
        self.local_map.update_frustums(sensor, frame.timestamp, frustums)
        self.objects.update(frustums, frame.timestamp)
        self.local_map.update_objects(self.objects.objects)
        self._write_objects(frame.timestamp)
        if sensor == self.transfer_source_id:
            self.rgb_frame_stamps.append(frame.timestamp)
            self.rgb_frame_frustums.append(frustums)

    def _process_ir(self, sensor: SensorId, frame: CameraFrame) -> None:
        stages = self.config.stages
        if not (stages.ir_transfer or stages.depth_render):
            return
        sensor_cfg = self.config.sensor(sensor.kind)
        _, world_to_camera = self._camera_pose(sensor_cfg, frame.timestamp)
        if stages.ir_transfer:
            transferred = []
            if self.rgb_frame_stamps:
                idx = nearest_frame(self.rgb_frame_stamps, frame.timestamp)
                for fd in self.rgb_frame_frustums[idx]:
                    quad = frustum_frontal_plane(fd)
                    det = reproject_quad(quad, world_to_camera, sensor_cfg.intrinsics,
                                         fd.class_id, fd.confidence)
                    if det is not None:
                        transferred.append(det)
            path = self.out / "ir_annotations" / ("%06d.txt" % frame.seq)
            write_yolo_annotations(path, transferred, sensor_cfg.intrinsics.width,
                                   sensor_cfg.intrinsics.height)
            self.report.frames_written += 1
        if stages.depth_render:
            depth = render_depth_image(self.aggregator.batches, world_to_camera,
                                       sensor_cfg.intrinsics)
            write_depth_png(self.out / "depth" / ("%06d.png" % frame.seq), depth)
            self.report.frames_written += 1


def run(config: PipelineConfig, until: int | None = None,
        snapshot_every: float | None = None) -> RunReport:
    """Replay a recording end to end and write all outputs.

    ``until`` stops the replay at the first packet past that timestamp;
    ``snapshot_every`` adds periodic aggregated-cloud PLY snapshots.
    """
    started = time.monotonic()
    reader = open_dataset(config.dataset_root, config)
    state = _Run(config, until, snapshot_every)
    try:
        for packet in reader:
            if until is not None and packet.timestamp > until:
                break
            state.handle(packet)
        state.flush_deferred()
    finally:
        state.close()
    state.report.wall_seconds = time.monotonic() - started
    log.info("replayed %d packets (%d skipped, %d anomalies, %d files)",
             state.report.total_packets, state.report.skipped_packets,
             state.report.anomaly_count, state.report.frames_written)
    return state.report
