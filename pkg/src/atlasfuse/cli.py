"""Command line front end: replay a recording, generate one, or benchmark."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import _kernels, __version__
from .config import load_config
from .errors import ConfigError, DataError
from .pipeline import run as run_pipeline
from .scenario import generate_scenario, load_scenario_spec

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atlas-fuse",
        description="Offline multi-sensor fusion over recorded GNSS, IMU, "
                    "LiDAR, and camera streams.",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="replay a recording through the pipeline")
    run_p.add_argument("--config", required=True, help="pipeline config YAML")
    run_p.add_argument("--output", help="output directory (overrides the config)")
    run_p.add_argument("--until", type=int, metavar="TIMESTAMP_NS",
                       help="stop at the first packet past this timestamp")
    run_p.add_argument("--disable", metavar="STAGE[,STAGE...]",
                       help="disable stages: fail_check, lidar_aggregation, "
                            "detection_fusion, ir_transfer, depth_render")
    run_p.add_argument("--snapshot-every", type=float, metavar="SECONDS",
                       help="write periodic aggregated-cloud PLY snapshots")
    run_p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    gen_p = sub.add_parser("gen", help="generate a synthetic recording")
    gen_p.add_argument("--spec", required=True, help="scenario spec YAML")
    gen_p.add_argument("--out", required=True, help="output directory")
    gen_p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    bench_p = sub.add_parser("bench", help="compare the compute kernel backends")
    bench_p.add_argument("--points", type=int, default=200000,
                         help="cloud size for the point kernels (default 200000)")
    bench_p.add_argument("--repeat", type=int, default=5,
                         help="timed repetitions per kernel (default 5)")
    return parser


def _setup_logging(level_name: str) -> None:
    level = getattr(logging, level_name.upper())
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    _setup_logging("debug" if args.verbose else config.log_level)
    if args.output:
        from pathlib import Path

        config.output_dir = Path(args.output)
    if args.disable:
        for stage in args.disable.split(","):
            config.stages.disable(stage.strip())
    if args.snapshot_every is not None and args.snapshot_every <= 0:
        raise ConfigError("--snapshot-every must be positive")
    report = run_pipeline(config, until=args.until, snapshot_every=args.snapshot_every)
    for sensor in sorted(report.packet_counts):
        print("%-24s %d packets" % ("%s/%s" % (sensor.kind.name.lower(), sensor.label),
                                    report.packet_counts[sensor]))
    print("total %d packets, %d skipped, %d anomalies, %d files written, %.2f s"
          % (report.total_packets, report.skipped_packets, report.anomaly_count,
             report.frames_written, report.wall_seconds))
    return 0


def _cmd_gen(args) -> int:
    _setup_logging("debug" if args.verbose else "info")
    spec = load_scenario_spec(args.spec)
    counts = generate_scenario(spec, args.out)
    for name in sorted(counts):
        print("%-24s %d records" % (name, counts[name]))
    print("recording written to %s" % args.out)
    return 0


def _bench_payload(points: int, rng: np.random.Generator) -> dict:
    cloud = rng.uniform(-50.0, 50.0, (points, 3))
    rot = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(rot) < 0:
        rot[:, 0] = -rot[:, 0]
    costs = rng.uniform(0.0, 100.0, (64, 64))
    return {
        "transform_points": lambda k: k.transform_points(rot, np.array([1.0, 2.0, 3.0]), cloud),
        "project_points": lambda k: k.project_points(
            cloud + np.array([0.0, 0.0, 60.0]), 600.0, 600.0, 320.0, 240.0, 640, 480, 1e-3),
        "depth_z_buffer": lambda k: k.depth_z_buffer(
            np.abs(cloud[:, 0]) * 6.0, np.abs(cloud[:, 1]) * 4.0,
            np.abs(cloud[:, 2]) + 1.0, 640, 480),
        "voxel_first_indices": lambda k: k.voxel_first_indices(cloud, 0.25),
        "solve_assignment": lambda k: k.solve_assignment(costs),
    }


def _cmd_bench(args) -> int:
    _setup_logging("info")
    backends = _kernels.available_backends()
    print("active backend: %s" % _kernels.BACKEND)
    if len(backends) < 2:
        print("only the %s backend is available; build the extension for a comparison"
              % _kernels.BACKEND)
    rng = np.random.default_rng(0)
    payload = _bench_payload(args.points, rng)
    print("%-22s" % "kernel", end="")
    for name in backends:
        print("%14s" % name, end="")
    print()
    for kernel_name, call in payload.items():
        print("%-22s" % kernel_name, end="")
        for backend_name, module in backends.items():
            call(module)  # warm-up, excluded from timing
            started = time.perf_counter()
            for _ in range(args.repeat):
                call(module)
            elapsed = (time.perf_counter() - started) / args.repeat
            print("%11.3f ms" % (elapsed * 1e3), end="")
        print()
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gen":
            return _cmd_gen(args)
        return _cmd_bench(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except DataError as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
