"""End-to-end replay on small generated recordings, plus the CLI front end."""

from __future__ import annotations

import hashlib

import numpy as np
import pytest

from atlasfuse.cli import main
from atlasfuse.config import SENSOR_NAMES, load_config
from atlasfuse.dataset import SensorId
from atlasfuse.errors import DataError
from atlasfuse.localmap import read_depth_png
from atlasfuse.pipeline import run
from atlasfuse.scenario import (
    Box,
    ConstantVelocity,
    LidarModel,
    ScenarioSpec,
    generate_scenario,
)

RATES = {"gnss": 10.0, "imu": 20.0, "lidar_left": 4.0,
         "camera_rgb_left": 4.0, "camera_ir": 4.0}


def _spec(**overrides):
    base = dict(
        duration=0.5,
        seed=7,
        rates=dict(RATES),
        lidar=LidarModel(rings=2, points_per_ring=8, vertical_fov_deg=4.0),
        scene=[Box(center=(15.0, 0.0, 0.0), size=(4.0, 4.0, 2.0), class_id=2)],
    )
    base.update(overrides)
    return ScenarioSpec(**base)


def _recording(tmp_path, out_name="out", **overrides):
    counts = generate_scenario(_spec(**overrides), tmp_path)
    config = load_config(tmp_path / "config.yaml")
    config.output_dir = tmp_path / out_name
    return counts, config


def _sensor_id(name):
    kind, label = SENSOR_NAMES[name]
    return SensorId(kind, label)


def _data_lines(path):
    return path.read_text(encoding="utf-8").strip().splitlines()[1:]


# ---------------------------------------------------------------------------
# replay behavior


def test_gnss_only_replay_writes_trajectory(tmp_path):
    counts, config = _recording(tmp_path, rates={"gnss": 10.0}, scene=[])
    report = run(config)
    assert report.packet_counts == {_sensor_id("gnss"): counts["gnss"]}
    assert report.skipped_packets == 0
    assert report.wall_seconds > 0.0
    rows = _data_lines(config.output_dir / "trajectory.csv")
    assert len(rows) == counts["gnss"]
    stamps = [int(r.split(",")[0]) for r in rows]
    assert stamps == sorted(stamps)


def test_full_replay_counts_and_outputs(tmp_path):
    counts, config = _recording(tmp_path)
    report = run(config)
    assert report.total_packets == sum(counts.values())
    for name, count in counts.items():
        assert report.packet_counts[_sensor_id(name)] == count
    assert report.skipped_packets == 0
    # the tiny synthetic sweeps fall under the sparse-scan threshold
    assert report.anomaly_count == 2

    out = config.output_dir
    # one annotation file and one depth image per IR frame
    assert sorted(p.name for p in (out / "ir_annotations").iterdir()) == \
        ["000000.txt", "000001.txt", "000002.txt"]
    assert sorted(p.name for p in (out / "depth").iterdir()) == \
        ["000000.png", "000001.png", "000002.png"]
    # the box gets cloud support once the first scan lands, so later RGB
    # frames produce a tracked object of its class
    object_rows = _data_lines(out / "objects.csv")
    assert object_rows
    assert all(row.split(",")[2] == "2" for row in object_rows)
    # transferred annotations appear once frustums exist
    assert (out / "ir_annotations" / "000001.txt").read_text() != ""
    anomaly_rows = [r.split(",") for r in _data_lines(out / "failcheck.csv")]
    assert [r[2] for r in anomaly_rows] == ["sparse_scan", "sparse_scan"]
    assert all(float(r[4]) < 1.0 for r in anomaly_rows)


def test_depth_images_see_the_box_face(tmp_path):
    _, config = _recording(tmp_path)
    run(config)
    depth = read_depth_png(config.output_dir / "depth" / "000002.png")
    nonzero = depth.data[depth.data > 0]
    assert nonzero.size > 0
    # front face sits 13 m ahead; ray lengths exceed the axial distance
    assert np.all(np.abs(nonzero - 13.0) < 0.2)


def test_packets_before_first_fix_are_skipped(tmp_path):
    _, config = _recording(tmp_path, duration=1.0,
                           rates={"gnss": 2.0, "camera_ir": 2.0}, scene=[])
    pose = tmp_path / "gnss" / "pose.csv"
    header, *rows = pose.read_text().strip().splitlines()
    pose.write_text("\n".join([header] + rows[1:]) + "\n", encoding="utf-8")

    report = run(config)
    assert report.skipped_packets == 1
    names = sorted(p.name for p in (config.output_dir / "ir_annotations").iterdir())
    assert names == ["000001.txt", "000002.txt"]


def test_sensor_gap_is_reported(tmp_path):
    _, config = _recording(tmp_path, rates={"gnss": 10.0, "imu": 20.0},
                           scene=[])
    imu = tmp_path / "imu" / "imu.csv"
    header, *rows = imu.read_text().strip().splitlines()
    kept = [r for r in rows
            if int(r.split(",")[0]) <= 100000000 or int(r.split(",")[0]) >= 400000000]
    imu.write_text("\n".join([header] + kept) + "\n", encoding="utf-8")

    report = run(config)
    assert report.anomaly_count == 1
    rows = _data_lines(config.output_dir / "failcheck.csv")
    assert len(rows) == 1
    fields = rows[0].split(",")
    assert fields[0] == "400000000"
    assert fields[1] == "imu/imu"
    assert fields[2] == "gap"
    assert float(fields[4]) < 1.0


def test_stage_flags_prune_outputs(tmp_path):
    _, config = _recording(tmp_path, out_name="out_a")
    config.stages.disable("depth_render")
    config.stages.disable("ir_transfer")
    report = run(config)
    assert report.frames_written == 0
    assert list((config.output_dir / "depth").iterdir()) == []
    assert list((config.output_dir / "ir_annotations").iterdir()) == []

    config = load_config(tmp_path / "config.yaml")
    config.output_dir = tmp_path / "out_b"
    config.stages.disable("detection_fusion")
    run(config)
    assert _data_lines(config.output_dir / "objects.csv") == []
    for path in (config.output_dir / "ir_annotations").iterdir():
        assert path.read_text() == ""

    config = load_config(tmp_path / "config.yaml")
    config.output_dir = tmp_path / "out_c"
    config.stages.disable("lidar_aggregation")
    run(config)
    assert _data_lines(config.output_dir / "objects.csv") == []
    depth = read_depth_png(config.output_dir / "depth" / "000002.png")
    assert not depth.data.any()


def test_until_stops_the_replay_early(tmp_path):
    counts, config = _recording(tmp_path)
    report = run(config, until=250000000)
    assert report.total_packets < sum(counts.values())
    rows = _data_lines(config.output_dir / "trajectory.csv")
    assert max(int(r.split(",")[0]) for r in rows) <= 250000000
    assert sorted(p.name for p in (config.output_dir / "depth").iterdir()) == \
        ["000000.png", "000001.png"]


def test_scan_read_errors_carry_provenance(tmp_path):
    _, config = _recording(tmp_path)
    scan = tmp_path / "lidar_left" / "scans" / "000001.ply"
    scan.write_bytes(scan.read_bytes()[:-8])
    with pytest.raises(DataError, match="sensor left timestamp 500000000"):
        run(config)


def test_snapshot_interval_writes_aggregated_clouds(tmp_path):
    _, config = _recording(tmp_path)
    report = run(config, snapshot_every=0.2)
    names = sorted(p.name for p in config.output_dir.iterdir()
                   if p.name.startswith("aggregated_"))
    assert names == ["aggregated_250000000.ply", "aggregated_500000000.ply"]
    assert report.frames_written > 6  # snapshots on top of the per-frame files


def _tree_digest(root):
    digests = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digests[path.relative_to(root).as_posix()] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return digests


def test_rerun_is_deterministic(tmp_path):
    _, config = _recording(tmp_path, out_name="out_a")
    run(config)
    first = _tree_digest(config.output_dir)
    config.output_dir = tmp_path / "out_b"
    run(config)
    assert _tree_digest(config.output_dir) == first


# ---------------------------------------------------------------------------
# command line


SPEC_YAML = """\
trajectory:
  kind: stationary
duration: 0.5
rates: {gnss: 10, imu: 20, lidar_left: 4, camera_rgb_left: 4, camera_ir: 4}
lidar: {rings: 2, points_per_ring: 8, vertical_fov_deg: 4}
scene:
  - {kind: box, center: [15, 0, 0], size: [4, 4, 2], class_id: 2}
"""


def test_cli_gen_then_run(tmp_path, capsys):
    spec_path = tmp_path / "scenario.yaml"
    spec_path.write_text(SPEC_YAML, encoding="utf-8")
    recording = tmp_path / "rec"
    assert main(["gen", "--spec", str(spec_path), "--out", str(recording)]) == 0
    out = capsys.readouterr().out
    assert "gnss" in out and "records" in out

    output = tmp_path / "result"
    assert main(["run", "--config", str(recording / "config.yaml"),
                 "--output", str(output)]) == 0
    out = capsys.readouterr().out
    assert "total 25 packets, 0 skipped" in out
    assert (output / "trajectory.csv").is_file()
    assert (output / "depth" / "000000.png").is_file()


def test_cli_run_disable_and_until(tmp_path, capsys):
    generate_scenario(_spec(), tmp_path)
    output = tmp_path / "result"
    rc = main(["run", "--config", str(tmp_path / "config.yaml"),
               "--output", str(output),
               "--disable", "depth_render, ir_transfer",
               "--until", "250000000"])
    assert rc == 0
    assert list((output / "depth").iterdir()) == []
    capsys.readouterr()


def test_cli_error_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == 1
    assert "config error" in capsys.readouterr().err

    config = tmp_path / "orphan.yaml"
    config.write_text("dataset:\n  path: nowhere\n", encoding="utf-8")
    assert main(["run", "--config", str(config)]) == 2
    assert "data error" in capsys.readouterr().err

    generate_scenario(ScenarioSpec(duration=0.2, rates={"gnss": 10.0}), tmp_path / "rec")
    assert main(["run", "--config", str(tmp_path / "rec" / "config.yaml"),
                 "--disable", "everything"]) == 1
    assert "unknown stage" in capsys.readouterr().err


def test_cli_gen_rejects_bad_spec(tmp_path, capsys):
    spec_path = tmp_path / "bad.yaml"
    spec_path.write_text("speed: 9\n", encoding="utf-8")
    assert main(["gen", "--spec", str(spec_path), "--out", str(tmp_path / "x")]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_cli_bench_smoke(capsys):
    assert main(["bench", "--points", "1000", "--repeat", "1"]) == 0
    out = capsys.readouterr().out
    assert "active backend" in out
    assert "solve_assignment" in out
