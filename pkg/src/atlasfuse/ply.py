"""Minimal binary little-endian PLY reader/writer for x, y, z, intensity clouds.

The on-disk schema is fixed: four float32 properties named x, y, z,
intensity, in that order. Anything else is rejected.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError

_PROPERTIES = ("x", "y", "z", "intensity")


def write_points(path, points, intensities) -> None:
    """Write an (N, 3) float cloud plus per-point intensity as binary PLY."""
    p = np.asarray(points, dtype=np.float64)
    i = np.asarray(intensities, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    if i.shape != (p.shape[0],):
        raise ValueError("intensities must have shape (N,)")
    body = np.empty((p.shape[0], 4), dtype="<f4")
    body[:, :3] = p
    body[:, 3] = i
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        "element vertex %d\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property float intensity\n"
        "end_header\n" % p.shape[0]
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(body.tobytes())


def read_points(path) -> tuple:
    """Read a binary PLY written by :func:`write_points`.

    Returns (points (N, 3) float64, intensities (N,) float64).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError("cannot read %s: %s" % (path, exc)) from exc
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise DataError("%s: not a PLY file" % path)
    header_lines = raw[:end].decode("ascii", "replace").splitlines()
    count = None
    props = []
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise DataError("%s: unsupported PLY format %r" % (path, line))
        elif parts[0] == "element":
            if parts[1] != "vertex" or count is not None:
                raise DataError("%s: only a single vertex element is supported" % path)
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] != "float":
                raise DataError("%s: unsupported property type %r" % (path, line))
            props.append(parts[2])
    if count is None:
        raise DataError("%s: missing vertex element" % path)
    if tuple(props) != _PROPERTIES:
        raise DataError("%s: expected properties %s, got %s" % (path, _PROPERTIES, tuple(props)))
    body = raw[end + len(b"end_header\n"):]
    expected = count * 4 * 4
    if len(body) < expected:
        raise DataError("%s: truncated body (%d of %d bytes)" % (path, len(body), expected))
    data = np.frombuffer(body[:expected], dtype="<f4").reshape(count, 4)
    return data[:, :3].astype(np.float64), data[:, 3].astype(np.float64)
