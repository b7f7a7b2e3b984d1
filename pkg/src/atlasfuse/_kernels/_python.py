"""NumPy fallback implementations of the per-point hot kernels.

Arithmetic is kept in the exact same operation order as the native
backend so results are bit-identical between the two.
"""

from __future__ import annotations

import numpy as np

# Voxel indices are packed three-per-int64 (21 bits each); coordinates
# beyond leaf * 2**20 from the origin are rejected.
VOXEL_COORD_LIMIT = 1 << 20


def transform_points(rotation, translation, points):
    """Apply one rigid transform (3x3 rotation, 3 translation) to (N, 3) points."""
    r = np.ascontiguousarray(rotation, dtype=np.float64)
    t = np.ascontiguousarray(translation, dtype=np.float64)
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    out = np.empty_like(p)
    out[:, 0] = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    out[:, 1] = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    out[:, 2] = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    return out


def project_points(points, fx, fy, cx, cy, width, height, z_min):
    """Pinhole-project camera-frame points; keep only those landing in the image.

    Returns (u, v, depth) float64 arrays of equal length, depth being the
    camera-frame z of each surviving point.
    """
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    z = p[:, 2]
    front = z > z_min
    x = p[front, 0]
    y = p[front, 1]
    zz = z[front]
    u = fx * x / zz + cx
    v = fy * y / zz + cy
    m = (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    return u[m], v[m], zz[m]


def depth_z_buffer(u, v, depth, width, height):
    """Scatter depths to nearest-integer pixels keeping the minimum per pixel.

    Pixels never hit hold 0.0 (the no-data value).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    img = np.full((height, width), np.inf, dtype=np.float64)
    px = np.floor(u + 0.5).astype(np.int64)
    py = np.floor(v + 0.5).astype(np.int64)
    m = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    np.minimum.at(img, (py[m], px[m]), d[m])
    img[np.isinf(img)] = 0.0
    return img


def voxel_first_indices(points, leaf):
    """Indices of the first point seen in each voxel, in acquisition order."""
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    if leaf <= 0.0:
        raise ValueError("leaf size must be positive")
    if p.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    q = np.floor(p / leaf)
    if not np.isfinite(q).all():
        raise ValueError("non-finite point coordinates")
    qi = q.astype(np.int64)
    if np.abs(qi).max() >= VOXEL_COORD_LIMIT:
        raise ValueError("voxel index out of range for leaf %r" % (leaf,))
    off = np.int64(VOXEL_COORD_LIMIT)
    key = ((qi[:, 0] + off) << 42) | ((qi[:, 1] + off) << 21) | (qi[:, 2] + off)
    _, first = np.unique(key, return_index=True)
    first.sort()
    return first.astype(np.int64)


def solve_assignment(cost):
    """Minimum-cost perfect assignment on a square matrix.

    Shortest-augmenting-path Hungarian algorithm, O(n^3). Returns the
    assigned column for every row as an int64 array.
    """
    c = np.ascontiguousarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    n = c.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    a = c.tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [-1] * (n + 1)  # p[j]: row matched to column j; column n is virtual
    way = [0] * (n + 1)
    for i in range(n):
        p[n] = i
        j0 = n
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0]
            ui0 = u[i0]
            delta = inf
            j1 = -1
            for j in range(n):
                if not used[j]:
                    cur = row[j] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == -1:
                break
        while j0 != n:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_for_row = np.empty(n, dtype=np.int64)
    for j in range(n):
        col_for_row[p[j]] = j
    return col_for_row
