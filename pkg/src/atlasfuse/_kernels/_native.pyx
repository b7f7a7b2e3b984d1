# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the per-point hot kernels.

Each function mirrors the NumPy fallback in ``_python`` with identical
operation order; compiled with -ffp-contract=off the two backends return
bit-equal results.
"""

from libc.math cimport floor, isfinite, INFINITY

import numpy as np

VOXEL_COORD_LIMIT = 1 << 20

cdef long long _LIMIT = 1 << 20


def transform_points(rotation, translation, points):
    """Apply one rigid transform (3x3 rotation, 3 translation) to (N, 3) points."""
    r = np.ascontiguousarray(rotation, dtype=np.float64)
    t = np.ascontiguousarray(translation, dtype=np.float64)
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    out = np.empty_like(p)
    _transform(r, t, p, out)
    return out


cdef void _transform(const double[:, ::1] r, const double[::1] t, const double[:, ::1] p,
                     double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double r00 = r[0, 0], r01 = r[0, 1], r02 = r[0, 2]
    cdef double r10 = r[1, 0], r11 = r[1, 1], r12 = r[1, 2]
    cdef double r20 = r[2, 0], r21 = r[2, 1], r22 = r[2, 2]
    cdef double t0 = t[0], t1 = t[1], t2 = t[2]
    cdef double x, y, z
    for i in range(n):
        x = p[i, 0]
        y = p[i, 1]
        z = p[i, 2]
        out[i, 0] = r00 * x + r01 * y + r02 * z + t0
        out[i, 1] = r10 * x + r11 * y + r12 * z + t1
        out[i, 2] = r20 * x + r21 * y + r22 * z + t2


def project_points(points, double fx, double fy, double cx, double cy,
                   double width, double height, double z_min):
    """Pinhole-project camera-frame points; keep only those landing in the image."""
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    cdef Py_ssize_t n = p.shape[0]
    u_out = np.empty(n, dtype=np.float64)
    v_out = np.empty(n, dtype=np.float64)
    d_out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t kept = _project(p, fx, fy, cx, cy, width, height, z_min,
                                    u_out, v_out, d_out)
    return u_out[:kept].copy(), v_out[:kept].copy(), d_out[:kept].copy()


cdef Py_ssize_t _project(const double[:, ::1] p, double fx, double fy, double cx,
                         double cy, double width, double height, double z_min,
                         double[::1] uo, double[::1] vo, double[::1] do) noexcept nogil:
    cdef Py_ssize_t i, kept = 0, n = p.shape[0]
    cdef double x, y, z, u, v
    for i in range(n):
        z = p[i, 2]
        if z <= z_min:
            continue
        x = p[i, 0]
        y = p[i, 1]
        u = fx * x / z + cx
        v = fy * y / z + cy
        if u >= 0.0 and u < width and v >= 0.0 and v < height:
            uo[kept] = u
            vo[kept] = v
            do[kept] = z
            kept += 1
    return kept


def depth_z_buffer(u, v, depth, Py_ssize_t width, Py_ssize_t height):
    """Scatter depths to nearest-integer pixels keeping the minimum per pixel."""
    uu = np.ascontiguousarray(u, dtype=np.float64)
    vv = np.ascontiguousarray(v, dtype=np.float64)
    dd = np.ascontiguousarray(depth, dtype=np.float64)
    img = np.full((height, width), np.inf, dtype=np.float64)
    _zbuffer(uu, vv, dd, img)
    img[np.isinf(img)] = 0.0
    return img


cdef void _zbuffer(const double[::1] u, const double[::1] v, const double[::1] d,
                   double[:, ::1] img) noexcept nogil:
    cdef Py_ssize_t i, n = u.shape[0]
    cdef Py_ssize_t w = img.shape[1], h = img.shape[0]
    cdef long long px, py
    cdef double z
    for i in range(n):
        px = <long long>floor(u[i] + 0.5)
        py = <long long>floor(v[i] + 0.5)
        if px < 0 or px >= w or py < 0 or py >= h:
            continue
        z = d[i]
        if z < img[py, px]:
            img[py, px] = z
    return


def voxel_first_indices(points, double leaf):
    """Indices of the first point seen in each voxel, in acquisition order."""
    p = np.ascontiguousarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    if leaf <= 0.0:
        raise ValueError("leaf size must be positive")
    cdef Py_ssize_t n = p.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    cdef Py_ssize_t cap = 1
    while cap < 2 * n:
        cap <<= 1
    table = np.full(cap, -1, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t kept = _voxel(p, leaf, table, out)
    if kept < 0:
        raise ValueError(
            "non-finite point coordinates or voxel index out of range for leaf %r"
            % (leaf,))
    return out[:kept].copy()


cdef Py_ssize_t _voxel(const double[:, ::1] p, double leaf, long long[::1] table,
                       long long[::1] keep) noexcept nogil:
    cdef Py_ssize_t i, n = p.shape[0], kept = 0
    cdef long long mask = table.shape[0] - 1
    cdef double qx, qy, qz
    cdef long long kx, ky, kz, key, slot
    cdef unsigned long long h
    for i in range(n):
        qx = floor(p[i, 0] / leaf)
        qy = floor(p[i, 1] / leaf)
        qz = floor(p[i, 2] / leaf)
        if not (isfinite(qx) and isfinite(qy) and isfinite(qz)):
            return -1
        kx = <long long>qx
        ky = <long long>qy
        kz = <long long>qz
        if (kx >= _LIMIT or kx < -_LIMIT or ky >= _LIMIT or ky < -_LIMIT
                or kz >= _LIMIT or kz < -_LIMIT):
            return -1
        key = ((kx + _LIMIT) << 42) | ((ky + _LIMIT) << 21) | (kz + _LIMIT)
        h = <unsigned long long>key
        h ^= h >> 33
        h *= <unsigned long long>0xff51afd7ed558ccd
        h ^= h >> 33
        slot = <long long>(h & <unsigned long long>mask)
        while True:
            if table[slot] == -1:
                table[slot] = key
                keep[kept] = i
                kept += 1
                break
            if table[slot] == key:
                break
            slot = (slot + 1) & mask
    return kept


def solve_assignment(cost):
    """Minimum-cost perfect assignment on a square matrix (Hungarian, O(n^3))."""
    c = np.ascontiguousarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    cdef Py_ssize_t n = c.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    p = np.full(n + 1, -1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1, dtype=np.float64)
    used = np.zeros(n + 1, dtype=np.uint8)
    col = np.empty(n, dtype=np.int64)
    _hungarian(c, u, v, p, way, minv, used, col)
    return col


cdef void _hungarian(const double[:, ::1] a, double[::1] u, double[::1] v,
                     long long[::1] p, long long[::1] way, double[::1] minv,
                     unsigned char[::1] used, long long[::1] col) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur, ui0
    for i in range(n):
        p[n] = i
        j0 = n
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = -1
            for j in range(n):
                if used[j] == 0:
                    cur = a[i0, j] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j] != 0:
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
    for j in range(n):
        col[p[j]] = j
