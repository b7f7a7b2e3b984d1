"""SE(3) rigid transforms, lazily collapsed transform chains, and pinhole cameras.

Conventions used throughout the package:

* quaternions are ``[w, x, y, z]`` float64 arrays, unit norm;
* camera frames have +z forward (optical axis), +x right, +y down;
* pixel coordinates follow ``u = fx * x / z + cx``, ``v = fy * y / z + cy``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

# Points with camera-frame z at or below this are not projectable.
Z_MIN = 1e-3

# Above this quaternion dot product slerp falls back to normalized lerp.
SLERP_NLERP_DOT = 1.0 - 1e-9

_NORM_TOL = 1e-6


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError("expected a 3-vector, got shape %r" % (a.shape,))
    return a


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.atan2(math.sin(a), math.cos(a))
    if w <= -math.pi:
        w = math.pi
    return w


# ---------------------------------------------------------------------------
# quaternion helpers


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    a = np.asarray(q, dtype=np.float64)
    if a.shape != (4,):
        raise ValueError("expected a quaternion [w, x, y, z]")
    n = math.sqrt(float(a @ a))
    if not math.isfinite(n) or n < _NORM_TOL:
        raise ValueError("degenerate quaternion with norm %r" % (n,))
    return a / n


def quat_canonical(q) -> np.ndarray:
    """Resolve the double cover: flip sign so w >= 0 (for comparisons)."""
    a = quat_normalize(q)
    if a[0] < 0.0:
        return -a
    return a


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate a single 3-vector by a unit quaternion."""
    qv = np.asarray(q[1:], dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    t = 2.0 * np.cross(qv, v)
    return v + q[0] * t + np.cross(qv, t)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    a = as_vec3(axis)
    n = math.sqrt(float(a @ a))
    if n < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    a = a / n
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), a[0] * s, a[1] * s, a[2] * s])


def quat_from_rotvec(rv) -> np.ndarray:
    """Quaternion exponential of a rotation vector (axis * angle)."""
    r = as_vec3(rv)
    angle = math.sqrt(float(r @ r))
    if angle < 1e-12:
        # first-order expansion, renormalized
        q = np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]])
        return quat_normalize(q)
    return quat_from_axis_angle(r, angle)


def quat_slerp(q0, q1, t: float) -> np.ndarray:
    """Shorter-arc spherical interpolation with an nlerp fallback near identity."""
    a = quat_normalize(q0)
    b = quat_normalize(q1)
    d = float(a @ b)
    if d < 0.0:
        b = -b
        d = -d
    if d > SLERP_NLERP_DOT:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    w0 = math.sin((1.0 - t) * theta) / s
    w1 = math.sin(t * theta) / s
    return quat_normalize(w0 * a + w1 * b)


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic z-y-x (yaw, then pitch, then roll) to quaternion."""
    qz = quat_from_axis_angle(vec3(0, 0, 1), yaw)
    qy = quat_from_axis_angle(vec3(0, 1, 0), pitch)
    qx = quat_from_axis_angle(vec3(1, 0, 0), roll)
    return quat_multiply(quat_multiply(qz, qy), qx)


def quat_to_euler(q) -> tuple:
    """Inverse of :func:`quat_from_euler`; returns (roll, pitch, yaw)."""
    w, x, y, z = quat_normalize(q)
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    sp = 2.0 * (w * y - z * x)
    pitch = math.asin(max(-1.0, min(1.0, sp)))
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


# ---------------------------------------------------------------------------
# rigid transforms


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (unit quaternion) followed by translation: p' = R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64)
        if q.shape != (4,):
            raise ValueError("rotation must be a quaternion [w, x, y, z]")
        if not np.isfinite(q).all():
            raise ValueError("non-finite quaternion")
        n = math.sqrt(float(q @ q))
        if abs(n - 1.0) > _NORM_TOL:
            raise ValueError("quaternion norm %r too far from 1" % (n,))
        q = q / n
        t = as_vec3(self.translation).copy()
        if not np.isfinite(t).all():
            raise ValueError("non-finite translation")
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(quat_identity(), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(quat_identity(), as_vec3(t))

    @classmethod
    def from_rotation(cls, q) -> "RigidTransform":
        return cls(np.asarray(q, dtype=np.float64), np.zeros(3))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform a single (3,) point or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        if p.shape == (3,):
            return quat_rotate(self.rotation, p) + self.translation
        return _kernels.transform_points(self.rotation_matrix(), self.translation, p)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        q = quat_multiply(self.rotation, other.rotation)
        t = quat_rotate(self.rotation, other.translation) + self.translation
        return RigidTransform(q, t)

    def inverse(self) -> "RigidTransform":
        qc = quat_conjugate(self.rotation)
        return RigidTransform(qc, -quat_rotate(qc, self.translation))

    def approx_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(quat_canonical(self.rotation), quat_canonical(other.rotation), atol=tol)
            and np.allclose(self.translation, other.translation, atol=tol)
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """compose(a, b)(p) == a(b(p))."""
    return a.compose(b)


def interpolate_pose(p0: RigidTransform, p1: RigidTransform, t: float) -> RigidTransform:
    """Linear translation blend plus shorter-arc slerp, t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("interpolation parameter %r outside [0, 1]" % (t,))
    q = quat_slerp(p0.rotation, p1.rotation, t)
    tr = (1.0 - t) * p0.translation + t * p1.translation
    return RigidTransform(q, tr)


class TransformChain:
    """Ordered rigid transforms collapsed once before touching any points.

    ``elements[-1]`` acts first on points (the last appended transform);
    evaluation equals the left-fold composition of the elements. Chains are
    immutable: append/prepend return new chains, so a chain captured by a
    point-cloud batch is never changed behind its back.
    """

    __slots__ = ("_elements", "_collapsed")

    def __init__(self, elements=()):
        self._elements = tuple(elements)
        for e in self._elements:
            if not isinstance(e, RigidTransform):
                raise TypeError("chain elements must be RigidTransform")
        self._collapsed = None

    @classmethod
    def of(cls, *transforms) -> "TransformChain":
        return cls(transforms)

    @property
    def elements(self) -> tuple:
        return self._elements

    def append(self, t: RigidTransform) -> "TransformChain":
        """New chain where ``t`` acts first on points."""
        return TransformChain(self._elements + (t,))

    def prepend(self, t: RigidTransform) -> "TransformChain":
        """New chain where ``t`` acts last, after everything already chained."""
        return TransformChain((t,) + self._elements)

    def collapsed(self) -> RigidTransform:
        """Single equivalent transform; computed once and cached."""
        if self._collapsed is None:
            if not self._elements:
                self._collapsed = RigidTransform.identity()
            else:
                acc = self._elements[0]
                for e in self._elements[1:]:
                    acc = acc.compose(e)
                self._collapsed = acc
        return self._collapsed

    def transform(self, points) -> np.ndarray:
        return self.collapsed().apply(points)

    def __len__(self) -> int:
        return len(self._elements)

    def __iter__(self):
        return iter(self._elements)


def evaluate_chain(chain: TransformChain, points) -> np.ndarray:
    """Collapse the chain and apply it; an empty chain returns points unchanged."""
    return chain.transform(points)


# ---------------------------------------------------------------------------
# pinhole camera


@dataclass(frozen=True)
class CameraIntrinsics:
    """Distortion-free pinhole model. +z forward, +x right, +y down."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")
        if not (0.0 < self.cx < self.width and 0.0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def project_point(self, p):
        """Pixel (u, v) for one camera-frame point, or None when out of view."""
        p = as_vec3(p)
        z = p[2]
        if z <= Z_MIN:
            return None
        u = self.fx * p[0] / z + self.cx
        v = self.fy * p[1] / z + self.cy
        if not (0.0 <= u < self.width and 0.0 <= v < self.height):
            return None
        return (u, v)

    def project_points(self, points):
        """Vectorized projection; returns in-view (u, v, depth) arrays."""
        return _kernels.project_points(
            points, self.fx, self.fy, self.cx, self.cy,
            float(self.width), float(self.height), Z_MIN,
        )

    def pixel_ray(self, u: float, v: float) -> np.ndarray:
        """Unit camera-frame direction through pixel (u, v); inverse of project_point."""
        d = np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])
        return d / math.sqrt(float(d @ d))


# ---------------------------------------------------------------------------
# view frustums


@dataclass(frozen=True)
class Frustum:
    """Pyramidal volume behind a detection, cut by planes perpendicular to its axis.

    ``corner_rays`` must be ordered around the bbox boundary
    (top-left, top-right, bottom-right, bottom-left); ``axis`` is the unit
    ray through the bbox center. Near/far are measured along ``axis``.
    """

    origin: np.ndarray
    corner_rays: np.ndarray
    axis: np.ndarray
    near_distance: float
    far_distance: float

    def __post_init__(self):
        o = as_vec3(self.origin).copy()
        rays = np.asarray(self.corner_rays, dtype=np.float64).copy()
        axis = as_vec3(self.axis).copy()
        if rays.shape != (4, 3):
            raise ValueError("corner_rays must have shape (4, 3)")
        norms = np.linalg.norm(rays, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("corner rays must be unit vectors")
        if abs(float(axis @ axis) - 1.0) > 1e-6:
            raise ValueError("axis must be a unit vector")
        for i in range(4):
            for j in range(i + 1, 4):
                if np.linalg.norm(np.cross(rays[i], rays[j])) < 1e-12:
                    raise ValueError("corner rays must be pairwise non-parallel")
        if not (0.0 < self.near_distance < self.far_distance):
            raise ValueError("need 0 < near < far")
        for a in (o, rays, axis):
            a.flags.writeable = False
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "corner_rays", rays)
        object.__setattr__(self, "axis", axis)

    def center_point(self, distance: float) -> np.ndarray:
        return self.origin + distance * self.axis

    def contains(self, point, eps: float = 1e-9) -> bool:
        """True when the point lies inside the cut pyramid (boundary included)."""
        d = as_vec3(point) - self.origin
        axial = float(d @ self.axis)
        if axial < self.near_distance - eps or axial > self.far_distance + eps:
            return False
        for i in range(4):
            n = np.cross(self.corner_rays[i], self.corner_rays[(i + 1) % 4])
            if float(n @ self.axis) < 0.0:
                n = -n
            if float(n @ d) < -eps:
                return False
        return True
