"""Rigid-body geometry: rotations, poses, pinhole projection and IMU integration steps.

Rotations are plain ``(3, 3)`` numpy arrays and vectors are ``(3,)`` arrays.
A :class:`Pose` maps points from its source frame into its target frame,
``p_target = R @ p_source + t``; the tracker stores camera-from-world poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = np.array([0.0, 0.0, 9.80665])

_SMALL_ANGLE = 1e-6
_EYE = np.eye(3)


class NotProjectable(ValueError):
    """Raised when a point lies at or behind the camera plane."""


def skew(v):
    """Cross-product matrix of ``v``; works on stacks of shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def orthonormalize(R):
    """Project ``R`` (or a stack of them) onto the nearest rotation matrix.

    Near-orthonormal input takes one first-order polar correction; anything
    further off goes through an SVD.
    """
    R = np.asarray(R, dtype=float)
    E = np.swapaxes(R, -1, -2) @ R - _EYE
    if np.max(np.abs(E)) < 1e-6:
        return R - 0.5 * (R @ E)
    u, _, vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, 2] *= d[..., None] if np.ndim(d) else d
    return u @ vt


def _rodrigues_coefficients(sigma):
    if sigma < _SMALL_ANGLE:
        s2 = sigma * sigma
        return 1.0 - s2 / 6.0, 0.5 - s2 / 24.0
    return math.sin(sigma) / sigma, (1.0 - math.cos(sigma)) / (sigma * sigma)


def exp_so3(phi):
    """Rotation matrix of the rotation vector ``phi`` (single vector)."""
    phi = np.asarray(phi, dtype=float)
    sigma = math.sqrt(float(phi @ phi))
    a, b = _rodrigues_coefficients(sigma)
    B = skew(phi)
    return _EYE + a * B + b * (B @ B)


def log_so3(R):
    """Rotation vector of ``R``, the inverse of :func:`exp_so3` for angles below pi."""
    R = np.asarray(R, dtype=float)
    cos_angle = min(1.0, max(-1.0, (np.trace(R) - 1.0) * 0.5))
    angle = math.acos(cos_angle)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-4:
        # sin(angle)/angle ~ 1 - angle^2/6
        return 0.5 * w * (1.0 + angle * angle / 6.0)
    if math.pi - angle < 1e-6:
        # axis from the symmetric part
        S = 0.5 * (R + _EYE)
        k = int(np.argmax(np.diag(S)))
        axis = S[:, k] / math.sqrt(S[k, k])
        if w @ axis < 0:
            axis = -axis
        return angle * axis
    return w * (angle / (2.0 * math.sin(angle)))


def integrate_rotation(R, omega, dt):
    """Advance a body-to-world rotation by the angular rate ``omega`` over ``dt``.

    Applies the closed-form increment ``I + (sin s/s) B + ((1 - cos s)/s^2) B^2``
    with ``B = skew(omega * dt)`` and ``s = |omega * dt|`` on the right of ``R``,
    then re-orthonormalizes. ``R`` and ``omega`` may carry leading batch axes.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim == 1 and np.ndim(dt) == 0:
        return orthonormalize(np.asarray(R, dtype=float) @ exp_so3(omega * dt))

    phi = omega * np.asarray(dt, dtype=float)[..., None]
    sigma = np.linalg.norm(phi, axis=-1)
    small = sigma < _SMALL_ANGLE
    safe = np.where(small, 1.0, sigma)
    s2 = sigma * sigma
    a = np.where(small, 1.0 - s2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - s2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    B = skew(phi)
    D = _EYE + a[..., None, None] * B + b[..., None, None] * (B @ B)
    return orthonormalize(np.asarray(R, dtype=float) @ D)


def integrate_velocity(V, R_next, accel, g, dt):
    """World velocity after one step: ``V + dt * (R_next @ accel - g)``."""
    return V + dt * (R_next @ accel - g)


def integrate_translation(T, V_next, dt):
    """Position after one step using the already-updated velocity."""
    return T + dt * V_next


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3].copy(), M[:3, 3].copy())

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points):
        """Transform points of shape ``(3,)`` or ``(n, 3)``."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def allclose(self, other: "Pose", atol=1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )


def compose(outer: Pose, inner: Pose) -> Pose:
    """Pose applying ``inner`` first, then ``outer``."""
    return Pose(
        outer.rotation @ inner.rotation,
        outer.rotation @ inner.translation + outer.translation,
    )


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -(Rt @ p.translation))


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_xyz(R):
    """Angles ``(x, y, z)`` with ``R = rot_x(x) @ rot_y(y) @ rot_z(z)``.

    At gimbal lock (``|y| = pi/2``) the x angle is set to zero.
    """
    R = np.asarray(R, dtype=float)
    sy = min(1.0, max(-1.0, R[0, 2]))
    y = math.asin(sy)
    if abs(sy) > 1.0 - 1e-12:
        return np.array([0.0, y, math.atan2(R[1, 0], R[1, 1])])
    x = math.atan2(-R[1, 2], R[2, 2])
    z = math.atan2(-R[0, 1], R[0, 0])
    return np.array([x, y, z])


def rotation_angle(R) -> float:
    cos_angle = (np.trace(R) - 1.0) * 0.5
    return math.acos(min(1.0, max(-1.0, cos_angle)))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def area(self) -> float:
        return float(self.width * self.height)


DEFAULT_INTRINSICS = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)

_MIN_DEPTH = 1e-6


def project_points(K: CameraIntrinsics, cam_from_obj: Pose, points_obj) -> np.ndarray:
    """Pinhole projection of ``(n, 3)`` object points to ``(n, 2)`` pixels.

    Raises :class:`NotProjectable` if any point has depth <= 1e-6 m.
    """
    pc = cam_from_obj.apply(np.atleast_2d(points_obj))
    z = pc[:, 2]
    if np.any(z <= _MIN_DEPTH):
        raise NotProjectable("point behind camera")
    uv = np.empty((pc.shape[0], 2))
    uv[:, 0] = K.fx * pc[:, 0] / z + K.cx
    uv[:, 1] = K.fy * pc[:, 1] / z + K.cy
    return uv


def project(K: CameraIntrinsics, cam_from_obj: Pose, point_obj) -> tuple[float, float]:
    u, v = project_points(K, cam_from_obj, point_obj)[0]
    return float(u), float(v)


def convex_hull(points) -> list:
    """Counter-clockwise convex hull vertices of 2-D points (monotone chain)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _shoelace(poly) -> float:
    if len(poly) < 3:
        return 0.0
    area = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        area += x0 * y1 - x1 * y0
    return 0.5 * abs(area)


def polygon_hull_area(points) -> float:
    """Area of the convex hull of 2-D points; 0 for fewer than 3 distinct points."""
    return _shoelace(convex_hull(points))


def _clip(poly, inside, intersect):
    out = []
    for i, cur in enumerate(poly):
        prev = poly[i - 1]
        if inside(cur):
            if not inside(prev):
                out.append(intersect(prev, cur))
            out.append(cur)
        elif inside(prev):
            out.append(intersect(prev, cur))
    return out


def visible_hull_area(points, width: float, height: float) -> float:
    """Area of the convex hull of ``points`` lying inside the ``width x height`` image."""
    poly = convex_hull(points)
    if len(poly) < 3:
        return 0.0

    def at_x(x):
        return lambda p, q: (x, p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0]))

    def at_y(y):
        return lambda p, q: (p[0] + (q[0] - p[0]) * (y - p[1]) / (q[1] - p[1]), y)

    for inside, cut in (
        (lambda p: p[0] >= 0.0, at_x(0.0)),
        (lambda p: p[0] <= width, at_x(float(width))),
        (lambda p: p[1] >= 0.0, at_y(0.0)),
        (lambda p: p[1] <= height, at_y(float(height))),
    ):
        poly = _clip(poly, inside, cut)
        if len(poly) < 3:
            return 0.0
    return _shoelace(poly)


def box_corners(half_extents) -> np.ndarray:
    """The 8 vertices of an axis-aligned box centred at the origin."""
    hx, hy, hz = half_extents
    return np.array(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=float,
    )
