"""Pinhole camera model, offset back-projection and observation-angle conversion.

All angles are normalized to [-pi, pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class ImagePoint(NamedTuple):
    u: float
    v: float


class CameraPoint(NamedTuple):
    x: float
    y: float
    z: float


class BehindCameraError(ValueError):
    pass


def wrap_to_pi(angle):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    if np.ndim(angle) == 0:
        a = math.fmod(float(angle) + math.pi, TWO_PI)
        if a < 0.0:
            a += TWO_PI
        a -= math.pi
        # fmod rounding can land exactly on +pi
        if a >= math.pi:
            a -= TWO_PI
        return a
    a = np.mod(np.asarray(angle, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(a >= math.pi, a - TWO_PI, a)


@dataclass(frozen=True)
class CameraIntrinsics:
    alpha_x: float
    alpha_y: float
    u0: float
    v0: float
    full_projection: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (self.alpha_x > 0 and self.alpha_y > 0):
            raise ValueError(f"focal lengths must be positive, got {self.alpha_x}, {self.alpha_y}")
        if self.full_projection is None:
            object.__setattr__(self, "full_projection", self.matrix)
        else:
            P = np.array(self.full_projection, dtype=float).reshape(3, 4)
            P.setflags(write=False)
            object.__setattr__(self, "full_projection", P)

    @classmethod
    def from_projection(cls, P) -> "CameraIntrinsics":
        P = np.asarray(P, dtype=float).reshape(3, 4)
        return cls(P[0, 0], P[1, 1], P[0, 2], P[1, 2], P)

    @property
    def matrix(self) -> np.ndarray:
        """The 3x4 intrinsic matrix with a zero fourth column."""
        return np.array([
            [self.alpha_x, 0.0, self.u0, 0.0],
            [0.0, self.alpha_y, self.v0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])

    @property
    def has_translation(self) -> bool:
        return bool(np.any(self.full_projection[:, 3] != 0.0))

    @property
    def camera_offset(self) -> np.ndarray:
        """Translation t such that full_projection @ [p, 1] == K @ [p + t, 1].

        Zero for a plain intrinsic matrix; KITTI's P2 bakes a small baseline in.
        """
        P = self.full_projection
        tz = P[2, 3]
        tx = (P[0, 3] - self.u0 * tz) / self.alpha_x
        ty = (P[1, 3] - self.v0 * tz) / self.alpha_y
        return np.array([tx, ty, tz])

    def __eq__(self, other):
        if not isinstance(other, CameraIntrinsics):
            return NotImplemented
        return np.array_equal(self.full_projection, other.full_projection) and (
            self.alpha_x, self.alpha_y, self.u0, self.v0
        ) == (other.alpha_x, other.alpha_y, other.u0, other.v0)

    def __hash__(self):
        return hash((self.alpha_x, self.alpha_y, self.u0, self.v0))


def project(p: Sequence[float], K: CameraIntrinsics) -> ImagePoint:
    x, y, z = (float(c) for c in p)
    if K.has_translation:
        h = K.full_projection @ np.array([x, y, z, 1.0])
        if z <= 0.0 or h[2] <= 0.0:
            raise BehindCameraError(f"point behind camera (z={z})")
        return ImagePoint(h[0] / h[2], h[1] / h[2])
    if z <= 0.0:
        raise BehindCameraError(f"point behind camera (z={z})")
    return ImagePoint(K.alpha_x * x / z + K.u0, K.alpha_y * y / z + K.v0)


def project_points(points: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Vectorized projection of (..., 3) points to (..., 2) pixels; no depth check."""
    points = np.asarray(points, dtype=float)
    P = K.full_projection
    h = points @ P[:, :3].T + P[:, 3]
    return h[..., :2] / h[..., 2:3]


def solve_xy_from_image_offset(u, v, du, dv, z, K: CameraIntrinsics):
    """Recover (x, y) when the projected 3D center sits at (u + du, v + dv)."""
    if not z > 0:
        raise BehindCameraError(f"depth must be positive, got {z}")
    x = z / K.alpha_x * (u + du - K.u0)
    y = z / K.alpha_y * (v + dv - K.v0)
    return x, y


def solve_xy_from_camera_offset(u, v, dx, dy, z, K: CameraIntrinsics):
    """Recover (x, y) from the RoI center (u, v) back-projected to depth z, minus (dx, dy)."""
    if not z > 0:
        raise BehindCameraError(f"depth must be positive, got {z}")
    x = z * (u - K.u0) / K.alpha_x - dx
    y = z * (v - K.v0) / K.alpha_y - dy
    return x, y


def viewing_angle(x, z):
    """Angle of the camera ray through (x, z), measured from the optical axis."""
    if x == 0 and z == 0:
        raise ValueError("object at camera origin has no viewing ray")
    return math.atan2(x, z)


def ry_to_alpha(rotation_y, x, z):
    return wrap_to_pi(rotation_y - viewing_angle(x, z))


def alpha_to_ry(alpha, x, z):
    return wrap_to_pi(alpha + viewing_angle(x, z))
