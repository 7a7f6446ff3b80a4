"""Translation of a 3D box from its tight 2D box, dimensions and yaw.

Each 2D box edge is touched by one projected box corner. For a chosen
assignment of corners to edges (a corner configuration) the four tangency
constraints are linear in the unknown translation T and are solved in the
least-squares sense. The configuration itself is not known in advance, so
every yaw-consistent configuration is solved and the one whose reconstructed
box reprojects closest to the observed 2D box wins.

Row layout of the linear system ``A @ T = b`` (r^k = R @ corner_k, the
rotated corner assigned to edge k in the order x_min, y_min, x_max, y_max)::

    [ -1        0                     (x_min - u0)/ax ]       [ r0x + r0z (u0 - x_min)/ax ]
    [  0       -1                     (y_min - v0)/ay ]  T =  [ r1y + r1z (v0 - y_min)/ay ]
    [ -ax/(u0 - x_max)   0            -1              ]       [ r2z + ax r2x / (u0 - x_max) ]
    [  0       -ay/(v0 - y_max)       -1              ]       [ r3z + ay r3y / (v0 - y_max) ]

``literal_rhs=True`` reproduces a variant whose last right-hand-side
denominator reads ``(v0 - x_min)``; it is inconsistent with the projection
model and kept only for comparison.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .camera import CameraIntrinsics
from .geometry import object_corners, rotation_y

DEGENERATE_TOL = 1e-9
COND_LIMIT = 1e12
REPROJECTION_TIE_TOL = 1e-9


class DegenerateConfiguration(ValueError):
    pass


class NoPhysicalSolution(ValueError):
    pass


class CornerConfiguration(NamedTuple):
    x_min_corner: int
    y_min_corner: int
    x_max_corner: int
    y_max_corner: int


@dataclass(frozen=True)
class TranslationSolution:
    t: np.ndarray
    residual: float
    configuration: CornerConfiguration
    reprojection_error: float


def x_tilde(h: Sequence[float]) -> float:
    """Extract the x image coordinate from a homogeneous 3-vector."""
    return h[0] / h[2]


def y_tilde(h: Sequence[float]) -> float:
    return h[1] / h[2]


def all_configurations() -> list[CornerConfiguration]:
    """Every assignment of the 8 corners to the 4 edges (8**4 of them)."""
    return [CornerConfiguration(*c) for c in itertools.product(range(8), repeat=4)]


def yaw_configurations() -> list[CornerConfiguration]:
    """Configurations possible for an upright box rotated only about y.

    Both corners of a vertical edge share x and z and therefore project to the
    same image column, so a horizontal extreme is fixed by choosing one of the 4
    vertical edges (represented by its bottom corner). The top image edge can
    only be touched by a top corner and the bottom image edge by a bottom
    corner, giving 4**4 = 256 candidates.
    """
    return [
        CornerConfiguration(xmin, ymin, xmax, ymax)
        for xmin, ymin, xmax, ymax in itertools.product(range(4), range(4, 8), range(4), range(4))
    ]


def _systems(box2d, dims, yaw, K: CameraIntrinsics, configs: np.ndarray, literal_rhs: bool):
    """Batched (n, 4, 3) matrices and (n, 4) right-hand sides."""
    x_min, y_min, x_max, y_max = (float(v) for v in box2d)
    ax, ay, u0, v0 = K.alpha_x, K.alpha_y, K.u0, K.v0
    rotated = object_corners(dims) @ rotation_y(yaw).T
    r = rotated[configs]  # (n, 4, 3)
    n = len(configs)

    dx_max = u0 - x_max
    dy_max = v0 - y_max
    if abs(dx_max) < DEGENERATE_TOL or abs(dy_max) < DEGENERATE_TOL:
        raise DegenerateConfiguration("2D box edge passes through the principal point")
    dy_rhs = (v0 - x_min) if literal_rhs else dy_max
    if abs(dy_rhs) < DEGENERATE_TOL:
        raise DegenerateConfiguration("zero denominator in right-hand side")

    A = np.zeros((n, 4, 3))
    A[:, 0] = [-1.0, 0.0, (x_min - u0) / ax]
    A[:, 1] = [0.0, -1.0, (y_min - v0) / ay]
    A[:, 2] = [-ax / dx_max, 0.0, -1.0]
    A[:, 3] = [0.0, -ay / dy_max, -1.0]

    b = np.empty((n, 4))
    b[:, 0] = r[:, 0, 0] + r[:, 0, 2] * (u0 - x_min) / ax
    b[:, 1] = r[:, 1, 1] + r[:, 1, 2] * (v0 - y_min) / ay
    b[:, 2] = r[:, 2, 2] + ax * r[:, 2, 0] / dx_max
    b[:, 3] = r[:, 3, 2] + ay * r[:, 3, 1] / dy_rhs
    return A, b


def _systems_unscaled(box2d, dims, yaw, K: CameraIntrinsics, configs: np.ndarray):
    """Same constraints with rows 3-4 written like rows 1-2; no division by edge offsets."""
    x_min, y_min, x_max, y_max = (float(v) for v in box2d)
    ax, ay, u0, v0 = K.alpha_x, K.alpha_y, K.u0, K.v0
    r = (object_corners(dims) @ rotation_y(yaw).T)[configs]
    n = len(configs)
    A = np.zeros((n, 4, 3))
    A[:, 0] = [-1.0, 0.0, (x_min - u0) / ax]
    A[:, 1] = [0.0, -1.0, (y_min - v0) / ay]
    A[:, 2] = [-1.0, 0.0, (x_max - u0) / ax]
    A[:, 3] = [0.0, -1.0, (y_max - v0) / ay]
    b = np.empty((n, 4))
    b[:, 0] = r[:, 0, 0] + r[:, 0, 2] * (u0 - x_min) / ax
    b[:, 1] = r[:, 1, 1] + r[:, 1, 2] * (v0 - y_min) / ay
    b[:, 2] = r[:, 2, 0] + r[:, 2, 2] * (u0 - x_max) / ax
    b[:, 3] = r[:, 3, 1] + r[:, 3, 2] * (v0 - y_max) / ay
    return A, b


def build_system(box2d, dims, yaw, K: CameraIntrinsics, config: CornerConfiguration, literal_rhs=False):
    """Linear system for one corner configuration, in the intrinsic camera frame.

    When K carries a translation column, the solution of this system is
    ``T + K.camera_offset``; :func:`solve_translation` removes the offset.
    """
    cfg = np.asarray([config], dtype=int)
    A, b = _systems(box2d, dims, yaw, K, cfg, literal_rhs)
    return A[0], b[0]


def least_squares(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normal-equation solve, falling back to SVD-based lstsq when ill-conditioned."""
    AtA = A.T @ A
    if np.linalg.cond(AtA) > COND_LIMIT:
        return np.linalg.lstsq(A, b, rcond=None)[0]
    return np.linalg.solve(AtA, A.T @ b)


def _batched_lstsq(A, b):
    AtA = np.einsum("nki,nkj->nij", A, A)
    Atb = np.einsum("nki,nk->ni", A, b)
    cond = np.linalg.cond(AtA)
    T = np.empty((len(A), 3))
    ok = cond <= COND_LIMIT
    if ok.any():
        T[ok] = np.linalg.solve(AtA[ok], Atb[ok][..., None])[..., 0]
    for i in np.flatnonzero(~ok):
        T[i] = np.linalg.lstsq(A[i], b[i], rcond=None)[0]
    return T


def tight_box(points_2d: np.ndarray) -> np.ndarray:
    """(left, top, right, bottom) of (..., 8, 2) projected corners."""
    mn = points_2d.min(axis=-2)
    mx = points_2d.max(axis=-2)
    return np.stack([mn[..., 0], mn[..., 1], mx[..., 0], mx[..., 1]], axis=-1)


def solve_translation(
    box2d,
    dims,
    yaw: float,
    K: CameraIntrinsics,
    *,
    configurations: Sequence[CornerConfiguration] | None = None,
    literal_rhs: bool = False,
) -> TranslationSolution:
    """Least-squares translation (KITTI bottom-center location) for the best configuration.

    Candidates with any corner at or behind the camera are discarded. Among the
    rest the smallest L1 reprojection error against ``box2d`` wins; candidates
    within ``REPROJECTION_TIE_TOL`` of it are separated by the smaller algebraic
    residual, then by enumeration order.
    """
    box2d = np.asarray(box2d, dtype=float)
    if not (box2d[2] > box2d[0] and box2d[3] > box2d[1]):
        raise ValueError("degenerate 2D box")
    configs = yaw_configurations() if configurations is None else list(configurations)
    cfg = np.asarray(configs, dtype=int)
    try:
        A, b = _systems(box2d, dims, yaw, K, cfg, literal_rhs)
    except DegenerateConfiguration:
        # an edge through the principal point: the divided rows blow up, the
        # undivided form of the same constraints does not
        A, b = _systems_unscaled(box2d, dims, yaw, K, cfg)
    T_cam = _batched_lstsq(A, b)
    residual = np.linalg.norm(np.einsum("nij,nj->ni", A, T_cam) - b, axis=1)

    rotated = object_corners(dims) @ rotation_y(yaw).T
    pts = rotated[None, :, :] + T_cam[:, None, :]  # intrinsic camera frame
    in_front = np.all(pts[..., 2] > 0, axis=1) & (T_cam[:, 2] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([
            K.alpha_x * pts[..., 0] / pts[..., 2] + K.u0,
            K.alpha_y * pts[..., 1] / pts[..., 2] + K.v0,
        ], axis=-1)
        err = np.abs(tight_box(uv) - box2d).sum(axis=1)
    valid = in_front & np.isfinite(err) & np.isfinite(residual)
    if not valid.any():
        raise NoPhysicalSolution("no configuration places the box in front of the camera")

    best_err = err[valid].min()
    tied = np.flatnonzero(valid & (err <= best_err + REPROJECTION_TIE_TOL))
    win = tied[np.argmin(residual[tied])]  # argmin keeps the first on exact ties
    t = T_cam[win] - K.camera_offset
    return TranslationSolution(
        t=t,
        residual=float(residual[win]),
        configuration=CornerConfiguration(*(int(c) for c in cfg[win])),
        reprojection_error=float(err[win]),
    )
