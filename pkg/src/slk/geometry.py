"""Oriented 3D boxes in KITTI camera coordinates, BEV footprints and 3D IoU.

Camera frame: x right, y down, z forward. A box's location is the center of
its bottom face, so it spans [y - h, y] vertically, and yaw rotates it about
the camera y-axis.

Corner ordering (object frame, before rotation), shared by every consumer::

    index   x      y    z
      0   +l/2    0   +w/2
      1   +l/2    0   -w/2
      2   -l/2    0   -w/2
      3   -l/2    0   +w/2
      4-7   same x/z as 0-3, y = -h

Corners i and i + 4 form one vertical edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .camera import wrap_to_pi

COLLINEAR_TOL = 1e-12

_CORNER_SIGNS = np.array([
    [1, 0, 1], [1, 0, -1], [-1, 0, -1], [-1, 0, 1],
    [1, -1, 1], [1, -1, -1], [-1, -1, -1], [-1, -1, 1],
], dtype=float)


def rotation_y(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def object_corners(dims: Sequence[float]) -> np.ndarray:
    """(8, 3) corners relative to the bottom center, unrotated."""
    h, w, l = dims
    return _CORNER_SIGNS * np.array([l / 2.0, h, w / 2.0])


@dataclass(frozen=True)
class Box3D:
    dims: tuple  # (h, w, l)
    location: tuple  # (x, y, z), bottom-face center
    yaw: float

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or not all(d > 0 for d in dims):
            raise ValueError(f"box dims must be three positive values, got {self.dims}")
        loc = tuple(float(c) for c in self.location)
        if len(loc) != 3:
            raise ValueError("location must have three coordinates")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "yaw", wrap_to_pi(self.yaw))

    @property
    def volume(self) -> float:
        h, w, l = self.dims
        return h * w * l

    @property
    def center(self) -> np.ndarray:
        x, y, z = self.location
        return np.array([x, y - self.dims[0] / 2.0, z])


def corners(box: Box3D) -> np.ndarray:
    return object_corners(box.dims) @ rotation_y(box.yaw).T + np.asarray(box.location)


@dataclass(frozen=True)
class ConvexPolygon2D:
    """Counter-clockwise vertices in the (x, z) ground plane."""

    vertices: tuple

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def __len__(self):
        return len(self.vertices)


def polygon_area(vertices: Sequence[Sequence[float]]) -> float:
    n = len(vertices)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x1, z1 = vertices[i]
        x2, z2 = vertices[(i + 1) % n]
        s += x1 * z2 - x2 * z1
    return abs(s) / 2.0


def _signed_area(vertices) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x1, z1 = vertices[i]
        x2, z2 = vertices[(i + 1) % n]
        s += x1 * z2 - x2 * z1
    return s / 2.0


def bev_polygon(box: Box3D, origin=(0.0, 0.0)) -> ConvexPolygon2D:
    """Ground footprint; ``origin`` (x, z) is subtracted before the corners are formed."""
    x, y, z = box.location
    local = Box3D(box.dims, (x - origin[0], y, z - origin[1]), box.yaw)
    c = corners(local)[:4]
    verts = [(float(p[0]), float(p[2])) for p in c]
    if _signed_area(verts) < 0:
        verts.reverse()
    return ConvexPolygon2D(tuple(verts))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_intersection(a: ConvexPolygon2D, b: ConvexPolygon2D) -> ConvexPolygon2D:
    """Sutherland-Hodgman clip of ``a`` against each edge of ``b`` (both CCW)."""
    output = list(a.vertices)
    clip = list(b.vertices)
    if len(output) < 3 or len(clip) < 3:
        return ConvexPolygon2D(())
    for i in range(len(clip)):
        if not output:
            break
        e0, e1 = clip[i], clip[(i + 1) % len(clip)]
        inp, output = output, []
        prev = inp[-1]
        prev_side = _cross(e0, e1, prev)
        for cur in inp:
            cur_side = _cross(e0, e1, cur)
            if cur_side >= 0:
                if prev_side < 0:
                    output.append(_segment_hit(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0:
                output.append(_segment_hit(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return ConvexPolygon2D(tuple(_dedupe(output)))


def _segment_hit(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _dedupe(pts):
    out = []
    for p in pts:
        if not out or abs(p[0] - out[-1][0]) > COLLINEAR_TOL or abs(p[1] - out[-1][1]) > COLLINEAR_TOL:
            out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= COLLINEAR_TOL and abs(out[0][1] - out[-1][1]) <= COLLINEAR_TOL:
        out.pop()
    if len(out) < 3:
        return []
    return out


def _box_key(box: Box3D):
    return (box.location, box.dims, box.yaw)


def iou_3d(a: Box3D, b: Box3D) -> float:
    # fixed operand order makes the result bitwise symmetric
    if _box_key(b) < _box_key(a):
        a, b = b, a
    ya, yb = a.location[1], b.location[1]
    y_overlap = max(0.0, min(ya, yb) - max(ya - a.dims[0], yb - b.dims[0]))
    if y_overlap <= 0.0:
        return 0.0
    # clip near the origin to limit cancellation for small, distant boxes
    origin = (a.location[0], a.location[2])
    inter = polygon_intersection(bev_polygon(a, origin), bev_polygon(b, origin)).area * y_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def iou_matrix(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    m = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            m[i, j] = iou_3d(a, b)
    return m


def bev_svg(
    gt_boxes: Iterable[Box3D],
    pred_boxes: Iterable[Box3D] = (),
    *,
    x_range=(-40.0, 40.0),
    z_range=(0.0, 80.0),
    scale: float = 8.0,
    title: str | None = None,
) -> str:
    """Top-down SVG of box footprints: camera at the bottom, +z up the page."""
    width = (x_range[1] - x_range[0]) * scale
    height = (z_range[1] - z_range[0]) * scale

    def to_px(x, z):
        return (x - x_range[0]) * scale, (z_range[1] - z) * scale

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        "<style>"
        ".gt{fill:none;stroke:#1f4fd1;stroke-width:2}"
        ".pred{fill:none;stroke:#d11f1f;stroke-width:2;stroke-dasharray:6 3}"
        ".cam{fill:#000}"
        "</style>",
    ]
    if title:
        lines.append(f"<title>{title}</title>")
    cx, cz = to_px(0.0, 0.0)
    lines.append(f'<circle class="cam" cx="{cx:.2f}" cy="{cz:.2f}" r="4"/>')
    for cls, boxes in (("gt", gt_boxes), ("pred", pred_boxes)):
        for box in boxes:
            pts = " ".join(f"{px:.2f},{pz:.2f}" for px, pz in (to_px(*v) for v in bev_polygon(box).vertices))
            lines.append(f'<polygon class="{cls}" points="{pts}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
