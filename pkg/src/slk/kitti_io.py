"""KITTI object label, prediction and calibration files.

Label lines carry 15 whitespace-separated fields::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y

Prediction lines append a 16th ``score`` field. Numbers are written with two
decimals, as in the distributed KITTI files.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .camera import CameraIntrinsics
from .geometry import Box3D

LABEL_FIELDS = 15
PREDICTION_FIELDS = 16
DONTCARE = "DontCare"
_FRAME_RE = re.compile(r"^(\d+)\.txt$")


class KittiParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        super().__init__(str(self))

    def __str__(self):
        loc = ""
        if self.path is not None:
            loc = f"{self.path}:"
        if self.line is not None:
            loc += f"{self.line}:"
        return f"{loc} {self.message}" if loc else self.message


@dataclass(frozen=True)
class GroundTruthObject:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    box2d: tuple  # (left, top, right, bottom)
    dims: tuple  # (h, w, l)
    location: tuple  # (x, y, z)
    rotation_y: float

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == DONTCARE

    @property
    def bbox_height(self) -> float:
        return self.box2d[3] - self.box2d[1]

    @property
    def box3d(self) -> Box3D:
        return Box3D(self.dims, self.location, self.rotation_y)


@dataclass(frozen=True)
class Detection(GroundTruthObject):
    score: float = 1.0


@dataclass(frozen=True)
class CalibrationFile:
    projection: CameraIntrinsics
    matrices: dict = field(default_factory=dict, compare=False, repr=False)


def _parse_fields(parts, lineno):
    name = parts[0]
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        bad = next(p for p in parts[1:] if not _is_float(p))
        raise KittiParseError(f"non-numeric field {bad!r}", lineno) from None
    if not all(math.isfinite(n) for n in nums):
        raise KittiParseError("non-finite numeric field", lineno)
    occ = nums[1]
    if occ != int(occ):
        raise KittiParseError(f"occlusion code must be an integer, got {parts[2]}", lineno)
    left, top, right, bottom = nums[3:7]
    if not (right > left and bottom > top):
        raise KittiParseError("degenerate 2D box", lineno)
    return dict(
        class_name=name,
        truncation=nums[0],
        occlusion=int(occ),
        alpha=nums[2],
        box2d=(left, top, right, bottom),
        dims=tuple(nums[7:10]),
        location=tuple(nums[10:13]),
        rotation_y=nums[13],
    ), nums


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _iter_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.strip():
            yield lineno, raw.split()


def parse_label_file(text: str) -> list[GroundTruthObject]:
    objs = []
    for lineno, parts in _iter_lines(text):
        if len(parts) != LABEL_FIELDS:
            raise KittiParseError(f"expected {LABEL_FIELDS} fields, got {len(parts)}", lineno)
        kw, _ = _parse_fields(parts, lineno)
        objs.append(GroundTruthObject(**kw))
    return objs


def parse_prediction_file(text: str) -> list[Detection]:
    dets = []
    for lineno, parts in _iter_lines(text):
        if len(parts) != PREDICTION_FIELDS:
            raise KittiParseError(f"expected {PREDICTION_FIELDS} fields, got {len(parts)}", lineno)
        kw, nums = _parse_fields(parts, lineno)
        dets.append(Detection(**kw, score=nums[14]))
    return dets


def parse_calib_file(text: str) -> CalibrationFile:
    matrices = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        key, sep, rest = raw.partition(":")
        if not sep:
            raise KittiParseError("expected 'KEY: values'", lineno)
        try:
            matrices[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError:
            raise KittiParseError(f"non-numeric value in {key.strip()}", lineno) from None
    if "P2" not in matrices:
        raise KittiParseError("P2 missing")
    p2 = matrices["P2"]
    if p2.size != 12:
        raise KittiParseError(f"P2 must have 12 values, got {p2.size}")
    try:
        K = CameraIntrinsics.from_projection(p2.reshape(3, 4))
    except ValueError as exc:
        raise KittiParseError(str(exc)) from None
    return CalibrationFile(K, matrices)


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def format_object(obj: GroundTruthObject) -> str:
    parts = [obj.class_name, _fmt(obj.truncation), str(int(obj.occlusion)), _fmt(obj.alpha)]
    parts += [_fmt(v) for v in obj.box2d]
    parts += [_fmt(v) for v in obj.dims]
    parts += [_fmt(v) for v in obj.location]
    parts.append(_fmt(obj.rotation_y))
    if isinstance(obj, Detection):
        parts.append(f"{obj.score:.4f}")
    return " ".join(parts)


def serialize(objects: Iterable[GroundTruthObject]) -> str:
    return "".join(format_object(o) + "\n" for o in objects)


def serialize_calib(calib: CalibrationFile) -> str:
    mats = dict(calib.matrices)
    mats["P2"] = calib.projection.full_projection.reshape(-1)
    out = []
    for key, vals in mats.items():
        out.append(f"{key}: " + " ".join(f"{v:.12e}" for v in np.ravel(vals)))
    return "\n".join(out) + "\n"


def normalized(obj: GroundTruthObject) -> GroundTruthObject:
    """The object as it reads back after a serialize/parse round trip."""
    line = format_object(obj)
    if isinstance(obj, Detection):
        return parse_prediction_file(line)[0]
    return parse_label_file(line)[0]


# directory trees ----------------------------------------------------------

def frame_path(directory, frame_id: int) -> Path:
    return Path(directory) / f"{frame_id:06d}.txt"


def list_frames(directory) -> list[int]:
    d = Path(directory)
    if not d.is_dir():
        return []
    ids = []
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            ids.append(int(m.group(1)))
    return sorted(ids)


def _read(parser, path):
    try:
        return parser(Path(path).read_text())
    except KittiParseError as exc:
        exc.path = str(path)
        raise


def read_labels(path) -> list[GroundTruthObject]:
    return _read(parse_label_file, path)


def read_predictions(path) -> list[Detection]:
    return _read(parse_prediction_file, path)


def read_calib(path) -> CalibrationFile:
    return _read(parse_calib_file, path)


def load_label_dir(directory) -> dict[int, list[GroundTruthObject]]:
    return {f: read_labels(frame_path(directory, f)) for f in list_frames(directory)}


def load_prediction_dir(directory) -> dict[int, list[Detection]]:
    return {f: read_predictions(frame_path(directory, f)) for f in list_frames(directory)}


def write_tree(directory, frames: dict[int, list[GroundTruthObject]]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for frame_id, objs in frames.items():
        frame_path(d, frame_id).write_text(serialize(objs))


def write_calib_tree(directory, calibs: dict[int, CalibrationFile]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for frame_id, calib in calibs.items():
        frame_path(d, frame_id).write_text(serialize_calib(calib))


def validate_objects(objs: Iterable[GroundTruthObject]) -> list[str]:
    """Soft problems the parser accepts but downstream code should know about."""
    issues = []
    for i, o in enumerate(objs, start=1):
        if not 0.0 <= o.truncation <= 1.0 and not o.is_dontcare:
            issues.append(f"object {i}: truncation {o.truncation} outside [0, 1]")
        if o.occlusion not in (0, 1, 2, 3) and not o.is_dontcare:
            issues.append(f"object {i}: occlusion code {o.occlusion} not in 0..3")
        if not o.is_dontcare and not all(d > 0 for d in o.dims):
            issues.append(f"object {i}: non-positive dimensions {o.dims}")
        if isinstance(o, Detection) and not 0.0 <= o.score <= 1.0:
            issues.append(f"object {i}: score {o.score} outside [0, 1]")
    return issues


__all__ = [
    "CalibrationFile", "Detection", "GroundTruthObject", "KittiParseError",
    "parse_calib_file", "parse_label_file", "parse_prediction_file", "serialize",
    "serialize_calib", "format_object", "normalized", "validate_objects",
]
