"""Bin schedules: quantize a degree of freedom, encode targets, decode score vectors.

A prediction is the score-weighted sum of bin values, where a bin value is the
absolute center of the bin (``bin_value="center"``) or, for ablations, its
lower edge (``bin_value="lower"``).
"""
from __future__ import annotations

import configparser
import enum
import io
import math
from dataclasses import dataclass, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

NORMALIZATION_TOL = 1e-6


class BinKind(str, enum.Enum):
    UNIFORM = "Uniform"
    LINEAR_GROWTH = "LinearGrowth"


@dataclass(frozen=True)
class BinSchedule:
    """Half-open partition of one degree of freedom.

    Uniform bins all have width ``step``. LinearGrowth bin i has width
    ``step * (i + 1)``, so its lower edge is ``lower + step * i * (i + 1) / 2``.
    """

    kind: BinKind
    lower: float
    count: int
    step: float

    def __post_init__(self):
        object.__setattr__(self, "kind", BinKind(self.kind))
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"bin count must be a positive integer, got {self.count}")
        object.__setattr__(self, "count", int(self.count))
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"bin step must be positive, got {self.step}")
        if not math.isfinite(self.lower):
            raise ValueError("lower bound must be finite")

    @classmethod
    def uniform(cls, lower, count, step):
        return cls(BinKind.UNIFORM, lower, count, step)

    @classmethod
    def linear_growth(cls, lower, count, step):
        return cls(BinKind.LINEAR_GROWTH, lower, count, step)

    @cached_property
    def edges(self) -> np.ndarray:
        k = np.arange(self.count + 1)
        if self.kind is BinKind.UNIFORM:
            offsets = self.step * k
        else:
            offsets = self.step * (k * (k + 1) // 2)
        e = self.lower + offsets
        e.setflags(write=False)
        return e

    @cached_property
    def centers(self) -> np.ndarray:
        c = 0.5 * (self.edges[:-1] + self.edges[1:])
        c.setflags(write=False)
        return c

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def upper(self) -> float:
        return float(self.edges[-1])

    def bin_values(self, mode: str = "center") -> np.ndarray:
        if mode == "center":
            return self.centers
        if mode == "lower":
            return self.edges[:-1]
        raise ValueError(f"unknown bin_value mode {mode!r}")


def bin_index(schedule: BinSchedule, value):
    """Index of the bin containing ``value``; out-of-range values clamp to the end bins."""
    idx = np.searchsorted(schedule.edges, value, side="right") - 1
    idx = np.clip(idx, 0, schedule.count - 1)
    if np.ndim(idx) == 0:
        return int(idx)
    return idx


def encode_one_hot(schedule: BinSchedule, value) -> np.ndarray:
    """One-hot target; an array of n values gives an (n, count) array."""
    idx = bin_index(schedule, value)
    if np.ndim(idx) == 0:
        scores = np.zeros(schedule.count)
        scores[idx] = 1.0
        return scores
    scores = np.zeros(np.shape(idx) + (schedule.count,))
    np.put_along_axis(scores, idx[..., None], 1.0, axis=-1)
    return scores


def encode(schedule: BinSchedule, value, smoothing: float = 0.0) -> np.ndarray:
    """Classification target; ``smoothing`` moves that much mass onto the two neighbours."""
    if smoothing <= 0.0:
        return encode_one_hot(schedule, value)
    if not smoothing < 1.0:
        raise ValueError("smoothing must be in [0, 1)")
    if np.ndim(value) > 0:
        return np.stack([encode(schedule, v, smoothing) for v in np.asarray(value, dtype=float).ravel()])
    target = encode_one_hot(schedule, value)
    i = bin_index(schedule, value)
    neighbours = [j for j in (i - 1, i + 1) if 0 <= j < schedule.count]
    if not neighbours:
        return target
    target[i] = 1.0 - smoothing
    for j in neighbours:
        target[j] = smoothing / len(neighbours)
    return target


def normalize(scores) -> np.ndarray:
    """Scale scores to sum to one along the last axis."""
    s = np.asarray(scores, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite and nonnegative")
    total = s.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("scores sum to zero")
    return s / total


def _checked(schedule: BinSchedule, scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim not in (1, 2) or s.shape[-1] != schedule.count:
        raise ValueError(f"expected {schedule.count} scores, got shape {s.shape}")
    if np.any(np.abs(s.sum(axis=-1) - 1.0) > NORMALIZATION_TOL) or np.any(s < 0):
        s = normalize(s)
    return s


def decode(schedule: BinSchedule, scores, bin_value: str = "center"):
    """Score-weighted sum of bin values; a float, or an array for (n, count) scores."""
    s = _checked(schedule, scores)
    out = s @ schedule.bin_values(bin_value)
    return float(out) if s.ndim == 1 else out


def decode_angle_circular(schedule: BinSchedule, scores) -> float:
    """Wrap-safe angle decode: direction of the score-weighted sum of unit vectors."""
    s = _checked(schedule, scores)
    c = schedule.centers
    return float(math.atan2(s @ np.sin(c), s @ np.cos(c)))


def quantization_error_bound(schedule: BinSchedule) -> float:
    return float(schedule.widths.max() / 2.0)


DOF_NAMES = ("height", "width", "length", "depth", "dx", "dy", "angle")


@dataclass(frozen=True)
class DofSchedules:
    height: BinSchedule = BinSchedule.uniform(1.2, 8, 0.1)
    width: BinSchedule = BinSchedule.uniform(1.2, 8, 0.1)
    length: BinSchedule = BinSchedule.uniform(3.0, 10, 0.2)
    depth: BinSchedule = BinSchedule.linear_growth(0.0, 100, 0.02)
    dx: BinSchedule = BinSchedule.uniform(-1.0, 40, 0.05)
    dy: BinSchedule = BinSchedule.uniform(-0.5, 20, 0.05)
    angle: BinSchedule = BinSchedule.uniform(-math.pi, 36, math.pi / 18)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def with_(self, **overrides) -> "DofSchedules":
        return replace(self, **overrides)

    def to_config(self) -> str:
        cp = configparser.ConfigParser()
        for name, sched in self.items():
            cp[name] = {
                "kind": sched.kind.value,
                "lower": repr(float(sched.lower)),
                "count": str(sched.count),
                "step": repr(float(sched.step)),
            }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_config(cls, text: str) -> "DofSchedules":
        """Parse an INI-style schedule file; sections not present keep their defaults."""
        cp = configparser.ConfigParser()
        cp.read_string(text)
        overrides = {}
        for section in cp.sections():
            if section not in DOF_NAMES:
                raise ValueError(f"unknown degree of freedom {section!r}")
            sec = cp[section]
            try:
                overrides[section] = BinSchedule(
                    BinKind(sec.get("kind", "Uniform")),
                    _parse_float(sec["lower"]),
                    int(sec["count"]),
                    _parse_float(sec["step"]),
                )
            except KeyError as exc:
                raise ValueError(f"[{section}] missing field {exc.args[0]}") from None
        return cls(**overrides)

    @classmethod
    def load(cls, path) -> "DofSchedules":
        return cls.from_config(Path(path).read_text())


def _parse_float(text: str) -> float:
    # lets config files write angles as multiples of pi, e.g. "-pi" or "pi/18"
    t = text.strip().replace(" ", "")
    if "pi" in t:
        sign = -1.0 if t.startswith("-") else 1.0
        t = t.lstrip("+-")
        num, _, den = t.partition("/")
        coeff = num.replace("pi", "").rstrip("*") or "1"
        value = float(coeff) * math.pi
        if den:
            value /= float(den)
        return sign * value
    return float(t)
