"""KITTI-style 3D detection evaluation: difficulty buckets, greedy matching, AP.

Per difficulty, a ground-truth object of the evaluated class is either *cared
for* (it meets all three thresholds) or *ignored*. Detections that match an
ignored object, a neighbouring class (Van for Car) or a DontCare region count
neither as true nor as false positives. Detections whose 2D box is shorter than
the difficulty's minimum height are ignored as well.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import iou_matrix
from .kitti_io import DONTCARE, Detection, GroundTruthObject

log = logging.getLogger(__name__)

DONTCARE_OVERLAP = 0.5
NEIGHBOUR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}


class Difficulty(str, enum.Enum):
    EASY = "Easy"
    MODERATE = "Moderate"
    HARD = "Hard"


@dataclass(frozen=True)
class DifficultyRule:
    min_bbox_height_px: float
    max_occlusion_code: int
    max_truncation: float

    def admits(self, gt: GroundTruthObject) -> bool:
        return (
            gt.bbox_height >= self.min_bbox_height_px
            and 0 <= gt.occlusion <= self.max_occlusion_code
            and gt.truncation <= self.max_truncation
        )


DIFFICULTY_RULES = {
    Difficulty.EASY: DifficultyRule(40, 0, 0.15),
    Difficulty.MODERATE: DifficultyRule(25, 1, 0.30),
    Difficulty.HARD: DifficultyRule(25, 2, 0.50),
}


def assign_difficulty(gt: GroundTruthObject, rules=DIFFICULTY_RULES) -> frozenset:
    return frozenset(d for d, rule in rules.items() if rule.admits(gt))


class Outcome(str, enum.Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "IgnoredMatch"


class GtState(str, enum.Enum):
    MATCHED = "matched"
    MISSED = "missed"
    IGNORED = "ignored"


@dataclass
class FrameMatch:
    """Outcomes in input order; ``scores`` aligned with ``outcomes``."""

    outcomes: list
    scores: list
    gt_states: list

    @property
    def tp(self) -> int:
        return sum(o is Outcome.TP for o in self.outcomes)

    @property
    def fp(self) -> int:
        return sum(o is Outcome.FP for o in self.outcomes)

    @property
    def fn(self) -> int:
        return sum(s is GtState.MISSED for s in self.gt_states)


def _box_area(b):
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def _covered_by_dontcare(det: GroundTruthObject, regions: Sequence[GroundTruthObject]) -> bool:
    a = _box_area(det.box2d)
    if a <= 0:
        return False
    for r in regions:
        ix = min(det.box2d[2], r.box2d[2]) - max(det.box2d[0], r.box2d[0])
        iy = min(det.box2d[3], r.box2d[3]) - max(det.box2d[1], r.box2d[1])
        if ix > 0 and iy > 0 and ix * iy / a >= DONTCARE_OVERLAP:
            return True
    return False


@dataclass
class _FrameData:
    """Class-filtered view of one frame with its detection x ground-truth IoU matrix."""

    dets: list
    care_candidates: list  # gts of the evaluated class
    neighbours: list  # gts of a neighbouring class, always ignored
    dontcare: list
    iou: np.ndarray  # (len(dets), len(care_candidates) + len(neighbours))
    order: list = field(default_factory=list)  # detection indices by descending score, stable
    iou_rows: list = field(default_factory=list)
    dontcare_hit: list = field(default_factory=list)


def _prepare(dets, gts, class_name) -> _FrameData:
    dets = [d for d in dets if d.class_name == class_name]
    own = [g for g in gts if g.class_name == class_name]
    neigh = [g for g in gts if g.class_name in NEIGHBOUR_CLASSES.get(class_name, ())]
    dc = [g for g in gts if g.class_name == DONTCARE]
    boxes_gt = [g.box3d for g in own + neigh]
    if dets and boxes_gt:
        iou = iou_matrix([d.box3d for d in dets], boxes_gt)
    else:
        iou = np.zeros((len(dets), len(boxes_gt)))
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    return _FrameData(dets, own, neigh, dc, iou, order, iou.tolist(),
                      [_covered_by_dontcare(d, dc) for d in dets])


def _match(frame: _FrameData, iou_threshold: float, difficulty: Difficulty, rules) -> FrameMatch:
    rule = rules[difficulty]
    care = [rule.admits(g) for g in frame.care_candidates] + [False] * len(frame.neighbours)
    states = [GtState.MISSED if c else GtState.IGNORED for c in care[: len(frame.care_candidates)]]
    taken = [False] * len(care)
    outcomes = [None] * len(frame.dets)

    for i in frame.order:
        if frame.dets[i].bbox_height < rule.min_bbox_height_px:
            outcomes[i] = Outcome.IGNORED
            continue
        best_j, best_iou, hit_ignored = -1, -1.0, False
        for j, v in enumerate(frame.iou_rows[i]):
            if v <= 0.0 or v < iou_threshold:
                continue
            if care[j]:
                # first index wins among equal IoUs
                if not taken[j] and v > best_iou:
                    best_j, best_iou = j, v
            else:
                hit_ignored = True
        if best_j >= 0:
            taken[best_j] = True
            states[best_j] = GtState.MATCHED
            outcomes[i] = Outcome.TP
        elif hit_ignored or frame.dontcare_hit[i]:
            outcomes[i] = Outcome.IGNORED
        else:
            outcomes[i] = Outcome.FP
    return FrameMatch(outcomes, [d.score for d in frame.dets], states)


def match_frame(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float,
    difficulty: Difficulty = Difficulty.MODERATE,
    class_name: str = "Car",
    rules=DIFFICULTY_RULES,
) -> FrameMatch:
    """Greedy matching of one frame; outcome lists follow the class-filtered input order."""
    return _match(_prepare(dets, gts, class_name), iou_threshold, difficulty, rules)


# precision / recall --------------------------------------------------------

class Interp(enum.IntEnum):
    INTERP11 = 11
    INTERP40 = 40


def recall_points(mode: Interp) -> np.ndarray:
    if Interp(mode) is Interp.INTERP11:
        return np.linspace(0.0, 1.0, 11)
    return np.arange(1, 41) / 40.0


def pr_curve(scored_outcomes: Iterable[tuple], n_gt: int) -> list[tuple[float, float]]:
    """(recall, precision) after each ranked non-ignored detection.

    ``scored_outcomes`` are (score, is_tp) pairs; sorting is stable so equal
    scores keep their given order.
    """
    ranked = sorted(scored_outcomes, key=lambda so: -so[0])
    curve = []
    tp = fp = 0
    for _, is_tp in ranked:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt else 0.0
        curve.append((recall, tp / (tp + fp)))
    return curve


def average_precision(curve: Sequence[tuple[float, float]], mode: Interp = Interp.INTERP40) -> float:
    """Mean over fixed recall points of the best precision at or above each point."""
    if not curve:
        return 0.0
    rec = np.array([c[0] for c in curve])
    prec = np.array([c[1] for c in curve])
    # running max from the right: best precision at recall >= rec[k]
    envelope = np.maximum.accumulate(prec[::-1])[::-1]
    total = 0.0
    pts = recall_points(mode)
    for r in pts:
        k = np.searchsorted(rec, r - 1e-12, side="left")
        if k < len(rec):
            total += envelope[k]
    return float(total / len(pts))


# dataset-level ---------------------------------------------------------------

@dataclass
class DifficultyResult:
    ap11: float
    ap40: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    curve: list = field(repr=False)

    def ap(self, mode: Interp = Interp.INTERP40) -> float:
        return self.ap11 if Interp(mode) is Interp.INTERP11 else self.ap40


@dataclass
class EvalReport:
    iou_threshold: float
    class_name: str
    interp: Interp
    results: dict  # Difficulty -> DifficultyResult
    skipped_frames: list = field(default_factory=list)

    def ap(self, difficulty: Difficulty) -> float:
        return self.results[Difficulty(difficulty)].ap(self.interp)

    def format_text(self) -> str:
        lines = [
            f"class={self.class_name} iou>={self.iou_threshold:.2f} default_interp={int(self.interp)}",
            f"{'difficulty':<10} {'AP11':>8} {'AP40':>8} {'TP':>6} {'FP':>6} {'FN':>6}",
        ]
        for d, r in self.results.items():
            lines.append(f"{d.value:<10} {100 * r.ap11:8.2f} {100 * r.ap40:8.2f} {r.tp:6d} {r.fp:6d} {r.fn:6d}")
        if self.skipped_frames:
            lines.append(f"skipped frames (id mismatch): {len(self.skipped_frames)}")
        return "\n".join(lines) + "\n"

    def format_result_file(self) -> str:
        """One line per difficulty: name AP11 AP40 TP FP FN."""
        return "".join(
            f"{d.value} {r.ap11!r} {r.ap40!r} {r.tp} {r.fp} {r.fn}\n" for d, r in self.results.items()
        )


def _aligned_frames(dataset: Mapping, predictions: Mapping):
    common = sorted(set(dataset) & set(predictions))
    skipped = sorted(set(dataset) ^ set(predictions))
    for f in skipped:
        side = "predictions" if f in dataset else "ground truth"
        log.warning("frame %s has no %s; skipped", f, side)
    return common, skipped


def _prepare_all(dataset, predictions, class_name, threads):
    frames, skipped = _aligned_frames(dataset, predictions)

    def prep(f):
        return _prepare(predictions[f], dataset[f], class_name)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            prepared = list(pool.map(prep, frames))
    else:
        prepared = [prep(f) for f in frames]
    return prepared, skipped


def _evaluate_prepared(prepared, iou_threshold, difficulties, rules):
    results = {}
    for diff in difficulties:
        scored, tp, fp, fn, n_gt = [], 0, 0, 0, 0
        for frame in prepared:
            m = _match(frame, iou_threshold, diff, rules)
            for o, s in zip(m.outcomes, m.scores):
                if o is not Outcome.IGNORED:
                    scored.append((s, o is Outcome.TP))
            tp += m.tp
            fp += m.fp
            fn += m.fn
            n_gt += sum(st is not GtState.IGNORED for st in m.gt_states)
        curve = pr_curve(scored, n_gt)
        results[diff] = DifficultyResult(
            average_precision(curve, Interp.INTERP11),
            average_precision(curve, Interp.INTERP40),
            tp, fp, fn, n_gt, curve,
        )
    return results


def evaluate(
    dataset: Mapping[int, Sequence[GroundTruthObject]],
    predictions: Mapping[int, Sequence[Detection]],
    iou_threshold: float = 0.7,
    *,
    class_name: str = "Car",
    interp: Interp = Interp.INTERP40,
    difficulties: Sequence[Difficulty] = tuple(Difficulty),
    rules=DIFFICULTY_RULES,
    threads: int = 1,
) -> EvalReport:
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"IoU threshold must lie in [0, 1], got {iou_threshold}")
    prepared, skipped = _prepare_all(dataset, predictions, class_name, threads)
    results = _evaluate_prepared(prepared, iou_threshold, difficulties, rules)
    return EvalReport(iou_threshold, class_name, Interp(interp), results, skipped)


def default_thresholds() -> np.ndarray:
    return np.round(np.arange(101) * 0.01, 2)


def sweep_iou(
    dataset,
    predictions,
    thresholds: Sequence[float] | None = None,
    *,
    class_name: str = "Car",
    interp: Interp = Interp.INTERP40,
    difficulties: Sequence[Difficulty] = tuple(Difficulty),
    rules=DIFFICULTY_RULES,
    threads: int = 1,
) -> dict:
    """AP versus IoU threshold, ``{difficulty: [(threshold, ap), ...]}``.

    IoUs are computed once and reused for every threshold.
    """
    thresholds = default_thresholds() if thresholds is None else thresholds
    prepared, _ = _prepare_all(dataset, predictions, class_name, threads)
    out = {d: [] for d in difficulties}
    for t in thresholds:
        res = _evaluate_prepared(prepared, float(t), difficulties, rules)
        for d in difficulties:
            out[d].append((float(t), res[d].ap(interp)))
    return out
