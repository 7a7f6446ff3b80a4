"""Synthetic KITTI-like scenes and a noisy oracle standing in for the network.

The oracle encodes every ground-truth degree of freedom into its bin schedule,
perturbs the resulting score vector, decodes it, and rebuilds the box exactly
as a trained bin-classification head would be post-processed: depth from the
depth bins, x/y from the RoI center back-projected to that depth minus the
(dx, dy) offset, yaw from the decoded observation angle.

Randomness is drawn from ``numpy.random.default_rng([seed, frame_id, stream])``
so frames can be produced in any order or in parallel with identical output.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import bin_codec
from .bin_codec import BinSchedule, DofSchedules
from .camera import (
    CameraIntrinsics,
    alpha_to_ry,
    project_points,
    ry_to_alpha,
    solve_xy_from_camera_offset,
    wrap_to_pi,
)
from .evaluation import EvalReport, Interp, evaluate
from .geometry import Box3D, bev_polygon, corners, polygon_intersection
from .kitti_io import CalibrationFile, Detection, GroundTruthObject

SCENE_STREAM = 0
PREDICT_STREAM = 1

# KITTI-like left color camera, without the stereo baseline column
KITTI_LIKE_P2 = np.array([
    [721.5377, 0.0, 609.5593, 0.0],
    [0.0, 721.5377, 172.854, 0.0],
    [0.0, 0.0, 1.0, 0.0],
])


@dataclass(frozen=True)
class SceneConfig:
    n_objects: tuple = (2, 6)
    depth_range: tuple = (5.0, 60.0)
    lateral_range: tuple = (-15.0, 15.0)
    ground_y: float = 1.65
    ground_y_jitter: float = 0.05
    dims_mean: tuple = (1.53, 1.63, 3.88)  # h, w, l
    dims_std: tuple = (0.10, 0.08, 0.35)
    dims_low: tuple = (1.25, 1.25, 3.05)
    dims_high: tuple = (1.95, 1.95, 4.95)
    yaw_range: tuple = (-math.pi, math.pi)
    occlusion_probs: tuple = (0.6, 0.25, 0.15)
    image_size: tuple = (1242, 375)  # width, height
    projection: np.ndarray = field(default_factory=lambda: KITTI_LIKE_P2.copy(), compare=False, repr=False)
    class_name: str = "Car"
    seed: int = 0
    max_tries: int = 200

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_projection(self.projection)


def _frame_rng(seed: int, frame_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(frame_id), stream])


def make_object(box: Box3D, K: CameraIntrinsics, class_name="Car", occlusion=0, truncation=0.0,
                box2d=None) -> GroundTruthObject:
    """Ground-truth record for ``box`` with its tight 2D box and consistent alpha."""
    if box2d is None:
        uv = project_points(corners(box), K)
        box2d = (float(uv[:, 0].min()), float(uv[:, 1].min()), float(uv[:, 0].max()), float(uv[:, 1].max()))
    x, _, z = box.location
    return GroundTruthObject(
        class_name=class_name,
        truncation=truncation,
        occlusion=occlusion,
        alpha=ry_to_alpha(box.yaw, x, z),
        box2d=tuple(box2d),
        dims=box.dims,
        location=box.location,
        rotation_y=box.yaw,
    )


def generate_scene(cfg: SceneConfig, frame_id: int) -> tuple[list[GroundTruthObject], CalibrationFile]:
    """Non-overlapping cars on a ground plane, each fully inside the image."""
    rng = _frame_rng(cfg.seed, frame_id, SCENE_STREAM)
    K = cfg.intrinsics
    n = int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))
    W, H = cfg.image_size
    objs: list[GroundTruthObject] = []
    footprints = []
    for _ in range(n):
        for _ in range(cfg.max_tries):
            dims = np.clip(rng.normal(cfg.dims_mean, cfg.dims_std), cfg.dims_low, cfg.dims_high)
            z = rng.uniform(*cfg.depth_range)
            x = rng.uniform(*cfg.lateral_range)
            y = cfg.ground_y + rng.uniform(-cfg.ground_y_jitter, cfg.ground_y_jitter)
            yaw = rng.uniform(*cfg.yaw_range)
            occ = int(rng.choice(len(cfg.occlusion_probs), p=np.asarray(cfg.occlusion_probs) / sum(cfg.occlusion_probs)))
            box = Box3D(tuple(dims), (x, y, z), yaw)
            c = corners(box)
            if np.any(c[:, 2] <= 0.1):
                continue
            uv = project_points(c, K)
            if uv[:, 0].min() < 0 or uv[:, 1].min() < 0 or uv[:, 0].max() > W or uv[:, 1].max() > H:
                continue
            fp = bev_polygon(box)
            if any(polygon_intersection(fp, other).area > 0.0 for other in footprints):
                continue
            footprints.append(fp)
            objs.append(make_object(box, K, cfg.class_name, occlusion=occ))
            break
    return objs, CalibrationFile(K, {"P2": K.full_projection.reshape(-1)})


def generate_dataset(cfg: SceneConfig, n_frames: int, start: int = 0):
    labels, calibs = {}, {}
    for f in range(start, start + n_frames):
        labels[f], calibs[f] = generate_scene(cfg, f)
    return labels, calibs


# oracle ----------------------------------------------------------------------

@dataclass(frozen=True)
class DofNoise:
    """Score-vector noise for one degree of freedom.

    The peak bin is the true bin with probability ``p_hit``; otherwise it is
    displaced by d >= 1 bins, P(d) proportional to ``spread ** (d - 1)``, in a
    random direction. Scores then decay as ``softness ** |i - peak|``; a
    softness of 0 gives a one-hot vector.
    """

    p_hit: float = 1.0
    spread: float = 0.5
    softness: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_hit <= 1.0:
            raise ValueError("p_hit must be in [0, 1]")
        if not 0.0 <= self.spread < 1.0 or not 0.0 <= self.softness < 1.0:
            raise ValueError("spread and softness must be in [0, 1)")


@dataclass(frozen=True)
class OracleNoise:
    dof: Mapping[str, DofNoise] = field(default_factory=dict)
    roi_jitter_px: float = 0.0

    @classmethod
    def uniform(cls, p_hit=1.0, spread=0.5, softness=0.0, roi_jitter_px=0.0) -> "OracleNoise":
        d = DofNoise(p_hit, spread, softness)
        return cls({name: d for name in bin_codec.DOF_NAMES}, roi_jitter_px)

    @classmethod
    def zero(cls) -> "OracleNoise":
        return cls.uniform()

    def for_dof(self, name: str) -> DofNoise:
        return self.dof.get(name, DofNoise())


@dataclass(frozen=True)
class PipelineArm:
    """Decoding variant used by the oracle; the defaults are the full method."""

    schedules: DofSchedules = DofSchedules()
    bin_value: str = "center"
    use_offsets: bool = True
    fixed_yaw: float | None = None
    circular_angle: bool = False
    name: str = "final"


def noisy_scores(schedule: BinSchedule, value: float, noise: DofNoise, rng: np.random.Generator) -> np.ndarray:
    n = schedule.count
    true_bin = bin_codec.bin_index(schedule, value)
    # fixed number of draws per call keeps the random stream aligned across settings
    u_hit, u_dir, u_dist = rng.random(3)
    peak = true_bin
    if u_hit >= noise.p_hit and n > 1:
        d = 1 + int(math.floor(math.log1p(-u_dist) / math.log(noise.spread))) if noise.spread > 0 else 1
        peak = true_bin + (d if u_dir < 0.5 else -d)
        peak = int(min(max(peak, 0), n - 1))
    dist = np.abs(np.arange(n) - peak)
    if noise.softness == 0.0:
        scores = (dist == 0).astype(float)
    else:
        scores = noise.softness ** dist
    return scores / scores.sum()


def oracle_targets(gt: GroundTruthObject, K: CameraIntrinsics, roi_center=None) -> dict:
    """Regression targets for each degree of freedom, plus the RoI center used."""
    h, w, l = gt.dims
    x, y_bottom, z = gt.location
    y_c = y_bottom - h / 2.0
    if roi_center is None:
        roi_center = (0.5 * (gt.box2d[0] + gt.box2d[2]), 0.5 * (gt.box2d[1] + gt.box2d[3]))
    u, v = roi_center
    x_roi = z * (u - K.u0) / K.alpha_x
    y_roi = z * (v - K.v0) / K.alpha_y
    return {
        "height": h,
        "width": w,
        "length": l,
        "depth": z,
        "dx": x_roi - x,
        "dy": y_roi - y_c,
        "angle": ry_to_alpha(gt.rotation_y, x, z),
    }


def oracle_predict(
    gt: GroundTruthObject,
    noise: OracleNoise,
    schedules: DofSchedules,
    K: CameraIntrinsics,
    rng: np.random.Generator | None = None,
    arm: PipelineArm | None = None,
) -> Detection:
    if arm is None:
        arm = PipelineArm(schedules=schedules)
    else:
        schedules = arm.schedules
    rng = np.random.default_rng(0) if rng is None else rng

    jitter = rng.normal(0.0, 1.0, 2) * noise.roi_jitter_px
    box2d = (gt.box2d[0] + jitter[0], gt.box2d[1] + jitter[1], gt.box2d[2] + jitter[0], gt.box2d[3] + jitter[1])
    u = 0.5 * (box2d[0] + box2d[2])
    v = 0.5 * (box2d[1] + box2d[3])
    targets = oracle_targets(gt, K, (u, v))

    decoded = {}
    confidences = []
    for name in bin_codec.DOF_NAMES:
        sched = getattr(schedules, name)
        scores = noisy_scores(sched, targets[name], noise.for_dof(name), rng)
        confidences.append(scores.max())
        if name == "angle" and arm.circular_angle:
            decoded[name] = bin_codec.decode_angle_circular(sched, scores)
        else:
            decoded[name] = bin_codec.decode(sched, scores, arm.bin_value)

    h, w, l, z = decoded["height"], decoded["width"], decoded["length"], decoded["depth"]
    z = max(z, 1e-3)
    dx, dy = (decoded["dx"], decoded["dy"]) if arm.use_offsets else (0.0, 0.0)
    x, y_c = solve_xy_from_camera_offset(u, v, dx, dy, z, K)
    if arm.fixed_yaw is None:
        ry = alpha_to_ry(decoded["angle"], x, z)
    else:
        ry = wrap_to_pi(arm.fixed_yaw)
    score = float(np.mean(confidences)) * (0.9 + 0.1 * rng.random())
    return Detection(
        class_name=gt.class_name,
        truncation=gt.truncation,
        occlusion=gt.occlusion,
        alpha=ry_to_alpha(ry, x, z),
        box2d=box2d,
        dims=(h, w, l),
        location=(x, y_c + h / 2.0, z),
        rotation_y=ry,
        score=score,
    )


def predict_frame(gts, calib: CalibrationFile, noise: OracleNoise, arm: PipelineArm, seed: int, frame_id: int):
    rng = _frame_rng(seed, frame_id, PREDICT_STREAM)
    K = calib.projection
    return [oracle_predict(g, noise, arm.schedules, K, rng, arm) for g in gts if not g.is_dontcare]


def predict_dataset(
    labels: Mapping[int, Sequence[GroundTruthObject]],
    calibs: Mapping[int, CalibrationFile],
    noise: OracleNoise,
    arm: PipelineArm = PipelineArm(),
    seed: int = 0,
    threads: int = 1,
) -> dict[int, list[Detection]]:
    frames = sorted(labels)

    def run(f):
        return predict_frame(labels[f], calibs[f], noise, arm, seed, f)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(run, frames))
    else:
        out = [run(f) for f in frames]
    return dict(zip(frames, out))


def depth_errors(labels, predictions) -> np.ndarray:
    """Ground-truth depth minus predicted depth, for oracle outputs aligned with their labels."""
    errs = []
    for f in sorted(labels):
        gts = [g for g in labels[f] if not g.is_dontcare]
        for g, d in zip(gts, predictions.get(f, [])):
            errs.append(g.location[2] - d.location[2])
    return np.asarray(errs)


def depth_error_histogram(errors: np.ndarray, bin_width: float = 0.25, limit: float = 5.0):
    """Counts over [-limit, limit] in ``bin_width`` steps; values outside are clipped into the end bins."""
    edges = np.arange(-limit, limit + bin_width / 2, bin_width)
    counts, edges = np.histogram(np.clip(errors, -limit, limit), bins=edges)
    return edges, counts


@dataclass
class ArmResult:
    arm: PipelineArm
    report: EvalReport
    mean_abs_depth_error: float
    mean_signed_depth_error: float
    predictions: dict = field(repr=False)


def run_arm(labels, calibs, noise, arm, *, seed=0, iou_threshold=0.7, threads=1,
            interp=Interp.INTERP40) -> ArmResult:
    preds = predict_dataset(labels, calibs, noise, arm, seed, threads)
    report = evaluate(labels, preds, iou_threshold, interp=interp, threads=threads)
    errs = depth_errors(labels, preds)
    # signed as prediction minus truth
    return ArmResult(arm, report, float(np.abs(errs).mean()) if errs.size else 0.0,
                     float(-errs.mean()) if errs.size else 0.0, preds)


def compare_schedules(labels, calibs, noise, arm_a: PipelineArm, arm_b: PipelineArm, *,
                      seed=0, iou_threshold=0.7, threads=1) -> tuple[ArmResult, ArmResult]:
    """Both arms on the same scenes, noise and seed."""
    a = run_arm(labels, calibs, noise, arm_a, seed=seed, iou_threshold=iou_threshold, threads=threads)
    b = run_arm(labels, calibs, noise, arm_b, seed=seed, iou_threshold=iou_threshold, threads=threads)
    return a, b


UNIFORM_DEPTH_1M = BinSchedule.uniform(0.0, 100, 1.0)


def ablation_arms(fixed_yaw: float = -math.pi / 2) -> dict[str, PipelineArm]:
    final = PipelineArm()
    return {
        "final": final,
        "uniform_depth": replace(final, schedules=final.schedules.with_(depth=UNIFORM_DEPTH_1M), name="uniform_depth"),
        "lower_edge": replace(final, bin_value="lower", name="lower_edge"),
        "no_offsets": replace(final, use_offsets=False, name="no_offsets"),
        "fixed_yaw": replace(final, fixed_yaw=fixed_yaw, name="fixed_yaw"),
    }
