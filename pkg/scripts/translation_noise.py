"""Sensitivity of the 2D-box translation solver to pixel noise on the box edges."""
from __future__ import annotations

import argparse
import math

import numpy as np

from slk.camera import CameraIntrinsics, project_points
from slk.geometry import Box3D, corners
from slk.synth import KITTI_LIKE_P2
from slk.translation import solve_translation, tight_box


def trial(rng, K, depth, noise_px):
    T = np.array([rng.uniform(-5, 5), rng.uniform(1.4, 1.9), depth])
    dims = tuple(rng.uniform([1.3, 1.4, 3.2], [1.9, 1.9, 4.8]))
    yaw = rng.uniform(-math.pi, math.pi)
    box2d = np.asarray(tight_box(project_points(corners(Box3D(dims, T, yaw)), K)))
    sol = solve_translation(box2d + rng.uniform(-noise_px, noise_px, 4), dims, yaw, K)
    return abs(sol.t[2] - depth) / depth


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--noise", type=float, default=2.0, help="uniform half-range, pixels")
    p.add_argument("--depths", type=float, nargs="+", default=[10.0, 20.0, 40.0, 60.0])
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    K = CameraIntrinsics.from_projection(KITTI_LIKE_P2)
    rng = np.random.default_rng(args.seed)
    print(f"{'depth':>6} {'median':>8} {'mean':>8} {'max':>8}   |dTz|/Tz, +-{args.noise:g}px")
    for depth in args.depths:
        rel = np.array([trial(rng, K, depth, args.noise) for _ in range(args.trials)])
        print(f"{depth:6.1f} {np.median(rel):8.4f} {rel.mean():8.4f} {rel.max():8.4f}")


if __name__ == "__main__":
    main()
