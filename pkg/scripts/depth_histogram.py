"""Histogram of ground-truth minus predicted depth for the oracle predictor.

Writes a CSV (lower, upper, count) and prints a text bar chart.
"""
from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from slk.synth import OracleNoise, PipelineArm, SceneConfig, depth_error_histogram, depth_errors, generate_dataset
from slk.synth import predict_dataset


@dataclass
class HistogramConfig:
    frames: int = 2500
    seed: int = 11
    p_hit: float = 0.7
    spread: float = 0.5
    softness: float = 0.3
    jitter: float = 2.0
    bin_width: float = 0.25
    limit: float = 5.0
    out: str = "depth_errors.csv"
    threads: int = 4


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, value in vars(HistogramConfig()).items():
        p.add_argument("--" + name.replace("_", "-"), type=type(value), default=value)
    cfg = HistogramConfig(**vars(p.parse_args()))

    labels, calibs = generate_dataset(SceneConfig(seed=cfg.seed), cfg.frames)
    noise = OracleNoise.uniform(cfg.p_hit, cfg.spread, cfg.softness, cfg.jitter)
    preds = predict_dataset(labels, calibs, noise, PipelineArm(), seed=cfg.seed, threads=cfg.threads)
    errs = depth_errors(labels, preds)
    edges, counts = depth_error_histogram(errs, cfg.bin_width, cfg.limit)

    with Path(cfg.out).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lower", "upper", "count"])
        w.writerows(zip(edges[:-1].round(4), edges[1:].round(4), counts))

    peak = counts.max()
    for lo, c in zip(edges[:-1], counts):
        print(f"{lo:+6.2f} {c:6d} {'#' * int(round(50 * c / peak))}")
    print(f"{errs.size} objects, mean {errs.mean():+.3f} m, median {np.median(errs):+.3f} m")
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    main()
