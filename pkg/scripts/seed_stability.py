#!/usr/bin/env python3
"""Seed stability: rerun the default experiment across seeds.

Reports the headline metrics per seed plus mean and standard deviation,
to show how much of the result is the method and how much is the draw
of the synthetic world.

Usage:
    python3 scripts/seed_stability.py --seeds 5
"""

import argparse
import dataclasses
import statistics
import sys

from xmodal import RunConfig
from xmodal.pipeline import run_experiment

METRICS = (
    ("audio_image_map.distilled", "map.distilled"),
    ("audio_image_map.text_mapping", "map.text_map"),
    ("audio_image_map.cascaded_zero_shot", "map.cascaded"),
    ("audio_image_map.random_projection", "map.random"),
    ("zero_shot_accuracy.distilled", "zs.distilled"),
    ("knn_accuracy.distilled", "knn.distilled"),
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --first")
    parser.add_argument("--first", type=int, default=0, help="first seed value")
    args = parser.parse_args(argv)

    base = RunConfig()
    rows = {name: [] for name, _ in METRICS}
    print(f"{'seed':>6}  " + "  ".join(f"{label:>14}" for _, label in METRICS))
    for seed in range(args.first, args.first + args.seeds):
        config = dataclasses.replace(
            base,
            world=dataclasses.replace(base.world, seed=seed),
            train=dataclasses.replace(base.train, seed=seed),
        )
        result = run_experiment(config, write=False)
        values = [result.reports[name].value for name, _ in METRICS]
        for (name, _), value in zip(METRICS, values):
            rows[name].append(value)
        print(f"{seed:>6}  " + "  ".join(f"{v:>14.4f}" for v in values))

    print()
    for name, _ in METRICS:
        values = rows[name]
        spread = statistics.stdev(values) if len(values) > 1 else 0.0
        print(f"{name:<42} mean {statistics.mean(values):.4f}  std {spread:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
