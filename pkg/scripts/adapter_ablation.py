#!/usr/bin/env python3
"""Adapter ablation: architecture and training length.

Compares the linear head against the MLP encoder plus head, and shows
how the headline retrieval metric grows with training epochs, all on
the default world.

Usage:
    python3 scripts/adapter_ablation.py
    python3 scripts/adapter_ablation.py --epochs 5 10 30
"""

import argparse
import dataclasses
import sys

from xmodal import RunConfig
from xmodal.pipeline import run_experiment


def run_variant(base: RunConfig, mode: str, epochs: int):
    config = dataclasses.replace(
        base,
        adapter_mode=mode,
        train=dataclasses.replace(base.train, epochs=epochs),
    )
    result = run_experiment(config, write=False)
    return (
        result.reports["audio_image_map.distilled"].value,
        result.reports["zero_shot_accuracy.distilled"].value,
        result.train_report.loss_curve[-1] if result.train_report.loss_curve else float("nan"),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--epochs", type=int, nargs="+", default=[5, 15, 30], help="epoch budgets to compare"
    )
    args = parser.parse_args(argv)

    base = RunConfig()
    print(f"{'adapter':<24} {'epochs':>6} {'audio->image mAP':>17} {'zero-shot':>10} {'final loss':>11}")
    for mode in ("linear_head_only", "mlp_encoder_plus_head"):
        for epochs in args.epochs:
            retrieval, zero_shot, final_loss = run_variant(base, mode, epochs)
            print(f"{mode:<24} {epochs:>6} {retrieval:>17.4f} {zero_shot:>10.4f} {final_loss:>11.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
