"""Print a module ablation table on a freshly generated dataset.

The default settings reproduce the acceptance run and take roughly ten
minutes on one core; pass ``--scenes 60 --epochs 4`` for a quick look.

Usage: python3 demos/ablation.py [--grid modules|edges|relations] [--seeds 0,1,2]
"""

import argparse
import time

import numpy as np

from sctc.fixtures import generate_dataset
from sctc.train import ARM_GRIDS, TrainConfig, run_arm


def fmt(v):
    return "  n/a" if v is None else f"{v:.3f}"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", choices=sorted(ARM_GRIDS), default="modules")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--scenes", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    train_s, test_s, vocab = generate_dataset(num_train=args.scenes, num_test=args.scenes // 4)
    print(f"{'arm':<14} {'full':>6} {'rare':>6} {'non-rare':>9} {'seeds':>6} {'time':>6}")
    for arm, overrides in ARM_GRIDS[args.grid].items():
        start = time.perf_counter()
        runs = [run_arm(train_s, test_s, vocab, overrides, s, TrainConfig(epochs=args.epochs))[2]
                for s in seeds]
        mean = {}
        for key in ("full", "rare", "non_rare"):
            vals = [r[key] for r in runs if r[key] is not None]
            mean[key] = float(np.mean(vals)) if vals else None
        print(f"{arm:<14} {fmt(mean['full']):>6} {fmt(mean['rare']):>6} "
              f"{fmt(mean['non_rare']):>9} {len(seeds):>6} {time.perf_counter() - start:>5.0f}s")


if __name__ == "__main__":
    main()
