"""
Desk-scale training reproduction

Trains the direct generator at 64x64 on a fixed 64-pair synthetic fixture for
300 steps with the default loss weights, then compares reconstruction + style
loss early and late in training:

    mean(g_rec + g_style) over steps 251-300 <= 0.7 * mean over steps 1-50
"""
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan.evaluation.plots import plot_loss_curves
from geogan.log import configure_logging
from geogan.losses import LossReport, LossWeights
from geogan.models import ArchConfig, Variant
from geogan.tilegrid import synthetic_stack
from geogan.training import ArrayPairs, TrainConfig, train
from geogan.training.trainer import LOSS_CURVE


class ReproductionRunner:
    """Runs the fixed-fixture training job and checks the loss plateau ratio"""

    def __init__(
        self,
        pairs: int = 64,
        image_size: int = 64,
        steps: int = 300,
        window: int = 50,
        ratio: float = 0.7,
        batch_size: int = 16,
        width_divisor: int = 1,
        seed: int = 0,
        out_dir: str = "results/reproduction"
    ):
        self.pairs = pairs
        self.image_size = image_size
        self.steps = steps
        self.window = window
        self.ratio = ratio
        self.batch_size = batch_size
        self.width_divisor = width_divisor
        self.seed = seed
        self.out_dir = out_dir
        self.reports: List[LossReport] = []
        self.summary: Optional[Dict] = None

    def config(self) -> TrainConfig:
        arch = ArchConfig(variant=Variant.DIRECT_GAN, image_size=self.image_size)
        if self.width_divisor > 1:
            arch = arch.scaled(self.width_divisor)
        steps_per_epoch = -(-self.pairs // self.batch_size)
        return TrainConfig(
            arch=arch,
            weights=LossWeights(),
            batch_size=self.batch_size,
            epochs=-(-self.steps // steps_per_epoch),
            max_steps=self.steps,
            seed=self.seed,
            out_dir=self.out_dir,
            grid_size=0,
            deterministic=True,
        )

    def run(self) -> Dict:
        print("\n" + "=" * 60)
        print("Desk-scale reproduction: DIRECT_GAN at "
              f"{self.image_size}x{self.image_size}, {self.pairs} pairs, {self.steps} steps")
        print("=" * 60)

        sat, maps = synthetic_stack(self.pairs, self.image_size)
        dataset = ArrayPairs.from_uint8(sat, maps)
        t0 = time.perf_counter()
        result = train(self.config(), dataset, plots=False)
        elapsed = time.perf_counter() - t0
        self.reports = result.reports

        tracked = np.array([r.g_rec + r.g_style for r in self.reports])
        early = float(tracked[:self.window].mean())
        late = float(tracked[-self.window:].mean())
        self.summary = {
            'steps': len(self.reports),
            'early_mean': early,
            'late_mean': late,
            'ratio': late / early if early > 0 else float('nan'),
            'threshold': self.ratio,
            'passed': late <= self.ratio * early,
            'seconds': elapsed,
        }
        return self.summary

    def save_results(self):
        os.makedirs(self.out_dir, exist_ok=True)
        pd.DataFrame([self.summary]).to_csv(os.path.join(self.out_dir, "summary.csv"), index=False)
        plot_loss_curves(os.path.join(self.out_dir, LOSS_CURVE), os.path.join(self.out_dir, "graphs"))
        print(f"\n✓ Results saved to: {self.out_dir}/")

    def print_summary(self):
        s = self.summary
        print(f"\n{'Metric':<36} {'Value':>14}")
        print("-" * 52)
        print(f"{'Steps':<36} {s['steps']:>14d}")
        print(f"{f'rec+style, steps 1-{self.window}':<36} {s['early_mean']:>14.4f}")
        print(f"{f'rec+style, last {self.window} steps':<36} {s['late_mean']:>14.4f}")
        print(f"{'Late / early ratio':<36} {s['ratio']:>14.3f}")
        print(f"{'Wall time (s)':<36} {s['seconds']:>14.1f}")
        print("-" * 52)
        mark = "✓" if s['passed'] else "✗"
        print(f"{mark} late mean {'<=' if s['passed'] else '>'} {self.ratio:.0%} of early mean")


def main() -> int:
    configure_logging("WARNING")
    runner = ReproductionRunner()
    runner.run()
    runner.save_results()
    runner.print_summary()
    return 0 if runner.summary['passed'] else 1


if __name__ == "__main__":
    sys.exit(main())
