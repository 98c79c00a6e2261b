"""
Noise and reconstruction-norm sweep for the encoder generator

Trains ENCODER_GAN briefly at 0%, 10% and 50% noise, with noise added to or
appended after the satellite embedding, and under L1 and L2 reconstruction.
Each run is scored on a held-out synthetic split with the evaluation metrics.
"""
import os
import sys
from datetime import datetime
from typing import Dict, List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan.evaluation.metrics import evaluate
from geogan.log import configure_logging
from geogan.losses import LossWeights, RecNorm
from geogan.models import ArchConfig, NoiseMode, NoiseSpec, Variant
from geogan.tilegrid import synthetic_stack
from geogan.training import ArrayPairs, TrainConfig, train

NOISE_DIM = 64


class NoiseSweep:
    """Train-and-evaluate grid over noise level, noise mode and reconstruction norm"""

    def __init__(
        self,
        fractions=(0.0, 0.1, 0.5),
        modes=(NoiseMode.ADD, NoiseMode.APPEND),
        norms=(RecNorm.L2, RecNorm.L1),
        steps: int = 100,
        pairs: int = 64,
        held_out: int = 16,
        width_divisor: int = 4,
        seed: int = 0
    ):
        self.fractions = fractions
        self.modes = modes
        self.norms = norms
        self.steps = steps
        self.width_divisor = width_divisor
        self.seed = seed

        sat, maps = synthetic_stack(pairs + held_out, 64)
        self.train_set = ArrayPairs.from_uint8(sat[:pairs], maps[:pairs])
        self.test_set = ArrayPairs.from_uint8(sat[pairs:], maps[pairs:])
        self.results: List[Dict] = []

    def noise_spec(self, mode: NoiseMode, fraction: float) -> NoiseSpec:
        if fraction == 0.0:
            return NoiseSpec()
        dim = NOISE_DIM if mode == NoiseMode.APPEND else 0
        return NoiseSpec(mode=mode, dim=dim, fraction=fraction)

    def run_one(self, mode: NoiseMode, fraction: float, norm: RecNorm) -> Dict:
        arch = ArchConfig(
            variant=Variant.ENCODER_GAN,
            noise=self.noise_spec(mode, fraction)
        ).scaled(self.width_divisor)
        weights = LossWeights(rec_norm=norm)
        tag = f"{mode.value}_{int(fraction * 100):02d}_{norm.value}"
        config = TrainConfig(
            arch=arch,
            weights=weights,
            batch_size=16,
            epochs=self.steps,
            max_steps=self.steps,
            seed=self.seed,
            out_dir=f"results/noise_sweep/{tag}",
            grid_size=9,
        )
        print(f"\n[{tag}] training {self.steps} steps...")
        result = train(config, self.train_set, plots=False)
        params = result.state.params
        metrics = evaluate(params, arch, self.test_set, weights, seed=self.seed)

        tail = result.reports[-10:]
        row = {
            'noise_mode': mode.value,
            'noise_fraction': fraction,
            'rec_norm': norm.value,
            'final_d_loss': float(np.mean([r.d_loss for r in tail])),
            'final_g_gan': float(np.mean([r.g_gan for r in tail])),
            'final_g_rec': float(np.mean([r.g_rec for r in tail])),
            'eval_l2': metrics.mean_l2,
            'eval_style': metrics.mean_style,
            'eval_combined': metrics.combined,
            'timestamp': datetime.now().isoformat(),
        }
        print(f"  d={row['final_d_loss']:.4f} gan={row['final_g_gan']:.4f} "
              f"held-out L2={metrics.mean_l2:.2f} combined={metrics.combined:.2f}")
        return row

    def run_all(self) -> List[Dict]:
        print("\n" + "=" * 60)
        print("Noise / reconstruction-norm sweep: ENCODER_GAN")
        print("=" * 60)
        print(f"\nNoise fractions: {list(self.fractions)}")
        print(f"Noise modes: {[m.value for m in self.modes]}")
        print(f"Reconstruction norms: {[n.value for n in self.norms]}")

        for norm in self.norms:
            for mode in self.modes:
                for fraction in self.fractions:
                    if fraction == 0.0 and mode != self.modes[0]:
                        continue
                    self.results.append(self.run_one(mode, fraction, norm))
        return self.results

    def save_results(self, filepath: str = "results/noise_sweep_results.csv"):
        os.makedirs(os.path.dirname(filepath), exist_ok=True)
        pd.DataFrame(self.results).to_csv(filepath, index=False)
        print(f"\n✓ Results saved to: {filepath}")

    def generate_graphs(self, filepath: str = "results/graphs/noise_sweep.png"):
        df = pd.DataFrame(self.results)
        fig, axes = plt.subplots(2, 2, figsize=(14, 10))
        fig.suptitle('ENCODER_GAN: Noise Level, Noise Mode and Reconstruction Norm',
                     fontsize=16, fontweight='bold')
        panels = [
            ('final_d_loss', 'Discriminator Loss (last 10 steps)'),
            ('final_g_gan', 'Generator Adversarial Loss (last 10 steps)'),
            ('eval_l2', 'Held-out L2'),
            ('eval_combined', 'Held-out L2 + Style'),
        ]
        styles = {'l2': '-', 'l1': '--'}
        colors = {'add': '#3498db', 'append': '#e74c3c'}

        for ax, (column, title) in zip(axes.flat, panels):
            for (norm, mode), group in df.groupby(['rec_norm', 'noise_mode']):
                zero = df[(df['rec_norm'] == norm) & (df['noise_fraction'] == 0.0)]
                group = pd.concat([zero, group]).drop_duplicates('noise_fraction').sort_values('noise_fraction')
                ax.plot(group['noise_fraction'] * 100, group[column], marker='o', linewidth=2,
                        linestyle=styles[norm], color=colors[mode], label=f'{mode}, {norm.upper()}')
            ax.set_xlabel('Noise (%)', fontweight='bold')
            ax.set_title(title)
            ax.legend()
            ax.grid(alpha=0.3)

        plt.tight_layout()
        os.makedirs(os.path.dirname(filepath), exist_ok=True)
        plt.savefig(filepath, dpi=150)
        plt.close(fig)
        print(f"✓ Graph saved: {filepath}")

    def print_summary_table(self):
        print("\n" + "=" * 72)
        print("SUMMARY")
        print("=" * 72)
        print(f"\n{'Mode':<8} {'Noise':>6} {'Norm':>5} {'D loss':>10} {'G gan':>10} {'L2':>10} {'Combined':>12}")
        print("-" * 72)
        for r in self.results:
            print(f"{r['noise_mode']:<8} {r['noise_fraction']:>6.0%} {r['rec_norm']:>5} "
                  f"{r['final_d_loss']:>10.4f} {r['final_g_gan']:>10.4f} "
                  f"{r['eval_l2']:>10.2f} {r['eval_combined']:>12.2f}")
        print("=" * 72)


def main():
    configure_logging("WARNING")
    sweep = NoiseSweep()
    sweep.run_all()
    sweep.save_results()
    sweep.generate_graphs()
    sweep.print_summary_table()


if __name__ == "__main__":
    main()
