"""
Step timing for the three generator families

Measures generator forward latency and full training-step latency with
time.perf_counter(), after warm-up rounds that absorb allocator and thread-pool
start-up.
"""
import os
import sys
import time
from typing import Callable, Dict, List

import numpy as np
import pandas as pd
import torch

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan.losses import LossWeights
from geogan.models import ArchConfig, BNMode, NoiseMode, NoiseSpec, Variant, generate, init_params
from geogan.training import ArrayPairs, TrainConfig, new_state, train_step
from geogan.tilegrid import synthetic_stack


def measure_execution_time(
    func: Callable,
    iterations: int = 20,
    warmup: int = 3
) -> Dict[str, float]:
    """
    Time repeated calls of func

    Returns:
        Dictionary with mean_ms, std_ms, min_ms, max_ms and median_ms
    """
    for _ in range(warmup):
        func()

    times_ms: List[float] = []
    for _ in range(iterations):
        start = time.perf_counter()
        func()
        times_ms.append((time.perf_counter() - start) * 1000.0)

    times = np.asarray(times_ms)
    return {
        'mean_ms': float(times.mean()),
        'std_ms': float(times.std(ddof=1)) if len(times) > 1 else 0.0,
        'min_ms': float(times.min()),
        'max_ms': float(times.max()),
        'median_ms': float(np.median(times)),
    }


def calculate_throughput(mean_ms: float, batch_size: int) -> float:
    """Images per second at the given per-batch latency"""
    if mean_ms > 0:
        return batch_size * 1000.0 / mean_ms
    return 0.0


def profile_arch(arch: ArchConfig, batch_size: int = 8, iterations: int = 20, warmup: int = 3) -> Dict:
    """Forward and training-step timing of one architecture"""
    sat, maps = synthetic_stack(batch_size, arch.image_size)
    pairs = ArrayPairs.from_uint8(sat, maps)
    batch = pairs.batch(range(batch_size))
    config = TrainConfig(arch=arch, weights=LossWeights(), batch_size=batch_size)
    params = init_params(arch, seed=0)
    state = new_state(config, params)

    def forward():
        with torch.no_grad():
            generate(params, batch.sat, arch, BNMode.EVAL)

    def step():
        train_step(state, batch, config)

    print(f"  [{arch.variant.name}] forward...")
    fwd = measure_execution_time(forward, iterations, warmup)
    print(f"  [{arch.variant.name}] training step...")
    trn = measure_execution_time(step, max(3, iterations // 4), 1)
    return {
        'variant': arch.variant.value,
        'image_size': arch.image_size,
        'batch_size': batch_size,
        'parameters': params.trainable().count(),
        'forward_mean_ms': fwd['mean_ms'],
        'forward_std_ms': fwd['std_ms'],
        'step_mean_ms': trn['mean_ms'],
        'step_std_ms': trn['std_ms'],
        'forward_images_per_sec': calculate_throughput(fwd['mean_ms'], batch_size),
    }


def default_archs(size: int = 64, divisor: int = 4) -> List[ArchConfig]:
    return [
        ArchConfig(variant=Variant.ENCODER_GAN, image_size=size,
                   noise=NoiseSpec(mode=NoiseMode.ADD, fraction=0.1)).scaled(divisor),
        ArchConfig(variant=Variant.DIRECT_GAN, image_size=size).scaled(divisor),
        ArchConfig(variant=Variant.FLOW_GAN, image_size=size).scaled(divisor),
    ]


def main():
    print("\n" + "=" * 60)
    print("GeoGAN step timing")
    print("=" * 60)
    torch.manual_seed(0)
    rows = [profile_arch(arch) for arch in default_archs()]
    df = pd.DataFrame(rows)

    os.makedirs("results", exist_ok=True)
    df.to_csv("results/timing_results.csv", index=False)

    print(f"\n{'Variant':<10} {'Params':>10} {'Forward (ms)':>14} {'Step (ms)':>12} {'img/s':>10}")
    print("-" * 60)
    for row in rows:
        print(f"{row['variant']:<10} {row['parameters']:>10d} {row['forward_mean_ms']:>14.2f} "
              f"{row['step_mean_ms']:>12.2f} {row['forward_images_per_sec']:>10.1f}")
    print("\n✓ Results saved to: results/timing_results.csv")


if __name__ == "__main__":
    main()
