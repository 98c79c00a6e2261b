"""
Finite-difference gradient verification

gradient_check compares autograd gradients with central differences
(f(x + eps) - f(x - eps)) / 2 eps on sampled coordinates; the relative error
of a coordinate is |a - n| / max(|a|, |n|, 1e-8).

run_gradient_suite applies it to every loss on its own and to the composed
training objective of every architecture at reduced size in float64.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from geogan.losses import (
    LossWeights,
    RecNorm,
    d_objective,
    g_nonsaturating,
    reconstruction,
    style_loss,
)
from geogan.models.config import ArchConfig, NoiseMode, NoiseSpec, Variant
from geogan.models.layers import BNMode
from geogan.models.params import ParamSet, init_params
from geogan.training.data import Batch
from geogan.training.state import TrainConfig, phase_names

logger = logging.getLogger(__name__)

REL_FLOOR = 1e-8
LOSS_TOLERANCE = 1e-6
NETWORK_TOLERANCE = 1e-4

Tensors = Union[Mapping[str, torch.Tensor], Sequence[torch.Tensor]]


def _as_list(params: Tensors) -> List[torch.Tensor]:
    if isinstance(params, Mapping):
        return [t for t in params.values() if t.requires_grad]
    return list(params)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def gradient_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Tensors,
    probe_count: int = 20,
    epsilon: float = 1e-6,
    seed: int = 0,
    analytic_grad: Optional[Sequence[torch.Tensor]] = None
) -> float:
    """
    Maximum relative error between analytic and numeric gradients

    Args:
        loss_fn: Deterministic scalar function of the tensors in `params`
        params: Tensors to probe; they are perturbed in place and restored
        probe_count: Coordinates to probe; every coordinate when this reaches
            the total parameter count
        epsilon: Central-difference step
        seed: Selects the probed coordinates
        analytic_grad: Gradients to check instead of autograd's (one per tensor)

    Returns:
        The largest relative error over the probed coordinates
    """
    tensors = _as_list(params)
    if analytic_grad is None:
        grads = torch.autograd.grad(loss_fn(), tensors, allow_unused=True)
        analytic_grad = [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]
    flat_grads = [g.detach().reshape(-1) for g in analytic_grad]

    sizes = [t.numel() for t in tensors]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    if probe_count >= total:
        coords = np.arange(total)
    else:
        coords = np.sort(np.random.default_rng(seed).choice(total, size=probe_count, replace=False))

    worst = 0.0
    with torch.no_grad():
        for coord in coords:
            k = int(np.searchsorted(offsets, coord, side="right") - 1)
            i = int(coord - offsets[k])
            flat = tensors[k].view(-1)
            original = flat[i].clone()
            flat[i] = original + epsilon
            f_plus = float(loss_fn())
            flat[i] = original - epsilon
            f_minus = float(loss_fn())
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(flat_grads[k][i]), numeric))
    return worst


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float
    probes: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def reduced_arch(variant: Variant) -> ArchConfig:
    """Small float64-friendly instance of a variant with the full topology"""
    if variant == Variant.ENCODER_GAN:
        base = ArchConfig(variant=variant, image_size=8,
                          noise=NoiseSpec(mode=NoiseMode.ADD, fraction=0.1))
        return base.scaled(64, init_std=0.3)
    if variant == Variant.DIRECT_GAN:
        return ArchConfig(variant=variant, image_size=16).scaled(50, init_std=0.3)
    return ArchConfig(variant=variant, image_size=8).scaled(32, init_std=0.3)


def _random_batch(arch: ArchConfig, batch_size: int, seed: int) -> Batch:
    g = torch.Generator().manual_seed(seed)
    shape = (batch_size, arch.image_size, arch.image_size, arch.channels)
    sat = (torch.rand(shape, generator=g, dtype=torch.float64) * 1.6 - 0.8).requires_grad_(True)
    maps = torch.rand(shape, generator=g, dtype=torch.float64) * 1.6 - 0.8
    return Batch(list(range(batch_size)), sat, maps)


def _loss_suite(seed: int, probe_count: int, epsilon: float) -> List[GradCheckResult]:
    g = torch.Generator().manual_seed(seed)
    fake = torch.randn((2, 4, 4, 2), generator=g, dtype=torch.float64).requires_grad_(True)
    real = torch.randn((2, 4, 4, 2), generator=g, dtype=torch.float64)
    probs_real = (torch.rand(6, generator=g, dtype=torch.float64) * 0.8 + 0.1).requires_grad_(True)
    probs_fake = (torch.rand(6, generator=g, dtype=torch.float64) * 0.8 + 0.1).requires_grad_(True)

    cases = [
        ("loss/d_objective", lambda: d_objective(probs_real, probs_fake), [probs_real, probs_fake]),
        ("loss/g_nonsaturating", lambda: g_nonsaturating(probs_fake), [probs_fake]),
        ("loss/reconstruction_l2", lambda: reconstruction(fake, real, RecNorm.L2), [fake]),
        ("loss/reconstruction_l1", lambda: reconstruction(fake, real, RecNorm.L1), [fake]),
        ("loss/style", lambda: style_loss(fake, real), [fake]),
    ]
    return [
        GradCheckResult(name, gradient_check(fn, tensors, probe_count, epsilon, seed), LOSS_TOLERANCE, probe_count)
        for name, fn, tensors in cases
    ]


def _variant_suite(
    variant: Variant,
    seed: int,
    probe_count: int,
    epsilon: float,
    batch_size: int = 4
) -> List[GradCheckResult]:
    from geogan.training.trainer import discriminator_loss, generator_loss

    arch = reduced_arch(variant)
    params: ParamSet = init_params(arch, seed, torch.float64)
    batch = _random_batch(arch, batch_size, seed)
    components = {
        "gan": LossWeights(1.0, 0.0, 0.0),
        "rec": LossWeights(0.0, 1.0, 0.0),
        "rec_l1": LossWeights(0.0, 1.0, 0.0, RecNorm.L1),
        "style": LossWeights(0.0, 0.0, 1.0),
        "total": LossWeights(1.0, 1.0, 1.0),
    }
    results = []
    for label, weights in components.items():
        config = TrainConfig(arch=arch, weights=weights, batch_size=batch_size, dtype="float64")
        g_names, d_names = phase_names(params, config)
        tensors = [params[n] for n in g_names] + [batch.sat]

        def g_fn(config=config):
            noise = torch.Generator().manual_seed(seed)
            loss, _ = generator_loss(params, batch, config, BNMode.FROZEN, BNMode.FROZEN, noise)
            return loss

        err = gradient_check(g_fn, tensors, probe_count, epsilon, seed)
        results.append(GradCheckResult(f"{variant.value}/{label}", err, NETWORK_TOLERANCE, probe_count))

    config = TrainConfig(arch=arch, batch_size=batch_size, dtype="float64")
    _, d_names = phase_names(params, config)

    def d_fn():
        noise = torch.Generator().manual_seed(seed)
        return discriminator_loss(params, batch, config, BNMode.FROZEN, BNMode.FROZEN, noise)

    err = gradient_check(d_fn, [params[n] for n in d_names], probe_count, epsilon, seed)
    results.append(GradCheckResult(f"{variant.value}/discriminator", err, NETWORK_TOLERANCE, probe_count))
    return results


def run_gradient_suite(
    seed: int = 0,
    probe_count: int = 40,
    epsilon: float = 1e-6,
    variants: Sequence[Variant] = tuple(Variant)
) -> List[GradCheckResult]:
    """Gradient checks for every loss alone and every variant's training objectives"""
    results = _loss_suite(seed, probe_count, epsilon)
    for variant in variants:
        results.extend(_variant_suite(variant, seed, probe_count, epsilon))
    for r in results:
        log = logger.info if r.passed else logger.error
        log("%-28s max rel error %.3e (tol %.0e)", r.name, r.max_rel_error, r.tolerance)
    return results
