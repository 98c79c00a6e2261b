"""
Alternating adversarial training

Each step performs one discriminator update followed by g_steps_per_d_step
generator updates. Gradients are taken only with respect to the tensors the
current phase owns, so a phase never moves the other phase's parameters; the
non-owning networks run their batch norms in FROZEN mode.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from geogan.errors import DatasetError, InvalidArgumentError, NumericalError
from geogan.losses import LossCurveWriter, LossReport, d_objective, log_weights, reconstruction, total_g_loss
from geogan.models.config import Variant
from geogan.models.layers import BNMode
from geogan.models.networks import discriminate, generate, generate_inverse
from geogan.models.params import ParamSet, init_params, read_container, save_params
from geogan.training.checkpoint import load_checkpoint, save_checkpoint
from geogan.training.data import Batch, PairedDataset, PairSource
from geogan.training.state import TrainConfig, TrainState, new_state, set_determinism

logger = logging.getLogger(__name__)

INVERSE_DISCRIMINATOR = "discriminator_inv"
LOSS_CURVE = "loss_curve.csv"
EFFECTIVE_CONFIG = "effective_config.json"
FINAL_CHECKPOINT = "final.ckpt"


def _check_finite(value: torch.Tensor, component: str) -> None:
    if not torch.isfinite(value).all():
        raise NumericalError(component, f"value {float(value.detach().reshape(-1)[0])!r}")


def _apply(
    opt: torch.optim.Adam,
    loss: torch.Tensor,
    names: Sequence[str],
    tensors: Sequence[torch.Tensor],
    phase: str
) -> None:
    grads = torch.autograd.grad(loss, list(tensors), allow_unused=True)
    for name, tensor, grad in zip(names, tensors, grads):
        if grad is None:
            grad = torch.zeros_like(tensor)
        elif not torch.isfinite(grad).all():
            raise NumericalError(f"{phase} gradient of {name}")
        tensor.grad = grad
    opt.step()
    opt.zero_grad(set_to_none=True)


def _bidirectional(config: TrainConfig) -> bool:
    return config.arch.variant == Variant.FLOW_GAN and config.arch.flow_bidirectional


def discriminator_loss(
    params: ParamSet,
    batch: Batch,
    config: TrainConfig,
    d_mode: BNMode = BNMode.TRAIN,
    g_mode: BNMode = BNMode.FROZEN,
    generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    """-d_objective, summed over both translation directions for bidirectional flows"""
    arch = config.arch
    with torch.no_grad():
        out = generate(params, batch.sat, arch, g_mode, generator)
        fake_sat = generate_inverse(params, batch.map, arch, g_mode) if _bidirectional(config) else None

    embedding = out.embedding
    d_real = discriminate(params, batch.sat, batch.map, arch, d_mode, embedding=embedding)
    d_fake = discriminate(params, batch.sat, out.fake, arch, d_mode, embedding=embedding)
    loss = -d_objective(d_real, d_fake)
    if fake_sat is not None:
        inv_real = discriminate(params, batch.map, batch.sat, arch, d_mode, prefix=INVERSE_DISCRIMINATOR)
        inv_fake = discriminate(params, batch.map, fake_sat, arch, d_mode, prefix=INVERSE_DISCRIMINATOR)
        loss = loss - d_objective(inv_real, inv_fake)
    return loss


def generator_loss(
    params: ParamSet,
    batch: Batch,
    config: TrainConfig,
    g_mode: BNMode = BNMode.TRAIN,
    d_mode: BNMode = BNMode.FROZEN,
    generator: Optional[torch.Generator] = None
) -> Tuple[torch.Tensor, LossReport]:
    """Weighted generator objective; adversarial terms are skipped when w_gan is 0"""
    arch, weights = config.arch, config.weights
    out = generate(params, batch.sat, arch, g_mode, generator)
    d_terms: List[torch.Tensor] = []
    if weights.w_gan > 0:
        d_terms.append(discriminate(params, batch.sat, out.fake, arch, d_mode, embedding=out.embedding))
        if _bidirectional(config):
            fake_sat = generate_inverse(params, batch.map, arch, g_mode)
            d_terms.append(discriminate(
                params, batch.map, fake_sat, arch, d_mode, prefix=INVERSE_DISCRIMINATOR
            ))
    return total_g_loss(d_terms, out.fake, batch.map, weights)


def _failed_component(report: LossReport) -> str:
    for name in ("g_gan", "g_rec", "g_style"):
        if not math.isfinite(getattr(report, name)):
            return name
    return "g_total"


def train_step(
    state: TrainState,
    batch: Batch,
    config: TrainConfig
) -> Tuple[TrainState, LossReport]:
    """
    One discriminator update then g_steps_per_d_step generator updates

    Raises:
        InvalidArgumentError: empty batch
        NumericalError: a non-finite loss or gradient, naming the component
    """
    if len(batch) == 0:
        raise InvalidArgumentError("train_step needs a non-empty batch")
    params = state.params

    d_loss = discriminator_loss(params, batch, config)
    _check_finite(d_loss, "d_loss")
    _apply(state.d_opt, d_loss, state.d_names, state.d_params(), "discriminator")

    report = LossReport()
    for _ in range(config.g_steps_per_d_step):
        g_loss, report = generator_loss(params, batch, config)
        if not torch.isfinite(g_loss):
            raise NumericalError(_failed_component(report), f"generator loss {report.g_total!r}")
        _apply(state.g_opt, g_loss, state.g_names, state.g_params(), "generator")

    state.step += 1
    report.step = state.step
    report.d_loss = float(d_loss.detach())
    return state, report


def open_dataset(config: TrainConfig) -> PairedDataset:
    if not config.manifest:
        raise DatasetError("no dataset manifest configured")
    return PairedDataset(config.manifest, config.arch.image_size, dtype=config.torch_dtype)


def pretrain_encoder(
    config: TrainConfig,
    dataset: PairSource,
    steps: int = 200,
    out_path: Optional[Path] = None
) -> ParamSet:
    """
    Train encoder and generator as an auto-encoder over satellite tiles

    The generator reconstructs the satellite tile from its embedding under the
    configured reconstruction norm. The returned encoder tensors can seed an
    ENCODER_GAN run through TrainConfig.pretrained_encoder.
    """
    arch = config.arch
    if arch.variant != Variant.ENCODER_GAN:
        raise InvalidArgumentError("encoder pre-training needs the encoder architecture")
    set_determinism(config.deterministic, config.seed)
    params = init_params(arch, config.seed, config.torch_dtype)
    names = list(params.group(("encoder/", "generator/")).keys())
    tensors = [params[n] for n in names]
    opt = torch.optim.Adam(tensors, lr=config.learning_rate, betas=(config.beta1, config.beta2))

    steps_per_epoch = dataset.steps_per_epoch(config.batch_size)
    step = 0
    while step < steps:
        epoch = step // steps_per_epoch
        for batch in dataset.batches(config.seed, epoch, config.batch_size, prefetch=config.prefetch):
            if step >= steps:
                break
            out = generate(params, batch.sat, arch, BNMode.TRAIN)
            loss = reconstruction(out.fake, batch.sat, config.weights.rec_norm)
            _check_finite(loss, "pretrain reconstruction")
            _apply(opt, loss, names, tensors, "auto-encoder")
            step += 1
            if step % 50 == 0 or step == steps:
                logger.info("Auto-encoder step %d/%d: reconstruction %.4f", step, steps, float(loss))

    encoder = ParamSet((k, v) for k, v in params.items() if k.startswith("encoder/"))
    if out_path is not None:
        save_params(out_path, encoder, arch)
    return encoder


def _load_pretrained_encoder(params: ParamSet, config: TrainConfig) -> None:
    tensors, _ = read_container(config.pretrained_encoder, kind="PARAMS")
    loaded = 0
    for name, value in tensors.items():
        if name.startswith("encoder/"):
            if name not in params or params[name].shape != value.shape:
                raise DatasetError(f"pretrained encoder tensor {name} does not fit the architecture")
            with torch.no_grad():
                params[name].copy_(value.to(params[name].dtype))
            loaded += 1
    logger.info("Loaded %d pretrained encoder tensors from %s", loaded, config.pretrained_encoder)


@dataclass
class TrainResult:
    state: TrainState
    out_dir: Path
    reports: List[LossReport] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    grids: List[Path] = field(default_factory=list)


def _epoch_summary(epoch: int, reports: List[LossReport], seconds: float) -> None:
    if not reports:
        return
    mean = {k: float(np.mean([getattr(r, k) for r in reports])) for k in ("d_loss", "g_gan", "g_rec", "g_style")}
    logger.info(
        "Epoch %d: %d steps in %.1fs, d=%.4f gan=%.4f rec=%.4f style=%.6f",
        epoch, len(reports), seconds, mean["d_loss"], mean["g_gan"], mean["g_rec"], mean["g_style"]
    )


def train(
    config: TrainConfig,
    dataset: Optional[PairSource] = None,
    plots: bool = True
) -> TrainResult:
    """
    Run a full training job

    Writes to config.out_dir: effective_config.json, loss_curve.csv (one row
    per step), checkpoint_<step>.ckpt every checkpoint_interval steps,
    samples_epoch<k>.png at every completed epoch, final.ckpt, and loss-curve
    graphs.

    Raises:
        DatasetError: the manifest cannot be read or is empty
        NumericalError: after writing an abort checkpoint
    """
    from geogan.evaluation.grid import largest_square, sample_grid
    from geogan.evaluation.plots import plot_loss_curves

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dataset is None:
        dataset = open_dataset(config)
    if len(dataset) == 0:
        raise DatasetError("dataset is empty")

    config.write(out_dir / EFFECTIVE_CONFIG)
    logger.info("Effective config: %s", config.to_dict())
    log_weights(config.weights, {
        "lr": config.learning_rate, "betas": (config.beta1, config.beta2),
        "batch": config.batch_size, "g_per_d": config.g_steps_per_d_step,
    })

    set_determinism(config.deterministic, config.seed)
    if config.resume:
        state = load_checkpoint(config.resume, config)
    else:
        params = init_params(config.arch, config.seed, config.torch_dtype)
        if config.pretrained_encoder:
            _load_pretrained_encoder(params, config)
        state = new_state(config, params)

    steps_per_epoch = dataset.steps_per_epoch(config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)
    logger.info(
        "Training %s for %d step(s): %d pairs, %d step(s) per epoch",
        config.arch.variant.name, total_steps, len(dataset), steps_per_epoch
    )

    result = TrainResult(state=state, out_dir=out_dir)
    grid_n = largest_square(min(config.grid_size, len(dataset)))
    with LossCurveWriter(out_dir / LOSS_CURVE, append=bool(config.resume)) as writer:
        while state.step < total_steps:
            epoch = state.step // steps_per_epoch
            start = state.step % steps_per_epoch
            epoch_reports: List[LossReport] = []
            t0 = time.perf_counter()
            for batch in dataset.batches(config.seed, epoch, config.batch_size, start, config.prefetch):
                if state.step >= total_steps:
                    break
                t_step = time.perf_counter()
                try:
                    state, report = train_step(state, batch, config)
                except NumericalError as exc:
                    abort = save_checkpoint(out_dir / f"abort_{state.step:06d}.ckpt", state, config)
                    logger.error("Numerical failure at step %d (%s); state saved to %s", state.step + 1, exc, abort)
                    raise
                writer.write(report)
                epoch_reports.append(report)
                result.reports.append(report)
                logger.debug("%s (%.3fs)", report.to_line(), time.perf_counter() - t_step)
                if config.checkpoint_interval and state.step % config.checkpoint_interval == 0:
                    result.checkpoints.append(
                        save_checkpoint(out_dir / f"checkpoint_{state.step:06d}.ckpt", state, config)
                    )

            _epoch_summary(epoch + 1, epoch_reports, time.perf_counter() - t0)
            if state.step % steps_per_epoch == 0 and grid_n:
                grid_path = out_dir / f"samples_epoch{epoch + 1:03d}.png"
                sample_grid(
                    state.params, config.arch, dataset, grid_n,
                    seed=config.seed + epoch, out_path=grid_path
                )
                result.grids.append(grid_path)

    result.checkpoints.append(save_checkpoint(out_dir / FINAL_CHECKPOINT, state, config))
    if plots and result.reports:
        plot_loss_curves(out_dir / LOSS_CURVE, out_dir)
    return result
