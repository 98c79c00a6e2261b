"""
Encoder-conditioned GAN

The satellite tile is encoded to a 1x1xD embedding, noise is appended or
added, and a transposed-conv generator expands the latent vector into a map.
The discriminator scores a map together with the satellite embedding.
"""
from typing import Mapping, Optional

import torch

from geogan.errors import InvalidArgumentError, ShapeError
from geogan.models import layers as L
from geogan.models.config import ArchConfig, NoiseMode, NoiseSpec


def encoder_forward(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    prefix: str = "encoder",
    trace: L.Trace = None
) -> torch.Tensor:
    """
    Encode satellite tiles

    Args:
        sat: N x S x S x C satellite batch in [-1, 1]

    Returns:
        N x 1 x 1 x embed_dim embedding
    """
    size, channels = config.image_size, config.channels
    L.check_shape(sat, f"{prefix}/input", (None, size, size, channels))

    x = L.to_nchw(sat)
    for i in range(len(config.encoder_table())):
        x = L.leaky(L.conv(params, f"{prefix}/conv{i}", x, stride=2, padding=1), config.leaky_slope)
        L.record(trace, f"{prefix}/conv{i}", x)
    x = L.conv(params, f"{prefix}/head", x)
    x = L.batch_norm(params, f"{prefix}/head/bn", x, mode)
    x = L.leaky(x, config.leaky_slope)
    L.record(trace, f"{prefix}/head", x)
    return L.to_nhwc(x)


def noise_scale(embed: torch.Tensor, spec: NoiseSpec) -> torch.Tensor:
    """Per-sample noise magnitude, shape N x 1"""
    flat = embed.reshape(embed.shape[0], -1)
    scale = torch.full((flat.shape[0], 1), spec.fraction * spec.std, dtype=flat.dtype, device=flat.device)
    if spec.relative:
        rms = flat.pow(2).mean(dim=1, keepdim=True).sqrt()
        scale = scale * rms
    return scale


def inject_noise(
    embed: torch.Tensor,
    spec: NoiseSpec,
    generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    """
    Combine an embedding with Gaussian noise

    Args:
        embed: N x 1 x 1 x D (or N x D) embedding
        spec: APPEND concatenates `dim` noise values, ADD perturbs every
            coordinate, NONE passes the embedding through
        generator: torch RNG to draw from; the global RNG when None

    Returns:
        N x latent_dim latent vectors
    """
    if spec.mode == NoiseMode.APPEND and spec.dim <= 0:
        raise InvalidArgumentError(f"APPEND noise needs dim > 0, got {spec.dim}")
    flat = embed.reshape(embed.shape[0], -1)
    if spec.mode == NoiseMode.NONE:
        return flat

    n = flat.shape[0]
    width = spec.dim if spec.mode == NoiseMode.APPEND else flat.shape[1]
    g = torch.randn((n, width), generator=generator, dtype=flat.dtype)
    noise = noise_scale(flat, spec) * g
    if spec.mode == NoiseMode.APPEND:
        return torch.cat([flat, noise], dim=1)
    return flat + noise


def generator_enc_forward(
    params: Mapping[str, torch.Tensor],
    latent: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    trace: L.Trace = None
) -> torch.Tensor:
    """
    Expand latent vectors into maps

    Args:
        latent: N x latent_dim (or N x 1 x 1 x latent_dim)

    Returns:
        N x S x S x C map batch in (-1, 1)
    """
    n = latent.shape[0]
    flat = latent.reshape(n, -1)
    if flat.shape[1] != config.latent_dim:
        raise ShapeError("generator/deconv0", f"latent of {config.latent_dim}", tuple(latent.shape))

    x = flat.reshape(n, config.latent_dim, 1, 1)
    table = config.generator_table()
    for i, spec in enumerate(table):
        name = f"generator/deconv{i}"
        if i == 0:
            x = L.deconv(params, name, x, stride=spec.stride)
        else:
            padding, output_padding = L.deconv_padding(spec.kernel)
            x = L.deconv(params, name, x, stride=2, padding=padding, output_padding=output_padding)
        x = torch.tanh(x) if i == len(table) - 1 else L.leaky(x, config.leaky_slope)
        L.record(trace, name, x)
    return L.to_nhwc(x)


def discriminator_enc_forward(
    params: Mapping[str, torch.Tensor],
    map_img: torch.Tensor,
    cond: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    prefix: str = "discriminator",
    trace: L.Trace = None
) -> torch.Tensor:
    """
    Probability that each map is real given its satellite embedding

    Returns:
        Tensor of shape (N,) in (0, 1)
    """
    size, channels = config.image_size, config.channels
    L.check_shape(map_img, f"{prefix}/input", (None, size, size, channels))
    n = map_img.shape[0]
    cond = cond.reshape(cond.shape[0], -1)
    if cond.shape[0] != n or cond.shape[1] != config.embed_dim:
        raise ShapeError(f"{prefix}/fc0", f"{n}x{config.embed_dim} embedding", tuple(cond.shape))

    x = L.to_nchw(map_img)
    for i in range(len(config.disc_table())):
        x = L.leaky(L.conv(params, f"{prefix}/conv{i}", x, stride=2, padding=1), config.leaky_slope)
        L.record(trace, f"{prefix}/conv{i}", x)
    x = L.leaky(L.conv(params, f"{prefix}/head", x), config.leaky_slope)
    L.record(trace, f"{prefix}/head", x)

    x = torch.cat([x.reshape(n, -1), cond], dim=1)
    if trace is not None:
        trace.append((f"{prefix}/concat", tuple(x.shape)))
    x = L.leaky(L.dense(params, f"{prefix}/fc0", x), config.leaky_slope)
    logit = L.dense(params, f"{prefix}/fc1", x)
    return torch.sigmoid(logit).reshape(n)
