"""
Variant dispatch used by training and evaluation

generate() runs whichever generator a config selects; discriminate() scores
maps with the matching discriminator. Both take NHWC images in [-1, 1].
"""
from dataclasses import dataclass
from typing import Mapping, Optional

import torch

from geogan.errors import InvalidArgumentError
from geogan.models import layers as L
from geogan.models.config import ArchConfig, Variant
from geogan.models.direct_gan import discriminator_direct_forward, generator_direct_forward
from geogan.models.encoder_gan import (
    discriminator_enc_forward,
    encoder_forward,
    generator_enc_forward,
    inject_noise,
)
from geogan.models.flow import flow_generator_forward, flow_generator_inverse


@dataclass
class GeneratorOutput:
    fake: torch.Tensor
    # satellite embedding (ENCODER_GAN only)
    embedding: Optional[torch.Tensor] = None


def generate(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    generator: Optional[torch.Generator] = None
) -> GeneratorOutput:
    """Translate satellite tiles into maps"""
    if config.variant == Variant.ENCODER_GAN:
        embedding = encoder_forward(params, sat, config, mode)
        latent = inject_noise(embedding, config.noise, generator)
        return GeneratorOutput(generator_enc_forward(params, latent, config, mode), embedding)
    if config.variant == Variant.DIRECT_GAN:
        return GeneratorOutput(generator_direct_forward(params, sat, config, mode))
    return GeneratorOutput(flow_generator_forward(params, sat, config, mode, generator))


def generate_inverse(
    params: Mapping[str, torch.Tensor],
    map_img: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL
) -> torch.Tensor:
    """Map to satellite translation; only flow generators are invertible"""
    if config.variant != Variant.FLOW_GAN:
        raise InvalidArgumentError(f"{config.variant.name} has no inverse generator")
    return flow_generator_inverse(params, map_img, config, mode)


def condition(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    config: ArchConfig,
    embedding: Optional[torch.Tensor],
    mode: L.BNMode
) -> torch.Tensor:
    """The satellite embedding the encoder discriminator is conditioned on"""
    if config.shared_encoder:
        if embedding is None:
            embedding = encoder_forward(params, sat, config, mode)
        return embedding
    return encoder_forward(params, sat, config, mode, prefix="disc_encoder")


def discriminate(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    map_img: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    embedding: Optional[torch.Tensor] = None,
    prefix: str = "discriminator"
) -> torch.Tensor:
    """
    Probability that each map is the real translation of its satellite tile

    Args:
        embedding: Precomputed satellite embedding to reuse (shared encoder)
        prefix: "discriminator_inv" scores (map, satellite) pairs of the
            inverse flow direction
    """
    if config.variant == Variant.ENCODER_GAN:
        cond = condition(params, sat, config, embedding, mode)
        return discriminator_enc_forward(params, map_img, cond, config, mode, prefix=prefix)
    return discriminator_direct_forward(params, sat, map_img, config, mode, prefix=prefix)
