"""
Encoder-free direct translation GAN

The generator keeps the spatial size throughout: each block concatenates n
3x3 and n 5x5 same-padded convolutions (2n channels), and a 3x3 transposed
convolution maps to the output channels. The discriminator sees the satellite
tile and a map concatenated along the channel axis.
"""
from typing import Mapping

import torch

from geogan.errors import ShapeError
from geogan.models import layers as L
from geogan.models.config import ArchConfig


def generator_direct_forward(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    trace: L.Trace = None
) -> torch.Tensor:
    """Translate N x S x S x C satellite tiles into maps of the same shape"""
    size, channels = config.image_size, config.channels
    L.check_shape(sat, "generator/input", (None, size, size, channels))

    x = L.to_nchw(sat)
    for i in range(len(config.direct_gen_n)):
        small = L.conv(params, f"generator/block{i}/k3", x, padding=1)
        large = L.conv(params, f"generator/block{i}/k5", x, padding=2)
        x = L.leaky(torch.cat([small, large], dim=1), config.leaky_slope)
        L.record(trace, f"generator/block{i}", x)
    x = torch.tanh(L.deconv(params, "generator/out", x, stride=1, padding=1))
    L.record(trace, "generator/out", x)
    return L.to_nhwc(x)


def discriminator_direct_forward(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    map_img: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    prefix: str = "discriminator",
    trace: L.Trace = None
) -> torch.Tensor:
    """
    Probability that each (satellite, map) pair is real

    Returns:
        Tensor of shape (N,) in (0, 1)
    """
    size, channels = config.image_size, config.channels
    L.check_shape(sat, f"{prefix}/input", (None, size, size, channels))
    if map_img.shape != sat.shape:
        raise ShapeError(f"{prefix}/input", f"map aligned with {tuple(sat.shape)}", tuple(map_img.shape))

    x = torch.cat([L.to_nchw(sat), L.to_nchw(map_img)], dim=1)
    L.record(trace, f"{prefix}/concat", x)
    for i in range(len(config.direct_disc_table())):
        x = L.leaky(L.conv(params, f"{prefix}/conv{i}", x, stride=2, padding=1), config.leaky_slope)
        L.record(trace, f"{prefix}/conv{i}", x)
    logits = L.conv(params, f"{prefix}/head", x, padding="same")
    L.record(trace, f"{prefix}/head", logits)
    return torch.sigmoid(logits.mean(dim=(1, 2, 3)))
