"""
RealNVP flow generator

Each affine coupling keeps the masked coordinates and rescales/shifts the rest
as a function of them::

    y = m*u + (1 - m)*(u*exp(s(m*u)) + t(m*u))

s and t are fully connected nets (FC, batch norm, leaky ReLU, FC, batch norm,
leaky ReLU, FC) over the flattened image, so spatial structure only enters
through the mask. The generator works in atanh space on both sides:
map = tanh(flow(atanh(sat))), which makes satellite and map domains exact
bijective images of each other.
"""
import math
from dataclasses import dataclass
from typing import List, Mapping, Tuple

import torch

from geogan.errors import InvalidArgumentError, NumericalOverflowError
from geogan.models import layers as L
from geogan.models.config import ArchConfig, MaskKind, NoiseMode, Parity
from geogan.models.encoder_gan import noise_scale

# images are clamped this far inside (-1, 1) before atanh
ATANH_MARGIN = 1e-6


def make_mask(
    kind: MaskKind,
    parity: Parity,
    height: int,
    width: int,
    channels: int,
    dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """
    Binary H x W x C coupling mask

    CHECKERBOARD is 1 where (i + j + parity) is even; CHANNEL keeps the first
    ceil(C / 2) channels for EVEN parity. Opposite parities are complements.
    """
    if height <= 0 or width <= 0 or channels <= 0:
        raise InvalidArgumentError(f"mask dimensions must be positive, got {height}x{width}x{channels}")
    parity = Parity(parity)
    if MaskKind(kind) == MaskKind.CHECKERBOARD:
        i = torch.arange(height).reshape(height, 1, 1)
        j = torch.arange(width).reshape(1, width, 1)
        mask = ((i + j + int(parity)) % 2 == 0).expand(height, width, channels)
    else:
        keep = torch.arange(channels) < math.ceil(channels / 2)
        if parity == Parity.ODD:
            keep = ~keep
        mask = keep.reshape(1, 1, channels).expand(height, width, channels)
    return mask.to(dtype).contiguous()


@dataclass
class CouplingLayer:
    """One affine coupling bijection bound to its scale and shift nets"""
    mask_kind: MaskKind
    parity: Parity
    prefix: str
    params: Mapping[str, torch.Tensor]
    mask: torch.Tensor
    leaky_slope: float = 0.2
    bounded_scale: bool = True

    def _net(self, name: str, x: torch.Tensor, mode: L.BNMode) -> torch.Tensor:
        base = f"{self.prefix}/{name}"
        h = L.dense(self.params, f"{base}/fc0", x)
        h = L.leaky(L.batch_norm(self.params, f"{base}/bn0", h, mode), self.leaky_slope)
        h = L.dense(self.params, f"{base}/fc1", h)
        h = L.leaky(L.batch_norm(self.params, f"{base}/bn1", h, mode), self.leaky_slope)
        return L.dense(self.params, f"{base}/fc2", h)

    def scale_shift(self, masked: torch.Tensor, mode: L.BNMode) -> Tuple[torch.Tensor, torch.Tensor]:
        s = self._net("scale", masked, mode)
        if self.bounded_scale:
            s = torch.tanh(s)
        if not torch.isfinite(s).all():
            raise NumericalOverflowError(f"{self.prefix}/scale", "non-finite log-scale")
        return s, self._net("shift", masked, mode)

    def forward(self, u: torch.Tensor, mode: L.BNMode = L.BNMode.EVAL) -> Tuple[torch.Tensor, torch.Tensor]:
        m = self.mask.to(u.dtype)
        s, t = self.scale_shift(m * u, mode)
        scale = torch.exp(s)
        if not torch.isfinite(scale).all():
            raise NumericalOverflowError(f"{self.prefix}/scale", "exp(scale) overflowed")
        y = m * u + (1 - m) * (u * scale + t)
        return y, ((1 - m) * s).sum(dim=1)

    def inverse(self, y: torch.Tensor, mode: L.BNMode = L.BNMode.EVAL) -> Tuple[torch.Tensor, torch.Tensor]:
        m = self.mask.to(y.dtype)
        s, t = self.scale_shift(m * y, mode)
        scale = torch.exp(-s)
        if not torch.isfinite(scale).all():
            raise NumericalOverflowError(f"{self.prefix}/scale", "exp(-scale) overflowed")
        u = m * y + (1 - m) * ((y - t) * scale)
        return u, -((1 - m) * s).sum(dim=1)


def default_couplings(params: Mapping[str, torch.Tensor], config: ArchConfig) -> List[CouplingLayer]:
    """The configured coupling stack bound to a ParamSet"""
    size, channels = config.image_size, config.channels
    layers = []
    for i, (kind, parity) in enumerate(config.flow_couplings):
        mask = make_mask(kind, parity, size, size, channels).reshape(-1)
        layers.append(CouplingLayer(
            mask_kind=kind,
            parity=parity,
            prefix=f"flow/coupling{i}",
            params=params,
            mask=mask,
            leaky_slope=config.leaky_slope,
            bounded_scale=config.flow_bounded_scale
        ))
    return layers


def _flatten(x: torch.Tensor) -> torch.Tensor:
    return x.reshape(x.shape[0], -1)


def nvp_forward(
    layers: List[CouplingLayer],
    z: torch.Tensor,
    mode: L.BNMode = L.BNMode.EVAL
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Push z through every coupling in order

    Returns:
        (x with the shape of z, per-sample log-determinant of shape (N,))
    """
    u = _flatten(z)
    log_det = torch.zeros(u.shape[0], dtype=u.dtype)
    for layer in layers:
        u, ld = layer.forward(u, mode)
        log_det = log_det + ld
    return u.reshape(z.shape), log_det


def nvp_inverse(
    layers: List[CouplingLayer],
    x: torch.Tensor,
    mode: L.BNMode = L.BNMode.EVAL
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Undo nvp_forward; the log-determinant is that of the inverse map"""
    u = _flatten(x)
    log_det = torch.zeros(u.shape[0], dtype=u.dtype)
    for layer in reversed(layers):
        u, ld = layer.inverse(u, mode)
        log_det = log_det + ld
    return u.reshape(x.shape), log_det


def safe_atanh(x: torch.Tensor) -> torch.Tensor:
    return torch.atanh(x.clamp(-1 + ATANH_MARGIN, 1 - ATANH_MARGIN))


def _check_image(x: torch.Tensor, config: ArchConfig, layer: str) -> None:
    size, channels = config.image_size, config.channels
    L.check_shape(x, layer, (None, size, size, channels))


def flow_generator_forward(
    params: Mapping[str, torch.Tensor],
    sat: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL,
    generator: torch.Generator = None
) -> torch.Tensor:
    """Satellite to map: tanh(flow(atanh(sat))), optionally with additive noise"""
    _check_image(sat, config, "flow/input")
    u = safe_atanh(sat)
    if config.noise.mode == NoiseMode.ADD and config.noise.fraction > 0:
        flat = _flatten(u)
        g = torch.randn(flat.shape, generator=generator, dtype=flat.dtype)
        u = (flat + noise_scale(flat, config.noise) * g).reshape(u.shape)
    x, _ = nvp_forward(default_couplings(params, config), u, mode)
    return torch.tanh(x)


def flow_generator_inverse(
    params: Mapping[str, torch.Tensor],
    map_img: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL
) -> torch.Tensor:
    """Map to satellite through the inverse flow"""
    _check_image(map_img, config, "flow/input")
    z, _ = nvp_inverse(default_couplings(params, config), safe_atanh(map_img), mode)
    return torch.tanh(z)


def flow_log_likelihood(
    params: Mapping[str, torch.Tensor],
    map_img: torch.Tensor,
    config: ArchConfig,
    mode: L.BNMode = L.BNMode.EVAL
) -> torch.Tensor:
    """
    Log density of maps under a standard normal base, in nats per dimension

    A diagnostic of how spread out the flow's outputs are; training never
    optimizes it.
    """
    _check_image(map_img, config, "flow/input")
    clamped = map_img.clamp(-1 + ATANH_MARGIN, 1 - ATANH_MARGIN)
    z, log_det = nvp_inverse(default_couplings(params, config), torch.atanh(clamped), mode)
    z = _flatten(z)
    dim = z.shape[1]
    base = -0.5 * (z.pow(2).sum(dim=1) + dim * math.log(2 * math.pi))
    # d atanh(y) / dy = 1 / (1 - y^2)
    squash = -torch.log1p(-_flatten(clamped).pow(2)).sum(dim=1)
    return (base + log_det + squash) / dim
