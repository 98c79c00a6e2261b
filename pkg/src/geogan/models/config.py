"""
Architecture configuration

Layer tables default to the published layer specs:

* ENCODER_GAN (64x64): encoder c(3x3x1024) s2, c(3x3x512) s2, c(3x3x256) s2,
  c(3x3x128) s2, c(4x4x512) s1 + batchnorm; generator cT(4x4x1024) s1,
  cT(8x8x512) s2, cT(3x3x128) s2, cT(3x3x32) s2, cT(3x3x3) s2 + tanh;
  discriminator c(3x3x128..1024) s2, c(4x4x512) s1, concat embedding, FC 512, FC 1.
* DIRECT_GAN (256x256): four dual 3x3/5x5 blocks with n = 300, 150, 60, 20,
  transposed 3x3 to 3 channels + tanh; discriminator on 6 channels with
  stride-2 convs of 128, 256, 512, 768, 1024 filters and a 4x4 head.
* FLOW_GAN (64x64): two checkerboard then two channel-wise affine couplings
  whose scale/shift nets are FC(512)+BN, FC(512)+BN, FC(D).

Smaller images keep the topology and drop trailing stride-2 stages.
"""
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, Tuple

from geogan.errors import InvalidArgumentError


class Variant(str, Enum):
    ENCODER_GAN = "encoder"
    DIRECT_GAN = "direct"
    FLOW_GAN = "flow"

    @classmethod
    def parse(cls, text) -> "Variant":
        if isinstance(text, Variant):
            return text
        key = str(text).strip().lower()
        for v in cls:
            if key in (v.value, v.name.lower()):
                return v
        raise InvalidArgumentError(f"unknown architecture {text!r}; expected encoder, direct or flow")


class NoiseMode(str, Enum):
    APPEND = "append"
    ADD = "add"
    NONE = "none"

    @classmethod
    def parse(cls, text) -> "NoiseMode":
        if isinstance(text, NoiseMode):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise InvalidArgumentError(f"unknown noise mode {text!r}") from None


class MaskKind(str, Enum):
    CHECKERBOARD = "checkerboard"
    CHANNEL = "channel"


class Parity(int, Enum):
    EVEN = 0
    ODD = 1


@dataclass(frozen=True)
class NoiseSpec:
    """How Gaussian noise is combined with the satellite embedding"""
    mode: NoiseMode = NoiseMode.NONE
    dim: int = 0
    std: float = 1.0
    fraction: float = 0.0
    # scale noise by the embedding's RMS magnitude
    relative: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", NoiseMode.parse(self.mode))
        if self.mode == NoiseMode.APPEND and self.dim <= 0:
            raise InvalidArgumentError(f"APPEND noise needs dim > 0, got {self.dim}")
        if not self.std > 0:
            raise InvalidArgumentError(f"noise std must be > 0, got {self.std}")
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidArgumentError(f"noise fraction must be in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class DeconvSpec:
    kernel: int
    filters: int
    stride: int


NATIVE_SIZE = {
    Variant.ENCODER_GAN: 64,
    Variant.DIRECT_GAN: 256,
    Variant.FLOW_GAN: 64,
}

DEFAULT_GENERATOR_LAYERS = (
    DeconvSpec(4, 1024, 1),
    DeconvSpec(8, 512, 2),
    DeconvSpec(3, 128, 2),
    DeconvSpec(3, 32, 2),
    DeconvSpec(3, 3, 2),
)

# default stack: checkerboard even/odd, then channel even/odd
DEFAULT_COUPLINGS = (
    (MaskKind.CHECKERBOARD, Parity.EVEN),
    (MaskKind.CHECKERBOARD, Parity.ODD),
    (MaskKind.CHANNEL, Parity.EVEN),
    (MaskKind.CHANNEL, Parity.ODD),
)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ArchConfig:
    """Which architecture to build and its layer tables"""
    variant: Variant = Variant.DIRECT_GAN
    image_size: int = 0
    channels: int = 3
    embed_dim: int = 512
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    leaky_slope: float = 0.2
    encoder_filters: Tuple[int, ...] = (1024, 512, 256, 128)
    generator_layers: Tuple[DeconvSpec, ...] = DEFAULT_GENERATOR_LAYERS
    disc_filters: Tuple[int, ...] = (128, 256, 512, 1024)
    disc_units: int = 512
    direct_gen_n: Tuple[int, ...] = (300, 150, 60, 20)
    direct_disc_filters: Tuple[int, ...] = (128, 256, 512, 768, 1024)
    flow_hidden: int = 512
    flow_couplings: Tuple[Tuple[MaskKind, Parity], ...] = DEFAULT_COUPLINGS
    flow_bounded_scale: bool = True
    flow_bidirectional: bool = True
    shared_encoder: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not self.image_size:
            object.__setattr__(self, "image_size", NATIVE_SIZE[self.variant])
        size = self.image_size
        if not _is_power_of_two(size) or size < 8 or size > NATIVE_SIZE[self.variant]:
            raise InvalidArgumentError(
                f"{self.variant.name} image_size must be a power of two in "
                f"[8, {NATIVE_SIZE[self.variant]}], got {size}"
            )
        if self.embed_dim <= 0 or self.channels <= 0:
            raise InvalidArgumentError("embed_dim and channels must be positive")
        if self.variant == Variant.FLOW_GAN and self.noise.mode == NoiseMode.APPEND:
            raise InvalidArgumentError("flow generators preserve dimension; APPEND noise is not allowed")
        if self.variant == Variant.DIRECT_GAN and self.noise.mode != NoiseMode.NONE:
            raise InvalidArgumentError("the direct generator takes no noise input; use noise mode none")
        if self.variant == Variant.ENCODER_GAN:
            if self.stages > len(self.encoder_filters) or self.stages > len(self.disc_filters):
                raise InvalidArgumentError(f"image_size {size} needs more stride-2 stages than configured")
            if self.stages > len(self.generator_layers) - 1:
                raise InvalidArgumentError(f"image_size {size} needs more generator stages than configured")
        if not self.init_std > 0:
            raise InvalidArgumentError("init_std must be positive")

    @property
    def stages(self) -> int:
        """Stride-2 stages between the image and the 4x4 map (64 -> 4)"""
        return int(math.log2(self.image_size // 4))

    @property
    def latent_dim(self) -> int:
        if self.noise.mode == NoiseMode.APPEND:
            return self.embed_dim + self.noise.dim
        return self.embed_dim

    @property
    def flat_dim(self) -> int:
        return self.image_size * self.image_size * self.channels

    def encoder_table(self) -> List[int]:
        return list(self.encoder_filters[:self.stages])

    def disc_table(self) -> List[int]:
        return list(self.disc_filters[:self.stages])

    def direct_disc_table(self) -> List[int]:
        """Stride-2 filter counts of the direct discriminator, ending at 8x8"""
        count = max(0, int(math.log2(self.image_size)) - 3)
        return list(self.direct_disc_filters[:count])

    def generator_table(self) -> List[DeconvSpec]:
        """First s1 layer, (stages - 1) doubling layers, and the output layer"""
        first, *hidden, last = self.generator_layers
        out = replace(last, filters=self.channels)
        return [first] + list(hidden[:self.stages - 1]) + [out]

    def scaled(self, divisor: int, init_std: float = None) -> "ArchConfig":
        """Same topology with every width divided by `divisor` (min 2)"""
        def s(c: int) -> int:
            return max(2, c // divisor)

        return replace(
            self,
            embed_dim=s(self.embed_dim),
            noise=replace(self.noise, dim=s(self.noise.dim)) if self.noise.dim else self.noise,
            encoder_filters=tuple(s(c) for c in self.encoder_filters),
            generator_layers=tuple(replace(g, filters=s(g.filters)) for g in self.generator_layers),
            disc_filters=tuple(s(c) for c in self.disc_filters),
            disc_units=s(self.disc_units),
            direct_gen_n=tuple(s(c) for c in self.direct_gen_n),
            direct_disc_filters=tuple(s(c) for c in self.direct_disc_filters),
            flow_hidden=s(self.flow_hidden),
            init_std=self.init_std if init_std is None else init_std
        )

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["noise"]["mode"] = self.noise.mode.value
        d["flow_couplings"] = [[k.value, int(p)] for k, p in self.flow_couplings]
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "ArchConfig":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseSpec(**d["noise"])
        if "generator_layers" in d:
            d["generator_layers"] = tuple(
                g if isinstance(g, DeconvSpec) else DeconvSpec(**g) for g in d["generator_layers"]
            )
        if "flow_couplings" in d:
            d["flow_couplings"] = tuple((MaskKind(k), Parity(p)) for k, p in d["flow_couplings"])
        for key in ("encoder_filters", "disc_filters", "direct_gen_n", "direct_disc_filters"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def phase_prefixes(config: ArchConfig) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Parameter path prefixes owned by the generator and discriminator phases"""
    if config.variant == Variant.ENCODER_GAN:
        d = ("discriminator/",) if config.shared_encoder else ("discriminator/", "disc_encoder/")
        return ("encoder/", "generator/"), d
    if config.variant == Variant.DIRECT_GAN:
        return ("generator/",), ("discriminator/",)
    if config.flow_bidirectional:
        return ("flow/",), ("discriminator/", "discriminator_inv/")
    return ("flow/",), ("discriminator/",)
