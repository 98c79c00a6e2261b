"""
MNIST sanity check and mode-collapse diagnostic

A generator is trained to turn seeded Gaussian noise images into handwritten
digits (28x28 padded to 32x32, replicated to 3 channels) using only the
adversarial loss. Diversity is the mean pairwise L2 distance between images;
a generator collapses when its spread falls below `collapse_threshold` times
the spread of real digits.
"""
import gzip
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from geogan.errors import DatasetError, InvalidArgumentError
from geogan.losses import LossWeights
from geogan.models.config import ArchConfig, Variant
from geogan.models.layers import BNMode
from geogan.models.networks import generate
from geogan.training.data import ArrayPairs
from geogan.training.state import TrainConfig
from geogan.training.trainer import train

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
MNIST_IMAGE_FILES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
MNIST_SIZE = 32
DEFAULT_COLLAPSE_THRESHOLD = 0.1


def read_idx_images(path: Union[str, Path]) -> np.ndarray:
    """uint8 N x 28 x 28 array from an idx3 file, gzipped or not"""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DatasetError(f"cannot read MNIST images {path}: {exc}") from None
    if len(data) < 16:
        raise DatasetError(f"{path}: too short for an idx3 header")
    magic, count, rows, cols = np.frombuffer(data[:16], dtype=">u4")
    if magic != IDX_IMAGE_MAGIC:
        raise DatasetError(f"{path}: not an idx3 image file (magic {magic:#010x})")
    expected = int(count) * int(rows) * int(cols)
    if len(data) - 16 != expected:
        raise DatasetError(f"{path}: expected {expected} pixel bytes, found {len(data) - 16}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(int(count), int(rows), int(cols))


def find_mnist_images(data_dir: Union[str, Path]) -> Path:
    data_dir = Path(data_dir)
    for name in MNIST_IMAGE_FILES:
        for candidate in (data_dir / name, data_dir / f"{name}.gz"):
            if candidate.exists():
                return candidate
    raise DatasetError(f"no MNIST training images ({MNIST_IMAGE_FILES[0]}[.gz]) in {data_dir}")


def prepare_digits(images: np.ndarray, size: int = MNIST_SIZE) -> np.ndarray:
    """Pad to size x size, scale to [-1, 1] and replicate to 3 channels"""
    n, h, w = images.shape
    if h > size or w > size:
        raise InvalidArgumentError(f"cannot pad {h}x{w} digits to {size}x{size}")
    top, left = (size - h) // 2, (size - w) // 2
    padded = np.full((n, size, size), -1.0)
    padded[:, top:top + h, left:left + w] = images / 127.5 - 1.0
    return np.repeat(padded[..., None], 3, axis=-1)


def noise_images(count: int, size: int, seed: int) -> np.ndarray:
    """Seeded Gaussian conditioning images clipped to [-1, 1]"""
    rng = np.random.default_rng(seed)
    return np.clip(rng.standard_normal((count, size, size, 3)) * 0.5, -1.0, 1.0)


def pairwise_spread(images: Union[np.ndarray, torch.Tensor]) -> float:
    """Mean L2 distance over all unordered pairs of images"""
    x = torch.as_tensor(images).detach().double()
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 2:
        raise InvalidArgumentError("pairwise spread needs at least two images")
    return float(torch.pdist(x).mean())


@dataclass(frozen=True)
class DiversityReport:
    generated_spread: float
    real_spread: float
    threshold: float
    collapsed: bool


def detect_collapse(
    generated: Union[np.ndarray, torch.Tensor],
    real: Union[np.ndarray, torch.Tensor],
    threshold: float = DEFAULT_COLLAPSE_THRESHOLD
) -> DiversityReport:
    generated_spread = pairwise_spread(generated)
    real_spread = pairwise_spread(real)
    collapsed = generated_spread < threshold * real_spread
    return DiversityReport(generated_spread, real_spread, threshold, collapsed)


@dataclass(frozen=True)
class MnistConfig:
    """
    Sanity-run settings

    width_divisor shrinks every layer width so a run fits a CPU budget; the
    topology stays that of the chosen variant at 32x32.
    """
    data_dir: str = "data/mnist"
    variant: Variant = Variant.ENCODER_GAN
    limit: int = 2000
    epochs: int = 1
    batch_size: int = 64
    width_divisor: int = 8
    seed: int = 0
    out_dir: str = "runs/mnist"
    grid_size: int = 16
    diversity_samples: int = 64
    collapse_threshold: float = DEFAULT_COLLAPSE_THRESHOLD
    deterministic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.limit < 2 or self.diversity_samples < 2:
            raise InvalidArgumentError("limit and diversity_samples must be at least 2")
        if self.width_divisor < 1:
            raise InvalidArgumentError("width_divisor must be >= 1")
        if not 0.0 < self.collapse_threshold < 1.0:
            raise InvalidArgumentError("collapse_threshold must be in (0, 1)")

    def arch(self) -> ArchConfig:
        arch = ArchConfig(
            variant=self.variant,
            image_size=MNIST_SIZE,
            flow_bidirectional=False,
        )
        return arch.scaled(self.width_divisor) if self.width_divisor > 1 else arch


@dataclass
class MnistReport:
    steps: int
    final_d_loss: float
    final_g_loss: float
    all_finite: bool
    grid_path: Optional[str]
    diversity: DiversityReport

    def to_line(self) -> str:
        fields = {k: v for k, v in asdict(self).items() if k != "diversity"}
        fields.update(asdict(self.diversity))
        return " ".join(f"{k}={v}" for k, v in fields.items())


def mnist_sanity(config: MnistConfig) -> MnistReport:
    """
    Train briefly on MNIST, then measure sample diversity

    Raises:
        DatasetError: MNIST files missing or malformed (before any training)
    """
    digits = read_idx_images(find_mnist_images(config.data_dir))
    order = np.random.default_rng(config.seed).permutation(len(digits))[:config.limit]
    maps = prepare_digits(digits[np.sort(order)])
    sat = noise_images(len(maps), MNIST_SIZE, config.seed)
    dataset = ArrayPairs(sat, maps)
    logger.info("MNIST sanity: %d digits, %s", len(dataset), config.variant.name)

    train_config = TrainConfig(
        arch=config.arch(),
        weights=LossWeights(w_gan=1.0, w_rec=0.0, w_style=0.0),
        batch_size=config.batch_size,
        epochs=config.epochs,
        seed=config.seed,
        out_dir=config.out_dir,
        grid_size=config.grid_size,
        deterministic=config.deterministic,
    )
    result = train(train_config, dataset)
    reports = result.reports
    all_finite = all(
        math.isfinite(v) for r in reports for v in (r.d_loss, r.g_gan, r.g_total)
    )

    count = min(config.diversity_samples, len(maps))
    cond = torch.from_numpy(noise_images(count, MNIST_SIZE, config.seed + 1))
    noise = torch.Generator().manual_seed(config.seed + 1)
    with torch.no_grad():
        cond = cond.to(train_config.torch_dtype)
        fake = generate(result.state.params, cond, train_config.arch, BNMode.EVAL, noise).fake
    diversity = detect_collapse(fake, maps[:count], config.collapse_threshold)
    if diversity.collapsed:
        logger.warning(
            "Mode collapse: generated spread %.4f < %.0f%% of real spread %.4f",
            diversity.generated_spread, 100 * config.collapse_threshold, diversity.real_spread
        )

    report = MnistReport(
        steps=len(reports),
        final_d_loss=reports[-1].d_loss if reports else float("nan"),
        final_g_loss=reports[-1].g_total if reports else float("nan"),
        all_finite=all_finite,
        grid_path=str(result.grids[-1]) if result.grids else None,
        diversity=diversity,
    )
    logger.info("MNIST sanity: %s", report.to_line())
    return report
