"""
Training objectives

* d_objective: E[log D(real)] + E[log(1 - D(fake))], maximized by the discriminator
* g_nonsaturating: -E[log D(fake)]
* reconstruction: per-image L2 (Frobenius) norm or L1 sum of the map difference
* style_loss: squared Gram matrix difference over 4 N^2 M^2, on raw pixels

Every function takes NHWC tensors and returns a 0-dim tensor; batches are
reduced with the mean.
"""
import csv
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import torch

from geogan.errors import InvalidArgumentError, ShapeError

logger = logging.getLogger(__name__)

EPSILON = 1e-7
LOSS_FIELDS = ["step", "d_loss", "g_gan", "g_rec", "g_style", "g_total"]


class RecNorm(str, Enum):
    L1 = "l1"
    L2 = "l2"

    @classmethod
    def parse(cls, text) -> "RecNorm":
        if isinstance(text, RecNorm):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise InvalidArgumentError(f"unknown reconstruction norm {text!r}; expected l1 or l2") from None


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the generator objective"""
    w_gan: float = 1.0
    w_rec: float = 1.0
    w_style: float = 1.0
    rec_norm: RecNorm = RecNorm.L2

    def __post_init__(self):
        object.__setattr__(self, "rec_norm", RecNorm.parse(self.rec_norm))
        for name in ("w_gan", "w_rec", "w_style"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not (self.w_gan > 0 or self.w_rec > 0 or self.w_style > 0):
            raise InvalidArgumentError("at least one loss weight must be positive")

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["rec_norm"] = self.rec_norm.value
        return d


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(EPSILON, 1.0 - EPSILON)


def _check_batch(p: torch.Tensor, name: str) -> None:
    if p.numel() == 0:
        raise InvalidArgumentError(f"{name}: empty batch")


def _check_pair(m_fake: torch.Tensor, m_real: torch.Tensor, name: str) -> None:
    if m_fake.shape != m_real.shape:
        raise ShapeError(name, f"matching shapes {tuple(m_real.shape)}", tuple(m_fake.shape))
    if m_fake.dim() != 4:
        raise ShapeError(name, "NxHxWxC images", tuple(m_fake.shape))
    if m_fake.shape[0] == 0:
        raise InvalidArgumentError(f"{name}: empty batch")


def d_objective(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Discriminator objective to maximize; the trainer minimizes its negation"""
    _check_batch(d_real, "d_objective")
    _check_batch(d_fake, "d_objective")
    return torch.log(_clamp(d_real)).mean() + torch.log(1.0 - _clamp(d_fake)).mean()


def g_nonsaturating(d_fake: torch.Tensor) -> torch.Tensor:
    _check_batch(d_fake, "g_nonsaturating")
    return -torch.log(_clamp(d_fake)).mean()


def reconstruction(
    m_fake: torch.Tensor,
    m_real: torch.Tensor,
    norm: Union[RecNorm, str] = RecNorm.L2
) -> torch.Tensor:
    """Batch mean of the per-image L2 norm or L1 sum of m_fake - m_real"""
    _check_pair(m_fake, m_real, "reconstruction")
    diff = (m_fake - m_real).reshape(m_fake.shape[0], -1)
    if RecNorm.parse(norm) == RecNorm.L2:
        per_image = torch.linalg.vector_norm(diff, ord=2, dim=1)
    else:
        per_image = diff.abs().sum(dim=1)
    return per_image.mean()


def gram(features: torch.Tensor) -> torch.Tensor:
    """
    Gram matrix of one H x W x C image

    The image is viewed as C x M with M = H * W; G = F F^T is C x C.
    """
    if features.dim() != 3:
        raise ShapeError("gram", "HxWxC image", tuple(features.shape))
    f = features.reshape(-1, features.shape[-1]).T
    return f @ f.T


def gram_batch(images: torch.Tensor) -> torch.Tensor:
    """Per-image Gram matrices of an N x H x W x C batch, shape N x C x C"""
    f = images.reshape(images.shape[0], -1, images.shape[-1])
    return torch.einsum("nmi,nmj->nij", f, f)


def style_loss(m_fake: torch.Tensor, m_real: torch.Tensor) -> torch.Tensor:
    """Batch mean of sum_ij (G_ij - A_ij)^2 / (4 N^2 M^2)"""
    _check_pair(m_fake, m_real, "style_loss")
    _, h, w, c = m_fake.shape
    m = h * w
    diff = gram_batch(m_fake) - gram_batch(m_real)
    per_image = diff.pow(2).sum(dim=(1, 2)) / (4.0 * c * c * m * m)
    return per_image.mean()


@dataclass
class LossReport:
    """Component losses of one training step"""
    step: int = 0
    d_loss: float = 0.0
    g_gan: float = 0.0
    g_rec: float = 0.0
    g_style: float = 0.0
    g_total: float = 0.0

    def to_row(self) -> Dict:
        return {k: getattr(self, k) for k in LOSS_FIELDS}

    def to_line(self) -> str:
        """Single-line key=value record for logs"""
        return " ".join(
            f"{k}={v}" if isinstance(v, int) else f"{k}={v:.6g}"
            for k, v in self.to_row().items()
        )


def total_g_loss(
    d_fake: Union[torch.Tensor, Sequence[torch.Tensor]],
    m_fake: torch.Tensor,
    m_real: torch.Tensor,
    weights: LossWeights
) -> Tuple[torch.Tensor, LossReport]:
    """
    Weighted generator objective

    Args:
        d_fake: Discriminator probabilities of the generated maps; a sequence
            sums one non-saturating term per discriminator
        m_fake, m_real: Generated and ground-truth maps
        weights: Component coefficients; a zero-weight component is neither
            computed nor reported (its value is exactly 0)

    Returns:
        (differentiable total, report of the component values)
    """
    zero = m_fake.new_zeros(())
    terms = d_fake if isinstance(d_fake, (list, tuple)) else [d_fake]

    g_gan = sum((g_nonsaturating(d) for d in terms), zero) if weights.w_gan > 0 else zero
    g_rec = reconstruction(m_fake, m_real, weights.rec_norm) if weights.w_rec > 0 else zero
    g_style = style_loss(m_fake, m_real) if weights.w_style > 0 else zero

    total = zero
    if weights.w_gan > 0:
        total = total + weights.w_gan * g_gan
    if weights.w_rec > 0:
        total = total + weights.w_rec * g_rec
    if weights.w_style > 0:
        total = total + weights.w_style * g_style

    report = LossReport(
        g_gan=float(g_gan.detach()),
        g_rec=float(g_rec.detach()),
        g_style=float(g_style.detach()),
        g_total=float(total.detach()),
    )
    return total, report


class LossCurveWriter:
    """Appends one CSV row per step: step,d_loss,g_gan,g_rec,g_style,g_total"""

    def __init__(self, path: Union[str, Path], append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        exists = append and self.path.exists() and self.path.stat().st_size > 0
        self._file = open(self.path, "a" if exists else "w", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=LOSS_FIELDS)
        if not exists:
            self._writer.writeheader()

    def write(self, report: LossReport) -> None:
        self._writer.writerow(report.to_row())
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "LossCurveWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_loss_curve(path: Union[str, Path]) -> list:
    """Rows of a loss-curve file as LossReport objects"""
    with open(path, newline="") as f:
        return [
            LossReport(
                step=int(row["step"]),
                **{k: float(row[k]) for k in LOSS_FIELDS[1:]}
            )
            for row in csv.DictReader(f)
        ]


def log_weights(weights: LossWeights, extra: Optional[Dict] = None) -> None:
    logger.info(
        "Loss weights: gan=%g rec=%g (%s) style=%g%s",
        weights.w_gan, weights.w_rec, weights.rec_norm.value, weights.w_style,
        "" if not extra else " " + " ".join(f"{k}={v}" for k, v in extra.items())
    )
