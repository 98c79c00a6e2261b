"""
Similarity metrics between generated and ground-truth maps

Per pair: L1 is the absolute-difference sum, L2 the Frobenius norm of the
difference, style the Gram-matrix distance of the training style loss. The
report averages each over all pairs; combined = mean_l2 + w_style * mean_style.
"""
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Mapping, Optional, Union

import torch

from geogan.errors import InvalidArgumentError
from geogan.losses import LossWeights, RecNorm, reconstruction, style_loss
from geogan.models.config import ArchConfig
from geogan.models.layers import BNMode
from geogan.models.networks import generate
from geogan.training.data import PairedDataset, PairSource

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    mean_l1: float
    mean_l2: float
    mean_style: float
    combined: float
    sample_count: int

    def to_line(self) -> str:
        """Single-line key=value record"""
        return " ".join(
            f"{k}={v}" if isinstance(v, int) else f"{k}={v:.12g}"
            for k, v in asdict(self).items()
        )

    @classmethod
    def from_line(cls, line: str) -> "MetricsReport":
        fields = dict(token.split("=", 1) for token in line.split())
        return cls(
            mean_l1=float(fields["mean_l1"]),
            mean_l2=float(fields["mean_l2"]),
            mean_style=float(fields["mean_style"]),
            combined=float(fields["combined"]),
            sample_count=int(fields["sample_count"]),
        )


def pair_metrics(m_fake: torch.Tensor, m_real: torch.Tensor) -> List[tuple]:
    """(l1, l2, style) of every image pair in a batch"""
    rows = []
    for i in range(m_fake.shape[0]):
        fake, real = m_fake[i:i + 1], m_real[i:i + 1]
        rows.append((
            float(reconstruction(fake, real, RecNorm.L1)),
            float(reconstruction(fake, real, RecNorm.L2)),
            float(style_loss(fake, real)),
        ))
    return rows


def evaluate(
    params: Optional[Mapping[str, torch.Tensor]],
    arch: ArchConfig,
    samples: Union[str, Path, PairSource],
    weights: Optional[LossWeights] = None,
    batch_size: int = 16,
    seed: int = 0,
    identity_oracle: bool = False
) -> MetricsReport:
    """
    Run the generator over every pair and aggregate the similarity metrics

    Args:
        params: Trained parameters (ignored with identity_oracle)
        samples: A manifest path or an already opened pair source
        weights: Supplies w_style for the combined metric (default weights if omitted)
        seed: Seeds the noise of ENCODER_GAN generators
        identity_oracle: Score the ground-truth maps against themselves

    Raises:
        InvalidArgumentError: no pairs to evaluate
    """
    weights = weights or LossWeights()
    if not isinstance(samples, PairSource):
        dtype = next(iter(params.values())).dtype if params else torch.float32
        samples = PairedDataset(samples, arch.image_size, dtype=dtype)
    if len(samples) == 0:
        raise InvalidArgumentError("nothing to evaluate: the dataset is empty")
    if params is None and not identity_oracle:
        raise InvalidArgumentError("evaluate needs parameters unless the identity oracle is used")

    noise = torch.Generator().manual_seed(int(seed))
    rows = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples.batch(range(start, min(start + batch_size, len(samples))))
            if identity_oracle:
                fake = batch.map
            else:
                sat = batch.sat.to(next(iter(params.values())).dtype)
                fake = generate(params, sat, arch, BNMode.EVAL, noise).fake
            rows.extend(pair_metrics(fake.double(), batch.map.double()))

    # fsum is exactly rounded, so the means do not depend on pair order
    n = len(rows)
    mean_l1 = math.fsum(r[0] for r in rows) / n
    mean_l2 = math.fsum(r[1] for r in rows) / n
    mean_style = math.fsum(r[2] for r in rows) / n
    report = MetricsReport(
        mean_l1=mean_l1,
        mean_l2=mean_l2,
        mean_style=mean_style,
        combined=mean_l2 + weights.w_style * mean_style,
        sample_count=n,
    )
    logger.info("Evaluated %d pairs: %s", n, report.to_line())
    return report
