"""
Training configuration and mutable training state
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import torch

from geogan.errors import InvalidArgumentError
from geogan.losses import LossWeights
from geogan.models.config import ArchConfig, phase_prefixes
from geogan.models.params import ParamSet, init_params

logger = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything a training run depends on

    batch_size 0 picks 4 for 256 px images and 16 otherwise;
    checkpoint_interval 0 only writes the final checkpoint; max_steps 0 runs
    every epoch to completion.
    """
    arch: ArchConfig = field(default_factory=ArchConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 0
    epochs: int = 1
    max_steps: int = 0
    g_steps_per_d_step: int = 1
    seed: int = 0
    checkpoint_interval: int = 0
    manifest: str = ""
    out_dir: str = "runs/geogan"
    deterministic: bool = False
    dtype: str = "float32"
    grid_size: int = 9
    prefetch: bool = True
    pretrained_encoder: str = ""
    freeze_encoder: bool = False
    resume: str = ""

    def __post_init__(self):
        if not self.batch_size:
            object.__setattr__(self, "batch_size", 4 if self.arch.image_size >= 256 else 16)
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size <= 0:
            raise InvalidArgumentError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs <= 0 or self.max_steps < 0:
            raise InvalidArgumentError("epochs must be positive and max_steps non-negative")
        if self.g_steps_per_d_step < 1:
            raise InvalidArgumentError("g_steps_per_d_step must be >= 1")
        if self.checkpoint_interval < 0:
            raise InvalidArgumentError("checkpoint_interval must be >= 0")
        if self.dtype not in DTYPES:
            raise InvalidArgumentError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise InvalidArgumentError("Adam betas must be in [0, 1)")

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("arch"), dict):
            d["arch"] = ArchConfig.from_dict(d["arch"])
        if isinstance(d.get("weights"), dict):
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


@dataclass
class TrainState:
    """Parameters, optimizer moments and the step counter of a run"""
    params: ParamSet
    g_opt: torch.optim.Adam
    d_opt: torch.optim.Adam
    g_names: List[str]
    d_names: List[str]
    step: int = 0

    def g_params(self) -> List[torch.Tensor]:
        return [self.params[n] for n in self.g_names]

    def d_params(self) -> List[torch.Tensor]:
        return [self.params[n] for n in self.d_names]


def phase_names(params: ParamSet, config: TrainConfig) -> Tuple[List[str], List[str]]:
    """Trainable parameter paths updated by the generator and discriminator phases"""
    g_prefixes, d_prefixes = phase_prefixes(config.arch)
    if config.freeze_encoder:
        g_prefixes = tuple(p for p in g_prefixes if p != "encoder/")
    g_names = list(params.group(g_prefixes).keys())
    d_names = list(params.group(d_prefixes).keys())
    overlap = set(g_names) & set(d_names)
    if overlap:
        raise InvalidArgumentError(f"parameters owned by both phases: {sorted(overlap)[:3]}")
    return g_names, d_names


def new_state(config: TrainConfig, params: Optional[ParamSet] = None) -> TrainState:
    """Fresh Adam optimizers over a ParamSet (initialized from config.seed if omitted)"""
    if params is None:
        params = init_params(config.arch, config.seed, config.torch_dtype)
    g_names, d_names = phase_names(params, config)
    betas = (config.beta1, config.beta2)
    g_opt = torch.optim.Adam([params[n] for n in g_names], lr=config.learning_rate, betas=betas)
    d_opt = torch.optim.Adam([params[n] for n in d_names], lr=config.learning_rate, betas=betas)
    return TrainState(params=params, g_opt=g_opt, d_opt=d_opt, g_names=g_names, d_names=d_names)


def set_determinism(enabled: bool, seed: int) -> None:
    """Seed torch and, when enabled, force single-threaded deterministic kernels"""
    torch.manual_seed(int(seed))
    if enabled:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
        logger.info("Deterministic mode: 1 thread, deterministic algorithms, seed %d", seed)
