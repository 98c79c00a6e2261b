"""
Sample grids: generated maps tiled into one raster with white gutters
"""
import logging
import math
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image

from geogan.errors import InvalidArgumentError
from geogan.models.config import ArchConfig
from geogan.models.layers import BNMode
from geogan.models.networks import generate
from geogan.training.data import PairSource, to_uint8

logger = logging.getLogger(__name__)

GUTTER_PX = 2


def largest_square(n: int) -> int:
    """Largest perfect square <= n (0 for n < 1)"""
    return math.isqrt(max(0, n)) ** 2


def grid_side(n: int) -> int:
    side = math.isqrt(n) if n > 0 else 0
    if side * side != n or n <= 0:
        raise InvalidArgumentError(f"grid size must be a positive perfect square, got {n}")
    return side


def tile_images(images: np.ndarray, gutter: int = GUTTER_PX) -> np.ndarray:
    """
    Arrange N = k*k uint8 HxWxC images into a k x k grid

    Gutters between tiles are white; the outer border has none.
    """
    side = grid_side(len(images))
    _, h, w, c = images.shape
    canvas = np.full(
        (side * h + (side - 1) * gutter, side * w + (side - 1) * gutter, c), 255, dtype=np.uint8
    )
    for k, img in enumerate(images):
        r, col = divmod(k, side)
        y, x = r * (h + gutter), col * (w + gutter)
        canvas[y:y + h, x:x + w] = img
    return canvas


def write_png(array: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="PNG")
    return path


def select_indices(count: int, n: int, seed: int) -> Sequence[int]:
    """Seeded choice of n distinct pair indices, kept in ascending order"""
    if count < n:
        raise InvalidArgumentError(f"need at least {n} samples for the grid, have {count}")
    return sorted(int(i) for i in np.random.default_rng(seed).choice(count, size=n, replace=False))


def sample_grid(
    params: Mapping[str, torch.Tensor],
    arch: ArchConfig,
    samples: PairSource,
    n: int = 9,
    seed: int = 0,
    out_path: Optional[Union[str, Path]] = None
) -> np.ndarray:
    """
    Render generated maps of n seeded-randomly chosen pairs

    Generation runs in inference mode with noise drawn from a generator
    seeded by `seed`, so the grid is a pure function of its arguments.

    Returns:
        The uint8 grid raster (also written as PNG when out_path is given)
    """
    grid_side(n)
    indices = select_indices(len(samples), n, seed)
    batch = samples.batch(indices)
    noise = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        fake = generate(params, batch.sat.to(_param_dtype(params)), arch, BNMode.EVAL, noise).fake
    grid = tile_images(to_uint8(fake.detach().cpu().double().numpy()))
    if out_path is not None:
        write_png(grid, out_path)
        logger.info("Wrote %dx%d sample grid to %s", math.isqrt(n), math.isqrt(n), out_path)
    return grid


def _param_dtype(params: Mapping[str, torch.Tensor]) -> torch.dtype:
    return next(iter(params.values())).dtype
