"""
Training data: manifest-backed and in-memory paired image sources

Batch order is a pure function of (seed, epoch): a Fisher-Yates shuffle drawn
from numpy's generator seeded with both values. A single background thread
may decode the next batch while the current one trains.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image

from geogan.errors import DatasetError, GeoGanError
from geogan.tilegrid.manifest import Manifest, read_manifest, resolve_sample_path

logger = logging.getLogger(__name__)


def fisher_yates(n: int, rng: np.random.Generator) -> List[int]:
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def epoch_order(n: int, seed: int, epoch: int) -> List[int]:
    return fisher_yates(n, np.random.default_rng([int(seed), int(epoch)]))


def load_image(path: Union[str, Path], size: int) -> np.ndarray:
    """8-bit RGB raster resampled to size x size, scaled to [-1, 1]"""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            if rgb.size != (size, size):
                rgb = rgb.resize((size, size), Image.Resampling.BILINEAR)
            pixels = np.asarray(rgb, dtype=np.float64)
    except OSError as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from None
    return pixels / 127.5 - 1.0


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Affine map from [-1, 1] back to 8-bit"""
    return np.clip(np.rint((images + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass
class Batch:
    indices: List[int]
    sat: torch.Tensor
    map: torch.Tensor

    def __len__(self) -> int:
        return len(self.indices)


class PairSource:
    """Indexable collection of (satellite, map) image pairs"""

    image_size: int
    dtype: torch.dtype = torch.float32

    def __len__(self) -> int:
        raise NotImplementedError

    def load_pair(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def batch(self, indices: Sequence[int]) -> Batch:
        pairs = [self.load_pair(i) for i in indices]
        sat = torch.from_numpy(np.stack([p[0] for p in pairs])).to(self.dtype)
        maps = torch.from_numpy(np.stack([p[1] for p in pairs])).to(self.dtype)
        return Batch(list(indices), sat, maps)

    def batches(
        self,
        seed: int,
        epoch: int,
        batch_size: int,
        start_batch: int = 0,
        prefetch: bool = True
    ) -> Iterator[Batch]:
        """
        Batches of one epoch in shuffled order, the last one possibly short

        Args:
            start_batch: Skip this many leading batches (resume mid-epoch)
            prefetch: Decode the next batch on a worker thread
        """
        order = epoch_order(len(self), seed, epoch)
        chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)][start_batch:]
        if not prefetch or len(chunks) < 2:
            for chunk in chunks:
                yield self.batch(chunk)
            return

        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(self.batch, chunks[0])
            for nxt in chunks[1:]:
                current = pending.result()
                pending = pool.submit(self.batch, nxt)
                yield current
            yield pending.result()

    def steps_per_epoch(self, batch_size: int) -> int:
        return -(-len(self) // batch_size)


class PairedDataset(PairSource):
    """Pairs listed in a manifest, decoded lazily and cached"""

    def __init__(
        self,
        manifest_path: Union[str, Path],
        image_size: int,
        dtype: torch.dtype = torch.float32,
        cache: bool = True
    ):
        self.manifest_path = Path(manifest_path)
        try:
            self.manifest: Manifest = read_manifest(self.manifest_path)
        except (GeoGanError, OSError) as exc:
            raise DatasetError(f"cannot open dataset {manifest_path}: {exc}") from None
        self.image_size = image_size
        self.dtype = dtype
        self._cache: Optional[Dict[int, Tuple[np.ndarray, np.ndarray]]] = {} if cache else None

        missing = [
            p for s in self.manifest.entries for p in (s.sat_path, s.map_path)
            if not resolve_sample_path(self.manifest_path, p).exists()
        ]
        if missing:
            raise DatasetError(f"{len(missing)} image(s) listed in {manifest_path} are missing, e.g. {missing[0]}")
        logger.info("Dataset %s: %d pairs at %dpx", self.manifest_path, len(self), image_size)

    def __len__(self) -> int:
        return len(self.manifest.entries)

    def load_pair(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        if self._cache is not None and index in self._cache:
            return self._cache[index]
        sample = self.manifest.entries[index]
        pair = (
            load_image(resolve_sample_path(self.manifest_path, sample.sat_path), self.image_size),
            load_image(resolve_sample_path(self.manifest_path, sample.map_path), self.image_size),
        )
        if self._cache is not None:
            self._cache[index] = pair
        return pair


class ArrayPairs(PairSource):
    """In-memory pairs, N x S x S x C arrays in [-1, 1]"""

    def __init__(self, sat: np.ndarray, maps: np.ndarray, dtype: torch.dtype = torch.float32):
        if sat.shape != maps.shape or sat.ndim != 4:
            raise DatasetError(f"paired arrays must share an NxSxSxC shape, got {sat.shape} and {maps.shape}")
        self.sat = np.asarray(sat, dtype=np.float64)
        self.maps = np.asarray(maps, dtype=np.float64)
        self.image_size = sat.shape[1]
        self.dtype = dtype

    @classmethod
    def from_uint8(cls, sat: np.ndarray, maps: np.ndarray, dtype: torch.dtype = torch.float32) -> "ArrayPairs":
        return cls(sat / 127.5 - 1.0, maps / 127.5 - 1.0, dtype)

    def __len__(self) -> int:
        return self.sat.shape[0]

    def load_pair(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.sat[index], self.maps[index]
