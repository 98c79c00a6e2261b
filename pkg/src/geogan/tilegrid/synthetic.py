"""
Procedural satellite/map tile pairs

Each tile gets a land-cover raster (vegetation, built-up blocks, water, roads).
The map rendering paints flat map-style colours; the satellite rendering paints
darker natural colours with texture, a seasonal vegetation tint and optional
cloud cover. Pairs are a deterministic function of the tile id, so fixture
trees and desk-scale training sets can be regenerated bit-identically.
"""
import hashlib
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from geogan.tilegrid.mercator import tile_id_for

VEGETATION, BUILT, WATER, ROAD = 0, 1, 2, 3

MAP_PALETTE = np.array([
    [203, 230, 196],   # park / vegetation
    [236, 234, 230],   # built-up
    [170, 218, 255],   # water
    [255, 255, 255],   # road
], dtype=np.float64)

SAT_PALETTE = np.array([
    [58, 86, 47],
    [132, 124, 116],
    [31, 54, 74],
    [96, 96, 98],
], dtype=np.float64)

# multiplicative vegetation tint per season (MAR, JUN, SEP, DEC)
SEASON_TINT = {
    "MAR": np.array([1.00, 1.05, 0.95]),
    "JUN": np.array([0.90, 1.15, 0.90]),
    "SEP": np.array([1.10, 1.00, 0.85]),
    "DEC": np.array([1.25, 1.05, 1.00]),
}


def tile_seed(tile_id: str, salt: str = "") -> int:
    """Stable 32-bit seed derived from a tile id"""
    digest = hashlib.sha256(f"{tile_id}|{salt}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def land_cover(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random land-cover class raster of shape (size, size)"""
    classes = np.full((size, size), VEGETATION, dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]

    for _ in range(int(rng.integers(2, 6))):
        h, w = rng.integers(max(1, size // 8), max(2, size // 3), size=2)
        y0 = int(rng.integers(0, size - h + 1))
        x0 = int(rng.integers(0, size - w + 1))
        classes[y0:y0 + h, x0:x0 + w] = BUILT

    if rng.random() < 0.7:
        cy, cx = rng.uniform(0, size, size=2)
        ry, rx = rng.uniform(size / 8, size / 3, size=2)
        classes[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = WATER

    width = max(1, size // 32)
    for _ in range(int(rng.integers(1, 4))):
        offset = int(rng.integers(0, size - width + 1))
        if rng.random() < 0.5:
            classes[offset:offset + width, :] = ROAD
        else:
            classes[:, offset:offset + width] = ROAD
    return classes


def render_map(classes: np.ndarray) -> np.ndarray:
    """Flat map colours, uint8 HxWx3"""
    return MAP_PALETTE[classes].astype(np.uint8)


def cloud_mask(rng: np.random.Generator, size: int, fraction: float) -> np.ndarray:
    """Boolean mask covering roughly `fraction` of the tile with smooth blobs"""
    if fraction <= 0.0:
        return np.zeros((size, size), dtype=bool)
    coarse = max(2, size // 16)
    field = rng.random((coarse, coarse)).astype(np.float32)
    smooth = np.asarray(
        Image.fromarray(field).resize((size, size), Image.Resampling.BILINEAR),
        dtype=np.float64
    )
    threshold = np.quantile(smooth, 1.0 - fraction)
    return smooth > threshold


def render_satellite(
    classes: np.ndarray,
    rng: np.random.Generator,
    season: str = "JUN",
    cloud_fraction: float = 0.0
) -> np.ndarray:
    """Natural colours with texture, seasonal tint and clouds, uint8 HxWx3"""
    size = classes.shape[0]
    rgb = SAT_PALETTE[classes].copy()
    veg = classes == VEGETATION
    rgb[veg] *= SEASON_TINT.get(season, SEASON_TINT["JUN"])
    rgb += rng.normal(0.0, 10.0, size=rgb.shape)

    clouds = cloud_mask(rng, size, cloud_fraction)
    rgb[clouds] = 0.25 * rgb[clouds] + 0.75 * 245.0
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def synthesize_pair(
    tile_id: str,
    size: int,
    season: str = "JUN",
    cloud_fraction: float = 0.0,
    scene_salt: Optional[str] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Satellite and map rasters for one tile

    The land cover depends only on tile_id, so every season and scene of a
    tile shares the same map.
    """
    classes = land_cover(np.random.default_rng(tile_seed(tile_id)), size)
    scene_rng = np.random.default_rng(tile_seed(tile_id, scene_salt or season))
    sat = render_satellite(classes, scene_rng, season, cloud_fraction)
    return sat, render_map(classes)


def synthetic_stack(count: int, size: int, zoom: int = 14) -> Tuple[np.ndarray, np.ndarray]:
    """
    In-memory fixture of `count` cloud-free pairs on a square-ish tile grid

    Returns:
        (satellite, map) uint8 arrays of shape count x size x size x 3
    """
    side = max(1, int(np.ceil(np.sqrt(count))))
    pairs = [
        synthesize_pair(tile_id_for(k // side, k % side, zoom), size)
        for k in range(count)
    ]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
