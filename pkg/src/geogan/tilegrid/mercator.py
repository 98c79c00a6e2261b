"""
Web Mercator tile geometry

Ground resolution follows the slippy-map convention: the whole world fits in a
single 256 px tile at zoom 0 and every zoom step halves the meters per pixel.
City grids are laid out from the north-west corner to the south-east corner,
row-major, with a fixed tile extent computed at the box's center latitude.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

from geogan.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6378137.0
# 2*pi*R / 256, meters per pixel at the equator for zoom 0
INITIAL_RESOLUTION = 2 * math.pi * EARTH_RADIUS_M / 256
MAX_LATITUDE = 85.0511287798
MAX_ZOOM = 22
DEFAULT_TILE_PX = 512
# meters spanned by one degree of latitude on the projection sphere
METERS_PER_DEGREE = 2 * math.pi * EARTH_RADIUS_M / 360.0

_COUNT_TOLERANCE = 1e-9


def _check_latitude(lat: float, name: str = "latitude") -> None:
    if not math.isfinite(lat) or abs(lat) > MAX_LATITUDE:
        raise InvalidArgumentError(
            f"{name} {lat} outside Web Mercator bounds ±{MAX_LATITUDE}"
        )


def _check_longitude(lon: float, name: str = "longitude") -> None:
    if not math.isfinite(lon) or abs(lon) > 180.0:
        raise InvalidArgumentError(f"{name} {lon} outside [-180, 180]")


def _check_zoom(zoom: int) -> None:
    if isinstance(zoom, bool) or int(zoom) != zoom or zoom < 0 or zoom > MAX_ZOOM:
        raise InvalidArgumentError(f"zoom {zoom} outside [0, {MAX_ZOOM}]")


def ground_resolution(lat: float, zoom: int) -> float:
    """
    Meters of terrain per pixel at a latitude and zoom level

    Args:
        lat: Latitude in degrees, within the Web Mercator bounds
        zoom: Non-negative zoom level

    Returns:
        156543.03392 * cos(lat) / 2**zoom

    Raises:
        InvalidArgumentError: latitude out of bounds or invalid zoom
    """
    _check_latitude(lat)
    _check_zoom(zoom)
    return INITIAL_RESOLUTION * math.cos(math.radians(lat)) / (2 ** int(zoom))


def tile_id_for(row: int, col: int, zoom: int) -> str:
    """Deterministic, lexicographically sortable tile identifier"""
    return f"{row:05d}_{col:05d}_z{zoom}"


@dataclass(frozen=True)
class GeoBox:
    """Latitude/longitude bounding box of a city"""
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        _check_latitude(self.lat_min, "lat_min")
        _check_latitude(self.lat_max, "lat_max")
        _check_longitude(self.lon_min, "lon_min")
        _check_longitude(self.lon_max, "lon_max")
        if self.lat_min >= self.lat_max:
            raise InvalidArgumentError(
                f"degenerate box: lat_min {self.lat_min} >= lat_max {self.lat_max}"
            )
        if self.lon_min >= self.lon_max:
            raise InvalidArgumentError(
                f"degenerate box: lon_min {self.lon_min} >= lon_max {self.lon_max}"
            )

    @property
    def center_lat(self) -> float:
        return (self.lat_min + self.lat_max) / 2.0

    @property
    def center_lon(self) -> float:
        return (self.lon_min + self.lon_max) / 2.0


@dataclass(frozen=True)
class TileSpec:
    """One tile to fetch: its center, zoom, pixel size and grid position"""
    center_lat: float
    center_lon: float
    zoom: int = 14
    size_px: int = DEFAULT_TILE_PX
    row: int = 0
    col: int = 0

    def __post_init__(self):
        _check_latitude(self.center_lat, "center_lat")
        _check_longitude(self.center_lon, "center_lon")
        _check_zoom(self.zoom)
        if self.size_px <= 0:
            raise InvalidArgumentError(f"size_px must be positive, got {self.size_px}")
        if self.row < 0 or self.col < 0:
            raise InvalidArgumentError("grid row/col must be non-negative")

    @property
    def tile_id(self) -> str:
        return tile_id_for(self.row, self.col, self.zoom)


@dataclass(frozen=True)
class GridStep:
    """Tile extent used to step across a box"""
    extent_m: float
    lat_deg: float
    lon_deg: float


def grid_step(box: GeoBox, zoom: int, size_px: int) -> GridStep:
    """Tile extent in meters and degrees, evaluated at the box center latitude"""
    if size_px <= 0:
        raise InvalidArgumentError(f"size_px must be positive, got {size_px}")
    extent_m = size_px * ground_resolution(box.center_lat, zoom)
    lat_deg = extent_m / METERS_PER_DEGREE
    lon_deg = extent_m / (METERS_PER_DEGREE * math.cos(math.radians(box.center_lat)))
    return GridStep(extent_m=extent_m, lat_deg=lat_deg, lon_deg=lon_deg)


def axis_count(span: float, step: float) -> int:
    """Number of tiles of width `step` needed to cover `span`"""
    return max(1, math.ceil(span / step - _COUNT_TOLERANCE))


def generate_grid(
    box: GeoBox,
    zoom: int = 14,
    size_px: int = DEFAULT_TILE_PX,
    step: Optional[GridStep] = None
) -> List[TileSpec]:
    """
    Cover a box with tiles, row-major from the north-west corner

    Args:
        box: City bounding box
        zoom: Zoom level of every tile
        size_px: Tile side in pixels
        step: Override for the tile extent (defaults to grid_step(box, ...))

    Returns:
        Ordered list of TileSpec; row 0 is the northern-most row
    """
    if not isinstance(box, GeoBox):
        raise InvalidArgumentError("generate_grid expects a GeoBox")
    if step is None:
        step = grid_step(box, zoom, size_px)

    n_rows = axis_count(box.lat_max - box.lat_min, step.lat_deg)
    n_cols = axis_count(box.lon_max - box.lon_min, step.lon_deg)

    tiles: List[TileSpec] = []
    for row in range(n_rows):
        lat = box.lat_max - (row + 0.5) * step.lat_deg
        for col in range(n_cols):
            lon = box.lon_min + (col + 0.5) * step.lon_deg
            tiles.append(TileSpec(
                center_lat=lat,
                center_lon=lon,
                zoom=zoom,
                size_px=size_px,
                row=row,
                col=col
            ))

    logger.info(
        "Grid for box %s at zoom %d: %d rows x %d cols (%.1f m tiles)",
        box, zoom, n_rows, n_cols, step.extent_m
    )
    return tiles
