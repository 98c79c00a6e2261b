"""Tile geometry, scene selection, imagery providers and the pairing manifest"""

from .mercator import GeoBox, TileSpec, generate_grid, ground_resolution, tile_id_for
from .scenes import DateWindow, SceneCandidate, Season, parse_seasons, season_window, select_scene
from .manifest import (
    Manifest,
    MapEntry,
    PairedSample,
    PairingReport,
    SatelliteEntry,
    carry_created,
    pair_tiles,
    read_manifest,
    write_manifest,
)
from .providers import FixtureProvider, FetchReport, TileProvider, fetch_tiles, make_synthetic_fixtures
from .synthetic import synthesize_pair, synthetic_stack

__all__ = [
    'GeoBox', 'TileSpec', 'generate_grid', 'ground_resolution', 'tile_id_for',
    'DateWindow', 'SceneCandidate', 'Season', 'parse_seasons', 'season_window', 'select_scene',
    'Manifest', 'MapEntry', 'PairedSample', 'PairingReport', 'SatelliteEntry',
    'carry_created', 'pair_tiles', 'read_manifest', 'write_manifest',
    'FixtureProvider', 'FetchReport', 'TileProvider', 'fetch_tiles', 'make_synthetic_fixtures',
    'synthesize_pair', 'synthetic_stack',
]
