"""
Imagery providers and the tile fetching pipeline

A provider serves either satellite scenes or map tiles for a TileSpec. The
file-backed FixtureProvider reads everything from a directory keyed by tile_id
so the whole dataset pipeline runs offline.

Fixture layout::

    <root>/satellite/<tile_id>/scenes.json      [{"scene_id", "date", "cloud_fraction"}]
    <root>/satellite/<tile_id>/<scene_id>.png
    <root>/map/<tile_id>.png
"""
import io
import json
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from geogan.errors import GeoGanError, InvalidArgumentError, ProviderError
from geogan.tilegrid.manifest import MapEntry, SatelliteEntry
from geogan.tilegrid.mercator import TileSpec
from geogan.tilegrid.scenes import (
    CLOUD_THRESHOLD,
    DEFAULT_MAX_EXTENSIONS,
    EXTENSION_DAYS,
    DateWindow,
    SceneCandidate,
    Season,
    season_window,
    select_scene,
)
from geogan.tilegrid.synthetic import synthesize_pair, tile_seed

logger = logging.getLogger(__name__)

SATELLITE = "satellite"
MAP = "map"


class TileProvider(ABC):
    """
    Base interface for imagery sources

    Satellite providers list dated scene candidates and serve a chosen scene;
    map providers have a single image per tile and ignore scene ids.
    """

    kind: str = SATELLITE

    @abstractmethod
    def list_candidates(self, spec: TileSpec, window: DateWindow) -> List[SceneCandidate]:
        """
        Scene candidates for a tile acquired within a window

        Returns:
            Candidates in any order (empty for map providers)
        """
        pass

    @abstractmethod
    def fetch(self, spec: TileSpec, scene_id: Optional[str]) -> bytes:
        """
        Encoded image bytes for a tile

        Raises:
            ProviderError: the tile or scene is unavailable
        """
        pass

    def get_provider_name(self) -> str:
        return type(self).__name__


class FixtureProvider(TileProvider):
    """Serves images from a fixture directory keyed by tile_id"""

    def __init__(self, root: Union[str, Path], kind: str = SATELLITE):
        if kind not in (SATELLITE, MAP):
            raise InvalidArgumentError(f"provider kind must be satellite or map, got {kind!r}")
        self.root = Path(root)
        self.kind = kind

    def _tile_dir(self, spec: TileSpec) -> Path:
        return self.root / SATELLITE / spec.tile_id

    def list_candidates(self, spec: TileSpec, window: DateWindow) -> List[SceneCandidate]:
        if self.kind == MAP:
            return []
        index = self._tile_dir(spec) / "scenes.json"
        if not index.exists():
            raise ProviderError(f"no scene index for tile {spec.tile_id}")
        try:
            records = json.loads(index.read_text())
            candidates = [
                SceneCandidate(
                    scene_id=r["scene_id"],
                    acquisition_date=date.fromisoformat(r["date"]),
                    cloud_fraction=float(r["cloud_fraction"])
                )
                for r in records
            ]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"bad scene index for tile {spec.tile_id}: {exc}") from None
        return [c for c in candidates if window.contains(c.acquisition_date)]

    def fetch(self, spec: TileSpec, scene_id: Optional[str]) -> bytes:
        if self.kind == MAP:
            path = self.root / MAP / f"{spec.tile_id}.png"
        else:
            if scene_id is None:
                raise ProviderError(f"satellite fetch for {spec.tile_id} needs a scene id")
            path = self._tile_dir(spec) / f"{scene_id}.png"
        if not path.exists():
            raise ProviderError(f"missing fixture {path}")
        return path.read_bytes()


@dataclass
class FetchFailure:
    tile_id: str
    season: Optional[str]
    reason: str


@dataclass
class FetchReport:
    """Counts and failures of one fetch_tiles run"""
    provider: str
    kind: str
    fetched: int = 0
    skipped: int = 0
    failures: List[FetchFailure] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return len(self.failures)

    def to_dict(self) -> Dict:
        return {
            "provider": self.provider,
            "kind": self.kind,
            "fetched": self.fetched,
            "skipped": self.skipped,
            "failed": self.failed,
            "failures": [f.__dict__ for f in self.failures],
        }


@dataclass
class FetchResult:
    satellite: List[SatelliteEntry] = field(default_factory=list)
    maps: List[MapEntry] = field(default_factory=list)
    report: Optional[FetchReport] = None


def satellite_relpath(tile_id: str, season: Season) -> str:
    return f"{SATELLITE}/{tile_id}_{season.value}.png"


def map_relpath(tile_id: str) -> str:
    return f"{MAP}/{tile_id}.png"


def _store_png(data: bytes, path: Path) -> None:
    """Decode provider bytes and store them as 8-bit RGB PNG"""
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
    except Exception as exc:
        raise ProviderError(f"undecodable image for {path.name}: {exc}") from None
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    rgb.save(tmp, format="PNG")
    tmp.replace(path)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _write_sidecar(path: Path, scene: SceneCandidate) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps({
        "scene_id": scene.scene_id,
        "date": scene.acquisition_date.isoformat(),
        "cloud_fraction": scene.cloud_fraction,
    }))
    tmp.replace(path)


def _cached_cloud(path: Path) -> Optional[float]:
    """Cloud fraction from a sidecar, or None when it cannot be trusted"""
    try:
        cloud = float(json.loads(path.read_text())["cloud_fraction"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        logger.warning("Re-fetching %s: unreadable sidecar (%s)", path.name, exc)
        return None
    if not 0.0 <= cloud <= 1.0:
        logger.warning("Re-fetching %s: cloud_fraction %r out of range", path.name, cloud)
        return None
    return cloud


def fetch_tiles(
    provider: TileProvider,
    specs: Sequence[TileSpec],
    seasons: Sequence[Season],
    out_dir: Union[str, Path],
    year: int = 2019,
    max_extensions: int = DEFAULT_MAX_EXTENSIONS,
    cloud_threshold: float = CLOUD_THRESHOLD,
    max_workers: int = 4,
    overwrite: bool = False
) -> FetchResult:
    """
    Download every (tile, season) image a provider serves into out_dir

    Satellite images land at ``satellite/<tile_id>_<SEASON>.png`` and map tiles at
    ``map/<tile_id>.png`` (paths in the returned entries are relative to
    out_dir). Requests may run concurrently; results are collected in input
    order so the layout and report are deterministic. A failing tile becomes a
    report entry and the run continues.
    """
    out_dir = Path(out_dir)
    report = FetchReport(provider=provider.get_provider_name(), kind=provider.kind)
    result = FetchResult(report=report)

    if provider.kind == MAP:
        jobs: List[Tuple[TileSpec, Optional[Season]]] = [(spec, None) for spec in specs]
    else:
        jobs = [(spec, season) for spec in specs for season in seasons]

    def run(job: Tuple[TileSpec, Optional[Season]]):
        spec, season = job
        try:
            if season is None:
                rel = map_relpath(spec.tile_id)
                target = out_dir / rel
                if target.exists() and not overwrite:
                    return "skipped", MapEntry(spec.tile_id, rel, spec.center_lat, spec.center_lon)
                _store_png(provider.fetch(spec, None), target)
                return "fetched", MapEntry(spec.tile_id, rel, spec.center_lat, spec.center_lon)

            rel = satellite_relpath(spec.tile_id, season)
            target = out_dir / rel
            meta_path = _sidecar(target)
            cached = None
            if target.exists() and meta_path.exists() and not overwrite:
                cached = _cached_cloud(meta_path)
            if cached is not None:
                return "skipped", SatelliteEntry(
                    spec.tile_id, season, rel, spec.center_lat, spec.center_lon, cached
                )

            window = season_window(year, season)
            widest = window.widen(max_extensions * EXTENSION_DAYS)
            candidates = provider.list_candidates(spec, widest)
            scene = select_scene(
                candidates, window,
                max_extensions=max_extensions,
                cloud_threshold=cloud_threshold,
                tile_id=spec.tile_id
            )
            _store_png(provider.fetch(spec, scene.scene_id), target)
            _write_sidecar(meta_path, scene)
            return "fetched", SatelliteEntry(
                spec.tile_id, season, rel, spec.center_lat, spec.center_lon,
                scene.cloud_fraction
            )
        except (GeoGanError, OSError) as exc:
            return "failed", FetchFailure(spec.tile_id, season.value if season else None, str(exc))

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        outcomes = list(pool.map(run, jobs))

    for status, payload in outcomes:
        if status == "failed":
            report.failures.append(payload)
            logger.warning("Fetch failed for %s %s: %s", payload.tile_id, payload.season or "", payload.reason)
            continue
        if status == "fetched":
            report.fetched += 1
        else:
            report.skipped += 1
        if isinstance(payload, MapEntry):
            result.maps.append(payload)
        else:
            result.satellite.append(payload)

    logger.info(
        "%s (%s): fetched %d, skipped %d, failed %d",
        report.provider, report.kind, report.fetched, report.skipped, report.failed
    )
    return result


def _encode_png(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def make_synthetic_fixtures(
    root: Union[str, Path],
    specs: Sequence[TileSpec],
    seasons: Sequence[Season],
    year: int = 2019,
    image_px: Optional[int] = None,
    scenes_per_season: int = 3
) -> Path:
    """
    Write a complete FixtureProvider tree of procedurally generated tiles

    Every (tile, season) gets `scenes_per_season - 1` scenes inside the month
    with random cloud cover plus one clear scene 20 days before the month, so
    selection sometimes needs a window extension but always succeeds.
    """
    root = Path(root)
    for spec in specs:
        size = image_px or spec.size_px
        _, map_rgb = synthesize_pair(spec.tile_id, size)
        map_path = root / MAP / f"{spec.tile_id}.png"
        map_path.parent.mkdir(parents=True, exist_ok=True)
        map_path.write_bytes(_encode_png(map_rgb))

        tile_dir = root / SATELLITE / spec.tile_id
        tile_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(tile_seed(spec.tile_id, f"scenes{year}"))
        records = []
        for season in seasons:
            month_start = season_window(year, season).start
            for k in range(scenes_per_season):
                if k == scenes_per_season - 1:
                    acquired = month_start - timedelta(days=20)
                    cloud = float(rng.uniform(0.0, 0.09))
                else:
                    acquired = month_start + timedelta(days=int(rng.integers(0, 28)))
                    cloud = float(rng.uniform(0.0, 0.5))
                scene_id = f"{season.value}{year}_{k}"
                sat_rgb, _ = synthesize_pair(
                    spec.tile_id, size, season.value, cloud, scene_salt=scene_id
                )
                (tile_dir / f"{scene_id}.png").write_bytes(_encode_png(sat_rgb))
                records.append({
                    "scene_id": scene_id,
                    "date": acquired.isoformat(),
                    "cloud_fraction": round(cloud, 4),
                })
        (tile_dir / "scenes.json").write_text(json.dumps(records, indent=1))

    logger.info("Wrote synthetic fixtures for %d tile(s) to %s", len(specs), root)
    return root
