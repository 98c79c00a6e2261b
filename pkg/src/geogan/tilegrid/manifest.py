"""
Satellite/map pairing and the manifest file

The manifest is a line-oriented text file. Line 1 is the header
``GEOGAN-MANIFEST v1 zoom=<z> tile_px=<n> created=<iso>``; every following
line is a tab-separated entry::

    tile_id  season  lat  lon  cloud_fraction  sat_path  map_path
"""
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from geogan.errors import (
    DuplicateIdError,
    GeoGanError,
    InvalidArgumentError,
    ManifestParseError,
    ManifestVersionError,
)
from geogan.tilegrid.scenes import Season

logger = logging.getLogger(__name__)

MANIFEST_MAGIC = "GEOGAN-MANIFEST"
MANIFEST_VERSION = 1
_ENTRY_FIELDS = 7
SOURCE_DATE_ENV = "SOURCE_DATE_EPOCH"


def _created_now() -> str:
    """Header timestamp; $SOURCE_DATE_EPOCH pins it for reproducible builds"""
    epoch = os.environ.get(SOURCE_DATE_ENV, "").strip()
    if epoch:
        try:
            moment = datetime.fromtimestamp(int(epoch), timezone.utc)
        except (ValueError, OverflowError, OSError):
            raise InvalidArgumentError(f"${SOURCE_DATE_ENV} must be integer seconds, got {epoch!r}") from None
    else:
        moment = datetime.now(timezone.utc)
    return moment.replace(microsecond=0).isoformat()


@dataclass(frozen=True)
class PairedSample:
    """One aligned satellite/map pair for a tile and season"""
    tile_id: str
    season: Season
    lat: float
    lon: float
    zoom: int
    cloud_fraction: float
    sat_path: str
    map_path: str

    def __post_init__(self):
        # stored at manifest precision so a written manifest reads back equal
        if not isinstance(self.season, Season):
            object.__setattr__(self, "season", Season.parse(str(self.season)))
        object.__setattr__(self, "lat", round(float(self.lat), 6))
        object.__setattr__(self, "lon", round(float(self.lon), 6))
        object.__setattr__(self, "cloud_fraction", round(float(self.cloud_fraction), 4))
        object.__setattr__(self, "sat_path", str(self.sat_path))
        object.__setattr__(self, "map_path", str(self.map_path))
        for name in ("tile_id", "sat_path", "map_path"):
            value = getattr(self, name)
            if not value or "\t" in value or "\n" in value:
                raise InvalidArgumentError(f"{name} must be non-empty without tabs/newlines")
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise InvalidArgumentError(f"cloud_fraction {self.cloud_fraction} outside [0, 1]")

    @property
    def key(self) -> Tuple[str, int]:
        return (self.tile_id, self.season.order)


@dataclass
class Manifest:
    """Header plus ordered entries"""
    zoom: int
    tile_px: int
    created: str = field(default_factory=_created_now)
    entries: List[PairedSample] = field(default_factory=list)
    format_version: int = MANIFEST_VERSION

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.key in seen:
                raise DuplicateIdError("manifest", (entry.tile_id, entry.season.value))
            seen.add(entry.key)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SatelliteEntry:
    """A stored satellite image for one tile and season"""
    tile_id: str
    season: Season
    path: str
    lat: float
    lon: float
    cloud_fraction: float = 0.0


@dataclass(frozen=True)
class MapEntry:
    """A stored map tile"""
    tile_id: str
    path: str
    lat: float
    lon: float


@dataclass
class PairingReport:
    """What pair_tiles could not match"""
    matched: int = 0
    unmatched_satellite: List[Tuple[str, str]] = field(default_factory=list)
    unmatched_map: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "matched": self.matched,
            "unmatched_satellite": [list(k) for k in self.unmatched_satellite],
            "unmatched_map": list(self.unmatched_map),
        }


def pair_tiles(
    sat_entries: Sequence[SatelliteEntry],
    map_entries: Sequence[MapEntry],
    zoom: int,
    tile_px: int = 512
) -> Tuple[Manifest, PairingReport]:
    """
    Match seasonal satellite tiles to map tiles by tile_id

    Returns:
        (manifest ordered by tile_id then season, report of unmatched entries)

    Raises:
        DuplicateIdError: a (tile_id, season) repeats among satellite entries or
            a tile_id repeats among map entries
    """
    maps: Dict[str, MapEntry] = {}
    for entry in map_entries:
        if entry.tile_id in maps:
            raise DuplicateIdError("map", entry.tile_id)
        maps[entry.tile_id] = entry

    sats: Dict[Tuple[str, int], SatelliteEntry] = {}
    for entry in sat_entries:
        key = (entry.tile_id, entry.season.order)
        if key in sats:
            raise DuplicateIdError("satellite", (entry.tile_id, entry.season.value))
        sats[key] = entry

    report = PairingReport()
    samples: List[PairedSample] = []
    used_maps = set()
    for key in sorted(sats):
        sat = sats[key]
        mp = maps.get(sat.tile_id)
        if mp is None:
            report.unmatched_satellite.append((sat.tile_id, sat.season.value))
            continue
        used_maps.add(sat.tile_id)
        samples.append(PairedSample(
            tile_id=sat.tile_id,
            season=sat.season,
            lat=sat.lat,
            lon=sat.lon,
            zoom=zoom,
            cloud_fraction=sat.cloud_fraction,
            sat_path=sat.path,
            map_path=mp.path
        ))
    report.unmatched_map = sorted(set(maps) - used_maps)
    report.matched = len(samples)

    if report.unmatched_satellite or report.unmatched_map:
        logger.warning(
            "Pairing left %d satellite and %d map tile(s) unmatched",
            len(report.unmatched_satellite), len(report.unmatched_map)
        )
    logger.info("Paired %d sample(s)", report.matched)
    return Manifest(zoom=zoom, tile_px=tile_px, entries=samples), report


def _format_header(m: Manifest) -> str:
    return (
        f"{MANIFEST_MAGIC} v{m.format_version} zoom={m.zoom} "
        f"tile_px={m.tile_px} created={m.created}"
    )


def _format_entry(s: PairedSample) -> str:
    return "\t".join([
        s.tile_id,
        s.season.value,
        f"{s.lat:.6f}",
        f"{s.lon:.6f}",
        f"{s.cloud_fraction:.4f}",
        s.sat_path,
        s.map_path,
    ])


def write_manifest(m: Manifest, path: Union[str, Path]) -> Path:
    """Write a manifest; single writer, replaces any existing file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_format_header(m)] + [_format_entry(s) for s in m.entries]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    tmp.replace(path)
    logger.info("Wrote manifest with %d entries to %s", len(m.entries), path)
    return path


def _parse_header(line: str) -> Tuple[int, int, int, str]:
    tokens = line.split(" ")
    if len(tokens) < 4 or tokens[0] != MANIFEST_MAGIC:
        raise ManifestParseError(1, f"expected '{MANIFEST_MAGIC} v<n> ...' header")
    version_tok = tokens[1]
    if not version_tok.startswith("v") or not version_tok[1:].isdigit():
        raise ManifestParseError(1, f"bad version token {version_tok!r}")
    version = int(version_tok[1:])
    if version != MANIFEST_VERSION:
        raise ManifestVersionError(
            f"manifest version {version} not supported (expected {MANIFEST_VERSION})"
        )
    fields = {}
    for tok in tokens[2:]:
        if "=" not in tok:
            raise ManifestParseError(1, f"bad header token {tok!r}")
        key, value = tok.split("=", 1)
        fields[key] = value
    try:
        zoom = int(fields["zoom"])
        tile_px = int(fields["tile_px"])
    except (KeyError, ValueError) as exc:
        raise ManifestParseError(1, f"header missing zoom/tile_px ({exc})") from None
    return version, zoom, tile_px, fields.get("created", "")


def read_manifest(path: Union[str, Path]) -> Manifest:
    """
    Read a manifest written by write_manifest

    Raises:
        ManifestParseError: malformed line, with its 1-based line number
        ManifestVersionError: unsupported header version
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        text = f.read()
    if not text:
        raise ManifestParseError(1, "empty file")
    if not text.endswith("\n"):
        last = text.count("\n") + 1
        raise ManifestParseError(last, "truncated line (missing newline)")

    lines = text[:-1].split("\n")
    version, zoom, tile_px, created = _parse_header(lines[0])

    entries: List[PairedSample] = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != _ENTRY_FIELDS:
            raise ManifestParseError(
                line_no, f"expected {_ENTRY_FIELDS} tab-separated fields, got {len(parts)}"
            )
        tile_id, season, lat, lon, cloud, sat_path, map_path = parts
        try:
            entries.append(PairedSample(
                tile_id=tile_id,
                season=Season.parse(season),
                lat=float(lat),
                lon=float(lon),
                zoom=zoom,
                cloud_fraction=float(cloud),
                sat_path=sat_path,
                map_path=map_path
            ))
        except ValueError as exc:
            raise ManifestParseError(line_no, str(exc)) from None

    try:
        return Manifest(
            zoom=zoom, tile_px=tile_px, created=created,
            entries=entries, format_version=version
        )
    except DuplicateIdError as exc:
        raise ManifestParseError(len(lines), str(exc)) from None


def resolve_sample_path(manifest_path: Union[str, Path], stored: str) -> Path:
    """Entry paths are stored relative to the manifest directory when possible"""
    p = Path(stored)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p


def carry_created(m: Manifest, path: Union[str, Path]) -> Manifest:
    """
    Reuse the header timestamp of an existing manifest with the same content

    Rebuilding an unchanged dataset then rewrites identical bytes. An
    unreadable or different file leaves `m` as it is.
    """
    path = Path(path)
    if not path.exists():
        return m
    try:
        old = read_manifest(path)
    except (GeoGanError, OSError) as exc:
        logger.warning("Ignoring unreadable manifest %s: %s", path, exc)
        return m
    same = (old.zoom == m.zoom and old.tile_px == m.tile_px
            and [_format_entry(s) for s in old.entries] == [_format_entry(s) for s in m.entries])
    if not same:
        return m
    return replace(m, created=old.created)
