"""
Unit tests for satellite/map pairing and the manifest file

Tests pairing order and counts, duplicate detection, byte-exact round trips
and parse errors with line numbers.
"""
import os
import sys
from dataclasses import replace

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan.errors import DuplicateIdError, InvalidArgumentError, ManifestParseError, ManifestVersionError
from geogan.tilegrid import (
    Manifest,
    MapEntry,
    PairedSample,
    SatelliteEntry,
    Season,
    carry_created,
    pair_tiles,
    read_manifest,
    tile_id_for,
    write_manifest,
)

ALL_SEASONS = [Season.MAR, Season.JUN, Season.SEP, Season.DEC]


def sat_entry(tile_id: str, season: Season, cloud: float = 0.02) -> SatelliteEntry:
    return SatelliteEntry(tile_id, season, f"satellite/{tile_id}_{season.value}.png", 40.7, -74.0, cloud)


def map_entry(tile_id: str) -> MapEntry:
    return MapEntry(tile_id, f"map/{tile_id}.png", 40.7, -74.0)


def sample(tile_id: str, season: Season) -> PairedSample:
    return PairedSample(
        tile_id=tile_id, season=season, lat=40.712776, lon=-74.005974, zoom=14,
        cloud_fraction=0.0312, sat_path=f"satellite/{tile_id}_{season.value}.png",
        map_path=f"map/{tile_id}.png"
    )


class TestPairTiles:
    """Test suite for pair_tiles"""

    def test_four_seasons_share_map(self):
        """Test one map tile and four seasonal satellite tiles"""
        tid = tile_id_for(0, 0, 14)
        sats = [sat_entry(tid, s) for s in reversed(ALL_SEASONS)]
        manifest, report = pair_tiles(sats, [map_entry(tid)], 14)
        assert len(manifest) == 4
        assert [e.season for e in manifest.entries] == ALL_SEASONS
        assert {e.map_path for e in manifest.entries} == {f"map/{tid}.png"}
        assert report.matched == 4

    def test_disjoint_ids(self):
        """Test that disjoint sources give an empty manifest and a full report"""
        sats = [sat_entry("00000_00000_z14", Season.MAR)]
        maps = [map_entry("00009_00009_z14")]
        manifest, report = pair_tiles(sats, maps, 14)
        assert len(manifest) == 0
        assert report.unmatched_satellite == [("00000_00000_z14", "MAR")]
        assert report.unmatched_map == ["00009_00009_z14"]

    def test_six_tiles_row_major(self):
        """Test a fully matched 2 x 3 grid in one season"""
        ids = [tile_id_for(r, c, 14) for r in range(2) for c in range(3)]
        sats = [sat_entry(t, Season.JUN) for t in reversed(ids)]
        maps = [map_entry(t) for t in ids]
        manifest, _ = pair_tiles(sats, maps, 14)
        assert [e.tile_id for e in manifest.entries] == ids

    def test_size_matches_set_intersection(self):
        """Test output size against a brute-force intersection"""
        ids = [tile_id_for(r, c, 14) for r in range(3) for c in range(3)]
        sats = [sat_entry(t, s) for i, t in enumerate(ids) for s in ALL_SEASONS[: 1 + i % 4]]
        maps = [map_entry(t) for t in ids[::2]]
        manifest, report = pair_tiles(sats, maps, 14)
        expected = {(e.tile_id, e.season) for e in sats} & \
            {(m.tile_id, s) for m in maps for s in ALL_SEASONS}
        assert len(manifest) == len(expected)
        assert report.matched + len(report.unmatched_satellite) == len(sats)

    def test_duplicate_satellite(self):
        """Test a repeated (tile, season) among satellite entries"""
        tid = tile_id_for(0, 1, 14)
        with pytest.raises(DuplicateIdError):
            pair_tiles([sat_entry(tid, Season.MAR), sat_entry(tid, Season.MAR)], [map_entry(tid)], 14)

    def test_duplicate_map(self):
        """Test a repeated tile_id among map entries"""
        tid = tile_id_for(0, 1, 14)
        with pytest.raises(DuplicateIdError):
            pair_tiles([sat_entry(tid, Season.MAR)], [map_entry(tid), map_entry(tid)], 14)


class TestManifestFile:
    """Test suite for write_manifest / read_manifest"""

    def setup_method(self):
        """Setup for each test"""
        self.entries = [sample(tile_id_for(0, c, 14), s) for c in range(2) for s in (Season.MAR, Season.SEP)]
        self.manifest = Manifest(zoom=14, tile_px=512, created="2019-06-01T00:00:00+00:00",
                                 entries=self.entries)

    def test_empty_roundtrip(self, tmp_path):
        """Test a header-only manifest"""
        m = Manifest(zoom=14, tile_px=512, created="2019-06-01T00:00:00+00:00")
        path = write_manifest(m, tmp_path / "manifest.txt")
        assert path.read_text().count("\n") == 1
        assert read_manifest(path) == m

    def test_four_entry_roundtrip(self, tmp_path):
        """Test that read(write(m)) == m and rewriting is byte-identical"""
        first = write_manifest(self.manifest, tmp_path / "a.txt")
        loaded = read_manifest(first)
        assert loaded == self.manifest
        second = write_manifest(loaded, tmp_path / "b.txt")
        assert first.read_bytes() == second.read_bytes()

    def test_format(self, tmp_path):
        """Test the header and the tab-separated entry layout"""
        text = write_manifest(self.manifest, tmp_path / "m.txt").read_text()
        lines = text.split("\n")
        assert lines[0] == "GEOGAN-MANIFEST v1 zoom=14 tile_px=512 created=2019-06-01T00:00:00+00:00"
        fields = lines[1].split("\t")
        assert fields == ["00000_00000_z14", "MAR", "40.712776", "-74.005974", "0.0312",
                          "satellite/00000_00000_z14_MAR.png", "map/00000_00000_z14.png"]
        assert len(lines) == 6 and lines[-1] == ""

    def test_truncated_last_line(self, tmp_path):
        """Test that a cut-off final line names its line number"""
        path = write_manifest(self.manifest, tmp_path / "m.txt")
        data = path.read_bytes()
        path.write_bytes(data[:-20])
        with pytest.raises(ManifestParseError) as info:
            read_manifest(path)
        assert info.value.line_no == 5

    def test_wrong_field_count(self, tmp_path):
        """Test a malformed entry line"""
        path = write_manifest(self.manifest, tmp_path / "m.txt")
        lines = path.read_text().split("\n")
        lines[2] = lines[2].replace("\t", " ", 1)
        path.write_text("\n".join(lines))
        with pytest.raises(ManifestParseError) as info:
            read_manifest(path)
        assert info.value.line_no == 3

    def test_bad_number(self, tmp_path):
        """Test a non-numeric latitude"""
        path = write_manifest(self.manifest, tmp_path / "m.txt")
        text = path.read_text().replace("40.712776", "north", 1)
        path.write_text(text)
        with pytest.raises(ManifestParseError) as info:
            read_manifest(path)
        assert info.value.line_no == 2

    def test_version_mismatch(self, tmp_path):
        """Test an unsupported header version"""
        path = write_manifest(self.manifest, tmp_path / "m.txt")
        path.write_text(path.read_text().replace(" v1 ", " v2 ", 1))
        with pytest.raises(ManifestVersionError):
            read_manifest(path)

    def test_bad_magic(self, tmp_path):
        """Test a header that is not a manifest header"""
        path = tmp_path / "m.txt"
        path.write_text("hello world\n")
        with pytest.raises(ManifestParseError) as info:
            read_manifest(path)
        assert info.value.line_no == 1

    def test_duplicate_key_in_manifest(self):
        """Test that a manifest cannot hold the same (tile, season) twice"""
        with pytest.raises(DuplicateIdError):
            Manifest(zoom=14, tile_px=512, entries=[self.entries[0], self.entries[0]])


class TestCreatedStamp:
    """Test suite for the header timestamp"""

    def setup_method(self):
        """Setup for each test"""
        self.entries = [sample(tile_id_for(3, c, 14), Season.JUN) for c in range(3)]

    def test_source_date_epoch(self, monkeypatch):
        """Test that $SOURCE_DATE_EPOCH pins the stamp"""
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        assert Manifest(zoom=14, tile_px=512).created == "1970-01-01T00:00:00+00:00"

    def test_bad_source_date_epoch(self, monkeypatch):
        """Test that a non-integer epoch is rejected"""
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "yesterday")
        with pytest.raises(InvalidArgumentError):
            Manifest(zoom=14, tile_px=512)

    def test_wall_clock_without_epoch(self, monkeypatch):
        """Test a second-resolution UTC stamp when the variable is unset"""
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        created = Manifest(zoom=14, tile_px=512).created
        assert created.endswith("+00:00")
        assert "." not in created

    def test_carry_keeps_unchanged(self, tmp_path):
        """Test that identical content reuses the stamp on disk"""
        path = write_manifest(Manifest(14, 512, "2019-06-01T00:00:00+00:00", self.entries), tmp_path / "m.txt")
        before = path.read_bytes()
        rebuilt = carry_created(Manifest(14, 512, "2024-01-01T00:00:00+00:00", list(self.entries)), path)
        assert rebuilt.created == "2019-06-01T00:00:00+00:00"
        assert write_manifest(rebuilt, path).read_bytes() == before

    def test_carry_ignores_sub_precision_noise(self, tmp_path):
        """Test that coordinates equal at the written precision still match"""
        path = write_manifest(Manifest(14, 512, "2019-06-01T00:00:00+00:00", self.entries), tmp_path / "m.txt")
        noisy = [replace(s, lat=s.lat + 1e-9) for s in self.entries]
        assert carry_created(Manifest(14, 512, "2024-01-01T00:00:00+00:00", noisy), path).created \
            == "2019-06-01T00:00:00+00:00"

    def test_carry_restamps_changed(self, tmp_path):
        """Test that different entries or header keep the new stamp"""
        path = write_manifest(Manifest(14, 512, "2019-06-01T00:00:00+00:00", self.entries), tmp_path / "m.txt")
        fewer = Manifest(14, 512, "2024-01-01T00:00:00+00:00", self.entries[:2])
        assert carry_created(fewer, path).created == "2024-01-01T00:00:00+00:00"
        wider = Manifest(14, 256, "2024-01-01T00:00:00+00:00", list(self.entries))
        assert carry_created(wider, path).created == "2024-01-01T00:00:00+00:00"

    def test_carry_missing_or_corrupt(self, tmp_path):
        """Test that a missing or unreadable file keeps the new stamp"""
        fresh = Manifest(14, 512, "2024-01-01T00:00:00+00:00", self.entries)
        assert carry_created(fresh, tmp_path / "none.txt") is fresh
        bad = tmp_path / "bad.txt"
        bad.write_text("not a manifest\n")
        assert carry_created(fresh, bad) is fresh
