"""
Unit tests for the command-line interface

Tests argument validation, config precedence, data-root resolution and the
dataset -> train -> eval -> sample pipeline on synthetic tiles.
"""
import json
import os
import sys
from collections import Counter

import pytest
from PIL import Image

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan import cli
from geogan.errors import InvalidArgumentError
from geogan.models import Variant
from geogan.tilegrid import GeoBox, read_manifest
from geogan.tilegrid.mercator import grid_step


def box_arg(rows: float, cols: float, lat: float = 40.71, lon: float = -74.0) -> str:
    """--box value spanning rows x cols zoom-14 tiles around a point"""
    anchor = GeoBox(lat - 0.001, lat + 0.001, lon - 0.001, lon + 0.001)
    step = grid_step(anchor, 14, 512)
    half_lat, half_lon = rows * step.lat_deg / 2, cols * step.lon_deg / 2
    return f"{lat - half_lat},{lat + half_lat},{lon - half_lon},{lon + half_lon}"


def build_dataset(out_dir, seasons: str = "jun") -> int:
    return cli.main([
        "--log-level", "WARNING", "dataset",
        "--box", box_arg(1.9, 2.9),
        "--provider", "synthetic",
        "--seasons", seasons,
        "--image-px", "16",
        "--workers", "2",
        "--out", str(out_dir),
    ])


class TestArguments:
    """Test suite for argument parsing"""

    def test_bad_box_field_count(self, capsys):
        """Test that a three-number box is a usage error naming --box"""
        with pytest.raises(SystemExit) as exc:
            cli.main(["dataset", "--box", "40.70,40.72,-74.02"])
        assert exc.value.code == 2
        assert "--box" in capsys.readouterr().err

    def test_bad_box_order(self, capsys):
        """Test that lat_min > lat_max is rejected at parse time"""
        with pytest.raises(SystemExit) as exc:
            cli.main(["dataset", "--box", "40.72,40.70,-74.02,-73.99"])
        assert exc.value.code == 2
        assert "--box" in capsys.readouterr().err

    def test_bad_seasons(self):
        """Test that an unknown month is a usage error"""
        with pytest.raises(SystemExit) as exc:
            cli.main(["dataset", "--box", box_arg(1, 1), "--seasons", "jun,foo"])
        assert exc.value.code == 2

    def test_train_help_defaults(self, capsys, monkeypatch):
        """Test that train --help shows each default once and never None"""
        monkeypatch.setenv("COLUMNS", "200")
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "before the adversarial run (default: 0)" in out
        assert "Adam beta1 (default: 0.5)" in out
        assert "(default: None)" not in out
        assert ") (default:" not in out

    def test_parse_box(self):
        """Test the box order lat_min,lat_max,lon_min,lon_max"""
        box = cli.parse_box("40.70,40.72,-74.02,-73.99")
        assert (box.lat_min, box.lat_max, box.lon_min, box.lon_max) == (40.70, 40.72, -74.02, -73.99)

    def test_mock_needs_fixtures(self, tmp_path):
        """Test that the mock provider without --fixtures fails cleanly"""
        code = cli.main(["--log-level", "ERROR", "dataset", "--box", box_arg(1, 1),
                         "--out", str(tmp_path / "data")])
        assert code == cli.EXIT_FAILURE


class TestDataRoot:
    """Test suite for $GEOGAN_DATA_ROOT"""

    def test_relative_path_resolved(self, monkeypatch, tmp_path):
        """Test that relative paths land under the data root"""
        monkeypatch.setenv(cli.DATA_ROOT_ENV, str(tmp_path))
        assert cli.data_path("nyc/manifest.txt") == str(tmp_path / "nyc" / "manifest.txt")

    def test_absolute_path_kept(self, monkeypatch, tmp_path):
        """Test that absolute paths ignore the data root"""
        monkeypatch.setenv(cli.DATA_ROOT_ENV, str(tmp_path))
        assert cli.data_path("/srv/manifest.txt") == "/srv/manifest.txt"

    def test_unset(self, monkeypatch):
        """Test that paths pass through without a data root"""
        monkeypatch.delenv(cli.DATA_ROOT_ENV, raising=False)
        assert cli.data_path("nyc/manifest.txt") == "nyc/manifest.txt"


class TestConfigPrecedence:
    """Test suite for defaults < --config < flags"""

    def setup_method(self):
        """Setup for each test"""
        self.parser = cli.build_parser()

    def config_for(self, argv):
        return cli.build_train_config(self.parser.parse_args(["train"] + argv))

    def test_defaults(self):
        """Test that no file and no flags give the built-in defaults"""
        config = self.config_for([])
        assert config.arch.variant == Variant.DIRECT_GAN
        assert config.arch.image_size == 256
        assert config.batch_size == 4
        assert config.learning_rate == pytest.approx(2e-4)
        assert config.beta1 == pytest.approx(0.5)

    def test_file_then_flags(self, tmp_path):
        """Test that the file overrides defaults and flags override the file"""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({
            "epochs": 7,
            "seed": 3,
            "arch": {"variant": "encoder", "image_size": 64},
            "weights": {"w_style": 0.5},
        }))
        config = self.config_for(["--config", str(path), "--seed", "5", "--w-rec", "2"])
        assert config.epochs == 7
        assert config.seed == 5
        assert config.arch.variant == Variant.ENCODER_GAN
        assert config.arch.image_size == 64
        assert config.batch_size == 16
        assert config.weights.w_style == 0.5
        assert config.weights.w_rec == 2.0

    def test_config_relative_to_data_root(self, tmp_path, monkeypatch):
        """Test that --config is resolved like any data path"""
        (tmp_path / "config.json").write_text(json.dumps({"epochs": 3}))
        monkeypatch.setenv(cli.DATA_ROOT_ENV, str(tmp_path))
        assert self.config_for(["--config", "config.json"]).epochs == 3

    def test_unknown_key(self, tmp_path):
        """Test that a misspelled setting is reported"""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"epoch": 3}))
        with pytest.raises(InvalidArgumentError):
            self.config_for(["--config", str(path)])

    def test_unreadable_config(self, tmp_path):
        """Test that a missing --config file is reported"""
        with pytest.raises(InvalidArgumentError):
            self.config_for(["--config", str(tmp_path / "missing.json")])


class TestDatasetCommand:
    """Test suite for the dataset subcommand"""

    def test_single_season(self, tmp_path):
        """Test that a 2x3-tile box yields six manifest entries"""
        out = tmp_path / "nyc"
        assert build_dataset(out) == cli.EXIT_OK
        manifest = read_manifest(out / cli.MANIFEST_NAME)
        assert len(manifest) == 6
        report = json.loads((out / cli.DATASET_REPORT).read_text())
        assert report["tiles"] == 6
        assert report["satellite"]["failed"] == 0

    def test_four_seasons(self, tmp_path):
        """Test four entries per tile with mar,jun,sep,dec"""
        out = tmp_path / "nyc"
        assert build_dataset(out, "mar,jun,sep,dec") == cli.EXIT_OK
        manifest = read_manifest(out / cli.MANIFEST_NAME)
        assert len(manifest) == 24
        per_tile = Counter(entry.tile_id for entry in manifest.entries)
        assert set(per_tile.values()) == {4}

    def test_rerun_is_stable(self, tmp_path, monkeypatch):
        """Test that a second run rewrites the manifest byte for byte"""
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        out = tmp_path / "nyc"
        build_dataset(out)
        first = (out / cli.MANIFEST_NAME).read_bytes()
        assert build_dataset(out) == cli.EXIT_OK
        assert (out / cli.MANIFEST_NAME).read_bytes() == first

    def test_rerun_after_change_restamps(self, tmp_path, monkeypatch):
        """Test that a different entry set gets a fresh created stamp"""
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        out = tmp_path / "nyc"
        build_dataset(out)
        assert read_manifest(out / cli.MANIFEST_NAME).created == "1970-01-01T00:00:00+00:00"
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
        assert build_dataset(out, "jun,dec") == cli.EXIT_OK
        assert read_manifest(out / cli.MANIFEST_NAME).created == "1970-01-02T00:00:00+00:00"

    def test_pinned_epoch_is_reproducible(self, tmp_path, monkeypatch):
        """Test that two fresh directories match under $SOURCE_DATE_EPOCH"""
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1577836800")
        build_dataset(tmp_path / "a")
        build_dataset(tmp_path / "b")
        a = (tmp_path / "a" / cli.MANIFEST_NAME).read_text().replace(str(tmp_path / "a"), "")
        b = (tmp_path / "b" / cli.MANIFEST_NAME).read_text().replace(str(tmp_path / "b"), "")
        assert a.splitlines()[0].endswith("created=2020-01-01T00:00:00+00:00")
        assert a == b


class TestPipeline:
    """Test suite for train, eval and sample on one synthetic dataset"""

    def setup_method(self):
        """Setup for each test"""
        self.train_flags = [
            "--arch", "direct", "--image-size", "16", "--width-divisor", "20",
            "--batch-size", "4", "--max-steps", "2", "--grid-size", "4", "--no-plots",
        ]

    def train_run(self, tmp_path):
        data = tmp_path / "nyc"
        assert build_dataset(data) == cli.EXIT_OK
        manifest = str(data / cli.MANIFEST_NAME)
        run = tmp_path / "run"
        code = cli.main(["--log-level", "WARNING", "train", "--manifest", manifest,
                         "--out", str(run)] + self.train_flags)
        assert code == cli.EXIT_OK
        return manifest, run

    def test_train(self, tmp_path):
        """Test that training writes the final checkpoint and the merged config"""
        _, run = self.train_run(tmp_path)
        assert (run / "final.ckpt").exists()
        effective = json.loads((run / "effective_config.json").read_text())
        assert effective["batch_size"] == 4
        assert effective["max_steps"] == 2
        assert effective["arch"]["variant"] == "direct"

    def test_eval_and_sample(self, tmp_path, capsys):
        """Test eval of the trained model and a 2x2 sample grid"""
        manifest, run = self.train_run(tmp_path)
        metrics = tmp_path / "metrics.txt"
        code = cli.main(["--log-level", "WARNING", "eval", "--model", str(run / "final.ckpt"),
                         "--manifest", manifest, "--out", str(metrics)])
        assert code == cli.EXIT_OK
        line = metrics.read_text().strip()
        assert "sample_count=6" in line
        assert line in capsys.readouterr().out

        grid = tmp_path / "grid.png"
        code = cli.main(["--log-level", "WARNING", "sample", "--model", str(run / "final.ckpt"),
                         "--manifest", manifest, "--n", "4", "--out", str(grid)])
        assert code == cli.EXIT_OK
        with Image.open(grid) as img:
            assert img.size == (34, 34)

    def test_sample_needs_square(self, tmp_path):
        """Test that a non-square sample count fails cleanly"""
        manifest, run = self.train_run(tmp_path)
        code = cli.main(["--log-level", "ERROR", "sample", "--model", str(run / "final.ckpt"),
                         "--manifest", manifest, "--n", "5", "--out", str(tmp_path / "g.png")])
        assert code == cli.EXIT_FAILURE

    def test_identity_oracle(self, tmp_path, capsys):
        """Test that the identity oracle scores zero on every metric"""
        data = tmp_path / "nyc"
        build_dataset(data)
        capsys.readouterr()
        code = cli.main(["--log-level", "WARNING", "eval", "--identity-oracle", "--arch", "direct",
                         "--image-size", "16", "--manifest", str(data / cli.MANIFEST_NAME)])
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "mean_l2=0 " in out
        assert "combined=0 " in out

    def test_eval_needs_model(self, tmp_path):
        """Test that eval without --model or the oracle fails cleanly"""
        data = tmp_path / "nyc"
        build_dataset(data)
        code = cli.main(["--log-level", "ERROR", "eval", "--manifest", str(data / cli.MANIFEST_NAME)])
        assert code == cli.EXIT_FAILURE


class TestGradcheckCommand:
    """Test suite for the gradcheck subcommand"""

    def test_one_variant(self, capsys):
        """Test a restricted suite passes and prints one row per check"""
        code = cli.main(["--log-level", "WARNING", "gradcheck", "--variants", "direct", "--probes", "5"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_OK
        assert "direct/total" in out
        assert "within tolerance" in out
