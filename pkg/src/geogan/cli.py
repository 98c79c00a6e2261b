"""
Command-line entry point

Subcommands: dataset, train, eval, sample, gradcheck, mnist-sanity.

Training settings resolve as built-in defaults < ``--config`` JSON file <
command-line flags; the merged result is logged and written next to the run's
outputs. Relative data paths are resolved against ``$GEOGAN_DATA_ROOT`` when it
is set.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from geogan import __version__
from geogan.errors import GeoGanError, InvalidArgumentError
from geogan.evaluation.grid import sample_grid
from geogan.evaluation.metrics import evaluate
from geogan.evaluation.mnist import MnistConfig, mnist_sanity
from geogan.log import configure_logging
from geogan.losses import LossWeights
from geogan.models.config import ArchConfig, NoiseMode, Variant
from geogan.tilegrid import (
    FixtureProvider,
    GeoBox,
    carry_created,
    fetch_tiles,
    generate_grid,
    make_synthetic_fixtures,
    pair_tiles,
    parse_seasons,
    write_manifest,
)
from geogan.tilegrid.providers import MAP, SATELLITE
from geogan.training.checkpoint import load_model
from geogan.training.data import PairedDataset
from geogan.training.gradcheck import run_gradient_suite
from geogan.training.state import TrainConfig
from geogan.training.trainer import EFFECTIVE_CONFIG, open_dataset, pretrain_encoder, train

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "GEOGAN_DATA_ROOT"
MANIFEST_NAME = "manifest.txt"
DATASET_REPORT = "dataset_report.json"
METRICS_NAME = "metrics.txt"

EXIT_OK = 0
EXIT_FAILURE = 1


def train_defaults() -> Dict[str, Any]:
    """Built-in TrainConfig defaults as a nested dict, size-dependent values left unresolved"""
    d = TrainConfig().to_dict()
    d["batch_size"] = 0
    d["arch"]["image_size"] = 0
    return d


def data_path(text: str) -> str:
    """Resolve a relative data path against $GEOGAN_DATA_ROOT"""
    root = os.environ.get(DATA_ROOT_ENV)
    if not text or Path(text).is_absolute() or not root:
        return text
    return str(Path(root) / text)


def parse_box(text: str) -> GeoBox:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid box {text!r}: expected four numbers") from None
    if len(values) != 4:
        raise argparse.ArgumentTypeError(
            f"invalid box {text!r}: expected lat_min,lat_max,lon_min,lon_max"
        )
    try:
        return GeoBox(*values)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(f"invalid box {text!r}: {exc}") from None


def _seasons(text: str):
    try:
        return parse_seasons(text)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


class HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Appends argparse defaults; flags defaulting to None document their own"""

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def _default(value: Any) -> str:
    return f" (default: {value})"


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    d = train_defaults()
    arch, noise = d["arch"], d["arch"]["noise"]
    g = p.add_argument_group("architecture")
    g.add_argument("--arch", choices=[v.value for v in Variant], default=None,
                   help="generator family" + _default(arch["variant"]))
    g.add_argument("--image-size", type=int, default=None,
                   help="image side in pixels" + _default("64 for encoder, 256 otherwise"))
    g.add_argument("--embed-dim", type=int, default=None,
                   help="satellite embedding size (100 or 512)" + _default(arch["embed_dim"]))
    g.add_argument("--noise-mode", choices=[m.value for m in NoiseMode], default=None,
                   help="how noise enters the generator" + _default(noise["mode"]))
    g.add_argument("--noise-fraction", type=float, default=None,
                   help="noise magnitude relative to the embedding" + _default(noise["fraction"]))
    g.add_argument("--noise-dim", type=int, default=None,
                   help="appended noise values" + _default(noise["dim"]))
    g.add_argument("--width-divisor", type=int, default=None,
                   help="divide every layer width by this factor" + _default(1))
    g.add_argument("--separate-encoder", action="store_true", default=None,
                   help="give the discriminator its own satellite encoder" + _default(False))
    g.add_argument("--no-bidirectional", action="store_true", default=None,
                   help="train the flow generator in the sat->map direction only" + _default(False))


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    w = train_defaults()["weights"]
    g = p.add_argument_group("loss weights")
    g.add_argument("--rec-norm", choices=["l1", "l2"], default=None,
                   help="reconstruction norm" + _default(w["rec_norm"]))
    g.add_argument("--w-gan", type=float, default=None, help="adversarial weight" + _default(w["w_gan"]))
    g.add_argument("--w-rec", type=float, default=None, help="reconstruction weight" + _default(w["w_rec"]))
    g.add_argument("--w-style", type=float, default=None, help="style weight" + _default(w["w_style"]))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = train_defaults()
    p.add_argument("--config", default=None, help="JSON file of TrainConfig fields")
    p.add_argument("--manifest", default=None, help="dataset manifest")
    p.add_argument("--out", default=None, help="run directory" + _default(d["out_dir"]))
    p.add_argument("--seed", type=int, default=None, help="random seed" + _default(d["seed"]))
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-threaded deterministic kernels" + _default(False))
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate" + _default(d["learning_rate"]))
    p.add_argument("--beta1", type=float, default=None, help="Adam beta1" + _default(d["beta1"]))
    p.add_argument("--batch-size", type=int, default=None,
                   help="batch size" + _default("4 at 256 px, 16 otherwise"))
    p.add_argument("--epochs", type=int, default=None, help="epochs" + _default(d["epochs"]))
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many steps, 0 for no limit" + _default(d["max_steps"]))
    p.add_argument("--g-steps", type=int, default=None,
                   help="generator updates per discriminator update" + _default(d["g_steps_per_d_step"]))
    p.add_argument("--checkpoint-interval", type=int, default=None,
                   help="steps between checkpoints, 0 for final only" + _default(d["checkpoint_interval"]))
    p.add_argument("--dtype", choices=["float32", "float64"], default=None,
                   help="parameter precision" + _default(d["dtype"]))
    p.add_argument("--grid-size", type=int, default=None,
                   help="samples in each epoch-end grid" + _default(d["grid_size"]))
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--pretrained-encoder", default=None, help="encoder parameters to start from")
    p.add_argument("--freeze-encoder", action="store_true", default=None,
                   help="keep the encoder fixed during training" + _default(False))
    p.add_argument("--pretrain-steps", type=int, default=0,
                   help="auto-encoder pre-training steps before the adversarial run")
    p.add_argument("--no-plots", action="store_true", help="skip the loss-curve graphs")
    _add_arch_flags(p)
    _add_loss_flags(p)


def _deep_update(base: Dict, override: Dict) -> Dict:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def build_train_config(args: argparse.Namespace):
    """Merge defaults, the --config file and flags into a TrainConfig"""
    merged = train_defaults()
    if getattr(args, "config", None):
        path = data_path(args.config)
        try:
            with open(path) as f:
                _deep_update(merged, json.load(f))
        except (OSError, ValueError) as exc:
            raise InvalidArgumentError(f"cannot read --config {path}: {exc}") from None

    arch, noise, weights = merged["arch"], merged["arch"]["noise"], merged["weights"]
    flags = {
        "learning_rate": args.lr, "beta1": args.beta1, "batch_size": args.batch_size,
        "epochs": args.epochs, "max_steps": args.max_steps, "g_steps_per_d_step": args.g_steps,
        "seed": args.seed, "checkpoint_interval": args.checkpoint_interval,
        "out_dir": args.out, "deterministic": args.deterministic, "dtype": args.dtype,
        "grid_size": args.grid_size, "freeze_encoder": args.freeze_encoder,
    }
    merged.update({k: v for k, v in flags.items() if v is not None})
    for key, value in (("manifest", args.manifest), ("resume", args.resume),
                       ("pretrained_encoder", args.pretrained_encoder)):
        if value is not None:
            merged[key] = data_path(value)

    if args.arch is not None:
        arch["variant"] = args.arch
    if args.image_size is not None:
        arch["image_size"] = args.image_size
    if args.embed_dim is not None:
        arch["embed_dim"] = args.embed_dim
    if args.noise_mode is not None:
        noise["mode"] = args.noise_mode
    if args.noise_fraction is not None:
        noise["fraction"] = args.noise_fraction
    if args.noise_dim is not None:
        noise["dim"] = args.noise_dim
    if args.separate_encoder:
        arch["shared_encoder"] = False
    if args.no_bidirectional:
        arch["flow_bidirectional"] = False
    for key, value in (("rec_norm", args.rec_norm), ("w_gan", args.w_gan),
                       ("w_rec", args.w_rec), ("w_style", args.w_style)):
        if value is not None:
            weights[key] = value

    try:
        arch_config = ArchConfig.from_dict(arch)
        if args.width_divisor and args.width_divisor > 1:
            arch_config = arch_config.scaled(args.width_divisor)
        merged["arch"] = arch_config
        merged["weights"] = LossWeights(**weights)
        return TrainConfig.from_dict(merged)
    except TypeError as exc:
        raise InvalidArgumentError(f"unknown training setting: {exc}") from None


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def cmd_dataset(args: argparse.Namespace) -> int:
    """Grid -> fetch -> select scenes -> pair -> manifest"""
    out_dir = Path(data_path(args.out))
    _banner(f"Building dataset in {out_dir}")
    specs = generate_grid(args.box, zoom=args.zoom, size_px=args.tile_px)
    print(f"  Grid: {len(specs)} tile(s) at zoom {args.zoom}")

    if args.provider == "synthetic":
        fixtures = out_dir / "fixtures"
        make_synthetic_fixtures(fixtures, specs, args.seasons, year=args.year, image_px=args.image_px)
    else:
        if not args.fixtures:
            raise InvalidArgumentError("--fixtures is required with --provider mock")
        fixtures = Path(data_path(args.fixtures))
        if not fixtures.is_dir():
            raise InvalidArgumentError(f"--fixtures {fixtures} is not a directory")

    common = dict(year=args.year, max_workers=args.workers)
    sat = fetch_tiles(FixtureProvider(fixtures, SATELLITE), specs, args.seasons, out_dir, **common)
    maps = fetch_tiles(FixtureProvider(fixtures, MAP), specs, args.seasons, out_dir, **common)
    manifest, pairing = pair_tiles(sat.satellite, maps.maps, zoom=args.zoom, tile_px=args.tile_px)
    manifest = carry_created(manifest, out_dir / MANIFEST_NAME)
    manifest_path = write_manifest(manifest, out_dir / MANIFEST_NAME)

    report = {
        "tiles": len(specs),
        "seasons": [s.value for s in args.seasons],
        "satellite": sat.report.to_dict(),
        "map": maps.report.to_dict(),
        "pairing": pairing.to_dict(),
    }
    (out_dir / DATASET_REPORT).write_text(json.dumps(report, indent=2) + "\n")

    print(f"  ✓ Satellite: {sat.report.fetched} fetched, {sat.report.skipped} skipped, "
          f"{sat.report.failed} failed")
    print(f"  ✓ Maps:      {maps.report.fetched} fetched, {maps.report.skipped} skipped, "
          f"{maps.report.failed} failed")
    print(f"  ✓ Manifest:  {len(manifest)} entries -> {manifest_path}")
    if len(manifest) == 0:
        print("  ✗ No pairs were produced")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = build_train_config(args)
    out_dir = Path(config.out_dir)
    _banner(f"Training {config.arch.variant.name} -> {out_dir}")
    dataset = open_dataset(config)
    if args.pretrain_steps:
        encoder_path = out_dir / "pretrained_encoder.params"
        pretrain_encoder(config, dataset, steps=args.pretrain_steps, out_path=encoder_path)
        config = type(config).from_dict({**config.to_dict(), "pretrained_encoder": str(encoder_path)})

    result = train(config, dataset, plots=not args.no_plots)
    last = result.reports[-1] if result.reports else None
    print(f"  ✓ Steps:       {result.state.step}")
    if last is not None:
        print(f"  ✓ Final loss:  d={last.d_loss:.4f} g={last.g_total:.4f}")
    print(f"  ✓ Checkpoint:  {result.checkpoints[-1]}")
    print(f"  ✓ Config:      {out_dir / EFFECTIVE_CONFIG}")
    return EXIT_OK


def _load_for_inference(args: argparse.Namespace):
    """(params, arch) from --model, or (None, arch) for the identity oracle"""
    if args.model:
        return load_model(data_path(args.model))
    if getattr(args, "identity_oracle", False):
        return None, ArchConfig(variant=args.arch or Variant.DIRECT_GAN, image_size=args.image_size or 0)
    raise InvalidArgumentError("--model is required")


def cmd_eval(args: argparse.Namespace) -> int:
    params, arch = _load_for_inference(args)
    weights = LossWeights(w_style=args.w_style)
    report = evaluate(
        params, arch, data_path(args.manifest), weights,
        batch_size=args.batch_size, seed=args.seed, identity_oracle=args.identity_oracle
    )
    print(report.to_line())
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_line() + "\n")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    params, arch = _load_for_inference(args)
    dtype = next(iter(params.values())).dtype
    dataset = PairedDataset(data_path(args.manifest), arch.image_size, dtype=dtype)
    sample_grid(params, arch, dataset, args.n, seed=args.seed, out_path=args.out)
    print(f"  ✓ Grid of {args.n} sample(s) written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    variants = [Variant.parse(v) for v in args.variants.split(",")] if args.variants else list(Variant)
    _banner("Gradient verification")
    results = run_gradient_suite(seed=args.seed, probe_count=args.probes,
                                 epsilon=args.epsilon, variants=variants)
    print(f"\n{'Component':<30} {'Max rel. error':>16} {'Tolerance':>10}")
    print("-" * 60)
    for r in results:
        mark = "✓" if r.passed else "✗"
        print(f"{mark} {r.name:<28} {r.max_rel_error:>16.3e} {r.tolerance:>10.0e}")
    failed = [r for r in results if not r.passed]
    print("-" * 60)
    if failed:
        print(f"✗ {len(failed)} of {len(results)} check(s) exceeded tolerance")
        return EXIT_FAILURE
    print(f"✓ All {len(results)} checks within tolerance")
    return EXIT_OK


def cmd_mnist_sanity(args: argparse.Namespace) -> int:
    config = MnistConfig(
        data_dir=data_path(args.data_dir),
        variant=args.arch,
        limit=args.limit,
        epochs=args.epochs,
        batch_size=args.batch_size,
        width_divisor=args.width_divisor,
        seed=args.seed,
        out_dir=args.out,
        collapse_threshold=args.threshold,
        deterministic=args.deterministic,
    )
    _banner(f"MNIST sanity check ({config.variant.name})")
    report = mnist_sanity(config)
    print(report.to_line())
    print(f"  {'✓' if report.all_finite else '✗'} Losses finite at every step")
    print(f"  {'✓' if report.grid_path else '✗'} Sample grid: {report.grid_path}")
    collapse = "collapsed" if report.diversity.collapsed else "diverse"
    print(f"  • Samples {collapse}: spread {report.diversity.generated_spread:.3f} "
          f"vs real {report.diversity.real_spread:.3f}")
    return EXIT_OK if report.all_finite and report.grid_path else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geogan",
        description="Satellite-to-map translation lab",
        formatter_class=HelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", default=None, help="also write log records here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build a paired tile dataset",
                       formatter_class=HelpFormatter)
    p.add_argument("--box", type=parse_box, required=True, help="lat_min,lat_max,lon_min,lon_max")
    p.add_argument("--zoom", type=int, default=14, help="tile zoom level")
    p.add_argument("--tile-px", type=int, default=512, help="tile side used for the grid")
    p.add_argument("--image-px", type=int, default=64, help="side of synthesized images")
    p.add_argument("--seasons", type=_seasons, default=parse_seasons("mar,jun,sep,dec"),
                   help="comma-separated seasons")
    p.add_argument("--year", type=int, default=2019, help="acquisition year")
    p.add_argument("--provider", choices=["mock", "synthetic"], default="mock",
                   help="mock serves a fixture tree; synthetic generates one first")
    p.add_argument("--fixtures", default=None, help="fixture tree for the mock provider")
    p.add_argument("--workers", type=int, default=4, help="concurrent fetches")
    p.add_argument("--out", default="data/geogan", help="dataset directory")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a translation model",
                       formatter_class=HelpFormatter)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="similarity metrics over a manifest",
                       formatter_class=HelpFormatter)
    p.add_argument("--model", default=None, help="checkpoint or parameter file")
    p.add_argument("--manifest", required=True, help="pairs to evaluate")
    p.add_argument("--identity-oracle", action="store_true",
                   help="score the ground-truth maps against themselves")
    p.add_argument("--arch", choices=[v.value for v in Variant], default=None,
                   help="architecture for the identity oracle")
    p.add_argument("--image-size", type=int, default=None, help="image side for the identity oracle")
    p.add_argument("--w-style", type=float, default=1.0, help="style weight inside the combined metric")
    p.add_argument("--batch-size", type=int, default=16, help="pairs per forward pass")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", default=None, help=f"also write the metrics line here (e.g. {METRICS_NAME})")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="render a grid of generated maps",
                       formatter_class=HelpFormatter)
    p.add_argument("--model", required=True, help="checkpoint or parameter file")
    p.add_argument("--manifest", required=True, help="pairs to sample from")
    p.add_argument("--n", type=int, default=9, help="samples (a perfect square)")
    p.add_argument("--seed", type=int, default=0, help="selection and noise seed")
    p.add_argument("--out", default="samples.png", help="output PNG")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification",
                       formatter_class=HelpFormatter)
    p.add_argument("--seed", type=int, default=0, help="initialization and probe seed")
    p.add_argument("--probes", type=int, default=40, help="coordinates probed per check")
    p.add_argument("--epsilon", type=float, default=1e-6, help="central-difference step")
    p.add_argument("--variants", default=None, help="comma-separated subset of encoder,direct,flow")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("mnist-sanity", help="train on MNIST and check for mode collapse",
                       formatter_class=HelpFormatter)
    p.add_argument("--data-dir", default="data/mnist", help="directory holding the idx image file")
    p.add_argument("--arch", choices=[v.value for v in Variant], default=Variant.ENCODER_GAN.value)
    p.add_argument("--limit", type=int, default=2000, help="digits to train on")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--width-divisor", type=int, default=8, help="divide every layer width by this factor")
    p.add_argument("--threshold", type=float, default=0.1,
                   help="collapse when generated spread is below this fraction of the real spread")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", default="runs/mnist", help="run directory")
    p.set_defaults(func=cmd_mnist_sanity)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except GeoGanError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"✗ {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
