"""Command-line entry point: ``highdan {synth,train,eval,predict,params}``.

Exit codes: 0 success, 2 usage/config errors, 3 data or metric errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import (ArgumentError, ConfigError, DataError, NumericError, UndefinedMetricError)

log = logging.getLogger("highdan")

REFERENCE_PARAMS = 16.55e6

# index 0 is the ignore colour; 1..13 follow raster_store.CLASS_NAMES
PALETTE = np.array([
    [64, 64, 64],      # ignore / unlabeled (dark gray)
    [230, 25, 75],     # urban fabric
    [245, 130, 48],    # industrial, commercial and transport
    [145, 30, 180],    # mine, dump and construction
    [70, 240, 240],    # artificial vegetated areas
    [255, 225, 25],    # arable land
    [210, 245, 60],    # permanent crops
    [250, 190, 212],   # pastures
    [0, 100, 0],       # forests
    [170, 110, 40],    # shrub
    [255, 250, 200],   # open spaces with little vegetation
    [0, 128, 128],     # inland wetlands
    [0, 130, 200],     # water bodies
    [255, 255, 255],   # street network
], dtype=np.uint8)


def colorize(labels: np.ndarray) -> np.ndarray:
    """Map a label raster to RGB; ids past 13 reuse the palette cyclically."""
    idx = labels.astype(np.int64)
    idx = np.where(idx == 0, 0, (idx - 1) % (len(PALETTE) - 1) + 1)
    return PALETTE[idx]


def _range(values: List[float], flag: str):
    if len(values) == 1:
        return (values[0], values[0])
    if len(values) == 2:
        return (values[0], values[1])
    raise ArgumentError(f"{flag} takes one value or a low/high pair")


def _parse_bands(text: str) -> Dict[str, int]:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, n = part.partition("=")
        try:
            out[name.strip()] = int(n)
        except ValueError:
            raise ArgumentError(f"bad band spec {part!r}; expected name=count") from None
    if not out:
        raise ArgumentError("no bands given")
    return out


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    from .raster_store import ShiftSpec, save_scene, synth_scene_pair

    shift = ShiftSpec(gain_range=_range(args.gain, "--gain"),
                      offset_range=_range(args.offset, "--offset"),
                      noise_std=args.noise, skew=args.skew,
                      seed=args.seed if args.shift_seed is None else args.shift_seed)
    src, tgt = synth_scene_pair(
        args.seed, shift, args.height, args.width, bands=_parse_bands(args.bands),
        num_classes=args.num_classes, pixel_noise=args.pixel_noise,
        target_layout_seed=args.target_seed, unlabeled_fraction=args.unlabeled, name=args.name)
    out = Path(args.out)
    save_scene(src, out / "source")
    save_scene(tgt, out / "target")
    print(json.dumps({"shift": shift.to_dict(), "source": str(out / "source"),
                      "target": str(out / "target")}, indent=2))
    return 0


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    from .trainer import TrainConfig, fit

    try:
        raw = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    overrides = {"epochs": args.epochs, "seed": args.seed, "out_dir": args.out_dir,
                 "source_dir": args.source_dir, "target_dir": args.target_dir,
                 "iters_per_epoch": args.iters_per_epoch, "batch_size": args.batch_size,
                 "lr_segmenter": args.lr_segmenter, "lr_discriminator": args.lr_discriminator}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig.from_dict(raw, require_paths=True)
    out = Path(config.out_dir)
    try:
        trainer, trace = fit(config, out_dir=out)
    except NumericError as exc:
        raise NumericError(f"training aborted: {exc}", term=exc.term) from exc
    manifest = {
        "code_version": __version__,
        "python": platform.python_version(),
        "config": config.to_dict(),
        "active_modules": trainer.active_modules,
        "iterations": trainer.iteration,
        "checkpoint": str(out / "final.ckpt"),
        "trace": str(out / "trace.csv"),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2))
    if trace:
        print(f"{len(trace)} iterations; first total {trace[0].total:.4f}, "
              f"last total {trace[-1].total:.4f}")
    else:
        print("0 iterations; wrote initialized checkpoint")
    print(f"checkpoint: {out / 'final.ckpt'}")
    return 0


# ---------------------------------------------------------------- eval / predict

def _domain(args, trainer, scene) -> str:
    if args.domain != "auto":
        return args.domain
    return "source" if scene.name == trainer.source_name else "target"


def _run_inference(args, scene):
    from .trainer import Trainer, infer_full_scene

    trainer = Trainer.load(args.checkpoint)
    if scene.num_classes != trainer.num_classes:
        raise ConfigError(f"scene has {scene.num_classes} classes, checkpoint {trainer.num_classes}",
                          key="num_classes")
    domain = _domain(args, trainer, scene)
    apply_da = trainer.config.apply_da_inference if args.da is None else args.da
    labels, _ = infer_full_scene(trainer, scene, args.tile, args.stride, apply_da, domain)
    log.info("inference on %s as %s domain, attention correction %s", scene.name, domain,
             "on" if apply_da and domain == "target" else "off")
    return labels


def cmd_eval(args) -> int:
    from .metrics import ConfusionMatrix, accumulate, build_report, format_table, write_report
    from .raster_store import load_scene

    scene = load_scene(args.scene)
    if args.gt_as_pred:
        pred = np.where(scene.labels == scene.ignore_index, 1, scene.labels)
    elif args.checkpoint:
        pred = _run_inference(args, scene)
    else:
        raise ArgumentError("eval needs --checkpoint or --gt-as-pred")
    cm = accumulate(ConfusionMatrix.empty(scene.num_classes, scene.ignore_index), pred, scene.labels)
    report = build_report(cm, scene.class_names, args.f1_mode)
    if args.report:
        write_report(report, args.report)
    print(format_table(report))
    return 0


def cmd_predict(args) -> int:
    from PIL import Image

    from .raster_store import load_scene

    scene = load_scene(args.scene)
    labels = _run_inference(args, scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels.astype(np.uint8).tofile(out / "pred.u8")
    Image.fromarray(colorize(labels)).save(out / "pred.png")
    print(f"wrote {out / 'pred.u8'} and {out / 'pred.png'} ({scene.height}x{scene.width})")
    return 0


# ---------------------------------------------------------------- params

def param_report(config, in_channels: Dict[str, int], num_classes: int) -> Dict[str, int]:
    from .model import HighDAN

    model = HighDAN(config.encoder_config(in_channels), num_classes, tuple(config.decoder_widths),
                    tuple(config.feat_disc_widths) if config.enable_feature_da else None,
                    tuple(config.cat_disc_widths) if config.enable_category_da else None)
    return model.breakdown()


def cmd_params(args) -> int:
    from .trainer import TrainConfig

    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.stream_widths:
        raw["stream_widths"] = args.stream_widths
    config = TrainConfig.from_dict(raw, require_paths=False)
    counts = param_report(config, _parse_bands(args.bands), args.num_classes)
    width = max(len(k) for k in counts)
    for name, n in counts.items():
        print(f"{name:<{width}}  {n:>12,d}  {n / 1e6:8.3f} M")
    dev = (counts["total"] - REFERENCE_PARAMS) / REFERENCE_PARAMS * 100
    print(f"reference total 16.55 M; deviation {dev:+.1f}%")
    return 0


# ---------------------------------------------------------------- parser

class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows defaults, except unset (None) ones whose help text explains the fallback."""

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    from .trainer import TrainConfig

    fmt = _Formatter
    p = argparse.ArgumentParser(prog="highdan", formatter_class=fmt,
                                description="Multimodal segmentation with adversarial domain adaptation.")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", formatter_class=fmt, help="write a synthetic source/target scene pair")
    s.add_argument("--out", required=True, help="output directory (gets source/ and target/)")
    s.add_argument("--seed", type=int, default=0, help="layout seed")
    s.add_argument("--target-seed", type=int, default=None,
                   help="target layout seed (default: same layout as the source)")
    s.add_argument("--shift-seed", type=int, default=None, help="shift RNG seed (default: --seed)")
    s.add_argument("--height", type=int, default=256, help="scene rows")
    s.add_argument("--width", type=int, default=256, help="scene columns")
    s.add_argument("--bands", default="hsi=32,msi=4,sar=2", help="comma-separated name=count")
    s.add_argument("--num-classes", type=int, default=13, help="label classes (ids 1..n)")
    s.add_argument("--gain", type=float, nargs="+", default=[0.7, 1.3], help="gain value or low high")
    s.add_argument("--offset", type=float, nargs="+", default=[-0.2, 0.2],
                   help="offset value or low high")
    s.add_argument("--noise", type=float, default=0.05, help="target noise std")
    s.add_argument("--skew", type=float, default=0.0, help="target class-prior skew")
    s.add_argument("--pixel-noise", type=float, default=0.05, help="per-pixel noise in both scenes")
    s.add_argument("--unlabeled", type=float, default=0.0, help="fraction of cells marked ignore")
    s.add_argument("--name", default="synth", help="scene name prefix")
    s.set_defaults(func=cmd_synth)

    base = TrainConfig()
    t = sub.add_parser("train", formatter_class=fmt, help="train from a JSON config",
                       description="Flags override the config file; unset flags keep its value "
                                   "or the built-in default shown in brackets.")
    t.add_argument("config", help="JSON config file")
    t.add_argument("--epochs", type=int, default=None, help=f"override epochs [{base.epochs}]")
    t.add_argument("--seed", type=int, default=None, help=f"override seed [{base.seed}]")
    t.add_argument("--out-dir", default=None, help=f"override out_dir [{base.out_dir}]")
    t.add_argument("--source-dir", default=None, help="override source_dir [required]")
    t.add_argument("--target-dir", default=None,
                   help="override target_dir [required when adaptation is on]")
    t.add_argument("--iters-per-epoch", type=int, default=None,
                   help="override iters_per_epoch [one pass over the source tiles]")
    t.add_argument("--batch-size", type=int, default=None,
                   help=f"override batch_size [{base.batch_size}]")
    t.add_argument("--lr-segmenter", type=float, default=None,
                   help=f"override lr_segmenter [{base.lr_segmenter}]")
    t.add_argument("--lr-discriminator", type=float, default=None,
                   help=f"override lr_discriminator [{base.lr_discriminator}]")
    t.set_defaults(func=cmd_train)

    def inference_flags(q, with_checkpoint_required):
        q.add_argument("--checkpoint", required=with_checkpoint_required, default=None,
                       help="checkpoint written by train")
        q.add_argument("--scene", required=True, help="scene directory")
        q.add_argument("--tile", type=int, default=None, help="tile size (default: training tile)")
        q.add_argument("--stride", type=int, default=None, help="tile stride (default: tile)")
        q.add_argument("--domain", choices=["auto", "source", "target"], default="auto",
                       help="auto: source if the scene name matches the training scene")
        da = q.add_mutually_exclusive_group()
        da.add_argument("--da", dest="da", action="store_true", default=None,
                        help="apply attention correction on target scenes (default: from config)")
        da.add_argument("--no-da", dest="da", action="store_false",
                        help="skip attention correction")

    e = sub.add_parser("eval", formatter_class=fmt, help="evaluate a checkpoint on a labeled scene")
    inference_flags(e, False)
    e.add_argument("--report", default=None, help="JSON report path")
    e.add_argument("--f1-mode", choices=["standard", "paper_literal"], default="standard",
                   help="per-class F1 or the literal summed precision/recall variant")
    e.add_argument("--gt-as-pred", action="store_true",
                   help="score the labels against themselves (no checkpoint)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", formatter_class=fmt, help="write pred.u8 and pred.png")
    inference_flags(r, True)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_predict)

    m = sub.add_parser("params", formatter_class=fmt, help="parameter counts per module")
    m.add_argument("--config", default=None, help="optional JSON config (paths not required)")
    m.add_argument("--bands", default="hsi=30,msi=4,sar=2",
                   help="network input channels per modality (after PCA)")
    m.add_argument("--num-classes", type=int, default=13, help="output classes")
    m.add_argument("--stream-widths", type=int, nargs="+", default=None,
                   help="override stream widths; one width gives a zero-stage encoder")
    m.set_defaults(func=cmd_params)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ArgumentError) as exc:
        key = getattr(exc, "key", None)
        print(f"error: {exc}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return 2
    except (DataError, UndefinedMetricError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
