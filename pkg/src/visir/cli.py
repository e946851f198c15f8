"""Command-line surface: build-data, train, eval, sweep, reconstruct.

Configuration is a flat ``key = value`` file with [model]/[train]/[data]/[run]
sections; every key can also be given as a ``--section.key value`` flag.
Precedence: flags > config file > defaults.  Unknown keys are rejected.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 divergence,
5 checkpoint/config mismatch.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from . import training
from .autodiff import no_grad
from .data import DataConfig, SpectrumSpec, read_grid, read_png, write_grid, write_png
from .metrics import evaluate_pair
from .model import ModelConfig, init_parameters, predict
from .training import (
    CheckpointFormatError,
    CheckpointMismatchError,
    DivergenceError,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_MISMATCH = 5


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# key -> (converter, default, help)
KEYS: dict[str, tuple] = {
    "model.patch_size": (int, 6, "LR patch edge in pixels"),
    "model.num_layers": (int, 2, "transformer blocks"),
    "model.num_heads": (int, 4, "attention heads"),
    "model.embed_dim": (int, 64, "token dimension"),
    "model.omega0": (float, 20.0, "sine activation frequency"),
    "model.siren_hidden_layers": (int, 2, "hidden layers per sine stack (1-6)"),
    "model.siren_hidden_dim": (int, 64, "hidden width of the sine stacks"),
    "model.scale": (int, 4, "upscaling factor"),
    "model.decoder_mode": (str, "per_token", "per_token | global_pooled"),
    "model.channels": (int, 3, "image channels"),
    "model.lr_height": (int, 60, "LR input height"),
    "model.lr_width": (int, 60, "LR input width"),
    "model.variant": (str, "visir", "visir | vit_mlp"),
    "model.post_norm": (_parse_bool, False, "literal residual-then-norm block ordering"),
    "model.decoder_hidden_layers": (_parse_optional_int, None, "decoder depth override (default: same as stacks)"),
    "train.learning_rate": (float, 1e-4, "Adam learning rate"),
    "train.steps": (int, 500, "optimization steps"),
    "train.batch_size": (int, 1, "images per step"),
    "train.eval_interval": (int, 0, "steps between test-split PSNR probes (0 = never)"),
    "data.sources": (int, 10, "number of synthetic source grids"),
    "data.source_height": (int, 720, "source grid height"),
    "data.source_width": (int, 1440, "source grid width"),
    "data.tile": (int, 240, "HR tile edge"),
    "data.scale": (int, 4, "downsampling factor"),
    "data.train_fraction": (float, 0.8, "train share of the tile split"),
    "data.components": (str, "1.0:2:17,0.6:7:69,0.35:23:0,0.25:31:52",
                        "sinusoid components amp:cycles:angle_deg, comma separated"),
    "data.background": (float, 0.4, "smooth background amplitude"),
    "data.background_cycles": (int, 3, "max integer frequency of the background"),
    "sweep.frequencies": (str, "10,20,30,40,50,60", "omega0 grid"),
    "sweep.layers": (str, "1,2,3,4,5,6", "hidden-layer grid"),
    "run.seed": (int, 0, "global seed"),
    "run.out": (str, "out", "output directory"),
}


def _flag_for(key: str) -> str:
    return "--" + key


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visir", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="shorthand for --run.seed")
        p.add_argument("--out", type=str, default=None, help="shorthand for --run.out")
        for key, (_, default, help_text) in KEYS.items():
            p.add_argument(_flag_for(key), dest=key, type=str, default=None,
                           help=f"{help_text} (default {default})")

    p_build = sub.add_parser("build-data", help="generate synthetic SR pairs and a manifest")
    common(p_build)

    p_train = sub.add_parser("train", help="train a model on a dataset manifest")
    common(p_train)
    p_train.add_argument("--manifest", type=str, required=True, help="dataset manifest path")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval)
    p_eval.add_argument("--manifest", type=str, required=True)
    p_eval.add_argument("--checkpoint", type=str, required=True)
    p_eval.add_argument("--split", type=str, default="test", choices=("train", "test"))

    p_sweep = sub.add_parser("sweep", help="frequency x hidden-layer grid search")
    common(p_sweep)
    p_sweep.add_argument("--manifest", type=str, required=True)

    p_rec = sub.add_parser("reconstruct", help="super-resolve one LR image")
    common(p_rec)
    p_rec.add_argument("--checkpoint", type=str, required=True)
    p_rec.add_argument("--input", type=str, required=True, help="LR image (.vsgr or .png)")
    p_rec.add_argument("--hr", type=str, default=None, help="optional HR reference for metrics")
    return parser


def load_settings(ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags; reject unknown keys."""
    settings = {key: default for key, (_, default, _) in KEYS.items()}
    if ns.config is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        read = parser.read(ns.config)
        if not read:
            raise OSError(f"cannot read config file {ns.config}")
        for section in parser.sections():
            for name, value in parser.items(section):
                key = f"{section}.{name}"
                if key not in KEYS:
                    raise ConfigError(f"unknown config key '{key}'")
                conv = KEYS[key][0]
                try:
                    settings[key] = conv(value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for '{key}': {exc}") from exc
    for key, (conv, _, _) in KEYS.items():
        raw = getattr(ns, key, None)
        if raw is not None:
            try:
                settings[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {exc}") from exc
    if ns.seed is not None:
        settings["run.seed"] = ns.seed
    if ns.out is not None:
        settings["run.out"] = ns.out
    return settings


def _model_config(settings: dict, **overrides) -> ModelConfig:
    kwargs = {
        "patch_size": settings["model.patch_size"],
        "num_layers": settings["model.num_layers"],
        "num_heads": settings["model.num_heads"],
        "embed_dim": settings["model.embed_dim"],
        "lr_height": settings["model.lr_height"],
        "lr_width": settings["model.lr_width"],
        "omega0": settings["model.omega0"],
        "siren_hidden_layers": settings["model.siren_hidden_layers"],
        "siren_hidden_dim": settings["model.siren_hidden_dim"],
        "scale": settings["model.scale"],
        "decoder_mode": settings["model.decoder_mode"],
        "channels": settings["model.channels"],
        "variant": settings["model.variant"],
        "post_norm": settings["model.post_norm"],
        "decoder_hidden_layers": settings["model.decoder_hidden_layers"],
    }
    kwargs.update(overrides)
    try:
        return ModelConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(settings: dict) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=settings["train.learning_rate"],
            steps=settings["train.steps"],
            batch_size=settings["train.batch_size"],
            seed=settings["run.seed"],
            eval_interval=settings["train.eval_interval"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_components(text: str) -> tuple[tuple[float, float, float], ...]:
    components = []
    text = text.strip()
    if not text:
        return ()
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(f"bad value for 'data.components': expected amp:cycles:angle_deg, got {part!r}")
        amp, cycles, angle_deg = (float(b) for b in bits)
        components.append((amp, cycles, math.radians(angle_deg)))
    return tuple(components)


def _data_config(settings: dict) -> DataConfig:
    if settings["data.tile"] <= 0 or settings["data.source_height"] % settings["data.tile"] != 0 \
            or settings["data.source_width"] % settings["data.tile"] != 0:
        raise ConfigError(
            f"'data.tile' = {settings['data.tile']} does not tile the "
            f"{settings['data.source_height']}x{settings['data.source_width']} source grid")
    if settings["data.tile"] % settings["data.scale"] != 0:
        raise ConfigError(f"'data.scale' = {settings['data.scale']} does not divide 'data.tile'")
    spectrum = SpectrumSpec(
        components=_parse_components(settings["data.components"]),
        background_amplitude=settings["data.background"],
        background_max_cycles=settings["data.background_cycles"],
    )
    return DataConfig(
        sources=settings["data.sources"],
        source_height=settings["data.source_height"],
        source_width=settings["data.source_width"],
        tile=settings["data.tile"],
        scale=settings["data.scale"],
        seed=settings["run.seed"],
        train_fraction=settings["data.train_fraction"],
        spectrum=spectrum,
    )


def _out_dir(settings: dict) -> Path:
    out = Path(settings["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _geometry_from_manifest(settings: dict, manifest) -> dict:
    return {
        "lr_height": manifest.tile_height // manifest.scale,
        "lr_width": manifest.tile_width // manifest.scale,
        "scale": manifest.scale,
        "channels": 3,
    }


def cmd_build_data(ns: argparse.Namespace) -> int:
    settings = load_settings(ns)
    cfg = _data_config(settings)
    out = _out_dir(settings)
    manifest = datamod.build_dataset(cfg, out)
    train_n = len(manifest.split("train"))
    test_n = len(manifest.split("test"))
    print(f"{len(manifest.entries)} pairs ({train_n} train / {test_n} test)")
    print(f"manifest: {out / 'manifest.json'}")
    return EXIT_OK


def cmd_train(ns: argparse.Namespace) -> int:
    settings = load_settings(ns)
    manifest = datamod.load_manifest(ns.manifest)
    model_cfg = _model_config(settings, **_geometry_from_manifest(settings, manifest))
    train_cfg = _train_config(settings)
    out = _out_dir(settings)
    model = init_parameters(model_cfg, settings["run.seed"])
    eval_pairs = datamod.load_pairs(manifest, "test") if train_cfg.eval_interval > 0 else None
    result = training.train(model, manifest, train_cfg, eval_pairs=eval_pairs)
    save_checkpoint(result.model, out / "model.vsck")
    training.write_loss_curve(result.curve, out / "loss_curve.csv")
    final = result.final_loss
    print(f"final train loss: {'n/a (0 steps)' if final is None else repr(final)}")
    print(f"checkpoint: {out / 'model.vsck'}")
    return EXIT_OK


def _check_explicit_model_keys(ns: argparse.Namespace, settings: dict, config: ModelConfig) -> None:
    """Explicit --model.* flags must agree with the loaded checkpoint."""
    geometry = {"model.lr_height", "model.lr_width", "model.scale", "model.channels"}
    for key in KEYS:
        if not key.startswith("model.") or key in geometry:
            continue
        if getattr(ns, key, None) is None:
            continue
        attr = key.split(".", 1)[1]
        if getattr(config, attr) != settings[key]:
            raise CheckpointMismatchError(
                f"'{key}' = {settings[key]} conflicts with checkpoint value {getattr(config, attr)}")


def cmd_eval(ns: argparse.Namespace) -> int:
    settings = load_settings(ns)
    manifest = datamod.load_manifest(ns.manifest)
    model = load_checkpoint(ns.checkpoint)
    _check_explicit_model_keys(ns, settings, model.config)
    if model.config.lr_height * model.config.scale != manifest.tile_height \
            or model.config.lr_width * model.config.scale != manifest.tile_width:
        raise CheckpointMismatchError(
            f"checkpoint geometry {model.config.lr_height}x{model.config.lr_width}@{model.config.scale}x "
            f"does not match manifest tiles {manifest.tile_height}x{manifest.tile_width}")
    out = _out_dir(settings)
    entries = manifest.split(ns.split)
    reports, summary = training.evaluate(model, manifest, split=ns.split)
    training.write_eval_csv([e.pair_id for e in entries], reports, out / "eval.csv")
    print(f"{ns.split} split: {summary.count} images")
    for name, stat in (("MSE", summary.mse), ("PSNR", summary.psnr), ("SSIM", summary.ssim)):
        print(f"{name}: max {stat.max:.6g} | mean {stat.mean:.6g} | min {stat.min:.6g}")
    if summary.psnr_inf_count:
        print(f"note: {summary.psnr_inf_count} perfect reconstructions excluded from the PSNR mean")
    print(f"per-image metrics: {out / 'eval.csv'}")
    return EXIT_OK


def cmd_sweep(ns: argparse.Namespace) -> int:
    settings = load_settings(ns)
    manifest = datamod.load_manifest(ns.manifest)
    model_cfg = _model_config(settings, **_geometry_from_manifest(settings, manifest))
    train_cfg = _train_config(settings)
    out = _out_dir(settings)
    try:
        frequencies = tuple(float(f) for f in settings["sweep.frequencies"].split(","))
        layer_counts = tuple(int(c) for c in settings["sweep.layers"].split(","))
    except ValueError as exc:
        raise ConfigError(f"bad sweep grid: {exc}") from exc
    result = training.sweep(model_cfg, manifest, train_cfg, frequencies, layer_counts)
    training.write_sweep_csv(result, out / "sweep.csv")
    for layers, freq, message in result.failures:
        print(f"cell (layers={layers}, omega0={freq}) failed: {message}", file=sys.stderr)
    try:
        (layers, freq), psnr = result.best()
    except ValueError:
        print("every sweep cell failed", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"best cell: hidden_layers={layers}, omega0={freq}, mean test PSNR {psnr:.4f} dB")
    print(f"grid: {out / 'sweep.csv'}")
    return EXIT_OK


def _read_image(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix.lower() == ".png":
        return read_png(p)
    values, _ = read_grid(p)
    return values


def cmd_reconstruct(ns: argparse.Namespace) -> int:
    settings = load_settings(ns)
    model = load_checkpoint(ns.checkpoint)
    _check_explicit_model_keys(ns, settings, model.config)
    out = _out_dir(settings)
    lr = _read_image(ns.input)
    expected = (model.config.lr_height, model.config.lr_width, model.config.channels)
    if lr.shape != expected:
        raise CheckpointMismatchError(f"input shape {lr.shape} does not match checkpoint LR shape {expected}")
    with no_grad():
        recon = predict(lr, model).data
    write_png(out / "reconstruction.png", recon)
    write_grid(out / "reconstruction.vsgr", recon)
    print(f"reconstruction: {out / 'reconstruction.png'} ({recon.shape[0]}x{recon.shape[1]})")
    if ns.hr is not None:
        hr = _read_image(ns.hr)
        if hr.shape != recon.shape:
            raise CheckpointMismatchError(f"HR reference shape {hr.shape} does not match output {recon.shape}")
        # |error| mapped linearly onto the 8-bit range; the max is printed so
        # the absolute scale is recoverable.
        err = np.abs(recon - hr)
        max_err = float(err.max())
        write_png(out / "error.png", err)
        report = evaluate_pair(hr, recon)
        print(f"max |error|: {max_err:.6g}")
        print(f"mse {report.mse:.6g} | psnr {report.psnr:.4f} dB | ssim {report.ssim:.6g}")
        print(f"error map: {out / 'error.png'}")
    return EXIT_OK


COMMANDS = {
    "build-data": cmd_build_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "reconstruct": cmd_reconstruct,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return COMMANDS[ns.command](ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointFormatError, CheckpointMismatchError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        # ValueError here means malformed input data (grids, manifests).
        is_io = isinstance(exc, OSError)
        print(f"{'i/o' if is_io else 'data'} error: {exc}", file=sys.stderr)
        return EXIT_IO if is_io else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
