"""Command-line front end: ``mvssnet {gen,train,eval,infer}``.

Options come from three layers, highest priority first: command-line flags,
a ``key=value`` config file (``--config``; ``#`` starts a comment), and the
built-in defaults.  Unknown config keys are rejected.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .autodiff import Tensor, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import evaluate
from .layers import LambdaSchedule
from .losses import ConfigError, LossWeights
from .netpbm import read_ppm, write_pgm
from .network import HEADS, ModelConfig, MvssModel, predict
from .synthdata import KINDS, GenConfig, generate, read_dataset, write_dataset
from .training import TrainConfig, train

log = logging.getLogger("mvssnet")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _head(v: str) -> str:
    if v not in HEADS:
        raise ValueError(f"must be one of {', '.join(HEADS)}")
    return v


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str


SCHEMA: dict[str, Key] = {
    "seed": Key(int, 0, "random seed for data, init and batch order"),
    "out": Key(str, "out", "output directory"),
    "data": Key(str, None, "dataset directory (train, eval)"),
    "checkpoint": Key(str, None, "checkpoint path (eval, infer)"),
    "image": Key(str, None, "input PPM image (infer)"),
    "n": Key(int, 128, "number of samples to generate"),
    "size": Key(int, 64, "generated image height and width"),
    "mix_splice": Key(float, 0.25, "fraction of spliced samples"),
    "mix_copymove": Key(float, 0.25, "fraction of copy-move samples"),
    "mix_inpaint": Key(float, 0.25, "fraction of inpainted samples"),
    "mix_authentic": Key(float, 0.25, "fraction of authentic samples"),
    "head": Key(_head, "convgem", "image-score head"),
    "alpha": Key(float, 0.16, "pixel-scale loss weight"),
    "beta": Key(float, 0.04, "image-scale loss weight"),
    "epochs": Key(int, 60, "training epochs"),
    "batch_size": Key(int, 8, "batch size (half manipulated, half authentic)"),
    "lr": Key(float, 0.05, "SGD learning rate"),
    "momentum": Key(float, 0.9, "SGD momentum"),
    "lambda0": Key(float, 0.99, "initial ConvGeM skip weight"),
    "gamma": Key(float, 2.0, "ConvGeM decay exponent"),
    "threshold": Key(float, 0.5, "binarisation threshold"),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, Any]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value, f"{origin}:{lineno}")
    return out


def _coerce(key: str, value: str, where: str) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r} (known: {', '.join(sorted(SCHEMA))})")
    try:
        return SCHEMA[key].parse(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {value!r} for {key}: {exc}") from None


def resolve(flags: dict[str, Any], config_path: str | None) -> dict[str, Any]:
    """Merge defaults < config file < explicitly given flags."""
    cfg = {k: entry.default for k, entry in SCHEMA.items()}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        cfg.update(parse_config_text(path.read_text(), str(path)))
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def gen_config(cfg: dict) -> GenConfig:
    try:
        return GenConfig(height=cfg["size"], width=cfg["size"], seed=cfg["seed"],
                         mix={k: cfg[f"mix_{k}"] for k in KINDS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(
            weights=LossWeights(cfg["alpha"], cfg["beta"]),
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            lr=cfg["lr"],
            momentum=cfg["momentum"],
            lambda0=cfg["lambda0"],
            gamma=cfg["gamma"],
            seed=cfg["seed"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- commands


def cmd_gen(cfg: dict) -> int:
    gcfg = gen_config(cfg)
    if cfg["n"] <= 0:
        raise ConfigError("n must be positive")
    samples = generate(gcfg, cfg["n"])
    out = write_dataset(samples, cfg["out"])
    counts = {k: sum(s.kind == k for s in samples) for k in KINDS}
    print(f"wrote {len(samples)} samples to {out}: " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    _require(cfg, "data")
    tcfg = train_config(cfg)
    samples = read_dataset(cfg["data"])
    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise ConfigError(f"training needs both manipulated and authentic samples, found labels {sorted(labels)}")
    schedule = LambdaSchedule(tcfg.lambda0, tcfg.epochs - 1, tcfg.gamma)
    model = MvssModel(ModelConfig(head=cfg["head"], seed=cfg["seed"], schedule=schedule))
    report = train(model, samples, tcfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.ckpt", epoch=tcfg.epochs)
    (out / "report.txt").write_text(report.to_table())
    (out / "report.csv").write_text(report.to_csv())
    print(report.to_table(), end="")
    print(f"checkpoint: {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "data", "checkpoint")
    model, _ = load_checkpoint(cfg["checkpoint"])
    samples = read_dataset(cfg["data"])
    report = evaluate(model, samples, cfg["threshold"])
    text = report.to_text()
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(text)
    print(text, end="" if text.endswith("\n") else "\n")
    return EXIT_OK


def cmd_infer(cfg: dict) -> int:
    _require(cfg, "checkpoint", "image")
    model, _ = load_checkpoint(cfg["checkpoint"])
    image = read_ppm(cfg["image"])
    with no_grad():
        pred = predict(Tensor(image[None]), model)
    seg = pred.seg.data[0, 0]
    edge = pred.edge.data[0, 0]
    fy, fx = seg.shape[0] // edge.shape[0], seg.shape[1] // edge.shape[1]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(cfg["image"]).stem
    write_pgm(out / f"{stem}_mask.pgm", (seg >= cfg["threshold"]).astype(np.float64))
    write_pgm(out / f"{stem}_prob.pgm", seg)
    write_pgm(out / f"{stem}_edge.pgm", np.kron(edge, np.ones((fy, fx))))
    print(f"{pred.score.item():.6f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvssnet", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="key=value config file")
    for key, entry in SCHEMA.items():
        kind = str if entry.parse is _head else entry.parse
        extra = {"choices": HEADS} if key == "head" else {}
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind, default=None,
                            help=f"{entry.help} (default {entry.default})", **extra)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: getattr(args, k) for k in SCHEMA}
    try:
        cfg = resolve(flags, args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # reported, not re-raised: the exit code carries the outcome
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
