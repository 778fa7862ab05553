"""Run configuration: a flat INI with one section per module.

The effective config (defaults materialized) is written next to every
run's outputs, and reloading that file reproduces the run exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .encoder import EncoderConfig
from .errors import ConfigError
from .features import FeatureConfig
from .training import TrainConfig

_TASKS = ("classify", "rank")
_MODES = ("word", "segment")


@dataclass
class RunConfig:
    task: str
    mode: str
    train_path: Path
    dev_path: Optional[Path]
    test_path: Optional[Path]
    min_count: int
    feature_config: FeatureConfig
    encoder_config: EncoderConfig
    disc_hidden_units: int
    disc_hidden_layers: int
    train_config: TrainConfig
    pretrained_embeddings: Optional[Path] = None


_SCHEMA = {
    "task": {"type", "mode"},
    "data": {"train", "dev", "test", "min_count"},
    "features": {"map_slots", "segment_size", "segment_embed_dim", "share_embedding"},
    "encoder": {
        "embed_dim", "num_blocks", "conv_layers_per_block", "conv_kernel",
        "hidden_dim", "output_dim", "num_classes", "symmetric_prediction",
        "share_towers", "freeze_embeddings", "pretrained_embeddings",
    },
    "discriminator": {"hidden_units", "hidden_layers"},
    "training": {
        "learning_rate", "batch_size", "max_steps", "mi_weight", "seed",
        "eval_every", "grad_clip", "discriminator_lr", "patience",
        "mi_ema_correction",
    },
}


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}

    def _get(self, key, default):
        v = self.raw.get(key)
        if v is None or v.strip() == "" or v.strip().lower() == "none":
            return default
        return v.strip()

    def text(self, key, default=None, choices=None, required=False):
        v = self._get(key, default)
        if v is None and required:
            raise ConfigError(f"[{self.name}] {key} is required")
        if choices and v is not None and v not in choices:
            raise ConfigError(f"[{self.name}] {key} must be one of {choices}, got {v!r}")
        return v

    def integer(self, key, default=None, required=False):
        v = self._get(key, default)
        if v is None:
            if required:
                raise ConfigError(f"[{self.name}] {key} is required")
            return None
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.name}] {key} must be an integer, got {v!r}")

    def floating(self, key, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.name}] {key} must be a number, got {v!r}")

    def flag(self, key, default=False):
        v = self._get(key, None)
        if v is None:
            return default
        lowered = str(v).lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.name}] {key} must be a boolean, got {v!r}")

    def path(self, key, required=False, must_exist=True):
        v = self._get(key, None)
        if v is None:
            if required:
                raise ConfigError(f"[{self.name}] {key} is required")
            return None
        p = Path(v)
        if must_exist and not p.exists():
            raise ConfigError(f"[{self.name}] {key}: path does not exist: {p}")
        return p


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config {path}: {e}")

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    task_sec = _Section(parser, "task")
    data = _Section(parser, "data")
    feat = _Section(parser, "features")
    enc = _Section(parser, "encoder")
    disc = _Section(parser, "discriminator")
    train = _Section(parser, "training")

    task = task_sec.text("type", choices=_TASKS, required=True)
    mode = task_sec.text("mode", choices=_MODES, required=True)

    segment_size = feat.integer("segment_size")
    if mode == "segment" and segment_size is None:
        raise ConfigError("[features] segment_size (D) is required in segment mode")

    num_classes = enc.integer("num_classes", "2")
    if task == "rank" and num_classes != 2:
        raise ConfigError("[encoder] num_classes must be 2 for ranking tasks")

    feature_config = FeatureConfig(
        mode=mode,
        map_slots=feat.integer("map_slots", "3", required=True),
        segment_size=segment_size,
        segment_embed_dim=feat.integer("segment_embed_dim", "32"),
        share_embedding=feat.flag("share_embedding", True),
    )
    encoder_config = EncoderConfig(
        embed_dim=enc.integer("embed_dim", "300"),
        num_blocks=enc.integer("num_blocks", "2"),
        conv_layers_per_block=enc.integer("conv_layers_per_block", "1"),
        conv_kernel=enc.integer("conv_kernel", "3"),
        hidden_dim=enc.integer("hidden_dim", "150"),
        output_dim=enc.integer("output_dim", "200"),
        num_classes=num_classes,
        symmetric_prediction=enc.flag("symmetric_prediction", False),
        share_towers=enc.flag("share_towers", True),
        freeze_embeddings=enc.flag("freeze_embeddings", False),
    )
    train_config = TrainConfig(
        learning_rate=train.floating("learning_rate", "1e-3"),
        batch_size=train.integer("batch_size", "32"),
        max_steps=train.integer("max_steps", "1000"),
        mi_weight=train.floating("mi_weight", "1.0"),
        seed=train.integer("seed", "0"),
        eval_every=train.integer("eval_every", "100"),
        grad_clip=train.floating("grad_clip", "5.0"),
        discriminator_lr=train.floating("discriminator_lr"),
        patience=train.integer("patience"),
        mi_ema_correction=train.flag("mi_ema_correction", False),
    )
    return RunConfig(
        task=task,
        mode=mode,
        train_path=data.path("train", required=True),
        dev_path=data.path("dev"),
        test_path=data.path("test"),
        min_count=data.integer("min_count", "1"),
        feature_config=feature_config,
        encoder_config=encoder_config,
        disc_hidden_units=disc.integer("hidden_units", "512"),
        disc_hidden_layers=disc.integer("hidden_layers", "2"),
        train_config=train_config,
        pretrained_embeddings=enc.path("pretrained_embeddings"),
    )


def save_run_config(config: RunConfig, path) -> None:
    """Write the fully materialized configuration."""
    parser = configparser.ConfigParser()
    parser["task"] = {"type": config.task, "mode": config.mode}
    data = {"train": str(config.train_path), "min_count": str(config.min_count)}
    if config.dev_path is not None:
        data["dev"] = str(config.dev_path)
    if config.test_path is not None:
        data["test"] = str(config.test_path)
    parser["data"] = data

    fc = config.feature_config
    feats = {"map_slots": str(fc.map_slots),
             "segment_embed_dim": str(fc.segment_embed_dim),
             "share_embedding": str(fc.share_embedding).lower()}
    if fc.segment_size is not None:
        feats["segment_size"] = str(fc.segment_size)
    parser["features"] = feats

    ec = dataclasses.asdict(config.encoder_config)
    enc = {k: (str(v).lower() if isinstance(v, bool) else str(v)) for k, v in ec.items()}
    if config.pretrained_embeddings is not None:
        enc["pretrained_embeddings"] = str(config.pretrained_embeddings)
    parser["encoder"] = enc

    parser["discriminator"] = {
        "hidden_units": str(config.disc_hidden_units),
        "hidden_layers": str(config.disc_hidden_layers),
    }
    tc = dataclasses.asdict(config.train_config)
    parser["training"] = {
        k: ("none" if v is None else str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v))
        for k, v in tc.items()
    }
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
