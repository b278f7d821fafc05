"""Flat ``key = value`` configuration files.

Lines look like ``train.learning_rate = 0.001``; ``#`` starts a comment.
Unknown keys and unparseable values are errors that name the line. A repeated
key keeps its last value and logs a warning.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple

from .augment import AugmentConfig
from .dataset import SplitSpec
from .errors import ConfigError
from .preprocess import PreprocessConfig
from .train import TrainConfig

log = logging.getLogger(__name__)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default, description)
SCHEMA: Dict[str, Tuple[Callable[[str], Any], Any, str]] = {
    "data.image_size": (int, 224, "side of the square model input, pixels"),
    "data.in_channels": (int, 3, "1 = grayscale model input, 3 = RGB"),
    "data.sigma": (float, 1.0, "Gaussian blur sigma before segmentation"),
    "data.crop_margin": (float, 0.05, "crop margin per side, fraction of the box"),
    "data.use_depth": (_parse_bool, False, "AND the Otsu mask with a depth band"),
    "data.depth_near_mm": (int, 1, "near edge of the depth band, mm"),
    "data.depth_far_mm": (int, 65535, "far edge of the depth band, mm"),
    "data.f_train": (float, 0.8, "training fraction per class"),
    "data.f_val": (float, 0.1, "validation fraction per class"),
    "data.f_test": (float, 0.1, "test fraction per class"),
    "aug.enabled": (_parse_bool, True, "augment training samples on the fly"),
    "aug.rotation_max_deg": (float, 30.0, "max absolute rotation, degrees"),
    "aug.p_flip_h": (float, 0.5, "horizontal flip probability"),
    "aug.p_flip_v": (float, 0.0, "vertical flip probability"),
    "aug.brightness_max_delta": (int, 40, "max absolute brightness shift"),
    "model.unfreeze_last_block": (_parse_bool, False, "with --freeze, keep the last block and head conv trainable"),
    "train.learning_rate": (float, 0.001, "Adam learning rate"),
    "train.max_epochs": (int, 20, "epoch cap"),
    "train.batch_size": (int, 32, "mini-batch size"),
    "train.early_stop_patience": (int, 5, "epochs without val improvement before stopping"),
    "train.seed": (int, 0, "seed for initialization, shuffling and augmentation"),
}


@dataclass
class Config:
    values: Dict[str, Any] = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["train.learning_rate"], v["train.max_epochs"], v["train.batch_size"],
                           v["train.early_stop_patience"], v["train.seed"])

    def augment_config(self) -> AugmentConfig:
        v = self.values
        return AugmentConfig(v["aug.rotation_max_deg"], v["aug.p_flip_h"], v["aug.p_flip_v"],
                             v["aug.brightness_max_delta"], v["train.seed"])

    def split_spec(self) -> SplitSpec:
        v = self.values
        return SplitSpec(v["data.f_train"], v["data.f_val"], v["data.f_test"])

    def preprocess_config(self) -> PreprocessConfig:
        v = self.values
        return PreprocessConfig(v["data.image_size"], v["data.sigma"], v["data.crop_margin"],
                                v["data.use_depth"], v["data.depth_near_mm"], v["data.depth_far_mm"])


def parse_config(data: bytes) -> Config:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not valid UTF-8 ({exc})") from None
    cfg = Config()
    seen: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            parsed = parser(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse {value!r} for {key}") from None
        if key in seen:
            log.warning("config line %d: %s repeats line %d; the last value wins", lineno, key, seen[key])
        seen[key] = lineno
        cfg.values[key] = parsed
    try:
        cfg.train_config()
        cfg.augment_config()
        cfg.split_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["data.in_channels"] not in (1, 3):
        raise ConfigError("data.in_channels must be 1 or 3")
    if cfg["data.image_size"] < 1:
        raise ConfigError("data.image_size must be >= 1")
    return cfg


def describe_keys() -> str:
    width = max(len(k) for k in SCHEMA)
    lines = ["configuration keys (key = default: meaning):"]
    for key, (_, default, text) in SCHEMA.items():
        shown = str(default).lower() if isinstance(default, bool) else default
        lines.append(f"  {key:<{width}} = {shown}: {text}")
    return "\n".join(lines)
