"""Flat key=value run configuration shared by every CLI command.

A config file is plain text: one ``key = value`` per line, ``#`` starts a
comment. Unknown keys are rejected by name. Values are typed by the
default's type. The shipped defaults are the desk-scale demo settings;
library dataclasses keep their own larger literature-style defaults.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from glitchguard.model import AutoencoderConfig, TrainingHyper
from glitchguard.synth import CATEGORIES


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, bad file)."""


DEFAULTS: dict[str, object] = {
    "seed": 7,
    "window": 10,
    "stride": 1,
    "frame.height": 32,
    "frame.width": 32,

    "model.conv1.channels": 16,
    "model.conv1.kernel": 7,
    "model.conv1.stride": 4,
    "model.conv1.padding": 0,
    "model.conv2.channels": 8,
    "model.conv2.kernel": 5,
    "model.conv2.stride": 2,
    "model.conv2.padding": 0,
    "model.lstm.hidden1": 12,
    "model.lstm.hidden2": 6,
    "model.lstm.hidden3": 12,
    "model.lstm.kernel": 3,
    "model.seed": 1,

    "train.lr": 2e-3,
    "train.batch": 8,
    "train.steps": 1500,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.weight_decay": 0.0,
    "train.seed": 2,

    "score.batch": 32,

    "threshold.default": 0.5,
    "threshold.black_screen": 0.5,
    "threshold.texture_corruption": 0.5,
    "threshold.boundary_hole": 0.5,
    "threshold.screen_tear": 0.5,

    "cluster.eps": 0.0,  # 0 = median 4-nearest-neighbor heuristic
    "cluster.min_pts": 3,
    "cluster.resample": 128,
    "cluster.exemplars_per_category": 1,
    "cluster.exclude": "",

    "gen.normal_videos": 12,
    "gen.normal_frames": 300,
    "gen.buggy_videos_per_category": 10,
    "gen.buggy_frames": 140,
    "gen.categories": "black_screen,texture_corruption,boundary_hole",
    "gen.sprites": 2,
    "gen.train_fraction": 0.7,
    "gen.seed": 3,

    "demo.second_pass": "auto",  # auto | none | <category name>
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key '{key}' expects "
                          f"{type(default).__name__}, got {raw!r}")


def parse_config_text(text: str, where: str = "<config>") -> dict:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected key = value, got "
                              f"{line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{where}:{lineno}: unknown config key '{key}'")
        values[key] = _coerce(key, raw)
    return values


class RunConfig:
    """Resolved configuration: defaults, then file values, then overrides."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        if values:
            for key in values:
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key '{key}'")
            self.values.update(values)
        self._validate()

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        values: dict[str, object] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"config file not found: {path}")
            values.update(parse_config_text(path.read_text(), str(path)))
        if overrides:
            for key, raw in overrides.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key '{key}'")
                values[key] = raw if not isinstance(raw, str) \
                    else _coerce(key, raw)
        return cls(values)

    def _validate(self):
        for category in self.gen_categories():
            if category not in CATEGORIES:
                raise ConfigError(f"gen.categories contains unknown category "
                                  f"'{category}'")
        if not 0.0 < float(self.values["gen.train_fraction"]) < 1.0:
            raise ConfigError("gen.train_fraction must be in (0, 1)")
        for key in ("window", "stride", "cluster.resample"):
            if int(self.values[key]) < 1:
                raise ConfigError(f"{key} must be >= 1")

    def __getitem__(self, key: str):
        return self.values[key]

    def gen_categories(self) -> list[str]:
        raw = str(self.values["gen.categories"])
        return [c.strip() for c in raw.split(",") if c.strip()]

    def threshold_for(self, category: str) -> float:
        return float(self.values.get(f"threshold.{category}",
                                     self.values["threshold.default"]))

    def model_config(self) -> AutoencoderConfig:
        v = self.values
        return AutoencoderConfig(
            frame_height=int(v["frame.height"]),
            frame_width=int(v["frame.width"]),
            window=int(v["window"]),
            conv1_channels=int(v["model.conv1.channels"]),
            conv1_kernel=int(v["model.conv1.kernel"]),
            conv1_stride=int(v["model.conv1.stride"]),
            conv1_padding=int(v["model.conv1.padding"]),
            conv2_channels=int(v["model.conv2.channels"]),
            conv2_kernel=int(v["model.conv2.kernel"]),
            conv2_stride=int(v["model.conv2.stride"]),
            conv2_padding=int(v["model.conv2.padding"]),
            lstm_hidden=(int(v["model.lstm.hidden1"]),
                         int(v["model.lstm.hidden2"]),
                         int(v["model.lstm.hidden3"])),
            lstm_kernel=int(v["model.lstm.kernel"]),
            seed=int(v["model.seed"]),
        )

    def hyper(self) -> TrainingHyper:
        v = self.values
        return TrainingHyper(
            learning_rate=float(v["train.lr"]),
            batch_size=int(v["train.batch"]),
            max_steps=int(v["train.steps"]),
            beta1=float(v["train.beta1"]),
            beta2=float(v["train.beta2"]),
            eps=float(v["train.eps"]),
            weight_decay=float(v["train.weight_decay"]),
        )

    def canonical_text(self) -> str:
        return "\n".join(f"{key}={self.values[key]!r}"
                         for key in sorted(self.values)) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()
