"""Run configuration: typed keys, flat key=value files, seed sub-streams.

Precedence is CLI flag > config file > default. All randomness in a run
flows from the single ``seed`` through named sub-streams so individual
components can be reproduced in isolation.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

AGGREGATIONS = ("last", "mean")
ATTENTION_MODES = ("dsacf", "sum")
NEIGHBOR_STRATEGIES = ("most_recent", "uniform")
ABLATION_VARIANTS = ("full", "no-short", "sum", "position", "mean", "2l")


@dataclass
class TrainConfig:
    d: int = 32
    d_t: int = 32
    epsilon: int = 10
    layers: int = 1
    heads: int = 2
    lr: float = 1e-3
    l2: float = 1e-2
    batch_size: int = 200
    epochs: int = 10
    seed: int = 7
    aggregation: str = "last"
    time_variant: str = "bochner"
    attention: str = "dsacf"
    use_short_term: bool = True
    neighbor_strategy: str = "most_recent"
    activation: str = "softplus"
    train_proportion: float = 1.0

    def validate(self) -> "TrainConfig":
        if self.d <= 0 or self.d % self.heads:
            raise ConfigError(f"d={self.d} must be positive and divisible by heads={self.heads}")
        if self.d_t <= 0 or self.d_t % 2:
            raise ConfigError(f"d_t={self.d_t} must be positive and even")
        if self.epsilon < 1:
            raise ConfigError(f"epsilon={self.epsilon} must be >= 1")
        if self.layers < 1:
            raise ConfigError(f"layers={self.layers} must be >= 1")
        if self.lr < 0 or self.l2 < 0:
            raise ConfigError("lr and l2 must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}")
        if self.neighbor_strategy not in NEIGHBOR_STRATEGIES:
            raise ConfigError(f"neighbor_strategy must be one of {NEIGHBOR_STRATEGIES}")
        if not (0.0 < self.train_proportion <= 1.0):
            raise ConfigError(f"train_proportion={self.train_proportion} must be in (0, 1]")
        return self

    def apply_variant(self, variant: str) -> "TrainConfig":
        """Named ablation presets used by the sweep command."""
        if variant not in ABLATION_VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {ABLATION_VARIANTS}")
        out = dataclasses.replace(self)
        if variant == "no-short":
            out.use_short_term = False
        elif variant == "sum":
            out.attention = "sum"
        elif variant == "position":
            out.time_variant = "position"
        elif variant == "mean":
            out.aggregation = "mean"
        elif variant == "2l":
            out.layers = 2
        return out.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(fields[key].type, key, value)
        return cls(**kwargs).validate()


def _coerce(ftype: str, key: str, value):
    if isinstance(value, str):
        text = value.strip()
        try:
            if ftype == "int":
                return int(text)
            if ftype == "float":
                return float(text)
            if ftype == "bool":
                if text.lower() in ("true", "1", "yes"):
                    return True
                if text.lower() in ("false", "0", "no"):
                    return False
                raise ValueError(text)
            return text
        except ValueError:
            raise ConfigError(f"cannot parse config value {value!r} for key {key!r}") from None
    return value


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    values: dict = {}
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)


def config_hash(cfg: TrainConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent, reproducible generator for one named component."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))
