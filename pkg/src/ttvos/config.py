"""Dataclass configs and the ``key=value`` config-file reader."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class ModelConfig:
    c4: int = 16
    c8: int = 24
    c16: int = 32
    c_st: int = 32
    c_sim: int = 16
    c_tp: int = 32
    c_dec: int = 32
    groups: int = 4
    group_kernel: int = 5
    alpha: float = 0.01
    # ablation switches
    short_matching: bool = True
    long_matching: bool = True
    template_update: bool = True
    box_init: bool = False

    def __post_init__(self):
        if self.c_tp % self.groups:
            raise ConfigurationError(f"c_tp={self.c_tp} must be divisible by groups={self.groups}")
        if 2 * self.c_sim != self.c_dec:
            raise ConfigurationError("decoder input must equal two stacked similarity maps (c_dec = 2*c_sim)")


@dataclass
class LossConfig:
    lambda_tc: float = 5.0

    def __post_init__(self):
        if self.lambda_tc < 0:
            raise ConfigurationError(f"lambda_tc must be >= 0, got {self.lambda_tc}")


@dataclass
class TrainConfig:
    stage: str = "main"
    clip_length: int | None = None  # None -> 3 for pretrain, 8 for main
    batch_size: int = 1
    lr: float = 1e-4
    lr_schedule: str = "constant"  # or "cosine": per-epoch cosine decay from lr towards 0
    epochs: int = 1
    lambda_tc: float = 5.0
    seed: int = 0
    val_fraction: float = 0.2
    augment: bool = True  # random flips, time reversal and colour-channel permutation per clip
    ablate: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.stage not in ("pretrain", "main"):
            raise ConfigurationError(f"stage must be pretrain or main, got {self.stage!r}")
        if self.clip_length is None:
            self.clip_length = 3 if self.stage == "pretrain" else 8
        if self.clip_length < 2:
            raise ConfigurationError("clip length must be >= 2")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"lr schedule must be constant or cosine, got {self.lr_schedule!r}")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        bad = set(self.ablate) - set(ABLATIONS)
        if bad:
            raise ConfigurationError(f"unknown ablation(s) {sorted(bad)}; choose from {sorted(ABLATIONS)}")
        if "tc" in self.ablate:
            self.lambda_tc = 0.0

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.lambda_tc)


ABLATIONS = {
    "short": "short_matching",
    "long": "long_matching",
    "update": "template_update",
    "tc": None,
    "boxinit": "box_init",
}


def model_config_for(ablate, base: ModelConfig | None = None) -> ModelConfig:
    base = base or ModelConfig()
    changes = {}
    for name in ablate:
        key = ABLATIONS.get(name)
        if key == "box_init":
            changes[key] = True
        elif key is not None:
            changes[key] = False
    return dataclasses.replace(base, **changes)


def model_config_to_dict(cfg: ModelConfig) -> dict[str, str]:
    return {f.name: str(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}


def model_config_from_dict(d: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        if f.name not in d:
            continue
        raw = d[f.name]
        if f.type in ("bool", bool):
            kwargs[f.name] = raw == "True"
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = int(raw)
    return ModelConfig(**kwargs)


def read_config_file(path, allowed: set[str]) -> dict[str, str]:
    """Parse ``key=value`` lines with ``#`` comments; unknown keys are an error."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = val
    return out
