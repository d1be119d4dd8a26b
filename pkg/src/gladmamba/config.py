"""Run configuration: one flat, typed namespace for the whole pipeline.

Configs serialize to flat JSON objects with dotted keys ("encoder.kind",
"vfm.state_size", ...) so they stay diffable and greppable; unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .augmentation import AugConfig
from .gnn_encoder import EncoderConfig
from .objective_scoring import LossConfig
from .ssm_core import SSMBlockConfig

DATA_ROOT_ENV = "GLADMAMBA_DATA_ROOT"

ABLATION_VARIANTS = ("none", "no-vfm", "no-sgm", "no-mamba", "no-vf-ssm", "no-sg-ssm")


@dataclass(frozen=True)
class EvalConfig:
    batch_size: int = 128


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "AIDS"
    data_root: str | None = None
    anomaly_class: int | None = None
    train_frac: float = 0.8
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    ablation: str = "none"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    vfm: SSMBlockConfig = field(default_factory=SSMBlockConfig)
    sgm: SSMBlockConfig = field(default_factory=SSMBlockConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    aug: AugConfig = field(default_factory=AugConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.ablation not in ABLATION_VARIANTS:
            raise ValueError(
                f"unknown ablation {self.ablation!r}; expected one of {ABLATION_VARIANTS}"
            )
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (the graph loss needs negatives)")
        if self.eval.batch_size < 2:
            raise ValueError("eval.batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must lie strictly between 0 and 1")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def resolve_data_root(self) -> str:
        root = self.data_root or os.environ.get(DATA_ROOT_ENV)
        if not root:
            raise ValueError(
                f"no data root configured: set data_root or the {DATA_ROOT_ENV} env var"
            )
        return root


_SUBSECTIONS = {
    "encoder": EncoderConfig,
    "vfm": SSMBlockConfig,
    "sgm": SSMBlockConfig,
    "loss": LossConfig,
    "aug": AugConfig,
    "eval": EvalConfig,
}


def to_flat(cfg: RunConfig) -> dict:
    """Flatten a RunConfig into a {dotted key: scalar} dict."""
    out: dict = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SUBSECTIONS:
            for sub in dataclasses.fields(value):
                out[f"{f.name}.{sub.name}"] = getattr(value, sub.name)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def from_flat(flat: dict) -> RunConfig:
    """Inverse of :func:`to_flat`; raises on keys that name nothing."""
    top_fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    plain: dict = {}
    subs: dict[str, dict] = {name: {} for name in _SUBSECTIONS}
    for key, value in flat.items():
        if "." in key:
            section, _, leaf = key.partition(".")
            if section not in _SUBSECTIONS:
                raise KeyError(f"unknown config section {section!r} in key {key!r}")
            valid = {f.name for f in dataclasses.fields(_SUBSECTIONS[section])}
            if leaf not in valid:
                raise KeyError(f"unknown config key {key!r}")
            subs[section][leaf] = value
        else:
            if key not in top_fields or key in _SUBSECTIONS:
                raise KeyError(f"unknown config key {key!r}")
            plain[key] = tuple(value) if key == "seeds" else value
    for section, cls in _SUBSECTIONS.items():
        if subs[section]:
            plain[section] = cls(**subs[section])
    return RunConfig(**plain)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        flat = json.load(fh)
    if not isinstance(flat, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return from_flat(flat)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_flat(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
