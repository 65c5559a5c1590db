"""Flat key = value run configuration.

One file drives a whole training run: model geometry, data source,
optimizer knobs, bookkeeping.  Lines are ``key = value``; blank lines and
``#`` comments are ignored.  Unknown and duplicate keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .nets import ModelConfig
from .optim import DEFAULT_LR


def _parse_strides(text):
    return tuple(int(p) for p in str(text).split(","))


@dataclass(frozen=True)
class RunConfig:
    # model
    num_channels: int = 1
    model_dim: int = 64
    out_len: int = 8192
    num_classes: int = 10
    z_dim: int = 100
    conditioning: str = "none"
    strides: tuple = (4, 4, 4, 4, 2)
    phase_shuffle: int = 2
    loss_mode: str = "wgan_gp"
    gp_lambda: float = 10.0
    # data: a corpus directory of per-class subfolders, or "synth:CxN"
    corpus: str = "synth:4x16"
    silence_threshold: float = 0.01
    # optimizer
    batch_size: int = 64
    total_steps: int = 5000
    d_updates_per_g: int = 5
    g_updates: int = 1
    lr_g: float = 0.0
    lr_d: float = 0.0
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    # bookkeeping
    seed: int = 0
    checkpoint_every: int = 1000
    out_dir: str = ""

    def __post_init__(self):
        # lr 0.0 means "use the customary default for this loss mode"
        if self.lr_g == 0.0:
            object.__setattr__(self, "lr_g", DEFAULT_LR[self.loss_mode])
        if self.lr_d == 0.0:
            object.__setattr__(self, "lr_d", DEFAULT_LR[self.loss_mode])
        self.model()  # surface geometry errors at parse time

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def model(self) -> ModelConfig:
        return ModelConfig(
            num_channels=self.num_channels,
            model_dim=self.model_dim,
            out_len=self.out_len,
            num_classes=self.num_classes,
            z_dim=self.z_dim,
            conditioning=self.conditioning,
            strides=self.strides,
            phase_shuffle=self.phase_shuffle,
            loss_mode=self.loss_mode,
            gp_lambda=self.gp_lambda,
        )


_FIELDS = tuple(f.name for f in dataclasses.fields(RunConfig))

# value parser per key, keyed off the default's type
_COERCE = {
    f.name: {int: int, float: float, str: str, tuple: _parse_strides}[type(f.default)]
    for f in dataclasses.fields(RunConfig)
}


def parse_config(text: str) -> RunConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        try:
            pairs[key] = _COERCE[key](value)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"config line {lineno}: bad value for {key!r}: {exc}") from exc
    return RunConfig(**pairs)


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
