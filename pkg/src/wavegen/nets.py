"""Generator and discriminator builders and forwards.

Both nets are stacks of length-25 kernels.  The generator maps a latent
vector through a dense layer to a (16, ch) base and upsamples with
transposed convolutions until the target length; the discriminator runs
the mirrored strided stack down to (16, ch) and scores with one dense
unit.  With n stride entries the widest layer holds model_dim * 2^(n-1)
channels, so the full five-stride setup starts at 16d.

Class conditioning comes in two flavours:
  concat - one-hot appended to z, and broadcast along time as extra
           input channels for the discriminator;
  scale  - per-layer (num_classes, channels) gain tables applied after
           each hidden activation.  Tables start at one, so a fresh
           scale-conditioned net is bit-identical to an unconditioned one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor,
    add_bias,
    concat,
    conv1d,
    dense,
    embed,
    leaky_relu,
    matmul,
    no_grad,
    phase_shift_indices,
    relu,
    reshape,
    sample_uniform,
    scale_channels,
    take_time,
    tanh,
    trans_conv1d,
)

KERNEL_LEN = 25
BASE_LEN = 16

_CONDITIONING = ("none", "concat", "scale")
_LOSS_MODES = ("dcgan", "wgan_gp")


@dataclass(frozen=True)
class ModelConfig:
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

    def __post_init__(self):
        if self.conditioning not in _CONDITIONING:
            raise ValueError(f"conditioning must be one of {_CONDITIONING}")
        if self.loss_mode not in _LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {_LOSS_MODES}")
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if any(s < 1 for s in self.strides) or not self.strides:
            raise ValueError("strides must be positive integers")
        if self.out_len != BASE_LEN * math.prod(self.strides):
            raise ValueError(
                f"out_len {self.out_len} != {BASE_LEN} * prod{self.strides}"
            )
        for name in ("num_channels", "model_dim", "num_classes", "z_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.phase_shuffle < 0:
            raise ValueError("phase_shuffle must be >= 0")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be >= 0")

    @property
    def z_effective(self):
        extra = self.num_classes if self.conditioning == "concat" else 0
        return self.z_dim + extra

    def generator_channels(self):
        """Channel count entering/leaving each upsampling layer."""
        n = len(self.strides)
        ch0 = self.model_dim * 2 ** (n - 1)
        return [ch0 // 2**i for i in range(n)] + [self.num_channels]

    def discriminator_channels(self):
        n = len(self.strides)
        return [self.num_channels] + [self.model_dim * 2**i for i in range(n)]


def _uniform_init(rng, shape, fan_in, dtype):
    lim = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-lim, lim, shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype), requires_grad=True)


def _ones(shape, dtype):
    return Tensor(np.ones(shape, dtype), requires_grad=True)


@dataclass
class GeneratorParams:
    dense_w: Tensor
    dense_b: Tensor
    kernels: list
    biases: list
    scales: list = field(default_factory=list)

    def named(self):
        out = {"dense.w": self.dense_w, "dense.b": self.dense_b}
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out[f"tconv{i}.w"] = k
            out[f"tconv{i}.b"] = b
        for i, s in enumerate(self.scales):
            out[f"scale{i}"] = s
        return out


@dataclass
class DiscriminatorParams:
    kernels: list
    biases: list
    out_w: Tensor
    out_b: Tensor
    scales: list = field(default_factory=list)

    def named(self):
        out = {}
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out[f"conv{i}.w"] = k
            out[f"conv{i}.b"] = b
        out["out.w"] = self.out_w
        out["out.b"] = self.out_b
        for i, s in enumerate(self.scales):
            out[f"scale{i}"] = s
        return out


def build_generator(cfg, rng, dtype=np.float32):
    chans = cfg.generator_channels()
    ch0 = chans[0]
    dense_w = _uniform_init(rng, (cfg.z_effective, BASE_LEN * ch0), cfg.z_effective, dtype)
    dense_b = _zeros(BASE_LEN * ch0, dtype)
    kernels, biases = [], []
    for cin, cout in zip(chans, chans[1:]):
        kernels.append(_uniform_init(rng, (KERNEL_LEN, cin, cout), KERNEL_LEN * cin, dtype))
        biases.append(_zeros(cout, dtype))
    scales = []
    if cfg.conditioning == "scale":
        scales = [_ones((cfg.num_classes, ch), dtype) for ch in chans[:-1]]
    return GeneratorParams(dense_w, dense_b, kernels, biases, scales)


def build_discriminator(cfg, rng, dtype=np.float32):
    chans = cfg.discriminator_channels()
    cin0 = chans[0] + (cfg.num_classes if cfg.conditioning == "concat" else 0)
    ins = [cin0] + chans[1:-1]
    kernels, biases = [], []
    for cin, cout in zip(ins, chans[1:]):
        kernels.append(_uniform_init(rng, (KERNEL_LEN, cin, cout), KERNEL_LEN * cin, dtype))
        biases.append(_zeros(cout, dtype))
    flat = BASE_LEN * chans[-1]
    out_w = _uniform_init(rng, (flat, 1), flat, dtype)
    out_b = _zeros(1, dtype)
    scales = []
    if cfg.conditioning == "scale":
        scales = [_ones((cfg.num_classes, ch), dtype) for ch in chans[1:]]
    return DiscriminatorParams(kernels, biases, out_w, out_b, scales)


def _check_labels(labels, cfg, batch):
    if cfg.conditioning == "none":
        return None
    if labels is None:
        raise ValueError(f"conditioning={cfg.conditioning!r} requires labels")
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ValueError(f"labels must have shape ({batch},)")
    if labels.min() < 0 or labels.max() >= cfg.num_classes:
        raise ValueError(f"labels must lie in [0, {cfg.num_classes})")
    return labels.astype(np.intp)


def _one_hot(labels, num_classes, dtype):
    return np.eye(num_classes, dtype=dtype)[labels]


def phase_shuffle(x, n_shift, rng):
    """Shift every feature map by a fresh uniform draw from [-n, n].

    Boundary samples are filled by reflection without edge repeat.
    n_shift == 0 returns the input unchanged and consumes no randomness.
    """
    if n_shift == 0:
        return x
    n, length, c = x.shape
    shifts = rng.integers(-n_shift, n_shift + 1, size=(n, c))
    return take_time(x, phase_shift_indices(length, shifts))


def generator_forward(p, z, labels, cfg, record=None):
    """z (n, z_dim) -> waveform (n, out_len, c) in [-1, 1]."""
    n = z.shape[0]
    if z.shape != (n, cfg.z_dim):
        raise ValueError(f"z must have shape (n, {cfg.z_dim})")
    labels = _check_labels(labels, cfg, n)
    rec = record.append if record is not None else lambda item: None
    rec(("z", z.shape))
    h = z
    if cfg.conditioning == "concat":
        h = concat(h, Tensor(_one_hot(labels, cfg.num_classes, z.dtype)), axis=1)
    h = dense(h, p.dense_w, p.dense_b)
    rec(("dense", h.shape))
    ch0 = cfg.generator_channels()[0]
    h = reshape(h, (n, BASE_LEN, ch0))
    rec(("reshape", h.shape))
    h = relu(h)
    if cfg.conditioning == "scale":
        h = scale_channels(h, embed(p.scales[0], labels))
    last = len(p.kernels) - 1
    for i, (w, b, s) in enumerate(zip(p.kernels, p.biases, cfg.strides)):
        h = add_bias(trans_conv1d(h, w, s), b)
        if i == last:
            h = tanh(h)
        else:
            h = relu(h)
            if cfg.conditioning == "scale":
                h = scale_channels(h, embed(p.scales[i + 1], labels))
        rec((f"tconv{i}", h.shape))
    return h


def discriminator_forward(p, x, labels, cfg, rng=None, record=None):
    """x (n, out_len, c) -> raw score (n, 1).

    Pass the training rng to enable phase shuffle; without it the
    forward is deterministic (generation and evaluation paths).
    """
    n = x.shape[0]
    if x.shape != (n, cfg.out_len, cfg.num_channels):
        raise ValueError(f"x must have shape (n, {cfg.out_len}, {cfg.num_channels})")
    labels = _check_labels(labels, cfg, n)
    rec = record.append if record is not None else lambda item: None
    rec(("x", x.shape))
    h = x
    if cfg.conditioning == "concat":
        onehot = _one_hot(labels, cfg.num_classes, x.dtype)
        lanes = np.broadcast_to(onehot[:, None, :], (n, cfg.out_len, cfg.num_classes))
        h = concat(h, Tensor(np.ascontiguousarray(lanes)), axis=2)
    last = len(p.kernels) - 1
    for i, (w, b, s) in enumerate(zip(p.kernels, p.biases, reversed(cfg.strides))):
        h = leaky_relu(add_bias(conv1d(h, w, s), b))
        if cfg.conditioning == "scale":
            h = scale_channels(h, embed(p.scales[i], labels))
        if i < last and rng is not None:
            h = phase_shuffle(h, cfg.phase_shuffle, rng)
        rec((f"conv{i}", h.shape))
    h = reshape(h, (n, h.shape[1] * h.shape[2]))
    rec(("flatten", h.shape))
    h = dense(h, p.out_w, p.out_b)
    rec(("score", h.shape))
    return h


def synthesize(p, labels, cfg, rng):
    """Sample z and run the generator without recording a graph."""
    labels = np.asarray(labels)
    with no_grad():
        z = sample_uniform((len(labels), cfg.z_dim), rng)
        out = generator_forward(p, z, labels if cfg.conditioning != "none" else None, cfg)
    return out.data
