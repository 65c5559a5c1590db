"""Adam and the alternating GAN update.

One train_step runs d_updates critic updates (fresh z and a fresh real
mini-batch each) followed by a single generator update.  All sampling
flows through the rng argument, so a step sequence is a pure function
of the initial rng state, the parameters, and the batch stream.
"""

from dataclasses import dataclass

import numpy as np

from .losses import (
    dcgan_d_loss,
    dcgan_g_loss,
    interpolate,
    wgangp_d_loss,
    wgangp_g_loss,
)
from .nets import discriminator_forward, generator_forward
from .tensor import Tensor, backward, grad_norm_penalty, no_grad, sample_uniform

__all__ = ["Adam", "LossReport", "NonFiniteGradient", "train_step"]

# per-loss learning-rate defaults
DEFAULT_LR = {"wgan_gp": 1e-4, "dcgan": 2e-4}


class NonFiniteGradient(RuntimeError):
    """A nan/inf gradient reached the optimizer."""


class Adam(object):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        # validate first so an abort leaves parameters and moments untouched
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter {name} has no gradient")
            if not np.all(np.isfinite(p.grad.data)):
                raise NonFiniteGradient(
                    f"non-finite gradient for parameter {name} at step {self.t + 1}"
                )
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self, prefix):
        """Moment tensors under stable names, for checkpointing."""
        out = {}
        for k in self.params:
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, prefix, arrays, t):
        for k in self.params:
            self.m[k] = arrays[f"{prefix}.m.{k}"].copy()
            self.v[k] = arrays[f"{prefix}.v.{k}"].copy()
        self.t = int(t)


@dataclass
class LossReport:
    d_loss: float
    g_loss: float
    penalty: float

    def finite(self):
        return all(np.isfinite(x) for x in (self.d_loss, self.g_loss, self.penalty))


def train_step(next_batch, gen, disc, cfg, opt_g, opt_d, rng, d_updates=5,
               g_updates=1):
    """One alternation: d_updates critic updates, then g_updates generator
    updates."""
    dtype = gen.dense_w.dtype

    def balanced_labels(batch):
        # Every class appears ~batch/num_classes times per update, which
        # keeps the per-class gradient steady at small batch sizes while
        # staying uniform in the marginal.
        tiled = np.resize(np.arange(cfg.num_classes, dtype=np.int64), batch)
        return rng.permuted(tiled)

    d_loss_val = penalty_val = 0.0
    batch = 0
    for _ in range(d_updates):
        x_real, labels = next_batch()
        batch = len(x_real)
        labels_f = balanced_labels(batch)
        z = sample_uniform((batch, cfg.z_dim), rng, dtype)
        with no_grad():
            fake = generator_forward(gen, z, labels_f, cfg)
        d_real = discriminator_forward(disc, Tensor(x_real), labels, cfg, rng)
        d_fake = discriminator_forward(disc, fake, labels_f, cfg, rng)
        if cfg.loss_mode == "wgan_gp":
            x_hat = interpolate(x_real, fake.data, rng)
            d_hat = discriminator_forward(disc, x_hat, labels, cfg, rng)
            penalty = grad_norm_penalty(d_hat, x_hat)
            d_loss = wgangp_d_loss(d_real, d_fake, penalty, cfg.gp_lambda)
            penalty_val = penalty.item()
        else:
            d_loss = dcgan_d_loss(d_real, d_fake)
        opt_d.zero_grad()
        backward(d_loss)
        opt_d.step()
        d_loss_val = d_loss.item()

    g_loss_val = 0.0
    for _ in range(g_updates):
        # Balanced label draw: every class appears ~batch/num_classes times
        # per generator update, which keeps the per-class gradient steady at
        # small batch sizes while staying uniform in the marginal.
        labels_g = rng.permuted(
            np.resize(np.arange(cfg.num_classes, dtype=np.int64), batch))
        z = sample_uniform((batch, cfg.z_dim), rng, dtype)
        fake = generator_forward(gen, z, labels_g, cfg)
        d_fake = discriminator_forward(disc, fake, labels_g, cfg, rng)
        if cfg.loss_mode == "wgan_gp":
            g_loss = wgangp_g_loss(d_fake)
        else:
            g_loss = dcgan_g_loss(d_fake)
        opt_g.zero_grad()
        opt_d.zero_grad()  # discard critic grads from the generator pass
        backward(g_loss)
        opt_g.step()
        g_loss_val = g_loss.item()
    return LossReport(d_loss_val, g_loss_val, penalty_val)
