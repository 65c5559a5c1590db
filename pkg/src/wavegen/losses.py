"""GAN training objectives.

The cross-entropy pair is evaluated through softplus so extreme scores
stay finite: -log sigmoid(x) == softplus(-x) and -log(1 - sigmoid(x))
== softplus(x).  The generator uses the non-saturating form.  The
Wasserstein critic loss takes the gradient-norm penalty as an explicit
argument so the penalty weight enters in exactly one place.
"""

import numpy as np

from .tensor import Tensor, mean_all, mul_const, neg, softplus, sub

__all__ = [
    "dcgan_d_loss",
    "dcgan_g_loss",
    "interpolate",
    "wgangp_d_loss",
    "wgangp_g_loss",
]


def dcgan_d_loss(d_real, d_fake):
    """-mean log sigma(d_real) - mean log(1 - sigma(d_fake))."""
    return mean_all(softplus(neg(d_real))) + mean_all(softplus(d_fake))


def dcgan_g_loss(d_fake):
    """Non-saturating generator loss: -mean log sigma(d_fake)."""
    return mean_all(softplus(neg(d_fake)))


def wgangp_d_loss(d_real, d_fake, penalty, lam):
    """mean(d_fake) - mean(d_real) + lam * penalty."""
    return sub(mean_all(d_fake), mean_all(d_real)) + mul_const(penalty, lam)


def wgangp_g_loss(d_fake):
    return neg(mean_all(d_fake))


def interpolate(x_real, x_fake, rng):
    """Per-clip convex mix eps*real + (1-eps)*fake, ready for the penalty.

    Returns a fresh requires_grad leaf so the penalty differentiates
    through the critic only, never back into the generator.
    """
    x_real = np.asarray(x_real)
    x_fake = np.asarray(x_fake)
    if x_real.shape != x_fake.shape:
        raise ValueError("interpolate: real and fake batches must share a shape")
    n = x_real.shape[0]
    eps_shape = (n,) + (1,) * (x_real.ndim - 1)
    dtype = x_real.dtype if x_real.dtype.kind == "f" else np.float32
    eps = rng.random(eps_shape, dtype=dtype)
    return Tensor(eps * x_real + (1.0 - eps) * x_fake, requires_grad=True)
