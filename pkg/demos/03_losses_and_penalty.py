"""The two training objectives and the gradient penalty, on toy critics.

Run:  python3 demos/03_losses_and_penalty.py
"""

import numpy as np

from wavegen.losses import (
    dcgan_d_loss, dcgan_g_loss, interpolate, wgangp_d_loss, wgangp_g_loss,
)
from wavegen.tensor import Tensor, grad_norm_penalty, reshape, sum_axes

rng = np.random.default_rng(0)

print("== cross-entropy (DCGAN) losses ==")
r = Tensor(np.zeros((8, 1)))  # sigmoid(0) = 0.5: a maximally confused judge
f = Tensor(np.zeros((8, 1)))
print(f"d loss at sigma = 0.5 : {dcgan_d_loss(r, f).item():.9f}")
print(f"2 log 2               : {2 * np.log(2):.9f}")
print(f"g loss at sigma = 0.5 : {dcgan_g_loss(f).item():.9f}  (log 2)")

print()
print("== Wasserstein losses ignore a constant score shift ==")
r = Tensor(rng.standard_normal((8, 1)))
f = Tensor(rng.standard_normal((8, 1)))
zero = Tensor(np.zeros(()))
base = wgangp_d_loss(r, f, zero, 10.0).item()
shifted = wgangp_d_loss(Tensor(r.data + 123.0), Tensor(f.data + 123.0), zero, 10.0).item()
print(f"critic loss          : {base:+.6f}")
print(f"both scores + 123    : {shifted:+.6f}")
print(f"generator loss       : {wgangp_g_loss(f).item():+.6f}  (= -mean fake score)")

print()
print("== gradient penalty on a linear critic is exactly (|w| - 1)^2 ==")
w = Tensor(rng.standard_normal((16, 1)) * 0.5, requires_grad=True)
x_hat = Tensor(rng.standard_normal((4, 16, 1)), requires_grad=True)
scores = reshape(x_hat, (4, 16)) @ w
penalty = grad_norm_penalty(scores, x_hat)
closed = (np.linalg.norm(w.data) - 1.0) ** 2
print(f"penalty      : {penalty.item():.12f}")
print(f"(|w| - 1)^2  : {closed:.12f}")

print()
print("== interpolation draws one mixing weight per clip ==")
real = Tensor(np.zeros((4, 16, 1)))
fake = Tensor(np.ones((4, 16, 1)))
mix = interpolate(real.data, fake.data, rng)
print(f"per-clip mix values  : {np.round(mix.data[:, 0, 0], 4)}")
print(f"requires_grad = {mix.requires_grad}, ready for the penalty above")
