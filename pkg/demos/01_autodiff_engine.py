"""Tour of the reverse-mode engine: taping, backward, and double-backward.

Run:  python3 demos/01_autodiff_engine.py
"""

import numpy as np

from wavegen.tensor import (
    Tensor, backward, conv1d, dense, grad, grad_norm_penalty, leaky_relu,
    mean_all, mul, reshape, tanh,
)

rng = np.random.default_rng(0)

print("== a small taped computation ==")
x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
y = mean_all(tanh(x @ w))
backward(y)
print(f"y = {y.item():+.4f}")
print(f"dy/dx row 0: {np.round(x.grad.data[0], 4)}")

print()
print("== gradients agree with central finite differences ==")
def f(xv):
    return mean_all(tanh(Tensor(xv) @ w)).item()

h = 1e-6
i, j = 1, 2
base = x.data.copy()
bumped_up, bumped_dn = base.copy(), base.copy()
bumped_up[i, j] += h
bumped_dn[i, j] -= h
fd = (f(bumped_up) - f(bumped_dn)) / (2 * h)
print(f"analytic dy/dx[{i},{j}] = {x.grad.data[i, j]:+.8f}")
print(f"numeric  dy/dx[{i},{j}] = {fd:+.8f}")

print()
print("== double backward: differentiate through a gradient ==")
# A tiny critic: conv over a waveform, then a dense head.
kernel = Tensor(rng.standard_normal((7, 1, 4)) * 0.3, requires_grad=True)
head = Tensor(rng.standard_normal((4 * 8, 1)) * 0.3, requires_grad=True)
head_b = Tensor(np.zeros(1))

def critic(clips):
    h1 = leaky_relu(conv1d(clips, kernel, stride=2), 0.2)
    flat = reshape(h1, (h1.data.shape[0], -1))
    return dense(flat, head, head_b)

clips = Tensor(rng.standard_normal((5, 16, 1)), requires_grad=True)
scores = critic(clips)

# grad_norm_penalty computes d(scores)/d(clips) with create_graph=True, so the
# result is itself on the tape and can be differentiated w.r.t. the kernel.
penalty = grad_norm_penalty(scores, clips)
(dk,) = grad(penalty, [kernel])
print(f"penalty = {penalty.item():.6f}")
print(f"d(penalty)/d(kernel) has shape {dk.data.shape}, "
      f"norm {np.linalg.norm(dk.data):.6f}")

def penalty_value(kv):
    saved = kernel.data.copy()
    kernel.data[...] = kv
    p = grad_norm_penalty(critic(clips), clips).item()
    kernel.data[...] = saved
    return p

kv = kernel.data.copy()
kv_up, kv_dn = kv.copy(), kv.copy()
kv_up[3, 0, 1] += 1e-5
kv_dn[3, 0, 1] -= 1e-5
fd2 = (penalty_value(kv_up) - penalty_value(kv_dn)) / 2e-5
print(f"analytic second-order entry = {dk.data[3, 0, 1]:+.8f}")
print(f"numeric  second-order entry = {fd2:+.8f}")
