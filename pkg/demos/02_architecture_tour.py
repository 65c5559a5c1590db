"""Walk the generator and discriminator layer by layer.

Run:  python3 demos/02_architecture_tour.py
"""

import numpy as np

from wavegen.nets import (
    ModelConfig, build_discriminator, build_generator,
    discriminator_forward, generator_forward,
)
from wavegen.tensor import Tensor, sample_uniform

rng = np.random.default_rng(0)
cfg = ModelConfig(model_dim=4, num_classes=10, conditioning="concat")

print(f"model_dim d = {cfg.model_dim}, output length {cfg.out_len}, "
      f"strides {cfg.strides}")
print()

gen = build_generator(cfg, rng)
disc = build_discriminator(cfg, rng)

n_gen = sum(t.data.size for t in gen.named().values())
n_disc = sum(t.data.size for t in disc.named().values())
print(f"generator parameters:     {n_gen:>12,}")
print(f"discriminator parameters: {n_disc:>12,}")
print()

z = sample_uniform((2, cfg.z_dim), rng)
labels = np.array([3, 7])

record = []
out = generator_forward(gen, z, labels, cfg, record=record)
print("generator (batch 2, labels [3, 7]):")
for name, shape in record:
    print(f"  {name:<22} {shape}")
print()

record = []
score = discriminator_forward(disc, out, labels, cfg, rng, record=record)
print("discriminator on the generated batch:")
for name, shape in record:
    print(f"  {name:<22} {shape}")
print()
print(f"raw scores: {np.round(score.data[:, 0], 4)}")
print()

print("scale conditioning keeps one gain vector per class and layer:")
scfg = ModelConfig(model_dim=4, num_classes=10, conditioning="scale")
sgen = build_generator(scfg, np.random.default_rng(0))
for i, s in enumerate(sgen.scales):
    print(f"  generator gain table {i}: {s.data.shape}")
print("gain tables start at 1, so an untrained scale model matches an")
print("unconditioned one exactly until the tables move.")
