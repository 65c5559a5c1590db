"""Train a small conditional model on synthetic tones, then score it.

Uses a reduced geometry so the whole script runs in about a minute on one
core.  The full-size recipe lives in the README.

Run:  python3 demos/04_train_tones.py
"""

import os

import numpy as np

from wavegen.cli import _resolve_corpus, run_training
from wavegen.config import parse_config
from wavegen.checkpoint import load_checkpoint
from wavegen.evaluate import eval_fidelity
from wavegen.nets import build_generator

OUT = os.path.join(os.path.dirname(__file__), "demo_out")

cfg = parse_config(f"""
model_dim = 8
out_len = 1024
strides = 4,4,4
num_classes = 2
conditioning = concat
loss_mode = dcgan
corpus = synth:2x16
batch_size = 16
total_steps = 700
d_updates_per_g = 2
g_updates = 2
beta2 = 0.999
checkpoint_every = 700
seed = 3
out_dir = {OUT}
""")

corpus = _resolve_corpus(cfg)
print(f"corpus: {len(corpus)} clips, classes {corpus.class_names}")

gen0 = build_generator(cfg.model(), np.random.default_rng([cfg.seed, 0]))
before = eval_fidelity(gen0, cfg.model(), corpus, 20, np.random.default_rng(1))
print(f"label fidelity before training: {before.overall:.2f}")
print()

print("training (step, d loss, g loss, penalty):")
final = run_training(cfg, echo=print, echo_every=50)
print()

_, _, arrays, _ = load_checkpoint(final)
gen = build_generator(cfg.model(), np.random.default_rng(0))
for name, t in gen.named().items():
    t.data[...] = arrays[f"gen.{name}"]
after = eval_fidelity(gen, cfg.model(), corpus, 20, np.random.default_rng(1))
print(f"label fidelity after training: {after.overall:.2f}")
for line in after.lines():
    print(f"  {line}")
print(f"checkpoint: {final}")
