"""Drive the command line surface end to end in a temp directory.

Run:  python3 demos/05_generate_and_eval.py
"""

import os
import tempfile

from wavegen.audio import load_wav
from wavegen.cli import main

with tempfile.TemporaryDirectory() as tmp:
    cfgfile = os.path.join(tmp, "run.cfg")
    with open(cfgfile, "w") as fh:
        fh.write(f"""
model_dim = 4
out_len = 256
strides = 4,4
num_classes = 2
conditioning = scale
loss_mode = wgan_gp
corpus = synth:2x12
batch_size = 8
total_steps = 30
d_updates_per_g = 2
checkpoint_every = 30
seed = 0
out_dir = {os.path.join(tmp, "run")}
""")

    print("$ wavegen train --config run.cfg")
    main(["train", "--config", cfgfile])
    ckpt = os.path.join(tmp, "run", "ckpt-000030.cwgn")
    print()

    clips = os.path.join(tmp, "clips")
    print("$ wavegen generate --checkpoint ckpt --label 1 --count 3 "
          "--seed 4 --out clips/")
    main(["generate", "--checkpoint", ckpt, "--label", "1",
          "--count", "3", "--seed", "4", "--out", clips])
    wav = sorted(os.listdir(clips))[0]
    clip = load_wav(os.path.join(clips, wav))
    print(f"{wav}: {clip.samples.shape[0]} samples at {clip.sample_rate} Hz")
    print()

    print("$ wavegen eval --checkpoint ckpt --n-per-class 10")
    main(["eval", "--checkpoint", ckpt, "--n-per-class", "10"])
    print()
    print("(30 steps is far too few to score well; see demo 04 and the")
    print(" README recipe for runs that actually converge.)")
