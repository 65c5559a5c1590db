"""Command line entry points: train, generate, eval.

Seeding: one run seed fans out into fixed namespaces so each consumer has
an independent stream and resume can rebuild any of them.

    default_rng([seed, 0])  parameter init
    default_rng([seed, 1])  model stream: z draws, phase shuffle,
                            interpolation, generator-update labels
    default_rng([seed, 2])  synthetic corpus construction
    default_rng([seed, 3])  batch shuffling

The model stream's state is serialized into every checkpoint.  The batch
stream is rebuilt on resume by re-seeding and skipping the batches the
completed steps already consumed, so a resumed run replays the exact
trajectory of an uninterrupted one.
"""

from __future__ import annotations

import argparse
import os
import re
import sys

import numpy as np

from .audio import batch_iter, load_corpus, save_wav, synth_corpus
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, config_to_text, parse_config
from .evaluate import eval_fidelity
from .nets import build_discriminator, build_generator, synthesize
from .optim import Adam, NonFiniteGradient, train_step


class TrainingDiverged(RuntimeError):
    """Loss or gradient went non-finite; an emergency checkpoint was written."""


def _resolve_out_dir(cfg: RunConfig) -> str:
    return cfg.out_dir or os.environ.get("WAVEGEN_OUT") or "."


def _resolve_corpus(cfg: RunConfig):
    source = cfg.corpus
    m = re.fullmatch(r"synth:(\d+)x(\d+)", source)
    if m:
        rng = np.random.default_rng([cfg.seed, 2])
        return synth_corpus(int(m.group(1)), int(m.group(2)), cfg.out_len, rng)
    if not os.path.isdir(source):
        raise ValueError(f"corpus {source!r} is neither a directory nor a synth:CxN source")
    return load_corpus(source, cfg.out_len, cfg.silence_threshold)


def _batch_stream(corpus, batch_size, rng, skip=0):
    """Endless shuffled batches; `skip` discards already-consumed ones."""
    while True:
        for batch in batch_iter(corpus, batch_size, rng):
            if skip > 0:
                skip -= 1
                continue
            yield batch


def _restore(params, arrays, prefix):
    for name, tensor in params.named().items():
        key = f"{prefix}.{name}"
        if key not in arrays:
            raise ValueError(f"checkpoint missing tensor {key}")
        if arrays[key].shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint tensor {key} has shape {arrays[key].shape}, "
                f"model expects {tensor.data.shape}"
            )
        tensor.data[...] = arrays[key]


def _save_run_checkpoint(path, cfg, step, gen, disc, opt_g, opt_d, model_rng):
    tensors = {}
    tensors.update({f"gen.{k}": t.data for k, t in gen.named().items()})
    tensors.update({f"disc.{k}": t.data for k, t in disc.named().items()})
    tensors.update(opt_g.state_arrays("adam_g"))
    tensors.update(opt_d.state_arrays("adam_d"))
    state = {
        "rng": model_rng.bit_generator.state,
        "adam_g_t": opt_g.t,
        "adam_d_t": opt_d.t,
    }
    save_checkpoint(path, config_to_text(cfg), step, tensors, state)


def run_training(cfg: RunConfig, resume=None, echo=print, echo_every=100) -> str:
    corpus = _resolve_corpus(cfg)
    if corpus.num_classes != cfg.num_classes:
        raise ValueError(
            f"corpus has {corpus.num_classes} classes, config says {cfg.num_classes}"
        )
    if cfg.batch_size > len(corpus):
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds corpus size {len(corpus)}"
        )
    if min(cfg.total_steps, cfg.d_updates_per_g, cfg.g_updates,
           cfg.checkpoint_every) < 1:
        raise ValueError("total_steps, d_updates_per_g, g_updates, "
                         "checkpoint_every must be >= 1")

    model_cfg = cfg.model()
    init_rng = np.random.default_rng([cfg.seed, 0])
    gen = build_generator(model_cfg, init_rng)
    disc = build_discriminator(model_cfg, init_rng)
    opt_g = Adam(gen.named(), cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps)
    opt_d = Adam(disc.named(), cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps)
    model_rng = np.random.default_rng([cfg.seed, 1])

    start_step = 0
    if resume is not None:
        _, step, arrays, state = load_checkpoint(resume)
        _restore(gen, arrays, "gen")
        _restore(disc, arrays, "disc")
        opt_g.load_state_arrays("adam_g", arrays, state["adam_g_t"])
        opt_d.load_state_arrays("adam_d", arrays, state["adam_d_t"])
        model_rng.bit_generator.state = state["rng"]
        start_step = int(step)

    data_rng = np.random.default_rng([cfg.seed, 3])
    stream = _batch_stream(corpus, cfg.batch_size, data_rng,
                           skip=start_step * cfg.d_updates_per_g)
    next_batch = lambda: next(stream)

    out_dir = _resolve_out_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    final_path = os.path.join(out_dir, f"ckpt-{cfg.total_steps:06d}.cwgn")
    log_mode = "a" if resume is not None else "w"
    with open(os.path.join(out_dir, "loss_log.txt"), log_mode) as log:
        for step in range(start_step + 1, cfg.total_steps + 1):
            try:
                report = train_step(next_batch, gen, disc, model_cfg,
                                    opt_g, opt_d, model_rng, cfg.d_updates_per_g,
                                    cfg.g_updates)
            except NonFiniteGradient as exc:
                _save_run_checkpoint(os.path.join(out_dir, "ckpt-emergency.cwgn"),
                                     cfg, step - 1, gen, disc, opt_g, opt_d, model_rng)
                raise TrainingDiverged(f"diverged at step {step}: {exc}") from exc
            line = (f"{step} {report.d_loss:.9g} {report.g_loss:.9g} "
                    f"{report.penalty:.9g}")
            log.write(line + "\n")
            log.flush()
            if not report.finite():
                _save_run_checkpoint(os.path.join(out_dir, "ckpt-emergency.cwgn"),
                                     cfg, step, gen, disc, opt_g, opt_d, model_rng)
                raise TrainingDiverged(f"non-finite loss at step {step}")
            if step == 1 or step % echo_every == 0 or step == cfg.total_steps:
                echo(line)
            if step % cfg.checkpoint_every == 0 or step == cfg.total_steps:
                path = os.path.join(out_dir, f"ckpt-{step:06d}.cwgn")
                _save_run_checkpoint(path, cfg, step, gen, disc, opt_g, opt_d,
                                     model_rng)
    return final_path


def _load_generator(ckpt_path):
    config_text, step, arrays, _ = load_checkpoint(ckpt_path)
    cfg = parse_config(config_text)
    gen = build_generator(cfg.model(), np.random.default_rng(0))
    _restore(gen, arrays, "gen")
    return cfg, gen, step


def _cmd_train(args):
    if args.resume is not None:
        if args.config is not None:
            raise ValueError("use either --config or --resume, not both")
        if args.seed is not None:
            raise ValueError("--seed cannot change when resuming; it is part of the run")
        config_text, _, _, _ = load_checkpoint(args.resume)
        cfg = parse_config(config_text)
    else:
        if args.config is None:
            raise ValueError("train needs --config or --resume")
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    if args.steps is not None:
        cfg = cfg.replace(total_steps=args.steps)
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    final = run_training(cfg, resume=args.resume)
    print(f"final checkpoint: {final}")
    return 0


def _cmd_generate(args):
    cfg, gen, _ = _load_generator(args.checkpoint)
    model_cfg = cfg.model()
    if not 0 <= args.label < model_cfg.num_classes:
        raise ValueError(
            f"label {args.label} out of range for {model_cfg.num_classes} classes"
        )
    rng = np.random.default_rng([args.seed, 5])
    labels = np.full(args.count, args.label, dtype=np.int64)
    clips = synthesize(gen, labels, model_cfg, rng)
    os.makedirs(args.out, exist_ok=True)
    clipped = 0
    for i in range(args.count):
        path = os.path.join(args.out, f"gen_label{args.label}_{i:03d}.wav")
        clipped += save_wav(path, clips[i, :, 0])
        print(path)
    print(f"wrote {args.count} clip(s), {clipped} sample(s) clipped")
    return 0


def _cmd_eval(args):
    cfg, gen, step = _load_generator(args.checkpoint)
    corpus = _resolve_corpus(cfg)
    rng = np.random.default_rng([args.seed, 4])
    report = eval_fidelity(gen, cfg.model(), corpus, args.n_per_class, rng)
    print(f"checkpoint step {step}")
    for line in report.lines():
        print(line)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wavegen",
        description="Train and sample a class-conditional raw-audio GAN.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run or resume a training loop")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="override total_steps")
    p.add_argument("--out", default=None, help="override output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="write WAV clips from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="score label fidelity of generated clips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-per-class", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:  # CheckpointError and friends
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
