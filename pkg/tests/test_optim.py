"""Adam and alternating-update tests.

The Adam trajectory oracle is an independent scalar recursion kept in
plain Python floats.
"""

import unittest.mock

import numpy as np
import pytest

from wavegen.nets import ModelConfig, build_discriminator, build_generator, generator_forward
from wavegen.optim import Adam, LossReport, NonFiniteGradient, train_step
from wavegen.tensor import Tensor, backward, mean_all


def scalar_adam_reference(theta, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Minimize theta^2; returns the visited iterates."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * theta
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        theta = theta - lr * mhat / (vhat**0.5 + eps)
        out.append(theta)
    return out


class TestAdam:
    def test_scalar_trajectory_matches_reference(self):
        """Five steps on theta^2 from theta=1 with lr=0.1."""
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"theta": p}, lr=0.1)
        expect = scalar_adam_reference(1.0, 5, 0.1)
        for step in range(5):
            opt.zero_grad()
            backward(mean_all(p * p))
            opt.step()
            assert abs(float(p.data[0]) - expect[step]) < 1e-14

    def test_first_step_is_signed_lr(self):
        """With any nonzero gradient the first update is ~ -lr * sign(g)."""
        p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        p.grad = Tensor(np.array([7.0, -0.001]))
        Adam({"p": p}, lr=0.1).step()
        assert np.allclose(p.data, [2.9, -1.9], atol=1e-6)

    def test_bias_correction_counter(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        opt = Adam({"p": p}, lr=0.01)
        for _ in range(4):
            p.grad = Tensor(np.ones(3))
            opt.step()
        assert opt.t == 4

    def test_nonfinite_gradient_aborts_naming_parameter(self):
        p = Tensor(np.ones(2), requires_grad=True)
        q = Tensor(np.ones(2), requires_grad=True)
        opt = Adam({"fine": p, "broken": q}, lr=0.1)
        p.grad = Tensor(np.ones(2))
        q.grad = Tensor(np.array([1.0, np.nan]))
        with pytest.raises(NonFiniteGradient, match="broken"):
            opt.step()
        # aborted step leaves every parameter and the counter untouched
        assert np.array_equal(p.data, np.ones(2))
        assert np.array_equal(q.data, np.ones(2))
        assert opt.t == 0

    def test_missing_gradient_rejected(self):
        p = Tensor(np.ones(2), requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        with pytest.raises(ValueError, match="p"):
            opt.step()

    def test_float32_state(self):
        p = Tensor(np.ones(2, np.float32), requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        p.grad = Tensor(np.ones(2, np.float32))
        opt.step()
        assert p.data.dtype == np.float32
        assert opt.m["p"].dtype == np.float32
        assert opt.v["p"].dtype == np.float32


def tiny_setup(loss_mode, conditioning="concat", seed=0):
    cfg = ModelConfig(
        model_dim=2,
        out_len=64,
        strides=(2, 2),
        z_dim=5,
        num_classes=3,
        conditioning=conditioning,
        loss_mode=loss_mode,
    )
    rng = np.random.default_rng(seed)
    gen = build_generator(cfg, rng)
    disc = build_discriminator(cfg, rng)
    opt_g = Adam(gen.named(), lr=1e-4)
    opt_d = Adam(disc.named(), lr=1e-4)
    data = np.random.default_rng(seed + 1)

    def next_batch():
        x = data.normal(size=(4, 64, 1)).astype(np.float32) * 0.5
        y = data.integers(0, 3, size=4)
        return x, y

    return cfg, gen, disc, opt_g, opt_d, next_batch


class TestTrainStep:
    @pytest.mark.parametrize("loss_mode", ["dcgan", "wgan_gp"])
    def test_report_and_param_movement(self, loss_mode):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup(loss_mode)
        before = {k: v.data.copy() for k, v in {**gen.named(), **disc.named()}.items()}
        rep = train_step(nb, gen, disc, cfg, opt_g, opt_d, np.random.default_rng(2), d_updates=2)
        assert isinstance(rep, LossReport)
        assert np.isfinite(rep.d_loss) and np.isfinite(rep.g_loss)
        if loss_mode == "dcgan":
            assert rep.penalty == 0.0
        else:
            assert rep.penalty > 0.0
        moved = [
            k for k, v in {**gen.named(), **disc.named()}.items()
            if not np.array_equal(before[k], v.data)
        ]
        assert "dense.w" in moved and "conv0.w" in moved

    def test_update_counters_follow_schedule(self):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup("dcgan")
        rng = np.random.default_rng(3)
        for _ in range(3):
            train_step(nb, gen, disc, cfg, opt_g, opt_d, rng, d_updates=5)
        assert opt_d.t == 15
        assert opt_g.t == 3

    def test_generator_multiplicity(self):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup("dcgan")
        rng = np.random.default_rng(6)
        train_step(nb, gen, disc, cfg, opt_g, opt_d, rng, d_updates=2, g_updates=3)
        assert opt_d.t == 2
        assert opt_g.t == 3

    def test_balanced_generator_labels(self):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup("dcgan")
        seen = []
        orig = generator_forward

        def spy(params, z, labels, mcfg, record=None):
            seen.append(np.asarray(labels))
            return orig(params, z, labels, mcfg, record=record)

        with unittest.mock.patch("wavegen.optim.generator_forward", spy):
            train_step(nb, gen, disc, cfg, opt_g, opt_d, np.random.default_rng(9),
                       d_updates=1)
        # last call is the generator update: batch 4 over 3 classes gives
        # every class at least once and at most twice
        counts = np.bincount(seen[-1], minlength=3)
        assert counts.min() >= 1 and counts.max() <= 2

    def test_fresh_batch_per_critic_update(self):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup("dcgan")
        calls = []

        def counting_batch():
            calls.append(1)
            return nb()

        train_step(counting_batch, gen, disc, cfg, opt_g, opt_d, np.random.default_rng(4), d_updates=3)
        assert len(calls) == 3

    @pytest.mark.parametrize("loss_mode", ["dcgan", "wgan_gp"])
    def test_bitwise_determinism(self, loss_mode):
        outs = []
        for _ in range(2):
            cfg, gen, disc, opt_g, opt_d, nb = tiny_setup(loss_mode, seed=7)
            rng = np.random.default_rng(8)
            reps = [train_step(nb, gen, disc, cfg, opt_g, opt_d, rng, d_updates=2) for _ in range(2)]
            outs.append((reps, {k: v.data.copy() for k, v in gen.named().items()}))
        assert outs[0][0] == outs[1][0]
        for k in outs[0][1]:
            assert np.array_equal(outs[0][1][k], outs[1][1][k])

    def test_scale_conditioning_trains(self):
        cfg, gen, disc, opt_g, opt_d, nb = tiny_setup("dcgan", conditioning="scale")
        train_step(nb, gen, disc, cfg, opt_g, opt_d, np.random.default_rng(5), d_updates=1)
        assert not np.all(gen.scales[0].data == 1.0) or not np.all(
            disc.scales[0].data == 1.0
        )
