import numpy as np
import pytest

from navworld.agent import (
    ArchitectureSpec,
    act,
    build,
    detach_state,
    forward,
    micro_spec,
    policy_probs,
    reward_features,
    zero_state,
)
from navworld.autodiff import GradBuffer, Tape, backward, categorical_nll, mse, scale
from navworld.errors import ConfigurationError, UsageError
from navworld.world import MazeEnv, Observation, generate_layout


def synth_obs(rng, h=32, w=32, prev_action=3, prev_reward=0.25):
    onehot = np.zeros(8, dtype=np.float32)
    if prev_action is not None:
        onehot[prev_action] = 1.0
    return Observation(
        rgb=rng.integers(0, 256, (3, h, w)).astype(np.uint8),
        depth_raw=rng.uniform(0.3, 9.0, (h, w)).astype(np.float32),
        velocity=rng.standard_normal(6).astype(np.float32) * 0.05,
        prev_action=onehot,
        prev_reward=prev_reward,
    )


SMALL = ArchitectureSpec(
    variant="stacked_lstm",
    heads=("depth_conv", "depth_lstm", "loop"),
    lstm1_width=8,
    lstm2_width=16,
    img_h=32,
    img_w=32,
    conv1=(4, 8, 4),
    conv2=(8, 4, 2),
    aux_hidden=8,
)


class TestBuild:
    def test_ff_param_count_closed_form(self):
        spec = ArchitectureSpec(variant="ff", heads=(), img_h=84, img_w=84)
        net = build(spec, np.random.default_rng(0))
        conv1 = 16 * 3 * 8 * 8 + 16
        conv2 = 32 * 16 * 4 * 4 + 32
        n_f = 32 * 9 * 9
        fc = 256 * n_f + 256
        heads = (8 * 256 + 8) + (1 * 256 + 1)
        assert net.pv.size == conv1 + conv2 + fc + heads

    def test_stacked_lstm1_sees_reward_only(self):
        net = build(SMALL, np.random.default_rng(0))
        n_f = int(np.prod(SMALL.conv_out_shape()))
        assert net.pv.registry["lstm1/Wx"][1] == (4 * 8, n_f + 1)
        assert net.pv.registry["lstm2/Wx"][1] == (4 * 16, 8 + n_f + 6 + 8)

    def test_same_seed_same_params(self):
        a = build(SMALL, np.random.default_rng(123))
        b = build(SMALL, np.random.default_rng(123))
        np.testing.assert_array_equal(a.pv.flat, b.pv.flat)

    def test_invalid_combos_rejected(self):
        with pytest.raises(ConfigurationError):
            ArchitectureSpec(variant="ff", heads=("depth_lstm",)).validate()
        with pytest.raises(ConfigurationError):
            ArchitectureSpec(variant="ff", heads=("loop",)).validate()
        with pytest.raises(ConfigurationError):
            ArchitectureSpec(variant="transformer").validate()
        with pytest.raises(ConfigurationError):
            ArchitectureSpec(heads=("depth_lstm", "bogus")).validate()

    def test_ff_admits_depth_conv_and_reward(self):
        spec = ArchitectureSpec(variant="ff", heads=("depth_conv", "reward"), img_h=32, img_w=32)
        net = build(spec, np.random.default_rng(0))
        assert "depth_conv/out/W" in net.pv.registry
        assert "reward/out/W" in net.pv.registry

    def test_micro_spec_stays_under_5k(self):
        net = build(micro_spec(), np.random.default_rng(0), dtype=np.float64)
        assert net.pv.size <= 5000

    def test_rgbd_changes_only_first_conv(self):
        rgb = build(ArchitectureSpec(variant="lstm", heads=(), img_h=32, img_w=32), np.random.default_rng(0))
        rgbd = build(
            ArchitectureSpec(variant="lstm", heads=(), input_mode="rgbd", img_h=32, img_w=32),
            np.random.default_rng(0),
        )
        diff = [
            name
            for name in rgb.pv.registry
            if rgb.pv.registry[name][1] != rgbd.pv.registry[name][1]
        ]
        assert diff == ["conv1/W"]
        assert rgbd.pv.registry["conv1/W"][1][1] == 4


class TestForward:
    def test_zero_params_uniform_policy(self):
        net = build(SMALL, np.random.default_rng(0))
        net.pv.flat[:] = 0.0
        obs = synth_obs(np.random.default_rng(1))
        out, _ = forward(net, obs, zero_state(SMALL))
        np.testing.assert_allclose(policy_probs(out.policy_logits.data), np.full(8, 0.125), atol=1e-7)
        assert out.value.data[0] == 0.0

    def test_heads_follow_spec(self):
        rng = np.random.default_rng(2)
        obs = synth_obs(rng)
        bare = build(ArchitectureSpec(variant="stacked_lstm", heads=(), lstm1_width=8, lstm2_width=16, img_h=32, img_w=32, conv1=(4, 8, 4), conv2=(8, 4, 2)), rng)
        out, _ = forward(bare, obs, zero_state(bare.spec))
        assert out.depth_conv is None and out.depth_lstm is None and out.loop_logit is None and out.reward_logits is None
        full = build(SMALL, rng)
        out, _ = forward(full, obs, zero_state(SMALL))
        assert out.depth_conv.data.shape == (64, 8)
        assert out.depth_lstm.data.shape == (64, 8)
        assert out.loop_logit.data.shape == (1,)

    def test_regress_mode_shapes(self):
        spec = ArchitectureSpec(**{**SMALL.__dict__, "depth_mode": "regress"})
        net = build(spec, np.random.default_rng(0))
        out, _ = forward(net, synth_obs(np.random.default_rng(1)), zero_state(spec))
        assert out.depth_conv.data.shape == (64,)

    def test_forward_pure(self):
        net = build(SMALL, np.random.default_rng(3))
        obs = synth_obs(np.random.default_rng(4))
        st = zero_state(SMALL)
        out1, _ = forward(net, obs, st)
        out2, _ = forward(net, obs, st)
        np.testing.assert_array_equal(out1.policy_logits.data, out2.policy_logits.data)
        np.testing.assert_array_equal(out1.depth_lstm.data, out2.depth_lstm.data)

    def test_state_width_mismatch(self):
        net = build(SMALL, np.random.default_rng(3))
        bad = zero_state(ArchitectureSpec(**{**SMALL.__dict__, "lstm2_width": 12}))
        with pytest.raises(UsageError):
            forward(net, synth_obs(np.random.default_rng(0)), bad)

    def test_reward_isolated_from_policy_when_h1_path_cut(self):
        net = build(SMALL, np.random.default_rng(5))
        # cut lstm2's view of h1: zero the first lstm1_width input columns
        net.pv.view("lstm2/Wx")[:, : SMALL.lstm1_width] = 0.0
        rng = np.random.default_rng(6)
        obs_a = synth_obs(rng, prev_reward=0.0)
        obs_b = Observation(obs_a.rgb, obs_a.depth_raw, obs_a.velocity, obs_a.prev_action, 1.0)
        st = zero_state(SMALL)
        out_a, st_a = forward(net, obs_a, st)
        out_b, st_b = forward(net, obs_b, st)
        assert not np.array_equal(st_a.h1.data, st_b.h1.data)  # reward reaches layer 1
        np.testing.assert_array_equal(out_a.policy_logits.data, out_b.policy_logits.data)

    def test_rgbd_forward_needs_plane(self):
        spec = ArchitectureSpec(variant="lstm", heads=(), input_mode="rgbd", img_h=32, img_w=32)
        net = build(spec, np.random.default_rng(0))
        obs = synth_obs(np.random.default_rng(1))
        with pytest.raises(UsageError):
            forward(net, obs, zero_state(spec))
        plane = np.zeros((32, 32))
        out, _ = forward(net, obs, zero_state(spec), depth_plane=plane)
        assert out.policy_logits.data.shape == (8,)


class TestRecurrentCarry:
    def test_chunked_equals_whole(self):
        lay = generate_layout("static_mini", 2)
        env = MazeEnv(lay, img_hw=(32, 32))
        net = build(SMALL, np.random.default_rng(7))
        rng = np.random.default_rng(8)
        obs_seq = [env.reset(4)]
        for _ in range(99):
            obs, _, done, _ = env.step(int(rng.integers(8)))
            obs_seq.append(obs)
            if done:
                break

        def run(split):
            st = zero_state(SMALL)
            outs = []
            for i, obs in enumerate(obs_seq):
                if i == split:
                    st = detach_state(st)
                out, st = forward(net, obs, st)
                outs.append(out.policy_logits.data.copy())
            return np.asarray(outs)

        whole = run(split=None)
        halves = run(split=50)
        np.testing.assert_allclose(whole, halves, atol=1e-5)
        np.testing.assert_array_equal(whole, halves)  # detaching only copies state


class TestHeadIsolation:
    def build_taped(self):
        net = build(SMALL, np.random.default_rng(9), dtype=np.float64)
        gbuf = GradBuffer(net.pv)
        obs = synth_obs(np.random.default_rng(10))
        tape = Tape()
        out, _ = forward(net, obs, zero_state(SMALL, np.float64), tape, gbuf)
        return net, gbuf, tape, out

    def test_depth_conv_loss_skips_recurrent_params(self):
        net, gbuf, tape, out = self.build_taped()
        loss = categorical_nll(tape, out.depth_conv, np.zeros(64, dtype=int))
        backward(tape, loss)
        for name in ("lstm1/Wx", "lstm1/Wh", "lstm2/Wx", "policy/W", "loop/out/W", "depth_lstm/out/W"):
            assert np.all(gbuf.view(name) == 0.0), name
        assert np.any(gbuf.view("depth_conv/out/W") != 0.0)
        assert np.any(gbuf.view("conv1/W") != 0.0)

    def test_loop_loss_skips_depth_head_params(self):
        net, gbuf, tape, out = self.build_taped()
        from navworld.autodiff import bernoulli_nll

        loss = bernoulli_nll(tape, out.loop_logit, 1.0)
        backward(tape, loss)
        for name in ("depth_conv/fc/W", "depth_conv/out/W", "depth_lstm/out/W", "policy/W", "value/W"):
            assert np.all(gbuf.view(name) == 0.0), name
        assert np.any(gbuf.view("loop/out/W") != 0.0)
        assert np.any(gbuf.view("lstm2/Wx") != 0.0)


class TestAct:
    def test_dominant_logit_always_wins(self):
        rng = np.random.default_rng(0)
        logits = np.zeros(8)
        logits[5] = 1e6
        assert all(act(logits, rng) == 5 for _ in range(200))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(1)
        counts = np.zeros(8)
        n = 100_000
        logits = np.zeros(8)
        for _ in range(n):
            counts[act(logits, rng)] += 1
        np.testing.assert_allclose(counts / n, np.full(8, 0.125), atol=0.02)

    def test_seeded_reproducibility(self):
        logits = np.random.default_rng(3).standard_normal(8)
        rng1, rng2 = np.random.default_rng(7), np.random.default_rng(7)
        s1 = [act(logits, rng1) for _ in range(20)]
        s2 = [act(logits, rng2) for _ in range(20)]
        assert s1 == s2


class TestRewardFeatures:
    def test_replay_path_shape(self):
        spec = ArchitectureSpec(
            variant="stacked_lstm", heads=("reward",), lstm1_width=8, lstm2_width=16, img_h=32, img_w=32, conv1=(4, 8, 4), conv2=(8, 4, 2), aux_hidden=8
        )
        net = build(spec, np.random.default_rng(0))
        frame = np.random.default_rng(1).integers(0, 256, (3, 32, 32)).astype(np.uint8)
        logits = reward_features(net, frame, None, None)
        assert logits.data.shape == (3,)

    def test_missing_head_rejected(self):
        net = build(SMALL, np.random.default_rng(0))
        with pytest.raises(UsageError):
            reward_features(net, np.zeros((3, 32, 32), dtype=np.uint8), None, None)
