import numpy as np
import pytest

from navworld.agent import ArchitectureSpec, build
from navworld.analysis import (
    EpisodeLog,
    collect_dataset,
    curve_auc,
    episode_log_from_jsonl,
    export_activations,
    latency_metric,
    loop_f1,
    metrics_report,
    resample_curves,
    run_episode,
    top_k_mean,
    train_position_decoder,
)
from navworld.errors import DataError, UsageError
from navworld.world import MazeEnv, generate_layout

TINY = ArchitectureSpec(
    variant="stacked_lstm",
    heads=("depth_lstm", "loop"),
    lstm1_width=8,
    lstm2_width=16,
    img_h=16,
    img_w=16,
    conv1=(4, 4, 2),
    conv2=(8, 3, 2),
    aux_hidden=8,
)


def synth_log(goal_env_steps, steps=10):
    log = EpisodeLog(episode_seed=0, maze_kind="static_mini", layout_seed=1)
    log.goal_env_steps = list(goal_env_steps)
    log.goal_flags = [0] * steps
    log.actions = [0] * steps
    return log


class TestLatency:
    def test_hand_computed_case(self):
        t_first, t_rest = latency_metric([synth_log([600, 1200])])
        assert t_first == pytest.approx(10.0, abs=1e-12)
        assert t_rest == pytest.approx(10.0, abs=1e-12)

    def test_goal_at_step_zero(self):
        t_first, _ = latency_metric([synth_log([0])])
        assert t_first == 0.0

    def test_exclusions(self):
        logs = [synth_log([]), synth_log([300]), synth_log([600, 900, 1500])]
        t_first, t_rest = latency_metric(logs)
        assert t_first == pytest.approx((300 / 60 + 600 / 60) / 2)
        assert t_rest == pytest.approx(((900 - 600) / 60 + (1500 - 900) / 60) / 2)

    def test_no_goals_anywhere(self):
        t_first, t_rest = latency_metric([synth_log([]), synth_log([])])
        assert t_first is None and t_rest is None


class TestLoopF1:
    def test_perfect_prediction(self):
        labels = np.array([0, 1, 0, 1, 1])
        assert loop_f1(labels, labels) == 1.0

    def test_all_negative_prediction(self):
        assert loop_f1(np.zeros(5), np.array([0, 1, 1, 0, 0])) == 0.0

    def test_two_thirds_case(self):
        pred = np.array([1, 1, 1, 0, 0])  # TP=2, FP=1
        true = np.array([1, 1, 0, 1, 0])  # FN=1
        assert loop_f1(pred, true) == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_confusion_convention(self):
        assert loop_f1(np.zeros(4), np.zeros(4)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            loop_f1(np.zeros(3), np.zeros(4))

    def test_matches_confusion_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            pred = rng.integers(0, 2, n).astype(bool)
            true = rng.integers(0, 2, n).astype(bool)
            tp = np.sum(pred & true)
            fp = np.sum(pred & ~true)
            fn = np.sum(~pred & true)
            if tp == 0:
                expected = 0.0
            else:
                p = tp / (tp + fp)
                r = tp / (tp + fn)
                expected = 2 * p * r / (p + r)
            assert loop_f1(pred, true) == pytest.approx(expected, abs=1e-12)


class TestCurves:
    def test_constant_curve(self):
        assert curve_auc([0, 100, 200], [7.0, 7.0, 7.0]) == pytest.approx(7.0)

    def test_linear_rise(self):
        steps = np.linspace(0, 1000, 11)
        scores = np.linspace(0, 100, 11)
        assert curve_auc(steps, scores) == pytest.approx(50.0, abs=1e-12)

    def test_resampling_invariance(self):
        steps = np.linspace(0, 1000, 6)
        scores = np.array([0.0, 10.0, 5.0, 20.0, 15.0, 30.0])
        dense = np.linspace(0, 1000, 4001)
        dense_scores = np.interp(dense, steps, scores)
        assert curve_auc(dense, dense_scores) == pytest.approx(curve_auc(steps, scores), abs=1e-9)

    def test_top_k_selects_best(self):
        curves = [
            (np.array([0.0, 100.0]), np.array([0.0, 10.0])),
            (np.array([0.0, 100.0]), np.array([0.0, 50.0])),
            (np.array([0.0, 100.0]), np.array([0.0, 30.0])),
        ]
        grid, best = top_k_mean(curves, k=1)
        assert best[-1] == pytest.approx(50.0)

    def test_top_k_warns_when_too_few(self):
        curves = [(np.array([0.0, 1.0]), np.array([1.0, 2.0]))]
        with pytest.warns(UserWarning):
            grid, mean = top_k_mean(curves, k=5)
        assert mean[-1] == pytest.approx(2.0)

    def test_common_grid(self):
        curves = [
            (np.array([0.0, 50.0, 100.0]), np.array([0.0, 5.0, 10.0])),
            (np.array([10.0, 90.0]), np.array([1.0, 9.0])),
        ]
        grid, mat = resample_curves(curves, n_points=9)
        assert grid[0] == 10.0 and grid[-1] == 90.0
        assert mat.shape == (2, 9)


class TestDecoder:
    def make_dataset(self, n=600, cells=25, dim=None, sep=True, seed=0):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, cells, n)
        episode_ids = np.repeat(np.arange(n // 50), 50)
        if sep:
            feats = np.eye(cells)[labels] + rng.normal(scale=0.05, size=(n, cells))
        else:
            feats = rng.normal(size=(n, dim or cells))
        return feats, labels, episode_ids

    def test_separable_features_decode(self):
        feats, labels, eps = self.make_dataset()
        model, acc = train_position_decoder(feats, labels, eps, num_cells=25)
        assert acc > 0.95

    def test_noise_features_stay_near_chance(self):
        feats, labels, eps = self.make_dataset(sep=False, dim=32, n=1000)
        _, acc = train_position_decoder(feats, labels, eps, num_cells=25)
        assert acc == pytest.approx(1 / 25, abs=0.5 / 25)

    def test_single_class_rejected(self):
        feats = np.random.default_rng(0).normal(size=(100, 4))
        labels = np.full(100, 3)
        with pytest.raises(DataError):
            train_position_decoder(feats, labels, np.repeat([0, 1], 50), num_cells=25)


class TestEpisodeLogs:
    def run_tiny_episode(self, collect=True, seed=4):
        lay = generate_layout("static_mini", 1)
        env = MazeEnv(lay, img_hw=(16, 16))
        net = build(TINY, np.random.default_rng(0))
        return net, run_episode(net, env, episode_seed=seed, rng=np.random.default_rng(1), collect_features=collect)

    def test_jsonl_round_trip(self):
        net, log = self.run_tiny_episode()
        text = log.to_jsonl()
        back = episode_log_from_jsonl(text)
        assert len(back) == 1
        b = back[0]
        assert b.score == log.score
        assert b.cells == log.cells
        assert b.actions == log.actions
        assert b.goal_env_steps == log.goal_env_steps
        np.testing.assert_allclose(np.asarray(b.positions), np.asarray(log.positions), atol=1e-8)

    def test_episode_is_deterministic(self):
        _, a = self.run_tiny_episode()
        _, b = self.run_tiny_episode()
        assert a.actions == b.actions and a.score == b.score

    def test_collect_dataset_shapes(self):
        lay = generate_layout("static_mini", 1)
        env = MazeEnv(lay, img_hw=(16, 16))
        net = build(TINY, np.random.default_rng(0))
        feats, labels, eps = collect_dataset(net, env, n_episodes=2, seed=7)
        assert feats.shape == (2 * 225, 16)
        assert labels.min() >= 0 and labels.max() < 25
        assert set(eps.tolist()) == {0, 1}

    def test_collect_dataset_empty(self):
        lay = generate_layout("static_mini", 1)
        env = MazeEnv(lay, img_hw=(16, 16))
        net = build(TINY, np.random.default_rng(0))
        feats, labels, eps = collect_dataset(net, env, n_episodes=0, seed=7)
        assert len(feats) == 0 and len(labels) == 0

    def test_export_activations_schema(self, tmp_path):
        net, log = self.run_tiny_episode()
        path = tmp_path / "act.csv"
        rows = export_activations(net, [log], path)
        lines = path.read_text().strip().splitlines()
        assert rows == len(log)
        assert len(lines) == 1 + len(log)
        assert len(lines[0].split(",")) == 3 + TINY.lstm2_width
        goal_ids = {line.split(",")[2] for line in lines[1:]}
        assert len(goal_ids) == 1  # constant within the episode

    def test_export_requires_recurrent(self, tmp_path):
        spec = ArchitectureSpec(variant="ff", heads=(), img_h=16, img_w=16, conv1=(4, 4, 2), conv2=(8, 3, 2))
        net = build(spec, np.random.default_rng(0))
        with pytest.raises(UsageError):
            export_activations(net, [], tmp_path / "x.csv")

    def test_metrics_report_fields(self):
        net, log = self.run_tiny_episode()
        report = metrics_report([log])
        for key in ("episodes", "goals", "score", "latency_first_s", "latency_rest_s", "position_acc", "auc", "loop_f1"):
            assert key in report
        assert report["episodes"] == 1
        assert report["loop_f1"] is not None  # loop head was present


class TestDecoderLeavesAgentAlone:
    def test_agent_params_untouched(self):
        lay = generate_layout("static_mini", 1)
        env = MazeEnv(lay, img_hw=(16, 16))
        net = build(TINY, np.random.default_rng(0))
        before = net.pv.flat.copy()
        feats, labels, eps = collect_dataset(net, env, n_episodes=3, seed=11)
        train_position_decoder(feats, labels, eps, num_cells=lay.n_locations)
        np.testing.assert_array_equal(net.pv.flat, before)
