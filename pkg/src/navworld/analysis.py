"""Evaluation machinery: episode logs, position decoding, latency, F1, AUC.

Everything here is read-only over checkpoints and logs.  The position
decoder is a plain multinomial logistic regression trained by full-batch
gradient descent on frozen agent activations; it never touches the agent's
parameters.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .agent import ArchitectureSpec, Network, act, forward, zero_state
from .errors import DataError, UsageError
from .targets import LoopLabeller, LoopThresholds
from .world import ENV_STEPS_PER_SECOND, MazeEnv


@dataclass
class EpisodeLog:
    """Per-agent-step record of one evaluation episode."""

    episode_seed: int
    maze_kind: str
    layout_seed: int
    score: float = 0.0
    goal_cell: tuple | None = None
    goal_env_steps: list = field(default_factory=list)  # exact env step of each goal event
    positions: list = field(default_factory=list)  # (x, y) per step
    cells: list = field(default_factory=list)
    rewards: list = field(default_factory=list)  # raw
    goal_flags: list = field(default_factory=list)  # goal events per step (0/1)
    actions: list = field(default_factory=list)
    values: list = field(default_factory=list)
    entropies: list = field(default_factory=list)
    respawn_steps: list = field(default_factory=list)
    features: list = field(default_factory=list)  # optional top activations
    loop_probs: list = field(default_factory=list)  # optional loop-head sigmoid
    loop_labels: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def to_jsonl(self) -> str:
        """One header line plus one line per step."""
        header = {
            "type": "episode",
            "episode_seed": self.episode_seed,
            "maze_kind": self.maze_kind,
            "layout_seed": self.layout_seed,
            "score": self.score,
            "goal_cell": list(self.goal_cell) if self.goal_cell else None,
            "goal_env_steps": list(self.goal_env_steps),
            "steps": len(self),
        }
        lines = [json.dumps(header)]
        for t in range(len(self)):
            row = {
                "t": t,
                "pos": [round(self.positions[t][0], 9), round(self.positions[t][1], 9)],
                "cell": self.cells[t],
                "reward": self.rewards[t],
                "goal": self.goal_flags[t],
                "action": self.actions[t],
                "value": self.values[t],
                "entropy": self.entropies[t],
            }
            if self.loop_probs:
                row["loop_p"] = self.loop_probs[t]
                row["loop_label"] = self.loop_labels[t]
            if self.features:
                row["h"] = [float(v) for v in self.features[t]]
            lines.append(json.dumps(row))
        return "\n".join(lines) + "\n"


def episode_log_from_jsonl(text: str) -> list[EpisodeLog]:
    logs: list[EpisodeLog] = []
    cur: EpisodeLog | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        if row.get("type") == "episode":
            cur = EpisodeLog(
                episode_seed=row["episode_seed"],
                maze_kind=row["maze_kind"],
                layout_seed=row["layout_seed"],
                score=row["score"],
                goal_cell=tuple(row["goal_cell"]) if row.get("goal_cell") else None,
                goal_env_steps=list(row.get("goal_env_steps", [])),
            )
            logs.append(cur)
            continue
        if cur is None:
            raise DataError("episode log step line before header")
        cur.positions.append(tuple(row["pos"]))
        cur.cells.append(row["cell"])
        cur.rewards.append(row["reward"])
        cur.goal_flags.append(row["goal"])
        cur.actions.append(row["action"])
        cur.values.append(row["value"])
        cur.entropies.append(row["entropy"])
        if "loop_p" in row:
            cur.loop_probs.append(row["loop_p"])
            cur.loop_labels.append(row["loop_label"])
        if "h" in row:
            cur.features.append(np.asarray(row["h"]))
    return logs


def run_episode(
    net: Network,
    env: MazeEnv,
    episode_seed: int,
    rng: np.random.Generator,
    collect_features: bool = False,
) -> EpisodeLog:
    """Roll the agent's own stochastic policy for one episode and log it.

    Reward shaping for the observations is whatever transform the env was
    built with; the log always records raw rewards.
    """
    log = EpisodeLog(episode_seed=episode_seed, maze_kind=env.layout.kind, layout_seed=env.layout.seed)
    obs = env.reset(episode_seed)
    log.goal_cell = env.goal_cell
    state = zero_state(net.spec, net.pv.dtype)
    labeller = LoopLabeller()
    has_loop = "loop" in net.spec.heads
    done = False
    while not done:
        out, state = forward(net, obs, state, None, None)
        pos = (env.pose.x, env.pose.y)
        if has_loop:
            log.loop_labels.append(labeller.append(pos))
            log.loop_probs.append(float(_sigmoid(out.loop_logit.data[0])))
        if collect_features:
            log.features.append(np.asarray(out.top.data, dtype=np.float32).copy())
        a = act(out.policy_logits.data, rng)
        obs, reward, done, info = env.step(a)
        log.positions.append(pos)
        log.cells.append(info["cell"])
        log.rewards.append(float(reward))
        log.goal_flags.append(int(info["goal"]))
        log.goal_env_steps.extend(info["goal_env_steps"])
        log.actions.append(a)
        log.values.append(float(out.value.data[0]))
        log.entropies.append(float(_entropy(out.policy_logits.data)))
        if info["respawns"]:
            log.respawn_steps.append(len(log.actions) - 1)
    log.score = env.score
    return log


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + np.exp(-z)) if z >= 0 else float(np.exp(z) / (1.0 + np.exp(z)))


def _entropy(logits: np.ndarray) -> float:
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    return float(-(p * np.log(np.maximum(p, 1e-30))).sum())


# ---------------------------------------------------------------------------
# position decoding


@dataclass
class DecoderModel:
    """Bias-free linear probe: logits are a pure linear map of the features,
    so label base rates cannot leak into the readout."""

    weights: np.ndarray  # (num_cells, feature dim)
    offset: np.ndarray  # (num_cells,) constant absorbed from feature standardization

    def predict_logprobs(self, feats: np.ndarray) -> np.ndarray:
        z = feats @ self.weights.T + self.offset
        z -= z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def predict(self, feats: np.ndarray) -> np.ndarray:
        return self.predict_logprobs(feats).argmax(axis=1)


def collect_dataset(net: Network, env: MazeEnv, n_episodes: int, seed: int):
    """Roll episodes under the agent's policy; returns (features, cell labels, episode ids)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0xDECD]))
    feats, labels, episode_ids = [], [], []
    for ep in range(n_episodes):
        log = run_episode(net, env, episode_seed=seed * 10_000 + ep, rng=rng, collect_features=True)
        feats.extend(log.features)
        labels.extend(log.cells)
        episode_ids.extend([ep] * len(log))
    if not feats:
        return np.zeros((0, 1)), np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=int), np.asarray(episode_ids, dtype=int)


def train_position_decoder(
    features: np.ndarray,
    labels: np.ndarray,
    episode_ids: np.ndarray,
    num_cells: int,
    holdout_fraction: float = 0.25,
    lr: float = 2.0,
    max_iters: int = 600,
    patience: int = 25,
    seed: int = 0,
):
    """Fit a bias-free linear multinomial decoder by full-batch gradient descent.

    The split is by episode to avoid temporal leakage; early stopping watches
    the held-out loss.  Without a bias term the probe cannot fall back on
    visitation base rates, so uninformative features score at chance.
    Returns (DecoderModel, held-out accuracy).
    """
    if len(np.unique(labels)) < 2:
        raise DataError("decoder needs at least two distinct cells in the labels")
    rng = np.random.default_rng(seed)
    eps = np.unique(episode_ids)
    rng.shuffle(eps)
    n_hold = max(1, int(round(len(eps) * holdout_fraction)))
    hold_eps = set(eps[:n_hold].tolist())
    hold = np.isin(episode_ids, list(hold_eps))
    if hold.all() or not hold.any():
        raise DataError("episode split produced an empty train or holdout set")

    mu = features[~hold].mean(axis=0)
    sd = features[~hold].std(axis=0) + 1e-8
    xtr = (features[~hold] - mu) / sd
    xho = (features[hold] - mu) / sd
    ytr, yho = labels[~hold], labels[hold]

    n, d = xtr.shape
    w = np.zeros((num_cells, d))
    best = (np.inf, w.copy())
    stale = 0
    onehot_rows = np.arange(n)
    for _ in range(max_iters):
        z = xtr @ w.T
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        p[onehot_rows, ytr] -= 1.0
        p /= n
        w -= lr * (p.T @ xtr)

        zh = xho @ w.T
        zh -= zh.max(axis=1, keepdims=True)
        lph = zh - np.log(np.exp(zh).sum(axis=1, keepdims=True))
        ho_loss = float(-lph[np.arange(len(yho)), yho].mean())
        if ho_loss < best[0] - 1e-6:
            best = (ho_loss, w.copy())
            stale = 0
        else:
            stale += 1
            if stale > patience:
                break
    # fold the standardization into the weights so the model applies to raw features
    w_raw = best[1] / sd
    model = DecoderModel(weights=w_raw, offset=-(w_raw @ mu))
    acc = float((model.predict(features[hold]) == yho).mean())
    return model, acc


# ---------------------------------------------------------------------------
# scalar metrics


def latency_metric(logs: list[EpisodeLog]) -> tuple[float | None, float | None]:
    """Mean seconds to the first goal, and mean seconds between later goals.

    Uses the exact env step of each goal event (60 env steps = 1 s).
    Episodes without goals are excluded from the first mean; episodes with
    fewer than two goals from the second.  Every qualifying event weighs
    equally within its mean.
    """
    firsts: list[float] = []
    gaps: list[float] = []
    for log in logs:
        events = log.goal_env_steps
        if not events:
            continue
        firsts.append(events[0] / ENV_STEPS_PER_SECOND)
        for a, b in zip(events, events[1:]):
            gaps.append((b - a) / ENV_STEPS_PER_SECOND)
    t_first = float(np.mean(firsts)) if firsts else None
    t_rest = float(np.mean(gaps)) if gaps else None
    return t_first, t_rest


def loop_f1(predicted, actual) -> float:
    """F1 of binary loop predictions; 0 by convention when precision+recall is 0."""
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(actual, dtype=bool)
    if pred.shape != true.shape:
        raise DataError(f"label length mismatch: {pred.shape} vs {true.shape}")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    if tp == 0 and (fp + fn) >= 0 and (2 * tp + fp + fn) == 0:
        return 0.0
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def curve_auc(steps, scores) -> float:
    """Trapezoidal area under a learning curve, normalized by the step range."""
    steps = np.asarray(steps, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if len(steps) == 0:
        raise DataError("empty curve")
    if len(steps) == 1:
        return float(scores[0])
    span = steps[-1] - steps[0]
    if span <= 0:
        raise DataError("curve steps must increase")
    return float(np.trapezoid(scores, steps) / span)


def resample_curves(curves: list[tuple[np.ndarray, np.ndarray]], n_points: int = 101):
    """Linear-interpolate a set of curves onto a shared step grid."""
    lo = max(float(np.min(s)) for s, _ in curves)
    hi = min(float(np.max(s)) for s, _ in curves)
    if hi <= lo:
        hi = max(float(np.max(s)) for s, _ in curves)
        lo = min(float(np.min(s)) for s, _ in curves)
    grid = np.linspace(lo, hi, n_points)
    return grid, np.stack([np.interp(grid, np.asarray(s, float), np.asarray(v, float)) for s, v in curves])


def top_k_mean(curves: list[tuple[np.ndarray, np.ndarray]], k: int = 5):
    """Mean curve of the k best replicas, ranked by final-window score."""
    if k > len(curves):
        warnings.warn(f"top_k_mean: only {len(curves)} curves available, using all")
        k = len(curves)
    grid, mat = resample_curves(curves)
    order = np.argsort(mat[:, -1])[::-1]
    return grid, mat[order[:k]].mean(axis=0)


def export_activations(net: Network, logs: list[EpisodeLog], path) -> int:
    """CSV of (episode, step, goal-location id, top activations...) for external
    projection tooling; requires a recurrent agent and logged features."""
    if not net.spec.recurrent:
        raise UsageError("activation export needs a recurrent agent")
    width = net.spec.top_width
    rows = 0
    with open(path, "w") as fh:
        fh.write("episode,step,goal_cell," + ",".join(f"h{i}" for i in range(width)) + "\n")
        for ep, log in enumerate(logs):
            if len(log.features) != len(log):
                raise UsageError("episode log was collected without features")
            goal_id = -1 if log.goal_cell is None else int(log.goal_cell[0]) * 10_000 + int(log.goal_cell[1])
            for t in range(len(log)):
                vals = ",".join(f"{v:.6g}" for v in log.features[t])
                fh.write(f"{ep},{t},{goal_id},{vals}\n")
                rows += 1
    return rows


def metrics_report(
    logs: list[EpisodeLog],
    position_acc: float | None = None,
    auc: float | None = None,
) -> dict:
    """The summary-table fields for one agent/maze evaluation."""
    goals = sum(1 for log in logs if any(log.goal_flags))
    t_first, t_rest = latency_metric(logs)
    report = {
        "episodes": len(logs),
        "goals": goals,
        "score": float(np.mean([log.score for log in logs])) if logs else None,
        "latency_first_s": t_first,
        "latency_rest_s": t_rest,
        "position_acc": position_acc,
        "auc": auc,
        "loop_f1": None,
    }
    if logs and logs[0].loop_probs:
        pred = np.concatenate([np.asarray(log.loop_probs) > 0.5 for log in logs])
        true = np.concatenate([np.asarray(log.loop_labels, dtype=bool) for log in logs])
        report["loop_f1"] = loop_f1(pred, true)
    return report
