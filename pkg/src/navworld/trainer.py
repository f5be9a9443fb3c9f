"""Asynchronous advantage actor-critic training with auxiliary losses.

Workers roll out fixed-length chunks on their own environment instance,
compute n-step returns, combine the policy/value/entropy loss with the
weighted auxiliary losses (depth, loop closure, replayed reward prediction)
in one backward pass, and apply RMSProp updates straight to the shared
parameter vector.  Multi-worker runs fork processes around shared-memory
parameter and optimizer arrays; sharing is lock-free apart from the global
step counter and the episode log, and races on parameter elements are
accepted.

A single-worker deterministic mode (worker loop run inline, fixed seeds)
reproduces runs bit-exactly and is what the tests use.
"""
from __future__ import annotations

import math
import multiprocessing
import queue as queue_mod
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import (
    ArchitectureSpec,
    ForwardOut,
    Network,
    act,
    build,
    detach_state,
    forward,
    reward_features,
    zero_state,
)
from .autodiff import (
    GradBuffer,
    RmsPropState,
    Tape,
    add_n,
    backward,
    bernoulli_nll,
    categorical_nll,
    mse,
    policy_entropy,
    rmsprop_apply,
    scale,
)
from .errors import UsageError
from .targets import LoopLabeller, depth_to_bytes, preprocess_depth, quantize_depth
from .world import ACTION_REPEAT, MazeEnv, MazeLayout

CURVE_WINDOW_ENV_STEPS = 50_000


@dataclass
class HyperParams:
    lr: float = 2e-4
    beta_entropy: float = 4e-4
    beta_d1: float = 10.0
    beta_d2: float = 3.33
    beta_l: float = 3.33
    beta_r: float = 1.0
    gamma: float = 0.99
    chunk_len: int = 50
    reward_clip: bool = True
    reward_scale: float = 1.0
    n_workers: int = 16
    value_coef: float = 0.5
    grad_clip: float | None = 40.0
    rms_decay: float = 0.99
    rms_epsilon: float = 0.1
    replay_capacity: int = 2000
    replay_batch: int = 32

    def __post_init__(self):
        # lr == 0 is allowed: it freezes parameters, which the no-op training
        # tests rely on
        if self.lr < 0 or not (0 < self.gamma <= 1) or self.chunk_len <= 0:
            raise UsageError(f"invalid hyperparameters: lr={self.lr}, gamma={self.gamma}, chunk_len={self.chunk_len}")


def transform_reward(r: float, hp: HyperParams) -> float:
    """Scale and optionally clip a raw reward to [-1, 1]."""
    r = r * hp.reward_scale
    if hp.reward_clip:
        r = max(-1.0, min(1.0, r))
    return r


def compute_returns(rewards, gamma: float, bootstrap: float) -> np.ndarray:
    """n-step discounted returns within one chunk, seeded by the bootstrap value."""
    out = np.empty(len(rewards))
    acc = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def reward_class(r: float) -> int:
    """3-way reward class: 0 none/negative, 1 small positive (fruit), 2 large (goal)."""
    if r <= 0:
        return 0
    return 1 if r < 10 else 2


class ReplayBuffer:
    """Ring buffer of (frame, next-reward class) pairs with class-balanced sampling."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._frames: list[np.ndarray] = []
        self._classes: list[int] = []
        self._next = 0

    def __len__(self):
        return len(self._frames)

    def push(self, frame: np.ndarray, cls: int):
        if len(self._frames) < self.capacity:
            self._frames.append(frame)
            self._classes.append(cls)
        else:
            self._frames[self._next] = frame
            self._classes[self._next] = cls
        self._next = (self._next + 1) % self.capacity

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for c in self._classes:
            counts[c] = counts.get(c, 0) + 1
        return counts

    def sample_balanced(self, rng: np.random.Generator, n: int):
        """Draw ~n items spread evenly over the classes currently present."""
        if not self._frames:
            return []
        cls = np.asarray(self._classes)
        present = np.unique(cls)
        per = max(1, n // len(present))
        picks: list[int] = []
        for c in present:
            idx = np.nonzero(cls == c)[0]
            picks.extend(rng.choice(idx, size=per, replace=len(idx) < per).tolist())
        return [(self._frames[i], self._classes[i]) for i in picks]


@dataclass
class RolloutChunk:
    """One contiguous chunk of experience; never spans an episode boundary."""

    init_state: object
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards_raw: list = field(default_factory=list)
    rewards: list = field(default_factory=list)  # transformed
    values: list = field(default_factory=list)
    depth_targets: list = field(default_factory=list)
    loop_labels: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    bootstrap: float = 0.0
    terminal: bool = False

    def __len__(self):
        return len(self.actions)


def a3c_loss(tape: Tape, chunk: RolloutChunk, outs: list[ForwardOut], hp: HyperParams):
    """Policy gradient + value regression + entropy bonus, summed over the chunk.

    Advantages use the recorded value estimates as constants, so the policy
    term does not backpropagate into the value head.
    """
    returns = compute_returns(chunk.rewards, hp.gamma, chunk.bootstrap)
    terms = []
    for t, out in enumerate(outs):
        adv = float(returns[t] - chunk.values[t])
        terms.append(scale(tape, categorical_nll(tape, out.policy_logits, chunk.actions[t]), adv))
        terms.append(scale(tape, mse(tape, out.value, np.asarray([returns[t]])), hp.value_coef))
        terms.append(scale(tape, policy_entropy(tape, out.policy_logits), -hp.beta_entropy))
    return add_n(tape, terms)


def aux_loss(tape: Tape, chunk: RolloutChunk, outs: list[ForwardOut], hp: HyperParams, spec: ArchitectureSpec):
    """Weighted depth and loop-closure losses over the chunk; zero-weight heads are skipped."""
    terms = []
    classify = spec.depth_mode == "classify8"
    for t, out in enumerate(outs):
        target = chunk.depth_targets[t]
        for head_out, beta in ((out.depth_conv, hp.beta_d1), (out.depth_lstm, hp.beta_d2)):
            if head_out is None or beta == 0.0:
                continue
            if target is None:
                raise UsageError("depth head enabled but chunk has no depth targets")
            if classify:
                terms.append(scale(tape, categorical_nll(tape, head_out, target), beta))
            else:
                terms.append(scale(tape, mse(tape, head_out, target), beta))
        if out.loop_logit is not None and hp.beta_l != 0.0:
            label = chunk.loop_labels[t]
            if label is None:
                raise UsageError("loop head enabled but chunk has no loop labels")
            terms.append(scale(tape, bernoulli_nll(tape, out.loop_logit, float(label)), hp.beta_l))
    if not terms:
        return None
    return add_n(tape, terms)


def reward_pred_loss(tape: Tape, net: Network, gbuf: GradBuffer, batch) -> object | None:
    """Mean 3-way classification loss on a replayed frame batch; None when empty."""
    if not batch:
        return None
    terms = [categorical_nll(tape, reward_features(net, frame, tape, gbuf), cls) for frame, cls in batch]
    return scale(tape, add_n(tape, terms), 1.0 / len(terms))


def sample_hyperparams(rng: np.random.Generator, base: HyperParams | None = None) -> HyperParams:
    """Random search draw: log-uniform rates, categorical auxiliary weights."""
    base = base or HyperParams()
    return replace(
        base,
        lr=float(np.exp(rng.uniform(math.log(1e-4), math.log(5e-4)))),
        beta_entropy=float(np.exp(rng.uniform(math.log(1e-4), math.log(1e-3)))),
        beta_d1=float(rng.choice([3.33, 10.0, 33.0])),
        beta_d2=float(rng.choice([1.0, 3.33, 10.0])),
        beta_l=float(rng.choice([1.0, 3.33, 10.0])),
        chunk_len=int(rng.choice([50, 75])),
    )


def _shared_copy(arr: np.ndarray, ctx) -> np.ndarray:
    """Move an array into fork-shared memory, preserving dtype and contents."""
    raw = ctx.RawArray("b", arr.nbytes)
    shared = np.frombuffer(raw, dtype=arr.dtype).reshape(arr.shape)
    shared[...] = arr
    return shared


class TrainRun:
    """Shared state of one training run: parameters, optimizer, counters, episode log."""

    def __init__(self, net: Network, hp: HyperParams, max_agent_steps: int, seed: int):
        self.net = net
        self.hp = hp
        self.rms = RmsPropState(net.pv, decay=hp.rms_decay, epsilon=hp.rms_epsilon)
        self.max_agent_steps = int(max_agent_steps)
        self.seed = int(seed)
        self.deterministic = False  # zeroes wall-clock output so runs are byte-identical
        self.episodes: list[tuple[int, float, float]] = []  # (agent_steps at finish, score, wall s)
        self.incidents: list[str] = []
        self.t0 = time.time()
        self._steps = 0
        self._stop = False
        self._lock = threading.Lock()
        self._mp = False

    def enable_processes(self, ctx) -> None:
        """Rehome the mutable shared state in fork-shared memory."""
        self.net.pv.flat = _shared_copy(self.net.pv.flat, ctx)
        self.rms.ms = _shared_copy(self.rms.ms, ctx)
        self._counter = ctx.RawValue("q", self._steps)
        self._stop_flag = ctx.RawValue("b", 0)
        self._mplock = ctx.Lock()
        self._queue = ctx.Queue()
        self._mp = True

    @property
    def agent_steps(self) -> int:
        return self._counter.value if self._mp else self._steps

    @property
    def stop(self) -> bool:
        return bool(self._stop_flag.value) if self._mp else self._stop

    @stop.setter
    def stop(self, value: bool):
        if self._mp:
            self._stop_flag.value = 1 if value else 0
        else:
            self._stop = bool(value)

    def inc_step(self) -> int:
        if self._mp:
            with self._mplock:
                self._counter.value += 1
                v = self._counter.value
            if v >= self.max_agent_steps:
                self._stop_flag.value = 1
            return v
        self._steps += 1
        if self._steps >= self.max_agent_steps:
            self._stop = True
        return self._steps

    def log_episode(self, score: float):
        item = (self.agent_steps, score, time.time() - self.t0)
        if self._mp:
            self._queue.put(("episode", item))
        else:
            self.episodes.append(item)

    def log_incident(self, msg: str):
        if self._mp:
            self._queue.put(("incident", msg))
        else:
            self.incidents.append(msg)

    def drain(self):
        if not self._mp:
            return
        while True:
            try:
                kind, item = self._queue.get_nowait()
            except queue_mod.Empty:
                return
            if kind == "episode":
                self.episodes.append(item)
            else:
                self.incidents.append(item)

    @property
    def env_steps(self) -> int:
        return self.agent_steps * ACTION_REPEAT

    def curve(self) -> list[tuple[int, float, int, float]]:
        """(agent_steps, mean episode score, episodes, wall seconds) per 5e4-env-step window."""
        window_agent = CURVE_WINDOW_ENV_STEPS // ACTION_REPEAT
        buckets: dict[int, list[tuple[float, float]]] = {}
        for steps, score, wall in self.episodes:
            buckets.setdefault(steps // window_agent, []).append((score, wall))
        rows = []
        for b in sorted(buckets):
            entries = buckets[b]
            rows.append(
                (
                    (b + 1) * window_agent,
                    float(np.mean([s for s, _ in entries])),
                    len(entries),
                    0.0 if self.deterministic else max(w for _, w in entries),
                )
            )
        return rows

    def write_curve_csv(self, path):
        with open(path, "w") as fh:
            fh.write("agent_steps,mean_episode_score,episodes_in_window,wall_clock_s\n")
            for steps, score, n, wall in self.curve():
                fh.write(f"{steps},{score:.6g},{n},{wall:.3f}\n")


class Worker:
    """One training thread: owns an environment, a gradient buffer and its RNGs."""

    def __init__(self, worker_id: int, run: TrainRun, layout: MazeLayout, img_hw, render_backend=None):
        self.id = worker_id
        self.run = run
        hp = run.hp
        self.env = MazeEnv(layout, img_hw=img_hw, render_backend=render_backend, reward_transform=lambda r: transform_reward(r, hp))
        self.gbuf = GradBuffer(run.net.pv)
        self.rng = np.random.default_rng(np.random.SeedSequence([run.seed & 0xFFFFFFFF, worker_id, 0xAC7]))
        self.replay = ReplayBuffer(hp.replay_capacity) if "reward" in run.net.spec.heads else None
        self.labeller = LoopLabeller()
        self._episode_index = 0

    def _episode_seed(self) -> int:
        s = (self.run.seed * 1_000_003 + self.id) * 1_000_003 + self._episode_index
        self._episode_index += 1
        return s & 0x7FFFFFFFFFFF

    def _begin_episode(self):
        self.labeller.reset()
        self.state = zero_state(self.run.net.spec, self.run.net.pv.dtype)
        self.obs = self.env.reset(self._episode_seed())

    def run_loop(self):
        faults = 0
        self._begin_episode()
        while not self.run.stop:
            try:
                self.run_chunk()
            except Exception as exc:  # env fault: log it and restart the episode
                faults += 1
                self.run.log_incident(f"worker {self.id}: {type(exc).__name__}: {exc}")
                if faults > 20:
                    raise
                self._begin_episode()

    def run_chunk(self):
        run, hp, net = self.run, self.run.hp, self.run.net
        spec = net.spec
        tape = Tape()
        self.gbuf.clear()
        chunk = RolloutChunk(init_state=detach_state(self.state))
        outs: list[ForwardOut] = []
        classify = spec.depth_mode == "classify8"
        needs_depth = bool({"depth_conv", "depth_lstm"} & set(spec.heads))
        needs_loop = "loop" in spec.heads
        done = False

        for _ in range(hp.chunk_len):
            out, self.state = forward(net, self.obs, self.state, tape, self.gbuf)
            outs.append(out)
            a = act(out.policy_logits.data, self.rng)

            if needs_depth:
                grid = preprocess_depth(depth_to_bytes(self.obs.depth_raw, self.env.max_range))
                target = quantize_depth(grid).reshape(-1) if classify else grid.reshape(-1)
            else:
                target = None
            pos = (self.env.pose.x, self.env.pose.y)
            label = self.labeller.append(pos) if needs_loop else None
            prev_frame = self.obs.rgb

            self.obs, r_raw, done, info = self.env.step(a)

            chunk.observations.append(self.obs)
            chunk.actions.append(a)
            chunk.rewards_raw.append(r_raw)
            chunk.rewards.append(transform_reward(r_raw, hp))
            chunk.values.append(float(out.value.data[0]))
            chunk.depth_targets.append(target)
            chunk.loop_labels.append(label)
            chunk.positions.append(pos)
            chunk.cells.append(info["cell"])
            if self.replay is not None:
                self.replay.push(prev_frame, reward_class(r_raw))

            run.inc_step()
            if done:
                run.log_episode(info["score"])
                break
            if run.stop:
                break

        if not outs:
            return
        chunk.terminal = done
        if done:
            chunk.bootstrap = 0.0
        else:
            peek, _ = forward(net, self.obs, self.state, None, None)
            chunk.bootstrap = float(peek.value.data[0])

        terms = [a3c_loss(tape, chunk, outs, hp)]
        aux = aux_loss(tape, chunk, outs, hp, spec)
        if aux is not None:
            terms.append(aux)
        if self.replay is not None and hp.beta_r != 0.0:
            batch = self.replay.sample_balanced(self.rng, hp.replay_batch)
            rp = reward_pred_loss(tape, net, self.gbuf, batch)
            if rp is not None:
                terms.append(scale(tape, rp, hp.beta_r))
        total = add_n(tape, terms)
        backward(tape, total)
        tape.clear()
        self.gbuf.clip_global_norm(hp.grad_clip)
        rmsprop_apply(net.pv, self.gbuf.flat, run.rms, hp.lr)

        self.state = detach_state(self.state)
        if done:
            self._begin_episode()


def train(
    layout: MazeLayout,
    spec: ArchitectureSpec,
    hp: HyperParams,
    *,
    seed: int = 0,
    max_agent_steps: int = 25_000_000,
    img_hw=(84, 84),
    deterministic: bool = False,
    render_backend=None,
    checkpoint_every: int | None = None,
    checkpoint_fn=None,
    early_stop=None,
    dtype=np.float32,
) -> TrainRun:
    """Run one training job and return its TrainRun.

    ``deterministic`` forces a single inline worker so runs are bit-exact for
    fixed seeds.  ``early_stop(run) -> bool`` is polled after every finished
    episode; ``checkpoint_fn(run, tag)`` is invoked every ``checkpoint_every``
    agent steps and once at the end.
    """
    net = build(spec, np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x1417])), dtype=dtype)
    run = TrainRun(net, hp, max_agent_steps, seed)
    run.deterministic = deterministic
    n_workers = 1 if deterministic else hp.n_workers

    next_ckpt = checkpoint_every or 0

    def monitor_hook():
        nonlocal next_ckpt
        run.drain()
        if checkpoint_every and checkpoint_fn and run.agent_steps >= next_ckpt:
            checkpoint_fn(run, f"step{run.agent_steps}")
            next_ckpt += checkpoint_every
        if early_stop is not None and early_stop(run):
            run.stop = True

    if n_workers == 1:
        w = Worker(0, run, layout, img_hw, render_backend)
        w._begin_episode()
        episodes_seen = 0
        while not run.stop:
            w.run_chunk()
            if len(run.episodes) > episodes_seen:
                episodes_seen = len(run.episodes)
                monitor_hook()
            elif checkpoint_every:
                monitor_hook()
    else:
        ctx = multiprocessing.get_context("fork")
        run.enable_processes(ctx)

        def worker_main(worker_id: int):
            Worker(worker_id, run, layout, img_hw, render_backend).run_loop()

        procs = [ctx.Process(target=worker_main, args=(i,), daemon=True) for i in range(n_workers)]
        for p in procs:
            p.start()
        while any(p.is_alive() for p in procs):
            time.sleep(0.05)
            monitor_hook()
            if run.stop:
                break
        deadline = time.time() + 60.0
        for p in procs:
            p.join(max(0.1, deadline - time.time()))
            if p.is_alive():  # pragma: no cover - stuck worker
                p.terminate()
                run.log_incident(f"worker process {p.pid} terminated after timeout")
        run.drain()
        run.episodes.sort(key=lambda e: e[0])

    if checkpoint_fn:
        checkpoint_fn(run, "final")
    return run
