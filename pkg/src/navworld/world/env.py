"""First-person maze environment: continuous motion, discrete actions, rewards.

Eight actions cover small rotations, lateral/forward/backward acceleration,
and rotational acceleration while moving.  Each agent-level ``step`` applies
the chosen action for four consecutive env steps.  Collisions slide along
walls.  Touching the goal cell scores 10 and respawns the agent within the
same episode; apples score 1 and strawberries 2, each collectable once per
episode.  The episode ends when the env-step budget runs out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError
from .backend import get_backend
from .layout import APPLE, STRAWBERRY, MazeLayout, sample_episode_placements

N_ACTIONS = 8
ACTION_REPEAT = 4
ENV_STEPS_PER_SECOND = 60  # used by the latency metric: 3600-step episode = 60 s

ACCEL = 0.05  # maze units / env step^2
TURN_INC = 0.15  # radians per env step for the plain rotate actions
TURN_ACCEL = 0.05  # radians / env step^2 for the move-and-rotate actions
DAMPING = 0.9
ANG_DAMPING = 0.9
SPEED_CAP = 0.2 / ACTION_REPEAT  # 0.2 maze units per agent step
ANG_CAP = TURN_INC  # rotational speed never exceeds the plain-rotate rate
AGENT_RADIUS = 0.2

GOAL_REWARD = 10.0
FRUIT_REWARD = {APPLE: 1.0, STRAWBERRY: 2.0}

# id -> (forward accel, lateral accel, heading increment, angular accel)
ACTION_TABLE = (
    (0.0, 0.0, +TURN_INC, 0.0),  # rotate left
    (0.0, 0.0, -TURN_INC, 0.0),  # rotate right
    (0.0, +ACCEL, 0.0, 0.0),  # strafe left
    (0.0, -ACCEL, 0.0, 0.0),  # strafe right
    (+ACCEL, 0.0, 0.0, 0.0),  # forward
    (-ACCEL, 0.0, 0.0, 0.0),  # backward
    (+ACCEL, 0.0, 0.0, +TURN_ACCEL),  # forward, rotating left
    (+ACCEL, 0.0, 0.0, -TURN_ACCEL),  # forward, rotating right
)


@dataclass
class Pose:
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    ang_vel: float


@dataclass
class Observation:
    rgb: np.ndarray  # (3, H, W) uint8
    depth_raw: np.ndarray  # (H, W) float32, distances in maze units
    velocity: np.ndarray  # (6,) float32 agent-relative
    prev_action: np.ndarray  # (8,) float32 one-hot; all-zero at episode start
    prev_reward: float


class MazeEnv:
    """One agent's world; owns its layout instance and episode state."""

    def __init__(
        self,
        layout: MazeLayout,
        img_hw: tuple[int, int] = (84, 84),
        max_range: float | None = None,
        fov: float | None = None,
        render_backend: str | None = None,
        reward_transform=None,
    ):
        h, w = img_hw
        if h < 8 or w < 16:
            raise ConfigurationError(f"image size {img_hw} too small (min 8x16)")
        self.layout = layout
        self.img_h, self.img_w = int(h), int(w)
        self.max_range = float(max_range) if max_range else float(np.hypot(*layout.grid.shape))
        self.fov = fov
        self._render = get_backend(render_backend).render_frame
        self._reward_transform = reward_transform or (lambda r: r)

        self.env_step = 0
        self.done = True
        self._started = False
        self.pose: Pose | None = None
        self.goal_cell: tuple[int, int] | None = None
        self.score = 0.0
        self.goal_events = 0
        self.fruit_taken = {APPLE: 0, STRAWBERRY: 0}

    # -- episode control ----------------------------------------------------

    def reset(self, episode_seed: int) -> Observation:
        """Start a new episode; fully determined by (layout, episode_seed)."""
        self.rng = np.random.default_rng(np.random.SeedSequence([self.layout.seed & 0xFFFFFFFF, int(episode_seed) & 0xFFFFFFFFFFFF, 0x5EED]))
        self.goal_cell, fruit = sample_episode_placements(self.layout, self.rng)
        self._fruit = {(r, c): kind for r, c, kind in fruit}
        self._collected: set[tuple[int, int]] = set()
        self.env_step = 0
        self.done = False
        self._started = True
        self.score = 0.0
        self.goal_events = 0
        self.fruit_taken = {APPLE: 0, STRAWBERRY: 0}
        self._spawn()
        self._last_action: int | None = None
        self._last_reward_raw = 0.0
        self._last_yaw = 0.0
        return self._observe()

    def _spawn(self):
        cells = [c for c in self.layout.spawn_cells if c != self.goal_cell]
        r, c = cells[int(self.rng.integers(len(cells)))]
        heading = float(self.rng.uniform(-math.pi, math.pi))
        self.pose = Pose(x=c + 0.5, y=r + 0.5, heading=heading, vx=0.0, vy=0.0, ang_vel=0.0)
        self._last_yaw = 0.0

    def step(self, action: int):
        """Apply one action for ACTION_REPEAT env steps.

        Returns (observation, raw reward, done, info).  info carries per-env-
        step realized velocities and respawn records so trajectories can be
        reconstructed exactly.
        """
        if not self._started:
            raise UsageError("step() before reset()")
        if self.done:
            raise UsageError("step() on a finished episode")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ConfigurationError(f"action id {action} out of range")

        reward = 0.0
        deltas = np.zeros((ACTION_REPEAT, 2))
        respawns: list[tuple[int, tuple[float, float]]] = []
        goal_env_steps: list[int] = []
        goals = apples = strawberries = 0
        for k in range(ACTION_REPEAT):
            r, events = self._env_step(action)
            reward += r
            deltas[k] = events["delta"]
            if events["respawned"]:
                respawns.append((k, (self.pose.x, self.pose.y)))
                goal_env_steps.append(self.env_step)
            goals += events["goal"]
            apples += events["apples"]
            strawberries += events["strawberries"]
            if self.env_step >= self.layout.budget:
                self.done = True
                break

        self.score += reward
        self._last_action = action
        self._last_reward_raw = reward
        obs = self._observe()
        info = {
            "pos": (self.pose.x, self.pose.y),
            "cell": self.position_cell(),
            "goal": goals,
            "goal_env_steps": goal_env_steps,
            "apples": apples,
            "strawberries": strawberries,
            "deltas": deltas,
            "respawns": respawns,
            "score": self.score,
            "env_step": self.env_step,
        }
        return obs, reward, self.done, info

    def _env_step(self, action: int):
        p = self.pose
        fwd, lat, tinc, tacc = ACTION_TABLE[action]

        p.ang_vel = ANG_DAMPING * (p.ang_vel + tacc)
        if p.ang_vel > ANG_CAP:
            p.ang_vel = ANG_CAP
        elif p.ang_vel < -ANG_CAP:
            p.ang_vel = -ANG_CAP
        yaw = tinc + p.ang_vel
        p.heading = _wrap_angle(p.heading + yaw)
        self._last_yaw = yaw

        c, s = math.cos(p.heading), math.sin(p.heading)
        ax = fwd * c - lat * s
        ay = fwd * s + lat * c
        vx = DAMPING * (p.vx + ax)
        vy = DAMPING * (p.vy + ay)
        speed = math.hypot(vx, vy)
        if speed > SPEED_CAP:
            vx *= SPEED_CAP / speed
            vy *= SPEED_CAP / speed

        x0, y0 = p.x, p.y
        nx = self._move_axis(x0, y0, vx, axis=0)
        ny = self._move_axis(nx, y0, vy, axis=1)
        p.x, p.y = nx, ny
        # momentum keeps only the realized motion, so walls cancel the blocked
        # component (slide) instead of storing pushback
        p.vx = nx - x0
        p.vy = ny - y0
        delta = (p.vx, p.vy)

        self.env_step += 1
        reward = 0.0
        events = {"delta": delta, "respawned": False, "goal": 0, "apples": 0, "strawberries": 0}
        cell = (int(p.y), int(p.x))
        kind = self._fruit.get(cell)
        if kind is not None and cell not in self._collected:
            self._collected.add(cell)
            reward += FRUIT_REWARD[kind]
            self.fruit_taken[kind] += 1
            events["apples" if kind == APPLE else "strawberries"] += 1
        if cell == self.goal_cell:
            reward += GOAL_REWARD
            self.goal_events += 1
            events["goal"] = 1
            events["respawned"] = True
            self._spawn()
        return reward, events

    def _move_axis(self, x: float, y: float, v: float, axis: int) -> float:
        """Advance one coordinate by v, clamping against wall cells (with radius)."""
        if v == 0.0:
            return x if axis == 0 else y
        grid = self.layout.grid
        if axis == 0:
            n = x + v
            lead = n + AGENT_RADIUS if v > 0 else n - AGENT_RADIUS
            col = int(lead)
            r0, r1 = int(y - AGENT_RADIUS), int(y + AGENT_RADIUS)
            if grid[r0, col] or grid[r1, col]:
                n = col - AGENT_RADIUS - 1e-9 if v > 0 else col + 1 + AGENT_RADIUS + 1e-9
            return n
        n = y + v
        lead = n + AGENT_RADIUS if v > 0 else n - AGENT_RADIUS
        row = int(lead)
        c0, c1 = int(x - AGENT_RADIUS), int(x + AGENT_RADIUS)
        if grid[row, c0] or grid[row, c1]:
            n = row - AGENT_RADIUS - 1e-9 if v > 0 else row + 1 + AGENT_RADIUS + 1e-9
        return n

    # -- observations --------------------------------------------------------

    def _observe(self) -> Observation:
        p = self.pose
        rgb_hw, depth = self._render(
            self.layout.grid, self.layout.face_tex, p.x, p.y, p.heading, self.img_h, self.img_w, self.max_range, self.fov
        )
        rgb = np.ascontiguousarray(np.moveaxis(rgb_hw, -1, 0))
        onehot = np.zeros(N_ACTIONS, dtype=np.float32)
        if self._last_action is not None:
            onehot[self._last_action] = 1.0
        return Observation(
            rgb=rgb,
            depth_raw=depth.astype(np.float32),
            velocity=self.agent_relative_velocity().astype(np.float32),
            prev_action=onehot,
            prev_reward=float(self._reward_transform(self._last_reward_raw)),
        )

    def agent_relative_velocity(self) -> np.ndarray:
        """(forward, lateral, vertical=0, yaw rate, pitch=0, roll=0) in the agent frame."""
        p = self.pose
        c, s = math.cos(p.heading), math.sin(p.heading)
        fwd = p.vx * c + p.vy * s
        lat = -p.vx * s + p.vy * c
        return np.array([fwd, lat, 0.0, self._last_yaw, 0.0, 0.0])

    def ground_truth_position(self):
        """Continuous position and its row-major floor-cell index."""
        return np.array([self.pose.x, self.pose.y]), self.position_cell()

    def position_cell(self) -> int:
        return int(self.layout.floor_index[int(self.pose.y), int(self.pose.x)])


def _wrap_angle(a: float) -> float:
    while a > math.pi:
        a -= 2.0 * math.pi
    while a < -math.pi:
        a += 2.0 * math.pi
    return a


def random_policy_score(layout: MazeLayout, episodes: int, seed: int, img_hw=(16, 16)) -> float:
    """Mean episode score of a uniform-random policy; the smoke-test baseline."""
    env = MazeEnv(layout, img_hw=img_hw)
    rng = np.random.default_rng(seed)
    total = 0.0
    for ep in range(episodes):
        env.reset(seed * 1000 + ep)
        done = False
        while not done:
            _, _, done, info = env.step(int(rng.integers(N_ACTIONS)))
        total += info["score"]
    return total / episodes
