"""Experiment configuration files (TOML).

A config gathers the maze, architecture, hyperparameters and run control in
one editable file.  ``parse -> serialize -> parse`` is the identity on the
semantic content; bad files fail with messages that point at the offending
line where one can be identified.
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..agent import HEADS, VARIANTS, ArchitectureSpec
from ..errors import ConfigurationError
from ..trainer import HyperParams
from ..world import KINDS

SWEEP_CAP = 64


@dataclass
class ExperimentConfig:
    name: str = "run"
    out_dir: str = "runs/run"
    kind: str = "static_mini"
    layout_seed: int = 1
    img_h: int = 32
    img_w: int = 32
    max_range: float | None = None
    variant: str = "stacked_lstm"
    input_mode: str = "rgb"
    heads: tuple = ("depth_lstm",)
    depth_mode: str = "classify8"
    lstm1_width: int = 64
    lstm2_width: int = 256
    fc_width: int = 256
    conv1: tuple = (16, 8, 4)
    conv2: tuple = (32, 4, 2)
    hp: HyperParams = field(default_factory=HyperParams)
    sweep: int = 0  # 0 = explicit hp; N = sample N replicas
    seed: int = 0
    max_agent_steps: int = 1_250_000
    deterministic: bool = False
    checkpoint_every: int | None = None
    eval_episodes: int = 100
    eval_seed: int = 1000
    collect_features: bool = True
    port: int = 7767
    raw_depth: bool = False

    def arch_spec(self) -> ArchitectureSpec:
        return ArchitectureSpec(
            variant=self.variant,
            input_mode=self.input_mode,
            heads=tuple(self.heads),
            depth_mode=self.depth_mode,
            lstm1_width=self.lstm1_width,
            lstm2_width=self.lstm2_width,
            fc_width=self.fc_width,
            img_h=self.img_h,
            img_w=self.img_w,
            conv1=tuple(self.conv1),
            conv2=tuple(self.conv2),
        ).validate()

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS and self.kind != "custom":
            raise ConfigurationError(f"env.kind {self.kind!r} is not one of {KINDS}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"agent.variant {self.variant!r} is not one of {VARIANTS}")
        bad = set(self.heads) - set(HEADS)
        if bad:
            raise ConfigurationError(f"agent.heads contains unknown entries {sorted(bad)}")
        if not 0 <= self.sweep <= SWEEP_CAP:
            raise ConfigurationError(f"train.sweep must be between 0 and {SWEEP_CAP}")
        self.arch_spec()
        return self


_HP_KEYS = (
    "lr",
    "beta_entropy",
    "beta_d1",
    "beta_d2",
    "beta_l",
    "beta_r",
    "gamma",
    "chunk_len",
    "reward_clip",
    "reward_scale",
    "n_workers",
    "value_coef",
    "grad_clip",
    "rms_decay",
    "rms_epsilon",
    "replay_capacity",
    "replay_batch",
)


def _key_line(text: str, key: str) -> str:
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0]
        if stripped.strip().startswith(f"{key}") and "=" in stripped:
            return f" (line {i})"
    return ""


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:  # message carries line/column
        raise ConfigurationError(f"config is not valid TOML: {exc}") from None

    cfg = ExperimentConfig()

    def pull(section: dict, key: str, attr: str | None = None, cast=None):
        if key not in section:
            return
        val = section.pop(key)
        if cast is not None:
            try:
                val = cast(val)
            except (TypeError, ValueError):
                raise ConfigurationError(f"bad value for {key!r}{_key_line(text, key)}") from None
        setattr(cfg, attr or key, val)

    exp = doc.pop("experiment", {})
    pull(exp, "name")
    pull(exp, "out_dir")

    env = doc.pop("env", {})
    pull(env, "kind")
    pull(env, "layout_seed", cast=int)
    pull(env, "img_h", cast=int)
    pull(env, "img_w", cast=int)
    pull(env, "max_range", cast=float)

    agent = doc.pop("agent", {})
    pull(agent, "variant")
    pull(agent, "input_mode")
    if "heads" in agent:
        cfg.heads = tuple(agent.pop("heads"))
    pull(agent, "depth_mode")
    pull(agent, "lstm1_width", cast=int)
    pull(agent, "lstm2_width", cast=int)
    pull(agent, "fc_width", cast=int)
    for conv_key in ("conv1", "conv2"):
        if conv_key in agent:
            val = tuple(int(v) for v in agent.pop(conv_key))
            if len(val) != 3:
                raise ConfigurationError(f"agent.{conv_key} must be [maps, kernel, stride]{_key_line(text, conv_key)}")
            setattr(cfg, conv_key, val)

    train = doc.pop("train", {})
    if "sweep" in train:
        raw = train.pop("sweep")
        if isinstance(raw, str):
            if not raw.startswith("sample:"):
                raise ConfigurationError(f"train.sweep must be an int or 'sample:N'{_key_line(text, 'sweep')}")
            raw = raw.split(":", 1)[1]
        try:
            cfg.sweep = int(raw)
        except ValueError:
            raise ConfigurationError(f"train.sweep must be an int or 'sample:N'{_key_line(text, 'sweep')}") from None
    pull(train, "seed", cast=int)
    pull(train, "max_agent_steps", cast=int)
    pull(train, "deterministic", cast=bool)
    if "checkpoint_every" in train:
        cfg.checkpoint_every = int(train.pop("checkpoint_every"))
    hp_kwargs = {}
    for key in _HP_KEYS:
        if key in train:
            hp_kwargs[key] = train.pop(key)
    if train:
        extra = sorted(train)[0]
        raise ConfigurationError(f"unknown key {extra!r} in [train]{_key_line(text, extra)}")
    try:
        cfg.hp = replace(HyperParams(), **hp_kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad hyperparameters: {exc}") from None

    ev = doc.pop("eval", {})
    pull(ev, "episodes", "eval_episodes", cast=int)
    pull(ev, "seed", "eval_seed", cast=int)
    pull(ev, "collect_features", cast=bool)

    srv = doc.pop("server", {})
    pull(srv, "port", cast=int)
    pull(srv, "raw_depth", cast=bool)

    for section, leftover in (("experiment", exp), ("env", env), ("agent", agent), ("eval", ev), ("server", srv)):
        if leftover:
            extra = sorted(leftover)[0]
            raise ConfigurationError(f"unknown key {extra!r} in [{section}]{_key_line(text, extra)}")
    if doc:
        raise ConfigurationError(f"unknown section [{sorted(doc)[0]}]")
    return cfg.validate()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    hp = asdict(cfg.hp)
    lines = [
        "[experiment]",
        f"name = {_fmt(cfg.name)}",
        f"out_dir = {_fmt(cfg.out_dir)}",
        "",
        "[env]",
        f"kind = {_fmt(cfg.kind)}",
        f"layout_seed = {_fmt(cfg.layout_seed)}",
        f"img_h = {_fmt(cfg.img_h)}",
        f"img_w = {_fmt(cfg.img_w)}",
    ]
    if cfg.max_range is not None:
        lines.append(f"max_range = {_fmt(cfg.max_range)}")
    lines += [
        "",
        "[agent]",
        f"variant = {_fmt(cfg.variant)}",
        f"input_mode = {_fmt(cfg.input_mode)}",
        f"heads = {_fmt(cfg.heads)}",
        f"depth_mode = {_fmt(cfg.depth_mode)}",
        f"lstm1_width = {_fmt(cfg.lstm1_width)}",
        f"lstm2_width = {_fmt(cfg.lstm2_width)}",
        f"fc_width = {_fmt(cfg.fc_width)}",
        f"conv1 = {_fmt(cfg.conv1)}",
        f"conv2 = {_fmt(cfg.conv2)}",
        "",
        "[train]",
        f"seed = {_fmt(cfg.seed)}",
        f"max_agent_steps = {_fmt(cfg.max_agent_steps)}",
        f"deterministic = {_fmt(cfg.deterministic)}",
        f"sweep = {_fmt(cfg.sweep)}",
    ]
    if cfg.checkpoint_every is not None:
        lines.append(f"checkpoint_every = {_fmt(cfg.checkpoint_every)}")
    for key in _HP_KEYS:
        val = hp[key]
        if val is None:
            continue
        lines.append(f"{key} = {_fmt(val)}")
    lines += [
        "",
        "[eval]",
        f"episodes = {_fmt(cfg.eval_episodes)}",
        f"seed = {_fmt(cfg.eval_seed)}",
        f"collect_features = {_fmt(cfg.collect_features)}",
        "",
        "[server]",
        f"port = {_fmt(cfg.port)}",
        f"raw_depth = {_fmt(cfg.raw_depth)}",
    ]
    return "\n".join(lines) + "\n"
