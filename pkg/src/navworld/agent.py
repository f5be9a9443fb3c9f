"""The navigation agent family.

Three trunk variants behind a shared two-layer conv encoder:

- ``ff``: encoder -> fully connected layer -> policy/value
- ``lstm``: encoder -> single LSTM -> policy/value
- ``stacked_lstm``: encoder -> LSTM1 (sees the previous reward) -> LSTM2
  (sees LSTM1's output, the conv features, agent-relative velocity and the
  previous action) -> policy/value

Optional auxiliary heads share the trunk: depth prediction from the conv
features (``depth_conv``) or from the top recurrent layer (``depth_lstm``),
each as 64 independent 8-way classifications over a 4x16 grid (or 64
regression outputs), a loop-closure logit (``loop``), and a 3-way reward
classifier from the conv features (``reward``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    GradBuffer,
    ParamVector,
    Tape,
    Tensor,
    concat,
    conv2d,
    flatten,
    linear,
    lstm_cell,
    relu,
    reshape,
)
from .errors import ConfigurationError, UsageError
from .targets import DEPTH_GRID, N_DEPTH_BANDS

VARIANTS = ("ff", "lstm", "stacked_lstm")
HEADS = ("depth_conv", "depth_lstm", "loop", "reward")
N_ACTIONS = 8
VELOCITY_DIM = 6
DEPTH_CELLS = DEPTH_GRID[0] * DEPTH_GRID[1]
REWARD_CLASSES = 3


@dataclass(frozen=True)
class ArchitectureSpec:
    variant: str = "stacked_lstm"
    input_mode: str = "rgb"  # "rgb" or "rgbd"
    heads: tuple = ("depth_lstm",)
    depth_mode: str = "classify8"  # "classify8" or "regress"
    lstm1_width: int = 64
    lstm2_width: int = 256
    fc_width: int = 256
    img_h: int = 84
    img_w: int = 84
    conv1: tuple = (16, 8, 4)  # (maps, kernel, stride)
    conv2: tuple = (32, 4, 2)
    aux_hidden: int = 128

    def validate(self) -> "ArchitectureSpec":
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.input_mode not in ("rgb", "rgbd"):
            raise ConfigurationError(f"unknown input mode {self.input_mode!r}")
        if self.depth_mode not in ("classify8", "regress"):
            raise ConfigurationError(f"unknown depth mode {self.depth_mode!r}")
        bad = set(self.heads) - set(HEADS)
        if bad:
            raise ConfigurationError(f"unknown heads {sorted(bad)}")
        if self.variant == "ff" and (set(self.heads) & {"depth_lstm", "loop"}):
            raise ConfigurationError("depth_lstm and loop heads require a recurrent variant")
        return self

    @property
    def recurrent(self) -> bool:
        return self.variant != "ff"

    @property
    def in_channels(self) -> int:
        return 4 if self.input_mode == "rgbd" else 3

    def conv_out_shape(self) -> tuple[int, int, int]:
        maps1, k1, s1 = self.conv1
        maps2, k2, s2 = self.conv2
        h = (self.img_h - k1) // s1 + 1
        w = (self.img_w - k1) // s1 + 1
        if h < k2 or w < k2:
            raise ConfigurationError(f"image {self.img_h}x{self.img_w} too small for the conv stack")
        h2 = (h - k2) // s2 + 1
        w2 = (w - k2) // s2 + 1
        return maps2, h2, w2

    @property
    def top_width(self) -> int:
        if self.variant == "ff":
            return self.fc_width
        if self.variant == "lstm":
            return self.lstm2_width
        return self.lstm2_width


@dataclass
class RecurrentState:
    h1: Tensor | None = None
    c1: Tensor | None = None
    h2: Tensor | None = None
    c2: Tensor | None = None


@dataclass
class ForwardOut:
    policy_logits: Tensor
    value: Tensor
    depth_conv: Tensor | None = None
    depth_lstm: Tensor | None = None
    loop_logit: Tensor | None = None
    reward_logits: Tensor | None = None
    top: Tensor | None = None  # topmost trunk activations (decoder/export input)


class Network:
    """An architecture bound to a ParamVector."""

    def __init__(self, spec: ArchitectureSpec, pv: ParamVector):
        self.spec = spec
        self.pv = pv

    def param(self, name: str, gbuf: GradBuffer | None) -> Tensor:
        return Tensor(self.pv.view(name), grad=None if gbuf is None else gbuf.view(name))


def build(spec: ArchitectureSpec, rng: np.random.Generator, dtype=np.float32) -> Network:
    """Register and initialize all parameters for ``spec``."""
    spec = spec.validate()
    pv = ParamVector(dtype=dtype)
    maps1, k1, s1 = spec.conv1
    maps2, k2, s2 = spec.conv2
    pv.register("conv1/W", (maps1, spec.in_channels, k1, k1))
    pv.register("conv1/b", (maps1,))
    pv.register("conv2/W", (maps2, maps1, k2, k2))
    pv.register("conv2/b", (maps2,))
    n_f = int(np.prod(spec.conv_out_shape()))

    if spec.variant == "ff":
        _reg_linear(pv, "fc", spec.fc_width, n_f)
        top = spec.fc_width
        f_dim = spec.fc_width
    elif spec.variant == "lstm":
        _reg_lstm(pv, "lstm", spec.lstm2_width, n_f)
        top = spec.lstm2_width
        f_dim = n_f
    else:
        _reg_lstm(pv, "lstm1", spec.lstm1_width, n_f + 1)
        _reg_lstm(pv, "lstm2", spec.lstm2_width, spec.lstm1_width + n_f + VELOCITY_DIM + N_ACTIONS)
        top = spec.lstm2_width
        f_dim = n_f

    _reg_linear(pv, "policy", N_ACTIONS, top)
    _reg_linear(pv, "value", 1, top)

    depth_out = DEPTH_CELLS * (N_DEPTH_BANDS if spec.depth_mode == "classify8" else 1)
    if "depth_conv" in spec.heads:
        _reg_linear(pv, "depth_conv/fc", spec.aux_hidden, f_dim)
        _reg_linear(pv, "depth_conv/out", depth_out, spec.aux_hidden)
    if "depth_lstm" in spec.heads:
        _reg_linear(pv, "depth_lstm/fc", spec.aux_hidden, top)
        _reg_linear(pv, "depth_lstm/out", depth_out, spec.aux_hidden)
    if "loop" in spec.heads:
        _reg_linear(pv, "loop/fc", spec.aux_hidden, top)
        _reg_linear(pv, "loop/out", 1, spec.aux_hidden)
    if "reward" in spec.heads:
        _reg_linear(pv, "reward/fc", spec.aux_hidden, f_dim)
        _reg_linear(pv, "reward/out", REWARD_CLASSES, spec.aux_hidden)

    pv.finalize()
    _initialize(pv, rng)
    return Network(spec, pv)


def _reg_linear(pv, name, n_out, n_in):
    pv.register(f"{name}/W", (n_out, n_in))
    pv.register(f"{name}/b", (n_out,))


def _reg_lstm(pv, name, width, n_in):
    pv.register(f"{name}/Wx", (4 * width, n_in))
    pv.register(f"{name}/Wh", (4 * width, width))
    pv.register(f"{name}/b", (4 * width,))


def _initialize(pv: ParamVector, rng: np.random.Generator) -> None:
    """Scaled-uniform fan-in init for feedforward weights, orthogonal per-gate
    recurrent matrices, zero biases."""
    for name, (_, shape) in pv.registry.items():
        view = pv.view(name)
        if name.endswith("/b"):
            view[...] = 0.0
        elif name.endswith("/Wh"):
            width = shape[1]
            for gate in range(4):
                view[gate * width : (gate + 1) * width] = _orthogonal(rng, width)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            view[...] = rng.uniform(-bound, bound, size=shape)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def zero_state(spec: ArchitectureSpec, dtype=np.float32) -> RecurrentState:
    z = lambda n: Tensor(np.zeros(n, dtype=dtype))
    if spec.variant == "ff":
        return RecurrentState()
    if spec.variant == "lstm":
        return RecurrentState(h2=z(spec.lstm2_width), c2=z(spec.lstm2_width))
    return RecurrentState(
        h1=z(spec.lstm1_width), c1=z(spec.lstm1_width), h2=z(spec.lstm2_width), c2=z(spec.lstm2_width)
    )


def detach_state(state: RecurrentState) -> RecurrentState:
    cp = lambda t: None if t is None else Tensor(t.data.copy())
    return RecurrentState(h1=cp(state.h1), c1=cp(state.c1), h2=cp(state.h2), c2=cp(state.c2))


def forward(
    net: Network,
    obs,
    state: RecurrentState,
    tape: Tape | None = None,
    gbuf: GradBuffer | None = None,
    depth_plane: np.ndarray | None = None,
) -> tuple[ForwardOut, RecurrentState]:
    """Evaluate one step; returns the outputs and the carried recurrent state.

    ``depth_plane`` (a normalized (H, W) array) must be supplied in rgbd
    input mode and is stacked as a fourth input channel.
    """
    spec = net.spec
    dtype = net.pv.dtype
    x = obs.rgb.astype(dtype) / dtype.type(255)
    if spec.input_mode == "rgbd":
        if depth_plane is None:
            raise UsageError("rgbd input mode needs a depth_plane")
        x = np.concatenate([x, depth_plane.astype(dtype)[None]], axis=0)
    if x.shape != (spec.in_channels, spec.img_h, spec.img_w):
        raise UsageError(f"observation shape {x.shape} does not match spec {spec.img_h}x{spec.img_w}")

    P = lambda name: net.param(name, gbuf)
    z1 = relu(tape, conv2d(tape, Tensor(x), P("conv1/W"), P("conv1/b"), spec.conv1[2]))
    z2 = relu(tape, conv2d(tape, z1, P("conv2/W"), P("conv2/b"), spec.conv2[2]))
    fvec = flatten(tape, z2)

    new_state = RecurrentState()
    if spec.variant == "ff":
        top = relu(tape, linear(tape, fvec, P("fc/W"), P("fc/b")))
        f_feat = top
    elif spec.variant == "lstm":
        _check_state(state.h2, spec.lstm2_width)
        h2, c2 = lstm_cell(tape, fvec, state.h2, state.c2, P("lstm/Wx"), P("lstm/Wh"), P("lstm/b"))
        new_state.h2, new_state.c2 = h2, c2
        top, f_feat = h2, fvec
    else:
        _check_state(state.h1, spec.lstm1_width)
        _check_state(state.h2, spec.lstm2_width)
        in1 = concat(tape, [fvec, Tensor(np.asarray([obs.prev_reward], dtype=dtype))])
        h1, c1 = lstm_cell(tape, in1, state.h1, state.c1, P("lstm1/Wx"), P("lstm1/Wh"), P("lstm1/b"))
        in2 = concat(
            tape,
            [h1, fvec, Tensor(obs.velocity.astype(dtype)), Tensor(obs.prev_action.astype(dtype))],
        )
        h2, c2 = lstm_cell(tape, in2, state.h2, state.c2, P("lstm2/Wx"), P("lstm2/Wh"), P("lstm2/b"))
        new_state.h1, new_state.c1, new_state.h2, new_state.c2 = h1, c1, h2, c2
        top, f_feat = h2, fvec

    out = ForwardOut(
        policy_logits=linear(tape, top, P("policy/W"), P("policy/b")),
        value=linear(tape, top, P("value/W"), P("value/b")),
        top=top,
    )
    if "depth_conv" in spec.heads:
        out.depth_conv = _depth_head(tape, net, gbuf, "depth_conv", f_feat)
    if "depth_lstm" in spec.heads:
        out.depth_lstm = _depth_head(tape, net, gbuf, "depth_lstm", top)
    if "loop" in spec.heads:
        hid = relu(tape, linear(tape, top, P("loop/fc/W"), P("loop/fc/b")))
        out.loop_logit = linear(tape, hid, P("loop/out/W"), P("loop/out/b"))
    if "reward" in spec.heads:
        hid = relu(tape, linear(tape, f_feat, P("reward/fc/W"), P("reward/fc/b")))
        out.reward_logits = linear(tape, hid, P("reward/out/W"), P("reward/out/b"))
    return out, new_state


def _depth_head(tape, net, gbuf, name, src):
    P = lambda n: net.param(n, gbuf)
    hid = relu(tape, linear(tape, src, P(f"{name}/fc/W"), P(f"{name}/fc/b")))
    raw = linear(tape, hid, P(f"{name}/out/W"), P(f"{name}/out/b"))
    if net.spec.depth_mode == "classify8":
        return reshape(tape, raw, (DEPTH_CELLS, N_DEPTH_BANDS))
    return raw


def reward_features(net: Network, rgb: np.ndarray, tape: Tape | None, gbuf: GradBuffer | None) -> Tensor:
    """Reward-head logits for a raw frame (replay path: conv trunk only)."""
    if "reward" not in net.spec.heads:
        raise UsageError("network has no reward head")
    spec = net.spec
    dtype = net.pv.dtype
    x = rgb.astype(dtype) / dtype.type(255)
    if spec.input_mode == "rgbd":
        # replayed frames store rgb only; the depth plane is zero-filled
        x = np.concatenate([x, np.zeros((1, spec.img_h, spec.img_w), dtype=dtype)], axis=0)
    P = lambda name: net.param(name, gbuf)
    z1 = relu(tape, conv2d(tape, Tensor(x), P("conv1/W"), P("conv1/b"), spec.conv1[2]))
    z2 = relu(tape, conv2d(tape, z1, P("conv2/W"), P("conv2/b"), spec.conv2[2]))
    fvec = flatten(tape, z2)
    if spec.variant == "ff":
        fvec = relu(tape, linear(tape, fvec, P("fc/W"), P("fc/b")))
    hid = relu(tape, linear(tape, fvec, P("reward/fc/W"), P("reward/fc/b")))
    return linear(tape, hid, P("reward/out/W"), P("reward/out/b"))


def _check_state(t: Tensor | None, width: int):
    if t is None or t.data.shape[0] != width:
        raise UsageError(f"recurrent state width mismatch (expected {width})")


def act(policy_logits: np.ndarray, rng: np.random.Generator) -> int:
    """Sample an action from softmax(logits)."""
    z = policy_logits - policy_logits.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def policy_probs(policy_logits: np.ndarray) -> np.ndarray:
    z = policy_logits - policy_logits.max()
    p = np.exp(z)
    return p / p.sum()


def micro_spec(heads=("depth_conv", "depth_lstm", "loop"), depth_mode="regress") -> ArchitectureSpec:
    """A tiny stacked-LSTM spec (<5k parameters, 8x8 input) for gradient checks."""
    return ArchitectureSpec(
        variant="stacked_lstm",
        heads=tuple(heads),
        depth_mode=depth_mode,
        lstm1_width=4,
        lstm2_width=8,
        fc_width=8,
        img_h=8,
        img_w=8,
        conv1=(2, 4, 2),
        conv2=(4, 2, 1),
        aux_hidden=6,
    )
