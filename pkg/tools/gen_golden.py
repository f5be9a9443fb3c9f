"""Regenerate the golden wire fixtures used by the TypeScript client tests.

Produces, under client-ts/golden/:

- frames.bin: raw frames captured from a live server (one RESET observation
  and three STEP observations), for framing/decoding tests.
- expected.json: field-level expectations for frames.bin plus the 500-step
  loopback contract (per-step sha256 of each OBS payload, exact float32
  rewards, and the action sequence), all derived from the in-process
  environment.

Rerun after any change that affects rendering, physics or the wire format:

    python3 tools/gen_golden.py
"""
import hashlib
import json
import socket
import sys
from pathlib import Path

import numpy as np

from navworld.runner import wire
from navworld.runner.server import EnvServer
from navworld.targets import depth_to_bytes, preprocess_depth
from navworld.world import MazeEnv, generate_layout

KIND = "static_mini"
LAYOUT_SEED = 1
IMG = 16
EPISODE_SEED = 99
ROLLOUT_STEPS = 500
CAPTURE_ACTIONS = [4, 0, 6]

OUT = Path(__file__).resolve().parent.parent / "client-ts" / "golden"


def obs_payload(env, obs, reward, done) -> bytes:
    depth = preprocess_depth(depth_to_bytes(obs.depth_raw, env.max_range))
    frame = wire.encode_obs(obs.rgb, depth, obs.velocity, env._last_action, obs.prev_reward, reward, done)
    return frame[5:]  # strip length prefix and type byte


def field_expectations(payload: bytes, raw_depth=False) -> dict:
    obs = wire.decode_obs(payload, raw_depth=raw_depth)
    return {
        "sha256": hashlib.sha256(payload).hexdigest(),
        "payload_len": len(payload),
        "rgb_sha256": hashlib.sha256(obs["rgb"].tobytes()).hexdigest(),
        "rgb_first16": obs["rgb"].reshape(-1)[:16].tolist(),
        "depth": [float(v) for v in obs["depth"].reshape(-1)],
        "velocity": [float(v) for v in obs["velocity"]],
        "prev_action": obs["prev_action"],
        "prev_reward": float(obs["prev_reward"]),
        "reward": float(obs["reward"]),
        "done": bool(obs["done"]),
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    layout = generate_layout(KIND, LAYOUT_SEED)

    # 1. capture real frames through a live server socket
    server = EnvServer(layout, img_hw=(IMG, IMG), port=0).start_background()
    sock = socket.create_connection(("127.0.0.1", server.port), timeout=5)
    raw_frames = []
    sock.sendall(wire.encode_reset(EPISODE_SEED))
    raw_frames.append(_read_raw_frame(sock))
    for a in CAPTURE_ACTIONS:
        sock.sendall(wire.encode_step(a))
        raw_frames.append(_read_raw_frame(sock))
    sock.close()
    server.shutdown()
    (OUT / "frames.bin").write_bytes(b"".join(raw_frames))

    capture_expect = [field_expectations(f[5:]) for f in raw_frames]

    # 2. the 500-step loopback contract from the in-process environment
    env = MazeEnv(layout, img_hw=(IMG, IMG))
    rng = np.random.default_rng(2024)
    actions = [int(rng.integers(8)) for _ in range(ROLLOUT_STEPS)]
    obs = env.reset(EPISODE_SEED)
    hashes = [hashlib.sha256(obs_payload(env, obs, 0.0, False)).hexdigest()]
    rewards = [0.0]
    dones = [False]
    for a in actions:
        if env.done:
            obs = env.reset(EPISODE_SEED)  # server sessions can reset mid-stream the same way
            hashes.append(hashlib.sha256(obs_payload(env, obs, 0.0, False)).hexdigest())
            rewards.append(0.0)
            dones.append(False)
            continue
        obs, reward, done, _ = env.step(a)
        hashes.append(hashlib.sha256(obs_payload(env, obs, reward, done)).hexdigest())
        rewards.append(float(np.float32(reward)))
        dones.append(bool(done))

    expected = {
        "config": {"kind": KIND, "layout_seed": LAYOUT_SEED, "img": IMG, "episode_seed": EPISODE_SEED},
        "capture_actions": CAPTURE_ACTIONS,
        "capture_frames": capture_expect,
        "rollout": {"actions": actions, "payload_sha256": hashes, "rewards_f32": rewards, "dones": dones},
    }
    (OUT / "expected.json").write_text(json.dumps(expected, indent=1) + "\n")
    print(f"wrote {OUT / 'frames.bin'} ({sum(len(f) for f in raw_frames)} bytes) and expected.json")


def _read_raw_frame(sock) -> bytes:
    header = _read_exact(sock, 4)
    (length,) = np.frombuffer(header, dtype="<u4")
    return header + _read_exact(sock, int(length))


def _read_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise RuntimeError("eof")
        buf += chunk
    return buf


if __name__ == "__main__":
    sys.exit(main())
