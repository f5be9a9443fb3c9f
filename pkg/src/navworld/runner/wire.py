"""Environment wire protocol: length-prefixed binary frames over TCP.

Frame layout: u32 little-endian payload length, then the payload, whose
first byte is the message type.

    RESET (1): u64 episode seed
    STEP  (2): u8 action id
    OBS   (3): rgb bytes (3*H*W, channel-major), depth (4x16 f32 grid, or
               H*W f32 when the server runs in raw-depth mode), velocity
               (6 f32), prev_action u8 (255 at episode start), prev_reward
               f32, reward f32, done u8
    ERR   (4): u16 code, utf-8 message

All integers and floats are little-endian; floats are IEEE-754 single.
Error codes: 100 step-before-reset, 101 bad action id, 102 malformed frame,
103 step on a finished episode.
"""
from __future__ import annotations

import socket
import struct

import numpy as np

from ..errors import ProtocolError

RESET, STEP, OBS, ERR = 1, 2, 3, 4

ERR_NO_EPISODE = 100
ERR_BAD_ACTION = 101
ERR_MALFORMED = 102
ERR_EPISODE_DONE = 103

MAX_FRAME = 1 << 24

_OBS_TAIL = 6 * 4 + 1 + 4 + 4 + 1  # velocity + prev_action + prev_reward + reward + done
DEPTH_GRID_BYTES = 64 * 4


def encode_frame(ftype: int, payload: bytes = b"") -> bytes:
    body = bytes([ftype]) + payload
    return struct.pack("<I", len(body)) + body


def encode_reset(episode_seed: int) -> bytes:
    return encode_frame(RESET, struct.pack("<Q", episode_seed & 0xFFFFFFFFFFFFFFFF))


def encode_step(action: int) -> bytes:
    return encode_frame(STEP, struct.pack("<B", action & 0xFF))


def encode_err(code: int, message: str) -> bytes:
    return encode_frame(ERR, struct.pack("<H", code) + message.encode("utf-8"))


def decode_err(payload: bytes) -> tuple[int, str]:
    (code,) = struct.unpack_from("<H", payload, 0)
    return code, payload[2:].decode("utf-8", errors="replace")


def encode_obs(rgb: np.ndarray, depth: np.ndarray, velocity: np.ndarray, prev_action: int | None, prev_reward: float, reward: float, done: bool) -> bytes:
    parts = [
        np.ascontiguousarray(rgb, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(depth, dtype="<f4").tobytes(),
        np.ascontiguousarray(velocity, dtype="<f4").tobytes(),
        struct.pack("<B", 255 if prev_action is None else prev_action),
        struct.pack("<f", prev_reward),
        struct.pack("<f", reward),
        struct.pack("<B", 1 if done else 0),
    ]
    return encode_frame(OBS, b"".join(parts))


def decode_obs(payload: bytes, raw_depth: bool = False) -> dict:
    """Decode an OBS payload; image dims are inferred from the frame length."""
    n = len(payload)
    if raw_depth:
        pixels, rem = divmod(n - _OBS_TAIL, 7)  # 3 rgb bytes + 4 depth bytes per pixel
        depth_bytes = 4 * pixels
    else:
        pixels, rem = divmod(n - _OBS_TAIL - DEPTH_GRID_BYTES, 3)
        depth_bytes = DEPTH_GRID_BYTES
    side = int(round(pixels**0.5))
    if rem or pixels <= 0 or side * side != pixels:
        raise ProtocolError(f"OBS payload length {n} does not fit the schema", ERR_MALFORMED)
    off = 0
    rgb = np.frombuffer(payload, dtype=np.uint8, count=3 * pixels, offset=off).reshape(3, side, side)
    off += 3 * pixels
    depth = np.frombuffer(payload, dtype="<f4", count=depth_bytes // 4, offset=off)
    depth = depth.reshape((side, side) if raw_depth else (4, 16))
    off += depth_bytes
    velocity = np.frombuffer(payload, dtype="<f4", count=6, offset=off)
    off += 24
    prev_action = payload[off]
    off += 1
    (prev_reward,) = struct.unpack_from("<f", payload, off)
    off += 4
    (reward,) = struct.unpack_from("<f", payload, off)
    off += 4
    done = payload[off] != 0
    return {
        "rgb": rgb,
        "depth": depth,
        "velocity": velocity,
        "prev_action": None if prev_action == 255 else int(prev_action),
        "prev_reward": prev_reward,
        "reward": reward,
        "done": done,
    }


def read_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    """Read one frame; None on clean EOF."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("<I", header)
    if length == 0 or length > MAX_FRAME:
        raise ProtocolError(f"frame length {length} out of bounds", ERR_MALFORMED)
    body = _read_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-frame", ERR_MALFORMED)
    return body[0], body[1:]


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise ProtocolError("connection closed mid-frame", ERR_MALFORMED)
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
