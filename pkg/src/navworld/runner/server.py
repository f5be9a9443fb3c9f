"""TCP server exposing maze environments over the wire protocol.

One session per connection; each session owns one environment.  Malformed
frames get an ERR reply and the connection is closed; protocol-level
mistakes (step before reset, bad action id) get an ERR and the session
continues where that is safe.
"""
from __future__ import annotations

import socket
import struct
import threading

from ..errors import ProtocolError, UsageError
from ..targets import depth_to_bytes, preprocess_depth
from ..world import MazeEnv, MazeLayout
from . import wire


class EnvServer:
    def __init__(
        self,
        layout: MazeLayout,
        img_hw=(84, 84),
        host: str = "127.0.0.1",
        port: int = 0,
        raw_depth: bool = False,
        max_range: float | None = None,
    ):
        self.layout = layout
        self.img_hw = img_hw
        self.raw_depth = raw_depth
        self.max_range = max_range
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.address = self._sock.getsockname()
        self._shutdown = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.address[1]

    def start_background(self) -> "EnvServer":
        self._thread = threading.Thread(target=self.serve_forever, name="env-server", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._sock.settimeout(0.2)
        while not self._shutdown.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()
        self._sock.close()

    def shutdown(self):
        self._shutdown.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- session ------------------------------------------------------------

    def _session(self, conn: socket.socket):
        env: MazeEnv | None = None
        try:
            while True:
                try:
                    frame = wire.read_frame(conn)
                except ProtocolError as exc:
                    self._safe_send(conn, wire.encode_err(exc.code or wire.ERR_MALFORMED, str(exc)))
                    return
                if frame is None:
                    return
                ftype, payload = frame
                if ftype == wire.RESET:
                    if len(payload) != 8:
                        self._safe_send(conn, wire.encode_err(wire.ERR_MALFORMED, "RESET payload must be 8 bytes"))
                        return
                    (seed,) = struct.unpack("<Q", payload)
                    if env is None:
                        env = MazeEnv(self.layout, img_hw=self.img_hw, max_range=self.max_range)
                    obs = env.reset(seed)
                    conn.sendall(self._obs_frame(env, obs, reward=0.0, done=False))
                elif ftype == wire.STEP:
                    if len(payload) != 1:
                        self._safe_send(conn, wire.encode_err(wire.ERR_MALFORMED, "STEP payload must be 1 byte"))
                        return
                    action = payload[0]
                    if env is None:
                        conn.sendall(wire.encode_err(wire.ERR_NO_EPISODE, "STEP before RESET"))
                        continue
                    if action >= 8:
                        conn.sendall(wire.encode_err(wire.ERR_BAD_ACTION, f"action id {action} out of range"))
                        return
                    try:
                        obs, reward, done, _ = env.step(int(action))
                    except UsageError as exc:
                        conn.sendall(wire.encode_err(wire.ERR_EPISODE_DONE, str(exc)))
                        continue
                    conn.sendall(self._obs_frame(env, obs, reward=reward, done=done))
                else:
                    self._safe_send(conn, wire.encode_err(wire.ERR_MALFORMED, f"unknown frame type {ftype}"))
                    return
        except (ConnectionError, BrokenPipeError, OSError):
            pass
        finally:
            conn.close()

    def _obs_frame(self, env: MazeEnv, obs, reward: float, done: bool) -> bytes:
        if self.raw_depth:
            depth = obs.depth_raw
        else:
            depth = preprocess_depth(depth_to_bytes(obs.depth_raw, env.max_range))
        prev_action = env._last_action
        return wire.encode_obs(
            obs.rgb,
            depth,
            obs.velocity,
            prev_action,
            obs.prev_reward,
            reward,
            done,
        )

    @staticmethod
    def _safe_send(conn, data: bytes):
        try:
            conn.sendall(data)
        except OSError:
            pass
