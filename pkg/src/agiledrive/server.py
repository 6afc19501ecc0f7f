"""Line-delimited JSON control server.

Remote agents drive the environment over TCP: every message is one
JSON object on one line.  The server greets each connection with a
``hello`` carrying protocol version and dimensions, then answers
``reset`` and ``act`` requests until the client sends ``close`` or
disconnects.  Floats are serialized with full round-trip precision by
the JSON encoder, so a remote loop sees bit-identical observations to
a local one.

Message shapes:

* server -> client: ``{"type": "hello", "version": 1, "obs_dim": N,
  "act_dim": 2}``
* client -> server: ``{"type": "reset_req"}`` answered by
  ``{"type": "obs", "obs": [...]}``
* client -> server: ``{"type": "act", "action": [v, d]}`` answered by
  ``{"type": "step", "obs": [...], "reward": r, "terminated":
  b, "truncated": b, "mode": "FORWARD", "info": {...}}``
* client -> server: ``{"type": "close"}`` ends the session
* any invalid request is answered by ``{"type": "error", "code": ...,
  "message": ...}``
"""
from __future__ import annotations

import json
import socket

import numpy as np

from .env import ResetFreeEnv, ResetTimeoutError, normalized_to_command

PROTOCOL_VERSION = 1


def _hello(env: ResetFreeEnv) -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION,
            "obs_dim": env.observation_dim, "act_dim": env.action_dim}


class SessionHandler:
    """Protocol logic for one connection, transport-agnostic."""

    def __init__(self, env: ResetFreeEnv):
        self.env = env
        self._needs_reset = True

    def hello(self) -> dict:
        return _hello(self.env)

    def handle(self, request: dict) -> dict:
        kind = request.get("type")
        if kind == "reset_req":
            return self._reset()
        if kind == "act":
            return self._act(request)
        return {"type": "error", "code": "protocol",
                "message": f"unknown request type {kind!r}"}

    def _reset(self) -> dict:
        env = self.env
        try:
            if env._terminated:
                try:
                    obs = env.run_reset()
                except ResetTimeoutError:
                    env.respawn()
                    obs = env.begin_episode()
            else:
                obs = env.begin_episode()
        except RuntimeError as exc:
            return {"type": "error", "code": "lifecycle", "message": str(exc)}
        self._needs_reset = False
        return {"type": "obs", "obs": obs.vector().tolist()}

    def _act(self, request: dict) -> dict:
        if self._needs_reset:
            return {"type": "error", "code": "needs_reset",
                    "message": "send a reset request before acting"}
        action = request.get("action")
        if (not isinstance(action, (list, tuple)) or len(action) != 2
                or not all(isinstance(a, (int, float)) for a in action)):
            return {"type": "error", "code": "malformed",
                    "message": "action must be a list of two numbers"}
        command = normalized_to_command(np.asarray(action, dtype=float),
                                        self.env.params)
        try:
            outcome = self.env.step(command)
        except (RuntimeError, ValueError) as exc:
            return {"type": "error", "code": "lifecycle", "message": str(exc)}
        if outcome.terminated or outcome.truncated:
            self._needs_reset = True
        return {
            "type": "step",
            "obs": outcome.observation.vector().tolist(),
            "reward": outcome.reward,
            "terminated": outcome.terminated,
            "truncated": outcome.truncated,
            "mode": outcome.mode,
            "info": outcome.info,
        }


def serve(env: ResetFreeEnv, host: str = "127.0.0.1", port: int = 8787,
          max_sessions: int = None, stop_event=None, ready_callback=None):
    """Accept connections one at a time and run the protocol loop.

    ``max_sessions`` bounds how many connections are served (None means
    until interrupted); ``stop_event`` is polled between sessions;
    ``ready_callback`` receives the bound (host, port) once listening,
    which lets callers pass port 0 and discover the real port.
    """
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(1)
    listener.settimeout(0.2)
    if ready_callback is not None:
        ready_callback(listener.getsockname())

    served = 0
    try:
        while max_sessions is None or served < max_sessions:
            if stop_event is not None and stop_event.is_set():
                break
            try:
                conn, _addr = listener.accept()
            except socket.timeout:
                continue
            with conn:
                _run_session(conn, env)
            served += 1
    finally:
        listener.close()
    return served


def _run_session(conn: socket.socket, env: ResetFreeEnv):
    handler = SessionHandler(env)
    reader = conn.makefile("r", encoding="utf-8", newline="\n")
    writer = conn.makefile("w", encoding="utf-8", newline="\n")

    def send(payload: dict):
        writer.write(json.dumps(payload) + "\n")
        writer.flush()

    send(handler.hello())
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            send({"type": "error", "code": "malformed",
                  "message": f"invalid json: {exc}"})
            continue
        if not isinstance(request, dict):
            send({"type": "error", "code": "malformed",
                  "message": "request must be a json object"})
            continue
        if request.get("type") == "close":
            break
        send(handler.handle(request))
