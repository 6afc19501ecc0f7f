"""Socket client exposing the control server as an episodic environment.

The server speaks newline-delimited JSON: a ``hello`` greeting with the
protocol version and dimensions, ``obs`` replies to reset requests,
``step`` replies to actions, and typed ``error`` replies for anything
out of contract.  This client maps those messages onto the conventional
reset/step five-tuple interface so existing RL training loops attach
without adapters.

One handle owns one connection and must be used sequentially; it is
not shareable across threads.  Open several handles for several server
instances instead.
"""
from __future__ import annotations

import json
import socket

PROTOCOL_VERSION = 1


class BridgeError(RuntimeError):
    """Base class for everything this client raises on purpose."""


class ProtocolError(BridgeError):
    """The peer sent something outside the message contract."""


class LifecycleError(BridgeError):
    """Server rejected the request in its current episode state."""


class NeedsResetError(BridgeError):
    """An action arrived before the episode was (re)started."""


class MalformedError(BridgeError):
    """The request payload could not be interpreted."""


class TransportError(BridgeError):
    """The connection failed or closed mid-conversation."""


_ERROR_TYPES = {
    "protocol": ProtocolError,
    "lifecycle": LifecycleError,
    "needs_reset": NeedsResetError,
    "malformed": MalformedError,
}


def _raise_for_error(reply: dict):
    if reply.get("type") == "error":
        exc = _ERROR_TYPES.get(reply.get("code"), ProtocolError)
        raise exc(reply.get("message", "unspecified server error"))


class RemoteEnvHandle:
    """One sequential connection to a control server.

    Negotiated ``obs_dim``/``act_dim`` come from the server hello;
    ``mode`` tracks the last reported execution mode.  Recovery driving
    happens entirely inside the server's reset handling, so a handle
    only ever observes forward-mode transitions.
    """

    def __init__(self, host: str, port: int, timeout: float = 60.0):
        self.address = (host, int(port))
        try:
            self._sock = socket.create_connection(self.address,
                                                  timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") \
                from exc
        self._reader = self._sock.makefile("r", encoding="utf-8",
                                           newline="\n")
        self._writer = self._sock.makefile("w", encoding="utf-8",
                                           newline="\n")
        self._closed = False

        hello = self._recv()
        if hello.get("type") != "hello":
            raise ProtocolError(f"expected a hello greeting, got "
                                f"{hello.get('type')!r}")
        if hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version {hello.get('version')!r} "
                                f"not supported (need {PROTOCOL_VERSION})")
        self.version = int(hello["version"])
        self.obs_dim = int(hello["obs_dim"])
        self.act_dim = int(hello["act_dim"])
        self.mode = "FORWARD"

    # ------------------------------------------------------------------
    # transport

    def _send(self, payload: dict):
        try:
            self._writer.write(json.dumps(payload) + "\n")
            self._writer.flush()
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv(self) -> dict:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not line:
            raise TransportError("server closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable server line: {exc}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError("server replies must be json objects")
        return reply

    def _request(self, payload: dict) -> dict:
        self._send(payload)
        reply = self._recv()
        _raise_for_error(reply)
        return reply

    def _parse_obs(self, reply: dict) -> list:
        obs = reply.get("obs")
        if not isinstance(obs, list) or len(obs) != self.obs_dim:
            raise ProtocolError("observation does not match the negotiated "
                                f"dimension {self.obs_dim}")
        return [float(v) for v in obs]

    # ------------------------------------------------------------------
    # environment interface

    def reset(self) -> list:
        """Start the next episode; blocks through server-side recovery."""
        reply = self._request({"type": "reset_req"})
        if reply.get("type") != "obs":
            raise ProtocolError(f"expected an observation reply, got "
                                f"{reply.get('type')!r}")
        self.mode = "FORWARD"
        return self._parse_obs(reply)

    def step(self, action) -> tuple:
        """Apply one normalized action; returns the usual five-tuple."""
        try:
            sent = [float(a) for a in action]
        except (TypeError, ValueError) as exc:
            raise MalformedError("action must be a sequence of numbers") \
                from exc
        if len(sent) != self.act_dim:
            raise MalformedError(f"action must have {self.act_dim} entries")
        reply = self._request({"type": "act", "action": sent})
        if reply.get("type") != "step":
            raise ProtocolError(f"expected a step reply, got "
                                f"{reply.get('type')!r}")
        mode = reply.get("mode", "FORWARD")
        if mode != "FORWARD":
            # recovery must stay behind reset; surfacing it here would
            # leak non-episodic transitions into training data
            raise ProtocolError(f"server reported mode {mode!r} for a step")
        self.mode = mode
        return (
            self._parse_obs(reply),
            float(reply["reward"]),
            bool(reply["terminated"]),
            bool(reply["truncated"]),
            dict(reply.get("info", {})),
        )

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self._send({"type": "close"})
        except BridgeError:
            pass
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._reader.close()
        self._writer.close()
        self._sock.close()

    def __enter__(self) -> "RemoteEnvHandle":
        return self

    def __exit__(self, *exc):
        self.close()


def connect(host: str, port: int, timeout: float = 60.0) -> RemoteEnvHandle:
    return RemoteEnvHandle(host, port, timeout=timeout)


def remote_reset(handle: RemoteEnvHandle) -> list:
    """Start the next episode on the handle's server."""
    return handle.reset()


def remote_step(handle: RemoteEnvHandle, action) -> tuple:
    """Apply an action; returns (obs, reward, terminated, truncated, info)."""
    return handle.step(action)
