"""Reference client for the line-delimited JSON control protocol."""
from .client import (BridgeError, LifecycleError, MalformedError,
                     NeedsResetError, ProtocolError, RemoteEnvHandle,
                     TransportError, connect, remote_reset, remote_step)

__all__ = [
    "BridgeError",
    "LifecycleError",
    "MalformedError",
    "NeedsResetError",
    "ProtocolError",
    "RemoteEnvHandle",
    "TransportError",
    "connect",
    "remote_reset",
    "remote_step",
]
