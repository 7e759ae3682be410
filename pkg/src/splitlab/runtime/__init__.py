"""Protocol state machines for split training, plus the local baseline.

Threat model (documented assumption, not enforced code): both parties are
semi-honest; they follow the protocol but analyze everything received. In
encrypted mode the server sees only ciphertexts, the synced hyperparameters,
and dJ/da_out; the client sees the server's outputs and dJ/da_split (from
which a patient client could eventually fit the server's weights; the
protocol accepts that, as the same gradients are inherent to split
training) and the mask-blinded weights during refresh. Labels and raw
inputs never leave the client; the secret key never leaves it either. The
client has no way to verify that dJ/da_split was computed with the claimed
weights; a lying server is outside this threat model. Transport security
is out of scope.

Client and server normally live in separate processes joined by TCP; tests
drive both ends over a socketpair in two threads via ``run_split_session``.
"""

from __future__ import annotations

import socket
import threading

from .. import wire
from .audit import AuditRecord, leakage_surface
from .client import client_run
from .local import local_train
from .packing import PackedActivation, block_stride, pack_activation
from .server import server_run

__all__ = [
    "client_run",
    "server_run",
    "local_train",
    "leakage_surface",
    "AuditRecord",
    "PackedActivation",
    "pack_activation",
    "block_stride",
    "run_split_session",
]


def run_split_session(client_kwargs: dict, server_kwargs: dict | None = None):
    """Run both protocol ends in-process over a socketpair.

    Returns (client_report, server_report). Exceptions on either side are
    re-raised in the calling thread.
    """
    a, b = socket.socketpair()
    client_conn = wire.Connection(a)
    server_conn = wire.Connection(b)
    result: dict = {}

    def serve():
        try:
            result["server"] = server_run(server_conn, **(server_kwargs or {}))
        except BaseException as exc:  # propagated below
            result["server_exc"] = exc
        finally:
            # closing our end unblocks a peer stuck in recv
            server_conn.close()

    th = threading.Thread(target=serve, name="splitlab-server")
    th.start()
    try:
        result["client"] = client_run(client_conn, **client_kwargs)
    except BaseException as exc:
        result["client_exc"] = exc
    finally:
        client_conn.close()
    th.join()
    if "server_exc" in result and "client_exc" in result:
        # the root cause is whichever side failed with a real error; peers
        # that died from the resulting hangup report TruncationError
        from ..errors import TruncationError

        if isinstance(result["client_exc"], TruncationError):
            raise result["server_exc"]
        raise result["client_exc"]
    if "client_exc" in result:
        raise result["client_exc"]
    if "server_exc" in result:
        raise result["server_exc"]
    return result["client"], result["server"]
