"""Length-prefixed, type-tagged TCP message layer.

Frame layout (little-endian): magic "HSPL" (4B) | version u16 | msg_type u8
| payload_len u32 | payload. One persistent connection per session, strict
request/response alternation, no reconnection: any framing violation closes
the connection and raises.

Payload schemas by type:
  HELLO      u8 role (1 client, 2 server)
  SYNC       SyncConfig struct (see SYNC_STRUCT)
  CTX_PUB    serialized public CKKS context ("CKX1" blob, no secret key)
  ENC_ACT    u8 phase (0 train, 1 eval) | u32 F | u32 n | u32 block |
             F x (u32 len | ciphertext blob)
  ENC_OUT    u8 phase | u32 K | K x (u32 len | blob)
  GRAD_AL    tensor [n, K]   (client -> server, dJ/da_out)
  GRAD_ALOW  tensor [n, F]   (server -> client, dJ/da_split)
  ENC_W      u32 F | F x (u32 len | blob)
  DEC_W      tensor [K, F]   (decrypted masked weights)
  PLAIN_ACT  u8 phase | tensor [n, F]
  PLAIN_OUT  u8 phase | tensor [n, K]
  EPOCH_END  u32 epoch index
  BYE        empty
  ERROR      utf-8 message
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    ParameterError,
    PayloadSizeError,
    ProtocolError,
    SerializationError,
    SyncError,
    TruncationError,
)

MAGIC = b"HSPL"
WIRE_VERSION = 1
HEADER = struct.Struct("<4sHBI")
DEFAULT_MAX_PAYLOAD = 1 << 30  # 1 GiB
DEFAULT_PORT = 9009


class MsgType(IntEnum):
    HELLO = 1
    SYNC = 2
    CTX_PUB = 3
    ENC_ACT = 4
    ENC_OUT = 5
    GRAD_AL = 6
    GRAD_ALOW = 7
    ENC_W = 8
    DEC_W = 9
    PLAIN_ACT = 10
    PLAIN_OUT = 11
    EPOCH_END = 12
    BYE = 13
    ERROR = 14


@dataclass
class SessionStats:
    """Per-message-type byte and message counters for both directions."""

    bytes_sent: dict[str, int] = field(default_factory=dict)
    bytes_received: dict[str, int] = field(default_factory=dict)
    msgs_sent: dict[str, int] = field(default_factory=dict)
    msgs_received: dict[str, int] = field(default_factory=dict)

    def record(self, sent: bool, msg_type: MsgType, frame_len: int) -> None:
        key = msg_type.name
        b = self.bytes_sent if sent else self.bytes_received
        m = self.msgs_sent if sent else self.msgs_received
        b[key] = b.get(key, 0) + frame_len
        m[key] = m.get(key, 0) + 1

    @property
    def total_bytes_sent(self) -> int:
        return sum(self.bytes_sent.values())

    @property
    def total_bytes_received(self) -> int:
        return sum(self.bytes_received.values())

    @property
    def total_bytes(self) -> int:
        return self.total_bytes_sent + self.total_bytes_received

    def as_dict(self) -> dict:
        return {
            "bytes_sent": dict(self.bytes_sent),
            "bytes_received": dict(self.bytes_received),
            "msgs_sent": dict(self.msgs_sent),
            "msgs_received": dict(self.msgs_received),
            "total_bytes_sent": self.total_bytes_sent,
            "total_bytes_received": self.total_bytes_received,
            "total_bytes": self.total_bytes,
        }


class Connection:
    """Framed messaging over a stream socket, with byte accounting."""

    def __init__(self, sock: socket.socket, max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.sock = sock
        self.max_payload = max_payload
        self.stats = SessionStats()

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def send(self, msg_type: MsgType, payload: bytes = b"") -> None:
        if len(payload) > self.max_payload:
            raise PayloadSizeError(f"payload {len(payload)} exceeds max {self.max_payload}")
        frame = HEADER.pack(MAGIC, WIRE_VERSION, int(msg_type), len(payload)) + payload
        self.sock.sendall(frame)
        self.stats.record(True, msg_type, len(frame))

    def _read_exact(self, count: int) -> bytes:
        buf = bytearray(count)
        view = memoryview(buf)
        got = 0
        while got < count:
            n = self.sock.recv_into(view[got:], count - got)
            if n == 0:
                raise TruncationError(f"connection closed after {got}/{count} bytes")
            got += n
        return bytes(buf)

    def recv(self) -> tuple[MsgType, bytes]:
        head = self._read_exact(HEADER.size)
        magic, version, mtype, length = HEADER.unpack(head)
        if magic != MAGIC:
            self.close()
            raise ProtocolError(f"bad frame magic {magic!r}")
        if version != WIRE_VERSION:
            self.close()
            raise ProtocolError(f"unsupported wire version {version}")
        try:
            msg_type = MsgType(mtype)
        except ValueError:
            self.close()
            raise ProtocolError(f"unknown message type {mtype}") from None
        if length > self.max_payload:
            self.close()
            raise PayloadSizeError(f"payload {length} exceeds max {self.max_payload}")
        payload = self._read_exact(length) if length else b""
        self.stats.record(False, msg_type, HEADER.size + length)
        return msg_type, payload

    def recv_expect(self, *expected: MsgType) -> tuple[MsgType, bytes]:
        msg_type, payload = self.recv()
        if msg_type == MsgType.ERROR and MsgType.ERROR not in expected:
            raise ProtocolError(f"peer error: {payload.decode(errors='replace')}")
        if msg_type not in expected:
            raise ProtocolError(
                f"expected {'/'.join(t.name for t in expected)}, got {msg_type.name}"
            )
        return msg_type, payload


# --- tensor codec ------------------------------------------------------------------

_DTYPE_F64 = 1


def encode_tensor(arr: np.ndarray) -> bytes:
    """u8 dtype tag (f64=1) | u8 ndim | dims u32 each | row-major f64 data."""
    if arr.ndim > 255:
        raise SerializationError("too many dimensions")
    if any(d > 0xFFFFFFFF for d in arr.shape) or arr.size > 0xFFFFFFFF:
        raise SerializationError("tensor dimensions overflow u32")
    arr = np.ascontiguousarray(arr, dtype="<f8")
    head = struct.pack("<BB", _DTYPE_F64, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + dims + arr.tobytes()


def decode_tensor_prefix(data: bytes) -> tuple[np.ndarray, bytes]:
    """Decode one tensor, returning it plus any trailing bytes."""
    if len(data) < 2:
        raise SerializationError("tensor header truncated")
    tag, ndim = struct.unpack_from("<BB", data)
    if tag != _DTYPE_F64:
        raise SerializationError(f"unsupported dtype tag {tag}")
    off = 2 + 4 * ndim
    if len(data) < off:
        raise SerializationError("tensor dims truncated")
    shape = struct.unpack_from(f"<{ndim}I", data, 2)
    size = int(np.prod(shape)) if ndim else 1
    end = off + 8 * size
    if len(data) < end:
        raise SerializationError("tensor data truncated")
    arr = np.frombuffer(data[off:end], dtype="<f8").reshape(shape).copy()
    return arr, data[end:]


def decode_tensor(data: bytes) -> np.ndarray:
    arr, rest = decode_tensor_prefix(data)
    if rest:
        raise SerializationError(f"{len(rest)} trailing bytes after tensor")
    return arr


# --- sync -------------------------------------------------------------------------

SYNC_STRUCT = struct.Struct("<IdIIQBBIIII")

MODE_PLAIN, MODE_HE = 0, 1
HE_SET_IDS = {"none": 0, "s1": 1, "s2": 2, "toy": 3, "s1mini": 4}
HE_SET_NAMES = {v: k for k, v in HE_SET_IDS.items()}


@dataclass
class SyncConfig:
    """Everything both sides must agree on before training starts."""

    epochs: int
    lr: float
    batch_size: int
    batch_count: int
    seed: int
    mode: int  # MODE_PLAIN | MODE_HE
    he_set: str  # key of HE_SET_IDS
    classes: int
    features: int
    eval_batches: int = 0
    refresh_every: int = 1

    def pack(self) -> bytes:
        return SYNC_STRUCT.pack(
            self.epochs,
            self.lr,
            self.batch_size,
            self.batch_count,
            self.seed,
            self.mode,
            HE_SET_IDS[self.he_set],
            self.classes,
            self.features,
            self.eval_batches,
            self.refresh_every,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "SyncConfig":
        try:
            (epochs, lr, n, nb, seed, mode, he_id, k, f, evalb, refresh) = SYNC_STRUCT.unpack(data)
        except struct.error as exc:
            raise SerializationError(f"bad SYNC payload: {exc}") from None
        if he_id not in HE_SET_NAMES:
            raise SerializationError(f"unknown HE set id {he_id}")
        return cls(epochs, lr, n, nb, seed, mode, HE_SET_NAMES[he_id], k, f, evalb, refresh)

    def validate(self) -> None:
        checks = [
            ("epochs", self.epochs >= 1),
            ("lr", self.lr > 0 and np.isfinite(self.lr)),
            ("batch_size", self.batch_size >= 1),
            ("batch_count", self.batch_count >= 1),
            ("mode", self.mode in (MODE_PLAIN, MODE_HE)),
            ("classes", self.classes >= 2),
            ("features", self.features >= 1),
            ("eval_batches", self.eval_batches >= 0),
            ("refresh_every", self.refresh_every >= 1),
            ("he_set", self.mode == MODE_PLAIN or self.he_set != "none"),
        ]
        for name, ok in checks:
            if not ok:
                raise SyncError(f"invalid sync field {name}")


def handshake_and_sync(conn: Connection, role: str, proposal: SyncConfig | None = None) -> SyncConfig:
    """Client proposes the run parameters; the server validates and echoes.

    The default server policy is read-only: any valid proposal is accepted
    verbatim. A disagreement or invalid field aborts with SyncError.
    """
    if role == "client":
        if proposal is None:
            raise ParameterError("client handshake needs a proposal")
        proposal.validate()
        conn.send(MsgType.HELLO, bytes([1]))
        _, hello = conn.recv_expect(MsgType.HELLO)
        if hello != bytes([2]):
            raise ProtocolError(f"expected a server hello, got {hello!r}")
        conn.send(MsgType.SYNC, proposal.pack())
        _, echoed = conn.recv_expect(MsgType.SYNC)
        if echoed != proposal.pack():
            got = SyncConfig.unpack(echoed)
            for name in vars(proposal):
                if getattr(got, name) != getattr(proposal, name):
                    raise SyncError(f"server disagreed on {name}")
            raise SyncError("server echo differs")
        return proposal
    if role == "server":
        _, hello = conn.recv_expect(MsgType.HELLO)
        if hello != bytes([1]):
            raise ProtocolError(f"expected a client hello, got {hello!r}")
        conn.send(MsgType.HELLO, bytes([2]))
        _, raw = conn.recv_expect(MsgType.SYNC)
        cfg = SyncConfig.unpack(raw)
        try:
            cfg.validate()
        except SyncError as exc:
            conn.send(MsgType.ERROR, str(exc).encode())
            raise
        conn.send(MsgType.SYNC, raw)
        return cfg
    raise ParameterError(f"unknown role {role!r}")


# --- sockets -----------------------------------------------------------------------


def connect(host: str, port: int, timeout: float | None = 10.0,
            max_payload: int = DEFAULT_MAX_PAYLOAD) -> Connection:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return Connection(sock, max_payload=max_payload)


def listen_one(host: str, port: int, timeout: float | None = None,
               max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[Connection, int]:
    """Accept a single peer; returns the connection and the bound port."""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    bound_port = server.getsockname()[1]
    server.listen(1)
    if timeout is not None:
        server.settimeout(timeout)
    sock, _ = server.accept()
    server.close()
    return Connection(sock, max_payload=max_payload), bound_port
