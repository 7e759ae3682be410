"""Byte layouts for ciphertexts, public contexts, and secret keys.

Everything is little-endian. Ciphertext: magic "CKC1" | version u16 |
level u16 | scale f64 | num_primes u16 | c0 | c1, each component stored as
num_primes contiguous arrays of N u64 words (NTT domain, rows in active
order). Public context: magic "CKX1" | N u32 | prime count u16 |
primes u64[] | scale u64 | sampling profile | pk | rotation keys. A public
context never contains secret-key material; secret keys use the separate
"CKS1" tag so its absence is checkable.
"""

from __future__ import annotations

import struct
import sys

import numpy as np

from ..errors import SerializationError
from .cipher import Ciphertext
from .context import CkksContext
from .encoder import SlotEncoder
from .keys import KSwitchKey, PublicKey, RotationKeySet, SecretKey
from .params import CkksParams
from .ring import RingContext

CT_MAGIC = b"CKC1"
CTX_MAGIC = b"CKX1"
SK_MAGIC = b"CKS1"
WIRE_VERSION = 1


def _take(data: bytes, offset: int, count: int) -> tuple[bytes, int]:
    if offset + count > len(data):
        raise SerializationError("truncated buffer")
    return data[offset : offset + count], offset + count


# the wire format is little-endian; on LE hosts u64 arrays map straight in
assert sys.byteorder == "little", "big-endian hosts need byte swapping in serialize.py"


def _read_words(data: bytes, offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    # one aligned copy; a zero-copy view would sit at the frame's byte
    # offset and misaligned u64 loads wreck the kernels
    count = int(np.prod(shape))
    if offset + count * 8 > len(data):
        raise SerializationError("truncated buffer")
    arr = np.frombuffer(data, dtype=np.uint64, count=count, offset=offset)
    return arr.reshape(shape).copy(), offset + count * 8


def _words_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.uint64).tobytes()


def serialize_ct(ct: Ciphertext) -> bytes:
    head = CT_MAGIC + struct.pack(
        "<HHdH", WIRE_VERSION, ct.level, ct.scale, ct.num_components
    )
    body = _words_bytes(ct.c0) + _words_bytes(ct.c1)
    return head + body


def ct_byte_size(params: CkksParams, level: int = 0) -> int:
    num = params.chain_length - level
    return len(CT_MAGIC) + struct.calcsize("<HHdH") + 2 * num * params.ring_degree * 8


def deserialize_ct(data: bytes, ctx: CkksContext) -> Ciphertext:
    magic, off = _take(data, 0, 4)
    if magic != CT_MAGIC:
        raise SerializationError(f"bad ciphertext magic {magic!r}")
    raw, off = _take(data, off, struct.calcsize("<HHdH"))
    version, level, scale, num = struct.unpack("<HHdH", raw)
    if version != WIRE_VERSION:
        raise SerializationError(f"unsupported ciphertext version {version}")
    params = ctx.params
    if level > params.max_level or num != params.chain_length - level:
        raise SerializationError(
            f"component count {num} inconsistent with level {level} "
            f"and chain length {params.chain_length}"
        )
    shape = (num, params.ring_degree)
    c0, off = _read_words(data, off, shape)
    c1, off = _read_words(data, off, shape)
    if off != len(data):
        raise SerializationError("trailing bytes after ciphertext")
    return Ciphertext(ring=ctx.ring, c0=c0, c1=c1, level=level, scale=scale)


def serialize_secret_key(sk: SecretKey) -> bytes:
    head = SK_MAGIC + struct.pack("<HQ", WIRE_VERSION, sk.seed & (2**64 - 1))
    return head + _words_bytes(sk.s_ntt)


def serialize_public_context(ctx: CkksContext) -> bytes:
    """Params, public key, and rotation keys; never the secret key."""
    p = ctx.params
    out = bytearray()
    out += CTX_MAGIC
    out += struct.pack("<HIH", WIRE_VERSION, p.ring_degree, p.chain_length)
    out += np.array(p.prime_chain, dtype=np.uint64).tobytes()
    out += struct.pack("<QQdI", p.scale, p.ks_prime, p.error_std, p.secret_weight)
    out += _words_bytes(ctx.pk.b)
    out += _words_bytes(ctx.pk.a)
    keys = ctx.rotation_keys.keys
    out += struct.pack("<H", len(keys))
    for step in sorted(keys):
        k = keys[step]
        material = bytearray()
        material += struct.pack("<IH", k.galois, len(k.digit_src))
        for pos, t in k.digit_src:
            material += struct.pack("<HH", pos, t)
        material += _words_bytes(k.b)
        material += _words_bytes(k.a)
        out += struct.pack("<IQ", step, len(material))
        out += material
    return bytes(out)


def deserialize_public_context(data: bytes) -> CkksContext:
    magic, off = _take(data, 0, 4)
    if magic != CTX_MAGIC:
        raise SerializationError(f"bad context magic {magic!r}")
    raw, off = _take(data, off, struct.calcsize("<HIH"))
    version, n, chain_len = struct.unpack("<HIH", raw)
    if version != WIRE_VERSION:
        raise SerializationError(f"unsupported context version {version}")
    primes, off = _read_words(data, off, (chain_len,))
    raw, off = _take(data, off, struct.calcsize("<QQdI"))
    scale, ks_prime, error_std, secret_weight = struct.unpack("<QQdI", raw)
    params = CkksParams(
        ring_degree=int(n),
        prime_chain=tuple(int(q) for q in primes),
        scale=int(scale),
        error_std=float(error_std),
        secret_weight=int(secret_weight),
        ks_prime=int(ks_prime),
        name="received",
    )
    ring = RingContext(params)
    pk_shape = (chain_len, int(n))
    b, off = _read_words(data, off, pk_shape)
    a, off = _read_words(data, off, pk_shape)
    pk = PublicKey(ring=ring, b=b, a=a, rng=None)
    raw, off = _take(data, off, 2)
    (num_keys,) = struct.unpack("<H", raw)
    keys: dict[int, KSwitchKey] = {}
    for _ in range(num_keys):
        raw, off = _take(data, off, struct.calcsize("<IQ"))
        step, mat_len = struct.unpack("<IQ", raw)
        material, off = _take(data, off, mat_len)
        moff = 0
        raw, moff = _take(material, moff, struct.calcsize("<IH"))
        galois, nd = struct.unpack("<IH", raw)
        digit_src = []
        for _ in range(nd):
            raw, moff = _take(material, moff, 4)
            pos, t = struct.unpack("<HH", raw)
            digit_src.append((pos, t))
        kshape = (nd, chain_len + 1, int(n))
        kb, moff = _read_words(material, moff, kshape)
        ka, moff = _read_words(material, moff, kshape)
        if moff != len(material):
            raise SerializationError("trailing bytes in rotation key material")
        keys[step] = KSwitchKey(step=step, galois=galois, digit_src=digit_src, b=kb, a=ka)
    if off != len(data):
        raise SerializationError("trailing bytes after public context")
    return CkksContext(
        params=params,
        ring=ring,
        encoder=SlotEncoder(params.ring_degree),
        pk=pk,
        rotation_keys=RotationKeySet(ring=ring, keys=keys),
        sk=None,
    )
