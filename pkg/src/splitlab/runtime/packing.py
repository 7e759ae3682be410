"""Slot layouts carrying the protocol's tensors through CKKS ciphertexts.

Batch-dimension packing: one ciphertext per activation feature with the
batch in slots 0..n-1, which keeps the server's forward pass rotation free.
Each feature additionally repeats its batch column once per class at block
stride m = next_pow2(n) (slot m*k + b), so the server can form the whole
packed weight-gradient column with a single block-local slot sum instead of
one slot sum per (class, feature) pair; the sums land on slots m*k, where
the encrypted weight update expects them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ckks
from ..errors import CapacityError, ShapeError


def block_stride(batch_size: int) -> int:
    return 1 << (batch_size - 1).bit_length()


def check_capacity(params: ckks.CkksParams, batch_size: int, classes: int) -> int:
    m = block_stride(batch_size)
    if m * classes > params.slots:
        raise CapacityError(
            f"batch {batch_size} x {classes} classes needs {m * classes} slots, "
            f"ring has {params.slots}"
        )
    return m


@dataclass
class PackedActivation:
    """One ciphertext per feature, batch in slots 0..n-1 (replicated per class)."""

    ciphertexts: list[ckks.Ciphertext]
    batch_size: int
    feature_count: int
    block: int

    def __post_init__(self):
        if len(self.ciphertexts) != self.feature_count:
            raise ShapeError("one ciphertext per feature is required")
        levels = {ct.level for ct in self.ciphertexts}
        scales = {ct.scale for ct in self.ciphertexts}
        if len(levels) != 1 or len(scales) != 1:
            raise ShapeError("packed ciphertexts must share level and scale")


def pack_activation(ctx: ckks.CkksContext, a_l: np.ndarray, classes: int) -> PackedActivation:
    """Encrypt the [n, F] activation map feature-wise."""
    n, feats = a_l.shape
    m = check_capacity(ctx.params, n, classes)
    width = m * classes
    cts = []
    buf = np.zeros(width)
    for f in range(feats):
        for k in range(classes):
            buf[m * k : m * k + n] = a_l[:, f]
        cts.append(ctx.encrypt(buf))
    return PackedActivation(ciphertexts=cts, batch_size=n, feature_count=feats, block=m)


def grad_plaintext(
    ctx: ckks.CkksContext, grad_out: np.ndarray, lr: float, block: int
) -> ckks.Plaintext:
    """Class-interleaved lr * dJ/da_out, shared by every feature's product."""
    n, classes = grad_out.shape
    buf = np.zeros(block * classes)
    for k in range(classes):
        buf[block * k : block * k + n] = lr * grad_out[:, k]
    return ctx.encode(buf, level=0)


def weight_column_slots(col: np.ndarray, block: int) -> np.ndarray:
    """Weight column [K] placed on slots m*k, zeros elsewhere."""
    k = len(col)
    buf = np.zeros(block * k)
    buf[::block] = col
    return buf


def extract_weight_column(values: np.ndarray, classes: int, block: int) -> np.ndarray:
    return values[: block * classes : block].copy()


# --- ciphertext-list payloads ------------------------------------------------------


def pack_ct_list(head: bytes, cts: list[ckks.Ciphertext]) -> bytes:
    import struct

    parts = [head]
    for ct in cts:
        blob = ckks.serialize_ct(ct)
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def unpack_ct_list(payload: bytes, offset: int, count: int, ctx: ckks.CkksContext):
    import struct

    from ..errors import SerializationError

    cts = []
    for _ in range(count):
        if offset + 4 > len(payload):
            raise SerializationError("ciphertext list truncated")
        (length,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        if offset + length > len(payload):
            raise SerializationError("ciphertext blob truncated")
        cts.append(ckks.deserialize_ct(payload[offset : offset + length], ctx))
        offset += length
    if offset != len(payload):
        raise SerializationError("trailing bytes after ciphertext list")
    return cts
