import numpy as np
import pytest

from splitlab import ckks
from splitlab.ckks.serialize import CT_MAGIC, SK_MAGIC
from splitlab.errors import SerializationError


def test_ciphertext_roundtrip_bit_exact(toy_ctx, rng):
    ct = toy_ctx.encrypt(rng.uniform(-5, 5, 16))
    back = ckks.deserialize_ct(ckks.serialize_ct(ct), toy_ctx)
    assert np.array_equal(ct.c0, back.c0)
    assert np.array_equal(ct.c1, back.c1)
    assert back.level == ct.level and back.scale == ct.scale


def test_level1_roundtrip(toy_ctx):
    ct = ckks.mul_plain_rescale(toy_ctx.encrypt([2.0]), toy_ctx.encode([3.0]))
    back = ckks.deserialize_ct(ckks.serialize_ct(ct), toy_ctx)
    assert back.level == 1
    assert abs(toy_ctx.decrypt(back, 1)[0] - 6.0) < 0.1


def test_fresh_s1_ciphertext_payload_size(s1_ctx):
    blob = ckks.serialize_ct(s1_ctx.encrypt(np.zeros(4)))
    header = len(CT_MAGIC) + 2 + 2 + 8 + 2
    assert len(blob) - header == 2 * 8192 * 5 * 8 == 655360
    assert len(blob) == ckks.ct_byte_size(s1_ctx.params, level=0)


def test_bad_magic_rejected(toy_ctx):
    blob = bytearray(ckks.serialize_ct(toy_ctx.encrypt([1.0])))
    blob[:4] = b"XXXX"
    with pytest.raises(SerializationError):
        ckks.deserialize_ct(bytes(blob), toy_ctx)


def test_truncated_ciphertext_rejected(toy_ctx):
    blob = ckks.serialize_ct(toy_ctx.encrypt([1.0]))
    with pytest.raises(SerializationError):
        ckks.deserialize_ct(blob[:-8], toy_ctx)
    with pytest.raises(SerializationError):
        ckks.deserialize_ct(blob + b"\x00", toy_ctx)


def test_version_mismatch_rejected(toy_ctx):
    blob = bytearray(ckks.serialize_ct(toy_ctx.encrypt([1.0])))
    blob[4] = 99
    with pytest.raises(SerializationError):
        ckks.deserialize_ct(bytes(blob), toy_ctx)


def test_public_context_carries_no_secret_key(toy_ctx):
    blob = ckks.serialize_public_context(toy_ctx)
    assert SK_MAGIC not in blob
    sk_blob = ckks.serialize_secret_key(toy_ctx.sk)
    assert sk_blob.startswith(SK_MAGIC)


def test_public_context_roundtrip_and_cross_use(toy_ctx, rng):
    blob = ckks.serialize_public_context(toy_ctx)
    remote = ckks.deserialize_public_context(blob)
    assert remote.sk is None
    assert remote.params.prime_chain == toy_ctx.params.prime_chain
    remote.seed_encryption(np.random.default_rng(9))
    v = rng.uniform(-5, 5, toy_ctx.params.slots)
    ct = ckks.encrypt(remote.pk, remote.encode(v))
    moved = ckks.deserialize_ct(ckks.serialize_ct(ct), toy_ctx)
    assert np.abs(toy_ctx.decrypt(moved) - v).max() < 0.05
    # rotations work under the deserialized key set
    rot = ckks.rotate(ct, 1, remote.rotation_keys)
    moved = ckks.deserialize_ct(ckks.serialize_ct(rot), toy_ctx)
    assert np.abs(toy_ctx.decrypt(moved) - np.roll(v, -1)).max() < 0.1


def test_truncated_context_rejected(toy_ctx):
    blob = ckks.serialize_public_context(toy_ctx)
    with pytest.raises(SerializationError):
        ckks.deserialize_public_context(blob[: len(blob) // 2])
