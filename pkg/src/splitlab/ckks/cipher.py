"""Ciphertext and plaintext types plus every homomorphic operation.

Both types keep their RNS stacks in NTT (evaluation) domain; row j of a
level-l element is the residue mod ``prime_chain[active_indices(l)[j]]``.
The protocol needs only: ct+-ct, ct+-pt, ct*pt with rescale, level drops,
slot rotation, and slot sums. There is no ct*ct and no relinearization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    CapacityError,
    ContextError,
    DepthError,
    LevelError,
    RotationKeyError,
    ScaleError,
)
from . import kernels
from .encoder import SlotEncoder
from .keys import PublicKey, RotationKeySet, SecretKey, n_digits
from .params import KS_DIGIT_BITS
from .ring import RingContext

SCALE_RTOL = 1e-9


@dataclass
class Plaintext:
    ring: RingContext
    stack: np.ndarray  # [k, N], NTT domain
    level: int
    scale: float


@dataclass
class Ciphertext:
    ring: RingContext
    c0: np.ndarray  # [k, N], NTT domain
    c1: np.ndarray
    level: int
    scale: float

    @property
    def num_components(self) -> int:
        return self.c0.shape[0]

    def copy(self) -> "Ciphertext":
        return Ciphertext(self.ring, self.c0.copy(), self.c1.copy(), self.level, self.scale)


# --- encode / decode -----------------------------------------------------------


def encode(ring: RingContext, encoder: SlotEncoder, values, level: int, scale: float) -> Plaintext:
    active = ring.params.active_indices(level)
    coeffs = encoder.encode_coeffs(np.asarray(values, dtype=np.float64), scale)
    stack = ring.rns_from_coeffs(coeffs, active)
    ring.ntt(stack, active)
    return Plaintext(ring=ring, stack=stack, level=level, scale=float(scale))


def encode_constant(ring: RingContext, value: float, level: int, scale: float) -> Plaintext:
    """Plaintext with ``value`` in every slot: a constant polynomial, no FFT."""
    active = ring.params.active_indices(level)
    c = int(round(value * scale))
    stack = np.empty((len(active), ring.n), dtype=np.uint64)
    for row, i in enumerate(active):
        stack[row, :] = c % ring.moduli[i]
    return Plaintext(ring=ring, stack=stack, level=level, scale=float(scale))


def decode(encoder: SlotEncoder, coeffs: np.ndarray, scale: float, count: int | None = None):
    return encoder.decode_coeffs(coeffs, scale, count)


# --- encrypt / decrypt ---------------------------------------------------------


def encrypt(pk: PublicKey, pt: Plaintext, rng: np.random.Generator | None = None) -> Ciphertext:
    ring = pk.ring
    if pt.ring is not ring:
        raise ContextError("plaintext belongs to a different context")
    rng = rng if rng is not None else pk.rng
    params = ring.params
    active = params.active_indices(pt.level)
    u = ring.rns_from_small(ring.sample_ternary_coeffs(rng, params.secret_weight), active)
    ring.ntt(u, active)
    e0 = ring.rns_from_small(ring.sample_gauss_coeffs(rng), active)
    ring.ntt(e0, active)
    e1 = ring.rns_from_small(ring.sample_gauss_coeffs(rng), active)
    ring.ntt(e1, active)
    b = pk.b[active]
    a = pk.a[active]
    c0 = ring.add(ring.add(ring.mul(u, b, active), e0, active), pt.stack, active)
    c1 = ring.add(ring.mul(u, a, active), e1, active)
    return Ciphertext(ring=ring, c0=c0, c1=c1, level=pt.level, scale=pt.scale)


def decrypt_coeffs(sk: SecretKey, ct: Ciphertext) -> np.ndarray:
    """Raw signed coefficients of m + noise, as float64."""
    ring = sk.ring
    if ct.ring is not ring:
        raise ContextError("ciphertext belongs to a different context")
    active = ring.params.active_indices(ct.level)
    s = sk.s_ntt[active]
    m = ring.add(ct.c0, ring.mul(ct.c1, s, active), active)
    ring.intt(m, active)
    return ring.crt_to_coeffs(m, active).astype(np.float64)


def decrypt(sk: SecretKey, ct: Ciphertext, encoder: SlotEncoder, count: int | None = None) -> np.ndarray:
    """Decrypt straight to real slot values (wrong keys decrypt to garbage)."""
    return encoder.decode_coeffs(decrypt_coeffs(sk, ct), ct.scale, count)


# --- linear operations ----------------------------------------------------------


def _check_pair(a: Ciphertext, b: Ciphertext | Plaintext) -> None:
    if a.ring is not b.ring:
        raise ContextError("operands from different contexts")
    if a.level != b.level:
        raise LevelError(f"level mismatch: {a.level} vs {b.level} (mod-switch first)")
    ref = max(abs(a.scale), abs(b.scale), 1.0)
    if abs(a.scale - b.scale) > SCALE_RTOL * ref:
        raise ScaleError(f"scale mismatch: {a.scale} vs {b.scale}")


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a, b)
    idx = a.ring.params.active_indices(a.level)
    return Ciphertext(a.ring, a.ring.add(a.c0, b.c0, idx), a.ring.add(a.c1, b.c1, idx), a.level, a.scale)


def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a, b)
    idx = a.ring.params.active_indices(a.level)
    return Ciphertext(a.ring, a.ring.sub(a.c0, b.c0, idx), a.ring.sub(a.c1, b.c1, idx), a.level, a.scale)


def add_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    _check_pair(ct, pt)
    idx = ct.ring.params.active_indices(ct.level)
    return Ciphertext(ct.ring, ct.ring.add(ct.c0, pt.stack, idx), ct.c1.copy(), ct.level, ct.scale)


def sub_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    _check_pair(ct, pt)
    idx = ct.ring.params.active_indices(ct.level)
    return Ciphertext(ct.ring, ct.ring.sub(ct.c0, pt.stack, idx), ct.c1.copy(), ct.level, ct.scale)


def mul_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Slotwise product without rescale; scale multiplies."""
    if ct.ring is not pt.ring:
        raise ContextError("operands from different contexts")
    if ct.level != pt.level:
        raise LevelError(f"level mismatch: {ct.level} vs {pt.level}")
    idx = ct.ring.params.active_indices(ct.level)
    return Ciphertext(
        ct.ring,
        ct.ring.mul(ct.c0, pt.stack, idx),
        ct.ring.mul(ct.c1, pt.stack, idx),
        ct.level,
        ct.scale * pt.scale,
    )


def mul_const(ct: Ciphertext, value: float, scale: float) -> Ciphertext:
    """ct times a constant plaintext (value in every slot), without rescale.

    Identical to mul_plain(ct, encode_constant(value, ...)), but skips the
    slot encoding: the canonical embedding of a constant is the constant
    polynomial, a per-prime scalar in NTT domain.
    """
    ring = ct.ring
    active = ring.params.active_indices(ct.level)
    c = int(round(value * scale))
    scalars = [c % ring.moduli[i] for i in active]
    return Ciphertext(
        ring,
        ring.mul_scalar_rows(ct.c0, scalars, active),
        ring.mul_scalar_rows(ct.c1, scalars, active),
        ct.level,
        ct.scale * scale,
    )


def rescale(ct: Ciphertext) -> Ciphertext:
    """Divide by the rightmost remaining middle prime; level rises by one."""
    ring = ct.ring
    params = ring.params
    if not params.can_multiply(ct.level):
        raise DepthError(f"prime chain exhausted at level {ct.level}")
    pos = params.rescale_prime_index(ct.level)
    q = params.prime_chain[pos]
    active = params.active_indices(ct.level)
    drop_row = active.index(pos)
    new_active = params.active_indices(ct.level + 1)
    keep_rows = [active.index(i) for i in new_active]
    q_inv = ring.inv_scalars(q, new_active)

    def _strip(c: np.ndarray) -> np.ndarray:
        last = c[drop_row].copy()
        ring.ops[pos].inv(last)
        lifted = ring.lift_residues(last, q, new_active)
        ring.ntt(lifted, new_active)
        kept = c[keep_rows]
        diff = ring.sub(kept, lifted, new_active)
        return ring.mul_scalar_rows(diff, q_inv, new_active)

    return Ciphertext(ring, _strip(ct.c0), _strip(ct.c1), ct.level + 1, ct.scale / q)


def mul_plain_rescale(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """ct * pt followed by one rescale; result level = ct.level + 1."""
    return rescale(mul_plain(ct, pt))


def mod_switch(ct: Ciphertext, target_level: int) -> Ciphertext:
    """Drop RNS components down to ``target_level``; scale and value unchanged."""
    ring = ct.ring
    params = ring.params
    if target_level < ct.level:
        raise LevelError(f"cannot mod-switch up: {ct.level} -> {target_level}")
    if target_level > params.max_level:
        raise LevelError(f"target level {target_level} beyond the prime chain")
    if target_level == ct.level:
        return ct.copy()
    active = params.active_indices(ct.level)
    keep = [active.index(i) for i in params.active_indices(target_level)]
    return Ciphertext(ring, ct.c0[keep].copy(), ct.c1[keep].copy(), target_level, ct.scale)


# --- rotations -------------------------------------------------------------------


def _key_switch(ring: RingContext, d_ntt: np.ndarray, key, active: list[int]):
    """Switch ``d_ntt`` (NTT domain, rows=active) from the key's source secret
    to the canonical secret. Returns (u0, u1) over the active rows."""
    params = ring.params
    d = d_ntt.copy()
    ring.intt(d, active)
    acc_idx = active + [ring.ks_idx]
    acc_rows = len(acc_idx)
    acc0 = np.zeros((acc_rows, ring.n), dtype=np.uint64)
    acc1 = np.zeros((acc_rows, ring.n), dtype=np.uint64)
    mask = np.uint64((1 << KS_DIGIT_BITS) - 1)
    dig_row = np.empty(ring.n, dtype=np.uint64)
    # ksk rows are indexed by chain position; the accumulator row r maps to
    # chain/ks position acc_idx[r]
    for di, (pos, t) in enumerate(key.digit_src):
        if pos not in active:
            continue
        row = active.index(pos)
        shift = np.uint64(KS_DIGIT_BITS * t)
        for r, mi in enumerate(acc_idx):
            p = np.uint64(ring.moduli[mi])
            kernels.extract_digit(dig_row, d[row], shift, mask, p)
            ring.ops[mi].fwd(dig_row)
            kernels.addmul2_vec(acc0[r], acc1[r], dig_row, key.b[di, mi], key.a[di, mi], p)
    # mod-down by the extension prime
    big_p = params.ks_prime
    p_inv = ring.inv_scalars(big_p, active)

    def _down(acc: np.ndarray) -> np.ndarray:
        last = acc[-1].copy()
        ring.ops[ring.ks_idx].inv(last)
        lifted = ring.lift_residues(last, big_p, active)
        ring.ntt(lifted, active)
        diff = ring.sub(acc[:-1], lifted, active)
        return ring.mul_scalar_rows(diff, p_inv, active)

    return _down(acc0), _down(acc1)


def _apply_galois(ct: Ciphertext, key) -> Ciphertext:
    ring = ct.ring
    active = ring.params.active_indices(ct.level)
    perm = ring.auto_perm(key.galois)
    c0p = np.ascontiguousarray(ct.c0[:, perm])
    c1p = np.ascontiguousarray(ct.c1[:, perm])
    u0, u1 = _key_switch(ring, c1p, key, active)
    return Ciphertext(ring, ring.add(c0p, u0, active), u1, ct.level, ct.scale)


def rotate(ct: Ciphertext, steps: int, rotation_keys: RotationKeySet) -> Ciphertext:
    """Cyclically shift slots left by ``steps`` (within the N/2 slot vector)."""
    if ct.ring is not rotation_keys.ring:
        raise ContextError("rotation keys from a different context")
    slots = ct.ring.params.slots
    steps %= slots
    if steps == 0:
        return ct.copy()
    out = ct
    bit = 1
    while steps:
        if steps & 1:
            key = rotation_keys.keys.get(bit)
            if key is None:
                raise RotationKeyError(f"no rotation key for step {bit}")
            out = _apply_galois(out, key)
        steps >>= 1
        bit <<= 1
    return out


def slot_sum(ct: Ciphertext, n_slots: int, rotation_keys: RotationKeySet) -> Ciphertext:
    """Slot 0 of the result holds sum(slot_i, i < n_slots).

    Realized as log-many rotate-and-add rounds over the next power of two;
    slots beyond n_slots must be zero for the sum to be exact (they are, for
    freshly packed vectors). Other result slots hold partial sums.
    """
    params = ct.ring.params
    if not 1 <= n_slots <= params.slots:
        raise CapacityError(f"n_slots {n_slots} outside [1, {params.slots}]")
    span = 1 << (n_slots - 1).bit_length()
    out = ct
    step = 1
    while step < span:
        out = add(out, rotate(out, step, rotation_keys))
        step <<= 1
    return out
