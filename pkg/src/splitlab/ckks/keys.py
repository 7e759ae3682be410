"""Key material: secret/public keys and Galois key-switching keys.

Key switching is hybrid: residues of the switched polynomial are split into
base-2**22 digits, and each digit has a switching key over the full chain
plus one extension prime P (``ks_prime``). The key for digit t of chain
position i encrypts P * B^t * tau(s) embedded at position i only, which is
level independent, so one key set serves every level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from .params import CkksParams, KS_DIGIT_BITS
from .ring import RingContext


def n_digits(q: int) -> int:
    return -(-q.bit_length() // KS_DIGIT_BITS)


@dataclass
class SecretKey:
    ring: RingContext
    s_ntt: np.ndarray  # [chain+1, N] over every modulus incl. ks prime
    seed: int


@dataclass
class PublicKey:
    ring: RingContext
    b: np.ndarray  # [chain, N], NTT domain
    a: np.ndarray
    rng: np.random.Generator = field(repr=False, default=None)


@dataclass
class KSwitchKey:
    step: int
    galois: int
    # digit_src[d] = (chain position, digit index within that residue)
    digit_src: list[tuple[int, int]]
    b: np.ndarray  # [digits, chain+1, N]
    a: np.ndarray


@dataclass
class RotationKeySet:
    ring: RingContext
    keys: dict[int, KSwitchKey]

    @property
    def steps(self) -> list[int]:
        return sorted(self.keys)


def _make_kswitch_key(
    ring: RingContext,
    s_all: np.ndarray,
    target_s: np.ndarray,
    step: int,
    galois: int,
    rng: np.random.Generator,
) -> KSwitchKey:
    """Switching key from ``target_s`` back to ``s_all`` (both NTT stacks)."""
    params = ring.params
    all_idx = list(range(len(ring.moduli)))
    chain_len = len(params.prime_chain)
    big_p = params.ks_prime
    digit_src: list[tuple[int, int]] = []
    for pos, q in enumerate(params.prime_chain):
        for t in range(n_digits(q)):
            digit_src.append((pos, t))
    nd = len(digit_src)
    b = np.empty((nd, chain_len + 1, ring.n), dtype=np.uint64)
    a = np.empty_like(b)
    for d, (pos, t) in enumerate(digit_src):
        a_d = ring.sample_uniform(rng, all_idx)
        e = ring.rns_from_coeffs(ring.sample_gauss_coeffs(rng), all_idx)
        ring.ntt(e, all_idx)
        b_d = ring.add(ring.neg(ring.mul(a_d, s_all, all_idx), all_idx), e, all_idx)
        # message P * B^t * tau(s) lives only in the row of its own prime
        q = params.prime_chain[pos]
        factor = (big_p % q) * pow(2, KS_DIGIT_BITS * t, q) % q
        msg = np.empty(ring.n, dtype=np.uint64)
        from . import kernels

        kernels.mul_scalar(msg, target_s[pos], np.uint64(factor), np.uint64(q))
        b_d[pos] = kernels.add_vec(b_d[pos], msg, np.uint64(q))
        b[d] = b_d
        a[d] = a_d
    return KSwitchKey(step=step, galois=galois, digit_src=digit_src, b=b, a=a)


def keygen(
    params: CkksParams, rng_seed: int, ring: RingContext | None = None
) -> tuple[SecretKey, PublicKey, RotationKeySet]:
    """Deterministic key generation for a 64-bit seed.

    The rotation key set covers exactly the power-of-two steps
    {2**k : 0 <= k < log2(N/2)}.
    """
    if ring is None:
        ring = RingContext(params)
    ss = np.random.SeedSequence(rng_seed)
    rng_sk, rng_pk, rng_rot, rng_enc = [np.random.default_rng(c) for c in ss.spawn(4)]

    all_idx = list(range(len(ring.moduli)))
    chain_idx = list(range(len(params.prime_chain)))

    s_coeffs = ring.sample_ternary_coeffs(rng_sk, params.secret_weight)
    s_all = ring.rns_from_coeffs(s_coeffs, all_idx)
    ring.ntt(s_all, all_idx)
    sk = SecretKey(ring=ring, s_ntt=s_all, seed=rng_seed)

    a = ring.sample_uniform(rng_pk, chain_idx)
    e = ring.rns_from_coeffs(ring.sample_gauss_coeffs(rng_pk), chain_idx)
    ring.ntt(e, chain_idx)
    s_chain = s_all[: len(chain_idx)]
    b = ring.add(ring.neg(ring.mul(a, s_chain, chain_idx), chain_idx), e, chain_idx)
    pk = PublicKey(ring=ring, b=b, a=a, rng=rng_enc)

    two_n = 2 * ring.n
    keys: dict[int, KSwitchKey] = {}
    k_max = (params.slots).bit_length() - 1  # steps 2^0 .. 2^(k_max-1)
    for k in range(k_max):
        step = 1 << k
        galois = pow(5, step, two_n)
        perm = ring.auto_perm(galois)
        tau_s = s_all[:, perm].copy()
        keys[step] = _make_kswitch_key(ring, s_all, tau_s, step, galois, rng_rot)
    rot = RotationKeySet(ring=ring, keys=keys)
    return sk, pk, rot
