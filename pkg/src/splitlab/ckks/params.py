"""CKKS parameter profiles and NTT-friendly prime generation.

A parameter set is a ring degree N (power of two), an ordered prime chain,
and a scale. Primes are p = k*2N + 1 so the negacyclic NTT of size N exists
mod every chain prime. Every modulus stays below 2**42 so modular products
fit the split-multiply kernels in ``kernels.py``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# Largest modulus the u64 split-multiply kernels accept.
MAX_MODULUS_BITS = 42

# Noise profile defaults. Dense ternary secrets with sigma=3.2 put the fresh
# per-slot error near 1e-2 at scale 2**21, which is unusable at the precision
# this artifact has to deliver; the narrow profile below measures ~1.2e-4.
# Recorded in security_note: this is a precision profile, not a security claim.
DEFAULT_ERROR_STD = 0.7
DEFAULT_SECRET_WEIGHT = 16

# Key-switching digit width in bits. Residues are split into base-2**22
# digits, so every 21/22-bit middle prime contributes a single digit.
KS_DIGIT_BITS = 22


def _is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 2**64."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_prime(bits: int, two_n: int, avoid: set[int] = frozenset()) -> int:
    """Smallest prime >= 2**bits with p = 1 (mod two_n), not in ``avoid``."""
    if bits > MAX_MODULUS_BITS:
        raise ValueError(f"prime size {bits} bits exceeds {MAX_MODULUS_BITS}-bit kernel limit")
    p = (1 << bits) + 1
    # align to 1 mod 2N
    p += (-(p - 1)) % two_n
    while True:
        if p not in avoid and _is_prime(p):
            return p
        p += two_n


def find_ntt_prime_below(bits: int, two_n: int, avoid: set[int] = frozenset()) -> int:
    """Largest prime < 2**bits with p = 1 (mod two_n), not in ``avoid``."""
    p = (1 << bits) - 1
    p -= (p - 1) % two_n
    while p > two_n:
        if p not in avoid and _is_prime(p):
            return p
        p -= two_n
    raise ValueError(f"no NTT prime below 2**{bits} for 2N={two_n}")


def generate_prime_chain(ring_degree: int, bit_sizes: list[int]) -> tuple[int, ...]:
    """Distinct NTT-friendly primes, one per requested bit size, in order.

    Repeated bit sizes yield successive primes above the same power of two,
    so the chain is deterministic for a given (N, bit_sizes).
    """
    two_n = 2 * ring_degree
    chain: list[int] = []
    for bits in bit_sizes:
        p = find_ntt_prime(bits, two_n, avoid=set(chain))
        chain.append(p)
    return tuple(chain)


@dataclass(frozen=True)
class CkksParams:
    """Ring degree, prime chain, scale, and the sampling profile.

    The chain keeps the paper-style layout [big, mid, ..., mid, big]: both
    big primes act as range anchors and stay active at every level, while
    rescaling consumes the middle primes right to left. ``ks_prime`` is an
    extension prime used only inside key-switching keys; it never carries
    ciphertext data, so a fresh ciphertext spans exactly len(prime_chain)
    RNS components.
    """

    ring_degree: int
    prime_chain: tuple[int, ...]
    scale: int
    error_std: float = DEFAULT_ERROR_STD
    secret_weight: int = DEFAULT_SECRET_WEIGHT
    security_note: str = ""
    ks_prime: int = 0
    name: str = "custom"

    def __post_init__(self):
        from ..errors import ParameterError

        n = self.ring_degree
        if n < 8 or n & (n - 1) != 0:
            raise ParameterError(f"ring degree {n} is not a power of two >= 8")
        if self.scale <= 0:
            raise ParameterError("scale must be positive")
        if len(self.prime_chain) < 1:
            raise ParameterError("prime chain is empty")
        if len(set(self.prime_chain)) != len(self.prime_chain):
            raise ParameterError("prime chain has repeated primes")
        two_n = 2 * n
        for q in self.prime_chain:
            if q % two_n != 1 or not _is_prime(q):
                raise ParameterError(f"{q} is not a prime = 1 (mod {two_n})")
            if q.bit_length() > MAX_MODULUS_BITS:
                raise ParameterError(f"prime {q} exceeds {MAX_MODULUS_BITS} bits")
        for q in self.middle_primes:
            if not (self.scale <= q <= 2 * self.scale):
                raise ParameterError(
                    f"middle prime {q} not within one bit above scale {self.scale}"
                )
        if self.ks_prime == 0:
            ks = find_ntt_prime_below(MAX_MODULUS_BITS, two_n, avoid=set(self.prime_chain))
            object.__setattr__(self, "ks_prime", ks)
        elif self.ks_prime % two_n != 1 or not _is_prime(self.ks_prime):
            raise ParameterError("ks_prime is not NTT friendly")

    # --- level geometry -------------------------------------------------

    @property
    def slots(self) -> int:
        return self.ring_degree // 2

    @property
    def chain_length(self) -> int:
        return len(self.prime_chain)

    @property
    def middle_primes(self) -> tuple[int, ...]:
        return self.prime_chain[1:-1]

    @property
    def max_level(self) -> int:
        """Deepest level a ciphertext can reach and still decrypt."""
        return len(self.prime_chain) - 1

    def active_indices(self, level: int) -> list[int]:
        """Chain positions still carrying data at ``level``.

        Level 0 is fresh (every prime active). Each rescale retires the
        rightmost remaining middle prime; the two anchors stay active.
        """
        from ..errors import LevelError

        length = len(self.prime_chain)
        if level < 0 or level > self.max_level:
            raise LevelError(f"level {level} outside chain of length {length}")
        if length == 1:
            return [0]
        head = list(range(length - 1 - level))
        return head + [length - 1]

    def rescale_prime_index(self, level: int) -> int:
        """Chain position consumed when rescaling a level-``level`` ciphertext."""
        return len(self.prime_chain) - 2 - level

    def can_multiply(self, level: int) -> bool:
        return level + 1 < len(self.prime_chain) - 1


def make_params(name: str) -> CkksParams:
    """Named parameter profiles.

    s1/s2 follow the published (N, bit-size, scale) settings; s1mini keeps
    the same chain shape on a smaller ring for desk-scale protocol runs;
    toy is for fast unit and smoke tests.
    """
    profiles = {
        "s1": (8192, [40, 21, 21, 21, 40], 1 << 21),
        "s2": (16384, [40, 21, 21, 21, 40], 1 << 21),
        "s1mini": (1024, [40, 21, 21, 21, 40], 1 << 21),
        "toy": (64, [30, 14, 14, 14, 30], 1 << 14),
    }
    key = name.lower()
    if key not in profiles:
        from ..errors import ParameterError

        raise ParameterError(f"unknown HE parameter set {name!r} (have {sorted(profiles)})")
    n, bits, scale = profiles[key]
    chain = generate_prime_chain(n, bits)
    note = (
        f"profile {key}: N={n}, chain bits {bits}, scale 2^{int(math.log2(scale))}; "
        f"sparse ternary secret (weight {DEFAULT_SECRET_WEIGHT}), error std "
        f"{DEFAULT_ERROR_STD}; precision-first research profile, no security level claimed"
    )
    return CkksParams(
        ring_degree=n,
        prime_chain=chain,
        scale=scale,
        security_note=note,
        name=key,
    )
