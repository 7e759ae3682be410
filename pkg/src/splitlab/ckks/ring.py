"""RNS polynomial ring context: per-prime NTT tables, automorphisms, CRT.

Ring elements are uint64 stacks of shape [k, N]; row j holds the residues
mod ``moduli[mod_idx[j]]``. Evaluation (NTT) domain is the working
representation for ciphertexts, plaintexts, and keys.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .params import CkksParams


class RingContext:
    """All per-parameter precomputation shared by keys and ciphertexts."""

    def __init__(self, params: CkksParams):
        self.params = params
        self.n = params.ring_degree
        # chain primes first, key-switching prime last
        self.moduli: list[int] = list(params.prime_chain) + [params.ks_prime]
        self.ks_idx = len(params.prime_chain)
        self.ops = [kernels.NttTables(self.n, p) for p in self.moduli]
        self._eval_exp = self._derive_eval_exponents()
        pos = np.full(2 * self.n, -1, dtype=np.int64)
        pos[self._eval_exp] = np.arange(self.n)
        self._eval_pos = pos
        self._auto_cache: dict[int, np.ndarray] = {}
        self._crt_cache: dict[tuple[int, ...], tuple] = {}
        self._inv_cache: dict[tuple[int, tuple[int, ...]], list[int]] = {}

    # --- NTT layout -------------------------------------------------------

    def _derive_eval_exponents(self) -> np.ndarray:
        """Exponent e(i) with NTT output slot i = f(psi^e(i)).

        The exponent pattern depends only on the butterfly network, not on
        the modulus, so it is derived once from the first prime by
        transforming the monomial X.
        """
        op = self.ops[0]
        mono = np.zeros(self.n, dtype=np.uint64)
        mono[1] = 1
        op.fwd(mono)
        lookup = {}
        v = 1
        for j in range(2 * self.n):
            lookup[v] = j
            v = v * op.psi % op.p
        return np.array([lookup[int(x)] for x in mono], dtype=np.int64)

    def auto_perm(self, galois: int) -> np.ndarray:
        """NTT-domain gather indices realizing f(X) -> f(X^galois)."""
        g = galois % (2 * self.n)
        perm = self._auto_cache.get(g)
        if perm is None:
            src_exp = (g * self._eval_exp) % (2 * self.n)
            perm = self._eval_pos[src_exp].astype(np.int64)
            assert (perm >= 0).all()
            self._auto_cache[g] = perm
        return perm

    # --- stack arithmetic ---------------------------------------------------

    def mods(self, mod_idx: list[int]) -> np.ndarray:
        return np.array([self.moduli[i] for i in mod_idx], dtype=np.uint64)[:, None]

    def ntt(self, stack: np.ndarray, mod_idx: list[int]) -> None:
        for row, i in enumerate(mod_idx):
            self.ops[i].fwd(stack[row])

    def intt(self, stack: np.ndarray, mod_idx: list[int]) -> None:
        for row, i in enumerate(mod_idx):
            self.ops[i].inv(stack[row])

    def mul(self, a: np.ndarray, b: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        out = np.empty_like(a)
        for row, i in enumerate(mod_idx):
            kernels.mul_vec(out[row], a[row], b[row], np.uint64(self.moduli[i]))
        return out

    def mul_scalar_rows(self, a: np.ndarray, scalars: list[int], mod_idx: list[int]) -> np.ndarray:
        out = np.empty_like(a)
        for row, i in enumerate(mod_idx):
            kernels.mul_scalar(out[row], a[row], np.uint64(scalars[row]), np.uint64(self.moduli[i]))
        return out

    def add(self, a: np.ndarray, b: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        return kernels.add_vec(a, b, self.mods(mod_idx))

    def sub(self, a: np.ndarray, b: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        return kernels.sub_vec(a, b, self.mods(mod_idx))

    def neg(self, a: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        return kernels.neg_vec(a, self.mods(mod_idx))

    # --- representation changes ---------------------------------------------

    def rns_from_coeffs(self, coeffs: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        """Signed int64 coefficients -> reduced residue stack (coeff domain)."""
        stack = np.empty((len(mod_idx), self.n), dtype=np.uint64)
        for row, i in enumerate(mod_idx):
            kernels.reduce_signed(stack[row], coeffs, np.uint64(self.moduli[i]))
        return stack

    def rns_from_small(self, coeffs: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        """Like rns_from_coeffs for |coeff| < min(moduli) (error/ternary polys)."""
        stack = np.empty((len(mod_idx), self.n), dtype=np.uint64)
        for row, i in enumerate(mod_idx):
            kernels.small_signed_to_res(stack[row], coeffs, np.uint64(self.moduli[i]))
        return stack

    def lift_residues(self, res: np.ndarray, src_modulus: int, mod_idx: list[int]) -> np.ndarray:
        """Centered lift of residues mod ``src_modulus`` into other moduli."""
        signed = res.astype(np.int64)
        signed[signed > src_modulus // 2] -= src_modulus
        return self.rns_from_coeffs(signed, mod_idx)

    def inv_scalars(self, value: int, mod_idx: list[int]) -> list[int]:
        """value^-1 mod each selected modulus, cached."""
        key = (value, tuple(mod_idx))
        cached = self._inv_cache.get(key)
        if cached is None:
            cached = [pow(value, self.moduli[i] - 2, self.moduli[i]) for i in mod_idx]
            self._inv_cache[key] = cached
        return cached

    def crt_to_coeffs(self, stack: np.ndarray, mod_idx: list[int]) -> np.ndarray:
        """Centered CRT reconstruction as int64 (valid while |coeff| < 2**62).

        Uses the mod-2**64 trick: m = sum_i c_i*Qhat_i - k*Q with
        c_i = x_i * Qhat_i^-1 mod q_i and k recovered in float, everything
        reduced mod 2**64 so numpy u64 arithmetic wraps correctly.
        """
        key = tuple(mod_idx)
        cached = self._crt_cache.get(key)
        if cached is None:
            qs = [self.moduli[i] for i in mod_idx]
            big_q = 1
            for q in qs:
                big_q *= q
            qhat = [big_q // q for q in qs]
            qhat_inv = [pow(h % q, q - 2, q) for h, q in zip(qhat, qs)]
            qhat64 = np.array([h % (1 << 64) for h in qhat], dtype=np.uint64)
            q64 = np.uint64(big_q % (1 << 64))
            cached = (
                np.array(qs, dtype=np.uint64),
                np.array(qhat_inv, dtype=np.uint64),
                qhat64,
                q64,
            )
            self._crt_cache[key] = cached
        qs, qhat_inv, qhat64, q64 = cached
        c = np.empty_like(stack)
        for row in range(len(mod_idx)):
            kernels.mul_scalar(c[row], stack[row], qhat_inv[row], qs[row])
        frac = (c.astype(np.float64) / qs.astype(np.float64)[:, None]).sum(axis=0)
        k = np.round(frac).astype(np.uint64)
        acc = (c * qhat64[:, None]).sum(axis=0, dtype=np.uint64)
        acc -= k * q64
        return acc.view(np.int64)

    # --- sampling -------------------------------------------------------------

    def sample_uniform(self, rng: np.random.Generator, mod_idx: list[int]) -> np.ndarray:
        stack = np.empty((len(mod_idx), self.n), dtype=np.uint64)
        for row, i in enumerate(mod_idx):
            stack[row] = rng.integers(0, self.moduli[i], self.n, dtype=np.uint64)
        return stack

    def sample_gauss_coeffs(self, rng: np.random.Generator) -> np.ndarray:
        return np.round(rng.normal(0.0, self.params.error_std, self.n)).astype(np.int64)

    def sample_ternary_coeffs(self, rng: np.random.Generator, weight: int) -> np.ndarray:
        coeffs = np.zeros(self.n, dtype=np.int64)
        w = min(weight, self.n)
        idx = rng.choice(self.n, size=w, replace=False, shuffle=False)
        coeffs[idx] = rng.integers(0, 2, w) * 2 - 1
        return coeffs
