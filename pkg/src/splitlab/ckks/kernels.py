"""Numba kernels for negacyclic NTT and modular vector arithmetic.

Moduli stay below 2**42. Hot loops avoid integer division: a*b mod p uses a
float64 quotient estimate (exact to +-1 for operands < 2**42, fixed up
branchlessly), so a modular multiply is one u64 multiply, one f64 multiply,
and a couple of adds. Twiddle tables carry a float companion (w/p).
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64, float64, int64

_NEG = np.int64(-1)


@njit(uint64(uint64, uint64, float64, uint64), cache=True, inline="always")
def mulmod_pre(a, w, wf, p):
    """a*w mod p with precomputed wf = w/p; requires a, w < p < 2**42."""
    q = uint64(float64(a) * wf)
    r = int64(a * w - q * p)
    r += (r >> 63) & int64(p)          # q overshot by one
    t = r - int64(p)
    return uint64(t + ((t >> 63) & int64(p)))


@njit(uint64(uint64, uint64, uint64, float64), cache=True, inline="always")
def mulmod(a, b, p, p_inv):
    """a*b mod p with p_inv = 1/p; requires a, b < p < 2**42."""
    q = uint64(float64(a) * float64(b) * p_inv)
    r = int64(a * b - q * p)
    r += (r >> 63) & int64(p)
    t = r - int64(p)
    return uint64(t + ((t >> 63) & int64(p)))


@njit(cache=True)
def ntt_inplace(a, tw, twf, p):
    """Forward negacyclic NTT; tw[i] = psi^bitrev(i), twf its float copy."""
    n = a.shape[0]
    t = n >> 1
    m = 1
    while m < n:
        for i in range(m):
            j1 = 2 * i * t
            w = tw[m + i]
            wf = twf[m + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = mulmod_pre(a[j + t], w, wf, p)
                s = u + v
                if s >= p:
                    s -= p
                a[j] = s
                d = u + p - v
                if d >= p:
                    d -= p
                a[j + t] = d
        m <<= 1
        t >>= 1


@njit(cache=True)
def intt_inplace(a, itw, itwf, n_inv, n_inv_f, p):
    """Inverse negacyclic NTT; itw[i] = psi^-bitrev(i)."""
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        j1 = 0
        for i in range(h):
            w = itw[h + i]
            wf = itwf[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                s = u + v
                if s >= p:
                    s -= p
                a[j] = s
                a[j + t] = mulmod_pre((u + p - v) % p, w, wf, p)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        a[j] = mulmod_pre(a[j], n_inv, n_inv_f, p)


@njit(cache=True)
def mul_vec(out, a, b, p):
    p_inv = 1.0 / p
    for i in range(a.shape[0]):
        out[i] = mulmod(a[i], b[i], p, p_inv)


@njit(cache=True)
def mul_scalar(out, a, s, p):
    sf = float64(s) / float64(p)
    for i in range(a.shape[0]):
        out[i] = mulmod_pre(a[i], s, sf, p)


@njit(cache=True)
def addmul_vec(acc, a, b, p):
    """acc = (acc + a*b) mod p, elementwise."""
    p_inv = 1.0 / p
    for i in range(a.shape[0]):
        v = acc[i] + mulmod(a[i], b[i], p, p_inv)
        if v >= p:
            v -= p
        acc[i] = v


@njit(cache=True)
def addmul2_vec(acc0, acc1, d, b, a, p):
    """acc0 += d*b, acc1 += d*a (mod p); loads each digit word once."""
    p_inv = 1.0 / p
    for i in range(d.shape[0]):
        di = d[i]
        v0 = acc0[i] + mulmod(di, b[i], p, p_inv)
        if v0 >= p:
            v0 -= p
        acc0[i] = v0
        v1 = acc1[i] + mulmod(di, a[i], p, p_inv)
        if v1 >= p:
            v1 -= p
        acc1[i] = v1


@njit(cache=True)
def reduce_signed(out, vals, p):
    """Centered int64 values (|v| < 2**62) -> residues in [0, p)."""
    p_inv = 1.0 / p
    ip = int64(p)
    for i in range(vals.shape[0]):
        v = vals[i]
        q = int64(float64(v) * p_inv)
        r = v - q * ip
        while r < 0:
            r += ip
        while r >= ip:
            r -= ip
        out[i] = uint64(r)


@njit(cache=True)
def extract_digit(out, res, shift, mask, p):
    """out = ((res >> shift) & mask) mod p; digit width < 2*p is assumed."""
    for i in range(res.shape[0]):
        v = (res[i] >> shift) & mask
        if v >= p:
            v -= p
        out[i] = v


@njit(cache=True)
def small_signed_to_res(out, vals, p):
    """int64 values with |v| < p -> residues (sampling fast path)."""
    ip = int64(p)
    for i in range(vals.shape[0]):
        v = vals[i]
        out[i] = uint64(v + ip) if v < 0 else uint64(v)


def add_vec(a: np.ndarray, b: np.ndarray, p: np.ndarray | int) -> np.ndarray:
    s = a + b  # < 2**43, no overflow
    return np.where(s >= p, s - p, s)


def sub_vec(a: np.ndarray, b: np.ndarray, p: np.ndarray | int) -> np.ndarray:
    s = a + p - b
    return np.where(s >= p, s - p, s)


def neg_vec(a: np.ndarray, p: np.ndarray | int) -> np.ndarray:
    s = (p - a) % p  # cold path, plain reduction is fine
    return s.astype(np.uint64)


class NttTables:
    """Per-modulus twiddle tables with float companions."""

    __slots__ = ("p", "tw", "twf", "itw", "itwf", "n_inv", "n_inv_f", "psi")

    def __init__(self, n: int, p: int):
        assert (p - 1) % (2 * n) == 0
        r = (p - 1) // (2 * n)
        psi = 0
        for g in range(2, p):
            cand = pow(g, r, p)
            if pow(cand, n, p) == p - 1:
                psi = cand
                break
        assert psi, "no primitive 2n-th root found"
        logn = n.bit_length() - 1
        rev = np.zeros(n, dtype=np.int64)
        for i in range(n):
            x, y = i, 0
            for _ in range(logn):
                y = (y << 1) | (x & 1)
                x >>= 1
            rev[i] = y
        ipsi = pow(psi, p - 2, p)
        self.p = p
        self.tw = np.array([pow(psi, int(j), p) for j in rev], dtype=np.uint64)
        self.itw = np.array([pow(ipsi, int(j), p) for j in rev], dtype=np.uint64)
        self.twf = self.tw.astype(np.float64) / p
        self.itwf = self.itw.astype(np.float64) / p
        self.n_inv = np.uint64(pow(n, p - 2, p))
        self.n_inv_f = np.float64(int(self.n_inv) / p)
        self.psi = psi

    def fwd(self, a: np.ndarray) -> None:
        ntt_inplace(a, self.tw, self.twf, np.uint64(self.p))

    def inv(self, a: np.ndarray) -> None:
        intt_inplace(a, self.itw, self.itwf, self.n_inv, self.n_inv_f, np.uint64(self.p))
