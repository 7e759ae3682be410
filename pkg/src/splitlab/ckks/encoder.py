"""Canonical-embedding encoder: real slot vectors <-> ring coefficients.

Slot j corresponds to evaluation at the primitive 2N-th root psi^(5^j); the
conjugate half is filled automatically so coefficients come out real. Both
directions run through a length-N FFT after a half-turn twist, O(N log N).
"""

from __future__ import annotations

import numpy as np

from ..errors import CapacityError, ParameterError

# Coefficients must stay well inside int64 after scaling.
_MAX_COEFF = float(1 << 61)


class SlotEncoder:
    def __init__(self, ring_degree: int):
        n = ring_degree
        self.n = n
        self.slots = n // 2
        exps = np.array([pow(5, j, 2 * n) for j in range(self.slots)], dtype=np.int64)
        self._t = (exps - 1) // 2          # odd exponent e -> FFT bin (e-1)/2
        self._t_conj = n - 1 - self._t
        k = np.arange(n)
        self._twist = np.exp(1j * np.pi * k / n)      # omega^k
        self._untwist = np.conj(self._twist)

    def encode_coeffs(self, values: np.ndarray, scale: float) -> np.ndarray:
        """Real slot values -> rounded int64 coefficient vector."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1:
            raise ParameterError("encode expects a 1-D real vector")
        if values.size > self.slots:
            raise CapacityError(f"{values.size} values exceed {self.slots} slots")
        spec = np.zeros(self.n, dtype=np.complex128)
        spec[self._t[: values.size]] = values
        spec[self._t_conj[: values.size]] = values  # conj of a real value
        y = np.fft.fft(spec) / self.n
        coeffs = (y * self._untwist).real * scale
        peak = np.abs(coeffs).max() if coeffs.size else 0.0
        if not np.isfinite(peak) or peak > _MAX_COEFF:
            raise ParameterError("encoded coefficients overflow the integer range")
        return np.round(coeffs).astype(np.int64)

    def decode_coeffs(self, coeffs: np.ndarray, scale: float, count: int | None = None) -> np.ndarray:
        """Coefficient vector (any real dtype) -> real slot values."""
        y = np.asarray(coeffs, dtype=np.float64) * self._twist
        spec = np.fft.ifft(y) * self.n
        vals = spec[self._t].real / scale
        return vals if count is None else vals[:count]
