"""Canonical embedding between complex slot vectors and real polynomial coefficients.

Slot ``j`` is the evaluation at ``ξ^(5^j mod 2N)`` with ``ξ = exp(iπ/N)``, so the ring
automorphism ``X -> X^(5^r)`` shifts slots left by ``r``. With ``n < N/2`` slots the
message polynomial is sparse: only coefficients at multiples of ``N/(2n)`` are used.
Both directions run through a length-2N FFT.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from utils.errors import ConfigurationError


class SlotEncoder:
    """Float-level embedding for a fixed ring degree and slot count."""

    def __init__(self, ring_degree: int, slots: int):
        if ring_degree < 2 or ring_degree & (ring_degree - 1):
            raise ConfigurationError(f"Ring degree must be a power of two, got {ring_degree}")
        if slots < 1 or slots & (slots - 1) or slots > ring_degree // 2:
            raise ConfigurationError(
                f"Slot count must be a power of two <= N/2 = {ring_degree // 2}, got {slots}"
            )
        self.ring_degree = ring_degree
        self.slots = slots
        self.gap = ring_degree // (2 * slots)

    @cached_property
    def slot_exponents(self) -> np.ndarray:
        two_n = 2 * self.ring_degree
        exps = np.empty(self.slots, dtype=np.int64)
        e = 1
        for j in range(self.slots):
            exps[j] = e
            e = (e * 5) % two_n
        return exps

    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        """Real coefficients (length N, sparse) whose slots equal ``values``."""
        z = np.asarray(values, dtype=np.complex128)
        if z.shape != (self.slots,):
            raise ConfigurationError(f"Expected {self.slots} slot values, got shape {z.shape}")
        grid = np.zeros(2 * self.ring_degree, dtype=np.complex128)
        grid[self.slot_exponents] = z
        spectrum = np.fft.fft(grid)
        coeffs = np.zeros(self.ring_degree, dtype=np.float64)
        coeffs[:: self.gap] = spectrum[: self.ring_degree : self.gap].real / self.slots
        return coeffs

    def to_slots(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate any length-N real coefficient vector at the slot points."""
        c = np.asarray(coeffs, dtype=np.float64)
        if c.shape != (self.ring_degree,):
            raise ConfigurationError(f"Expected {self.ring_degree} coefficients, got {c.shape}")
        grid = np.zeros(2 * self.ring_degree, dtype=np.float64)
        grid[: self.ring_degree] = c
        evaluations = np.fft.ifft(grid) * (2 * self.ring_degree)
        return evaluations[self.slot_exponents]

    def scaled_integers(self, values: np.ndarray, scale: float) -> np.ndarray:
        """Round ``scale * to_coefficients(values)`` to Python ints (object array)."""
        rounded = np.rint(self.to_coefficients(values) * scale)
        return np.array([int(x) for x in rounded], dtype=object)

    def from_integers(self, coeffs: np.ndarray, scale: float) -> np.ndarray:
        """Slots of a centered integer coefficient vector divided by ``scale``."""
        as_float = np.array([float(c) for c in coeffs], dtype=np.float64)
        return self.to_slots(as_float) / scale


__all__ = ["SlotEncoder"]
