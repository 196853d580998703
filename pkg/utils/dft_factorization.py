"""Sparse radix-2^k factorization of the slot DFT.

Matrices are stored by generalized diagonals: ``diags[s][j] == M[j, (j + s) mod n]``.
The DFT used throughout is ``F·R`` where ``F[j, l] = exp(-2πi·jl/n)`` and ``R`` is the
bit-reversal permutation; its inverse ``R·F⁻¹`` is the IDFT. ``F·R`` is the product of the
radix-2 decimation-in-time stages ``S_log n ... S_1``; merging ``k`` consecutive stages
gives one iteration with ``2^(k+1) - 1`` diagonals at offsets that are multiples of its
stride.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from utils.errors import ConfigurationError

DftDirection = Literal["dft", "idft"]
Diagonals = dict[int, np.ndarray]


def _log2(n: int) -> int:
    if n < 2 or n & (n - 1):
        raise ConfigurationError(f"Slot count must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def butterfly_stage(n: int, t: int) -> Diagonals:
    """Radix-2 DIT stage combining blocks of size ``2^t`` (``1 <= t <= log2 n``)."""
    m = 1 << t
    h = m >> 1
    pos = np.arange(n) % m
    top = pos < h
    w = np.exp(-2j * np.pi * (pos % h) / m)
    return {
        0: np.where(top, 1.0 + 0j, -w),
        h: np.where(top, w, 0j),
        -h: np.where(top, 0j, 1.0 + 0j),
    }


def compose(a: Diagonals, b: Diagonals) -> Diagonals:
    """Diagonals of the matrix product ``A @ B``."""
    out: Diagonals = {}
    for s, da in a.items():
        for t, db in b.items():
            term = da * np.roll(db, -s)
            key = s + t
            out[key] = out[key] + term if key in out else term
    return {key: vec for key, vec in out.items() if np.any(vec != 0)}


def conjugate_transpose(a: Diagonals) -> Diagonals:
    return {-s: np.conj(np.roll(vec, s)) for s, vec in a.items()}


def scale_diagonals(a: Diagonals, factor: complex) -> Diagonals:
    return {s: vec * factor for s, vec in a.items()}


def apply_diagonals(a: Diagonals, values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.complex128)
    for s, vec in a.items():
        out += vec * np.roll(values, -s)
    return out


def fold_modulo(a: Diagonals, n: int) -> Diagonals:
    """Merge offsets that coincide modulo ``n``; keys become ``0 <= s < n``."""
    out: Diagonals = {}
    for s, vec in a.items():
        key = s % n
        out[key] = out[key] + vec if key in out else vec.copy()
    return out


def bit_reversal_permutation(n: int) -> np.ndarray:
    bits = _log2(n)
    return np.array([int(format(i, f"0{bits}b")[::-1], 2) for i in range(n)], dtype=np.int64)


def dft_matrix(n: int) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n)


def reference_matrix(n: int, direction: DftDirection) -> np.ndarray:
    """Dense ``F·R`` (dft) or its inverse ``R·F⁻¹`` (idft)."""
    perm = np.eye(n)[bit_reversal_permutation(n)]
    forward = dft_matrix(n) @ perm
    if direction == "dft":
        return forward
    if direction == "idft":
        return perm @ np.conj(dft_matrix(n)) / n
    raise ConfigurationError(f"Unknown transform direction: {direction}")


@dataclass(frozen=True)
class MergedStage:
    """One H-(I)DFT iteration before baby-step/giant-step regrouping."""

    stride: int
    diagonals: Diagonals


def merged_stages(n: int, k: int, direction: DftDirection) -> list[MergedStage]:
    """Iterations in execution order.

    Raises:
        ConfigurationError: If ``k`` does not divide ``log2 n``.
    """
    log_n = _log2(n)
    if k < 1 or log_n % k:
        raise ConfigurationError(f"Radix exponent k={k} must divide log2(n)={log_n}")
    iterations = log_n // k
    forward: list[MergedStage] = []
    for s in range(iterations):
        merged: Diagonals = {0: np.ones(n, dtype=np.complex128)}
        for t in range(k * s + 1, k * s + k + 1):
            merged = compose(butterfly_stage(n, t), merged)
        forward.append(MergedStage(stride=1 << (k * s), diagonals=merged))
    if direction == "dft":
        return forward
    if direction == "idft":
        factor = 1.0 / (1 << k)
        return [
            MergedStage(stage.stride, scale_diagonals(conjugate_transpose(stage.diagonals), factor))
            for stage in reversed(forward)
        ]
    raise ConfigurationError(f"Unknown transform direction: {direction}")


def apply_reference(values: np.ndarray, k: int, direction: DftDirection) -> np.ndarray:
    """Unencrypted stage-by-stage transform of a slot vector."""
    out = np.asarray(values, dtype=np.complex128)
    for stage in merged_stages(out.shape[0], k, direction):
        out = apply_diagonals(stage.diagonals, out)
    return out


__all__ = [
    "DftDirection",
    "Diagonals",
    "MergedStage",
    "apply_diagonals",
    "apply_reference",
    "bit_reversal_permutation",
    "butterfly_stage",
    "compose",
    "conjugate_transpose",
    "dft_matrix",
    "fold_modulo",
    "merged_stages",
    "reference_matrix",
    "scale_diagonals",
]
