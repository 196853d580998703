"""Negacyclic NTT kernels over a single limb.

The forward transform maps coefficients ``a`` to ``â[j] = a(ψ^(2j+1))`` in natural order:
coefficients are twisted by powers of ψ, then a decimation-in-time cyclic transform runs
over ω = ψ². The inverse runs decimation-in-frequency with ω⁻¹ and folds ``N⁻¹·ψ^(-i)``
into its final pass. The four-step variant produces bit-identical output while generating
its twisting factors from a √N-sized geometric schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from utils.errors import ConfigurationError
from utils.modular import (
    NTT_REDUCTION,
    MontgomeryReducer,
    PrimeModulus,
    ReductionStrategy,
    make_reducer,
)

Direction = Literal["forward", "inverse"]


# ============= Types =============


@dataclass(frozen=True, eq=False)
class Limb:
    """One RNS row: ``N`` residues modulo a single prime."""

    values: np.ndarray
    modulus: PrimeModulus

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.uint64)
        n = values.shape[0] if values.ndim == 1 else 0
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"Limb length must be a power of two, got shape {values.shape}")
        if values.size and int(values.max()) >= self.modulus.q:
            raise ConfigurationError(f"Limb entries must be reduced below {self.modulus.q}")
        object.__setattr__(self, "values", values)

    @property
    def degree(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Limb):
            return NotImplemented
        return self.modulus.q == other.modulus.q and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class TwistSchedule:
    """Start values and common ratios, one pair per column of the four-step layout."""

    start_values: np.ndarray
    common_ratios: np.ndarray
    modulus: int

    def __post_init__(self) -> None:
        starts = np.asarray(self.start_values, dtype=np.uint64)
        ratios = np.asarray(self.common_ratios, dtype=np.uint64)
        if starts.shape != ratios.shape or starts.ndim != 1:
            raise ConfigurationError("Twist starts and ratios must be equal-length vectors")
        object.__setattr__(self, "start_values", starts)
        object.__setattr__(self, "common_ratios", ratios)

    @classmethod
    def for_modulus(cls, modulus: PrimeModulus, inverse: bool = False) -> TwistSchedule:
        """Schedule for the N = N1·N2 four-step split: column i2 starts at ψ^i2 with ratio ψ^(2·i2)."""
        side = _square_side(modulus.ring_degree)
        q = modulus.q
        psi = modulus.root_inverse if inverse else modulus.ntt_root
        reducer = modulus.montgomery
        starts = _geometric(1, psi, side, reducer)
        ratios = [reducer.mul(s, s) for s in starts]
        return cls(
            start_values=np.array(starts, dtype=np.uint64),
            common_ratios=np.array(ratios, dtype=np.uint64),
            modulus=q,
        )

    @property
    def storage_words(self) -> int:
        return 2 * int(self.start_values.shape[0])


# ============= Table construction =============


def _geometric(start: int, ratio: int, count: int, reducer: MontgomeryReducer) -> list[int]:
    out = []
    current = start % reducer.q
    for _ in range(count):
        out.append(current)
        current = reducer.mul(current, ratio)
    return out


@lru_cache(maxsize=256)
def _reducer(q: int) -> MontgomeryReducer:
    return MontgomeryReducer(q)


@lru_cache(maxsize=64)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=512)
def _stage_twiddles(
    q: int, root: int, n: int, strategy: ReductionStrategy
) -> tuple[np.ndarray, ...]:
    """Per-stage twiddles ``w_m^j`` (j < m/2) for m = 2, 4, ..., n with ``w_m = root^(n/m)``.

    Stored prepared for ``strategy``.
    """
    reducer = _reducer(q)
    prepared = make_reducer(q, strategy)
    stages = []
    m = 2
    while m <= n:
        w_m = pow(root, n // m, q)
        stages.append(prepared.prepare(np.array(_geometric(1, w_m, m // 2, reducer), dtype=object)))
        m *= 2
    return tuple(stages)


@lru_cache(maxsize=512)
def _negacyclic_factors(
    q: int, psi: int, n: int, strategy: ReductionStrategy
) -> tuple[np.ndarray, np.ndarray]:
    """Forward twist ``ψ^i`` and inverse ``n⁻¹·ψ^(-i)``, prepared for ``strategy``."""
    reducer = _reducer(q)
    prepared = make_reducer(q, strategy)
    forward = np.array(_geometric(1, psi, n, reducer), dtype=object)
    inverse = np.array(
        _geometric(pow(n, -1, q), pow(psi, -1, q), n, reducer), dtype=object
    )
    return prepared.prepare(forward), prepared.prepare(inverse)


@lru_cache(maxsize=512)
def _inverse_powers(q: int, psi: int, n: int, strategy: ReductionStrategy) -> np.ndarray:
    powers = np.array(_geometric(1, pow(psi, -1, q), n, _reducer(q)), dtype=object)
    return make_reducer(q, strategy).prepare(powers)


# ============= Batched cores (object arrays, last axis transformed) =============


def _cyclic_forward(
    block: np.ndarray, q: int, root: int, strategy: ReductionStrategy = NTT_REDUCTION
) -> np.ndarray:
    batch, n = block.shape
    reducer = make_reducer(q, strategy)
    data = block[:, _bit_reversal(n)]
    for tw in _stage_twiddles(q, root, n, strategy):
        h = tw.shape[0]
        view = data.reshape(batch, n // (2 * h), 2 * h)
        u = view[:, :, :h]
        t = reducer.reduce_products(view[:, :, h:] * tw)
        data = np.concatenate(((u + t) % q, (u - t) % q), axis=2).reshape(batch, n)
    return data


def _cyclic_inverse_unscaled(
    block: np.ndarray, q: int, root: int, strategy: ReductionStrategy = NTT_REDUCTION
) -> np.ndarray:
    batch, n = block.shape
    reducer = make_reducer(q, strategy)
    data = block
    for tw in reversed(_stage_twiddles(q, pow(root, -1, q), n, strategy)):
        h = tw.shape[0]
        view = data.reshape(batch, n // (2 * h), 2 * h)
        u = view[:, :, :h]
        v = view[:, :, h:]
        diff = reducer.reduce_products(((u - v) % q) * tw)
        data = np.concatenate(((u + v) % q, diff), axis=2).reshape(batch, n)
    return data[:, _bit_reversal(n)]


def _negacyclic_forward(
    block: np.ndarray, q: int, psi: int, strategy: ReductionStrategy = NTT_REDUCTION
) -> np.ndarray:
    forward, _ = _negacyclic_factors(q, psi, block.shape[1], strategy)
    twisted = make_reducer(q, strategy).reduce_products(block * forward)
    return _cyclic_forward(twisted, q, psi * psi % q, strategy)


def _negacyclic_inverse(
    block: np.ndarray,
    q: int,
    psi: int,
    scaled: bool = True,
    strategy: ReductionStrategy = NTT_REDUCTION,
) -> np.ndarray:
    n = block.shape[1]
    out = _cyclic_inverse_unscaled(block, q, psi * psi % q, strategy)
    if scaled:
        _, factors = _negacyclic_factors(q, psi, n, strategy)
    else:
        factors = _inverse_powers(q, psi, n, strategy)
    return make_reducer(q, strategy).reduce_products(out * factors)


# ============= Public transforms =============


def _check_transformable(limb: Limb) -> None:
    modulus = limb.modulus
    n = limb.degree
    if n != modulus.ring_degree or (modulus.q - 1) % (2 * n) != 0:
        raise ConfigurationError(f"Modulus {modulus.q} is not NTT-friendly for N={n}")


def ntt_values(
    values: np.ndarray,
    modulus: PrimeModulus,
    direction: Direction,
    strategy: ReductionStrategy = NTT_REDUCTION,
) -> np.ndarray:
    """Transform a raw uint64 vector; ``ntt`` wraps this with validation."""
    block = values.astype(object).reshape(1, -1)
    q = modulus.q
    if direction == "forward":
        out = _negacyclic_forward(block, q, modulus.ntt_root, strategy)
    elif direction == "inverse":
        out = _negacyclic_inverse(block, q, modulus.ntt_root, strategy=strategy)
    else:
        raise ConfigurationError(f"Unknown NTT direction: {direction}")
    return out.reshape(-1).astype(np.uint64)


def ntt(limb: Limb, direction: Direction, strategy: ReductionStrategy = NTT_REDUCTION) -> Limb:
    """Negacyclic NTT (forward) or its exact inverse; both strategies give identical output."""
    _check_transformable(limb)
    return Limb(ntt_values(limb.values, limb.modulus, direction, strategy), limb.modulus)


def _square_side(n: int) -> int:
    log_n = n.bit_length() - 1
    if n < 4 or n & (n - 1) or log_n % 2:
        raise ConfigurationError(f"Four-step NTT needs N = 2^(2k), got N={n}")
    return 1 << (log_n // 2)


def expand_twist(schedule: TwistSchedule, steps: int) -> np.ndarray:
    """Expand every (start, ratio) pair geometrically.

    Returns:
        Array of shape ``(len(start_values), steps)`` whose row ``c`` holds
        ``start_c · ratio_c^j mod q`` for ``j < steps``.
    """
    q = schedule.modulus
    width = schedule.start_values.shape[0]
    if steps < 0 or (width > 1 and steps > width):
        raise ConfigurationError(f"Cannot expand {steps} steps from a {width}-column schedule")
    current = schedule.start_values.astype(object)
    ratios = schedule.common_ratios.astype(object)
    table = np.empty((width, steps), dtype=object)
    for j in range(steps):
        table[:, j] = current
        current = (current * ratios) % q
    return table.astype(np.uint64)


def four_step_ntt(
    limb: Limb,
    direction: Direction,
    twist: TwistSchedule | None = None,
    strategy: ReductionStrategy = NTT_REDUCTION,
) -> Limb:
    """√N × √N decomposition of ``ntt``; twisting factors are produced row by row."""
    _check_transformable(limb)
    modulus = limb.modulus
    n = limb.degree
    side = _square_side(n)
    q = modulus.q
    psi = modulus.ntt_root
    inverse = direction == "inverse"
    if direction not in ("forward", "inverse"):
        raise ConfigurationError(f"Unknown NTT direction: {direction}")
    if twist is None:
        twist = TwistSchedule.for_modulus(modulus, inverse=inverse)
    if twist.modulus != q or twist.start_values.shape[0] != side:
        raise ConfigurationError("Twist schedule does not match the limb modulus or size")

    reducer = make_reducer(q, strategy)
    psi_side = pow(psi, side, q)  # primitive 2·side-th root for the column transforms
    omega_row = pow(psi, 2 * side, q)  # primitive side-th root for the row transforms
    ratios = reducer.prepare(twist.common_ratios.astype(object))
    current = twist.start_values.astype(object)

    values = limb.values.astype(object)
    if not inverse:
        columns = _negacyclic_forward(values.reshape(side, side).T.copy(), q, psi_side, strategy)
        grid = columns.T.copy()  # grid[j1, i2]
        for j1 in range(side):
            grid[j1] = reducer.mul_vector(grid[j1], current)
            current = reducer.reduce_products(current * ratios)
        grid = _cyclic_forward(grid, q, omega_row, strategy)  # grid[j1, j2]
        out = grid.T.reshape(-1)
    else:
        grid = values.reshape(side, side).T.copy()  # grid[j1, j2]
        grid = _cyclic_inverse_unscaled(grid, q, omega_row, strategy)  # grid[j1, i2]
        for j1 in range(side):
            grid[j1] = reducer.mul_vector(grid[j1], current)
            current = reducer.reduce_products(current * ratios)
        columns = _negacyclic_inverse(
            grid.T.copy(), q, psi_side, scaled=False, strategy=strategy
        )  # [i2, i1]
        scale = int(reducer.prepare(np.array([modulus.degree_inverse], dtype=object))[0])
        out = reducer.reduce_products(columns.T.reshape(-1) * scale)
    return Limb(np.asarray(out, dtype=object).astype(np.uint64), modulus)


__all__ = [
    "Direction",
    "Limb",
    "TwistSchedule",
    "expand_twist",
    "four_step_ntt",
    "ntt",
    "ntt_values",
]
