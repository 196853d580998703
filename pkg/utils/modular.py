"""Word-sized prime-field arithmetic.

Scalars are plain Python ints. Limb vectors are ``numpy.uint64`` arrays; products that
need a 128-bit intermediate are computed on object arrays of Python ints and reduced
before converting back, so every vector leaving this module is fully reduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from loguru import logger
from sympy import isprime

from utils.constants import MAX_PRIME_BITS
from utils.errors import ConfigurationError

ReductionStrategy = Literal["barrett", "montgomery"]

_WORD_BITS = 64
_WORD_MASK = (1 << _WORD_BITS) - 1

# NTT and base conversion reduce with Montgomery; element-wise (MAD) products with Barrett.
NTT_REDUCTION: ReductionStrategy = "montgomery"
MAD_REDUCTION: ReductionStrategy = "barrett"

# products of a residue below 2**60 and a prepared constant below q that may be summed
# before one reduction keeps the total below q·2**64
LAZY_ACCUMULATION_TERMS = 1 << (_WORD_BITS - MAX_PRIME_BITS)


# ============= Reduction strategies =============


@dataclass(frozen=True)
class BarrettReducer:
    """Constant-time style reduction for products and short lazy sums of products."""

    q: int
    shift: int = field(init=False)
    mu: int = field(init=False)

    def __post_init__(self) -> None:
        shift = self.q.bit_length() + _WORD_BITS
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "mu", (1 << shift) // self.q)

    def reduce(self, x: int) -> int:
        """Reduce ``0 <= x < q·2**64`` to ``x mod q``."""
        t = (x * self.mu) >> self.shift
        r = x - t * self.q
        # r < 2q after the estimate
        return r - self.q if r >= self.q else r

    def mul(self, a: int, b: int) -> int:
        return self.reduce(a * b)

    def prepare(self, constants: np.ndarray) -> np.ndarray:
        return np.asarray(constants, dtype=object)

    def reduce_products(self, t: np.ndarray) -> np.ndarray:
        """Vector ``reduce`` over object arrays of Python ints."""
        est = (t * self.mu) >> self.shift
        r = t - est * self.q
        return np.where(r >= self.q, r - self.q, r)

    def mul_vector(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.reduce_products(np.asarray(a, dtype=object) * b)


@dataclass(frozen=True)
class MontgomeryReducer:
    """Montgomery multiplication with R = 2**64."""

    q: int
    q_inv_neg: int = field(init=False)
    r_squared: int = field(init=False)

    def __post_init__(self) -> None:
        if self.q % 2 == 0:
            raise ConfigurationError(f"Montgomery reduction needs an odd modulus, got {self.q}")
        object.__setattr__(self, "q_inv_neg", (-pow(self.q, -1, 1 << _WORD_BITS)) & _WORD_MASK)
        object.__setattr__(self, "r_squared", pow(1 << _WORD_BITS, 2, self.q))

    def redc(self, t: int) -> int:
        """Return ``t * R^-1 mod q`` for ``0 <= t < q * R``."""
        m = ((t & _WORD_MASK) * self.q_inv_neg) & _WORD_MASK
        u = (t + m * self.q) >> _WORD_BITS
        return u - self.q if u >= self.q else u

    def to_montgomery(self, a: int) -> int:
        return self.redc(a * self.r_squared)

    def from_montgomery(self, a: int) -> int:
        return self.redc(a)

    def mul(self, a: int, b: int) -> int:
        # Domain conversion stays internal: plain residues in, plain residue out.
        return self.redc(self.to_montgomery(a) * b)

    def prepare(self, constants: np.ndarray) -> np.ndarray:
        """Move constants into the Montgomery domain so one REDC yields plain products."""
        return self.reduce_products(np.asarray(constants, dtype=object) * self.r_squared)

    def reduce_products(self, t: np.ndarray) -> np.ndarray:
        """Vector ``redc`` over object arrays of Python ints."""
        m = ((t & _WORD_MASK) * self.q_inv_neg) & _WORD_MASK
        u = (t + m * self.q) >> _WORD_BITS
        return np.where(u >= self.q, u - self.q, u)

    def mul_vector(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.reduce_products(self.prepare(a) * np.asarray(b, dtype=object))


Reducer = BarrettReducer | MontgomeryReducer


@lru_cache(maxsize=512)
def make_reducer(q: int, strategy: ReductionStrategy) -> Reducer:
    """Shared reducer for ``q``; vector paths prepare constants once per strategy."""
    if strategy == "barrett":
        return BarrettReducer(q)
    if strategy == "montgomery":
        return MontgomeryReducer(q)
    raise ConfigurationError(f"Unknown reduction strategy: {strategy}")


# ============= Prime modulus =============


@dataclass(frozen=True)
class PrimeModulus:
    """An NTT-friendly prime together with its root of unity and reduction constants."""

    q: int
    ring_degree: int
    ntt_root: int
    barrett: BarrettReducer = field(repr=False, compare=False)
    montgomery: MontgomeryReducer = field(repr=False, compare=False)

    @classmethod
    def from_prime(cls, q: int, ring_degree: int) -> PrimeModulus:
        """Validate ``q`` for the ring ``Z_q[X]/(X^N + 1)`` and precompute its constants.

        Raises:
            ConfigurationError: If ``q`` is not prime, too wide, or not 1 mod 2N.
        """
        _check_ring_degree(ring_degree)
        if q.bit_length() > MAX_PRIME_BITS:
            raise ConfigurationError(f"Modulus {q} exceeds {MAX_PRIME_BITS} bits")
        if (q - 1) % (2 * ring_degree) != 0:
            raise ConfigurationError(f"Modulus {q} is not NTT-friendly for N={ring_degree}")
        if not isprime(q):
            raise ConfigurationError(f"Modulus {q} is not prime")
        return cls(
            q=q,
            ring_degree=ring_degree,
            ntt_root=find_negacyclic_root(q, ring_degree),
            barrett=BarrettReducer(q),
            montgomery=MontgomeryReducer(q),
        )

    @property
    def bit_width(self) -> int:
        return self.q.bit_length()

    @property
    def root_inverse(self) -> int:
        return pow(self.ntt_root, -1, self.q)

    @property
    def degree_inverse(self) -> int:
        return pow(self.ring_degree, -1, self.q)

    def __int__(self) -> int:
        return self.q


def _check_ring_degree(ring_degree: int) -> None:
    if ring_degree < 2 or ring_degree & (ring_degree - 1):
        raise ConfigurationError(f"Ring degree must be a power of two, got {ring_degree}")


def find_negacyclic_root(q: int, ring_degree: int) -> int:
    """Return a primitive 2N-th root of unity modulo ``q``."""
    exponent = (q - 1) // (2 * ring_degree)
    for base in range(2, q):
        psi = pow(base, exponent, q)
        # psi^(2N) = 1 always; psi^N = -1 pins the order to exactly 2N
        if pow(psi, ring_degree, q) == q - 1:
            return psi
    raise ConfigurationError(f"No primitive {2 * ring_degree}-th root of unity mod {q}")


def generate_ntt_primes(
    ring_degree: int, bits: int, count: int, exclude: set[int] | frozenset[int] = frozenset()
) -> list[int]:
    """Return ``count`` primes just below ``2**bits`` with ``q ≡ 1 (mod 2N)``.

    Args:
        ring_degree: Ring degree N.
        bits: Target bit width; every prime has exactly this many bits.
        count: Number of primes to return.
        exclude: Primes already taken by another basis.

    Returns:
        Primes in descending order.
    """
    _check_ring_degree(ring_degree)
    if bits > MAX_PRIME_BITS:
        raise ConfigurationError(f"Prime width {bits} exceeds {MAX_PRIME_BITS} bits")
    step = 2 * ring_degree
    candidate = ((1 << bits) - 1) // step * step + 1
    if candidate >= 1 << bits:
        candidate -= step
    floor = 1 << (bits - 1)
    primes: list[int] = []
    while len(primes) < count:
        if candidate <= floor:
            raise ConfigurationError(
                f"Only found {len(primes)} of {count} {bits}-bit primes for N={ring_degree}"
            )
        if candidate not in exclude and isprime(candidate):
            primes.append(candidate)
        candidate -= step
    logger.debug(f"Generated {count} {bits}-bit NTT primes for N={ring_degree}")
    return primes


# ============= Scalar operations =============


def mod_add(a: int, b: int, q: PrimeModulus | int) -> int:
    modulus = int(q)
    s = a + b
    return s - modulus if s >= modulus else s


def mod_sub(a: int, b: int, q: PrimeModulus | int) -> int:
    modulus = int(q)
    return a - b if a >= b else a + modulus - b


def mod_mul(a: int, b: int, q: PrimeModulus, strategy: ReductionStrategy = "barrett") -> int:
    """Multiply two residues with the requested reduction strategy."""
    if strategy == "barrett":
        return q.barrett.mul(a, b)
    if strategy == "montgomery":
        return q.montgomery.mul(a, b)
    raise ConfigurationError(f"Unknown reduction strategy: {strategy}")


def centered(x: int, q: int) -> int:
    """Return the representative of ``x`` in ``(-q/2, q/2]``."""
    return x - q if x > q // 2 else x


# ============= Vector operations =============


def vec_add(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    s = a + b  # no overflow: both operands < 2**60
    return np.where(s >= np.uint64(q), s - np.uint64(q), s)


def vec_sub(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    return np.where(a >= b, a - b, a + (np.uint64(q) - b))


def vec_neg(a: np.ndarray, q: int) -> np.ndarray:
    return np.where(a == 0, a, np.uint64(q) - a)


def vec_mul(
    a: np.ndarray, b: np.ndarray, q: int, strategy: ReductionStrategy = MAD_REDUCTION
) -> np.ndarray:
    reducer = make_reducer(q, strategy)
    return reducer.mul_vector(a.astype(object), b.astype(object)).astype(np.uint64)


def vec_scalar_mul(
    a: np.ndarray, c: int, q: int, strategy: ReductionStrategy = MAD_REDUCTION
) -> np.ndarray:
    reducer = make_reducer(q, strategy)
    factor = np.full(a.shape, c % q, dtype=object)
    return reducer.mul_vector(a.astype(object), factor).astype(np.uint64)


def to_residues(values: np.ndarray | list[int], q: int) -> np.ndarray:
    """Reduce arbitrary (possibly negative, possibly huge) integers into a uint64 limb."""
    reduced = np.asarray(values, dtype=object) % q
    return reduced.astype(np.uint64)


def to_centered(values: np.ndarray, q: int) -> np.ndarray:
    """Centered lift of a limb as an object array of Python ints."""
    lifted = values.astype(object)
    return np.where(lifted > q // 2, lifted - q, lifted)


__all__ = [
    "LAZY_ACCUMULATION_TERMS",
    "MAD_REDUCTION",
    "NTT_REDUCTION",
    "BarrettReducer",
    "MontgomeryReducer",
    "PrimeModulus",
    "Reducer",
    "ReductionStrategy",
    "centered",
    "find_negacyclic_root",
    "generate_ntt_primes",
    "make_reducer",
    "mod_add",
    "mod_mul",
    "mod_sub",
    "to_centered",
    "to_residues",
    "vec_add",
    "vec_mul",
    "vec_neg",
    "vec_scalar_mul",
    "vec_sub",
]
