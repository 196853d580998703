"""Scheme-level data types: parameters, keys, plaintexts and ciphertexts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from utils.constants import (
    DEFAULT_ERROR_STDDEV,
    DEFAULT_Q0_BITS,
    DEFAULT_QI_BITS,
    DEFAULT_SCALE_BITS,
    DEFAULT_SPECIAL_BITS,
)
from utils.errors import BasisMismatchError, CkksError, ConfigurationError, RepresentationError
from utils.modular import PrimeModulus, generate_ntt_primes
from utils.rns_poly import BasisKind, LimbBasis, Representation, RnsPolynomial


class LevelMismatchError(CkksError):
    """Raised when operands sit at different levels."""


class ScaleMismatchError(CkksError):
    """Raised when operands carry incompatible scales."""


class LevelExhaustedError(CkksError):
    """Raised when a rescale is requested at level 0."""


class MissingEvaluationKeyError(CkksError):
    """Raised when no evaluation key exists for a requested rotation."""


class EncodingRangeError(CkksError):
    """Raised when scaled coefficients do not fit below q0/2."""


# ============= Parameters =============


@dataclass(frozen=True)
class CkksParams:
    """Ring, modulus chain and key-switching decomposition."""

    ring_degree: int
    slots: int
    max_level: int
    dnum: int
    scale: float
    ciphertext_basis: LimbBasis
    special_basis: LimbBasis
    error_stddev: float = DEFAULT_ERROR_STDDEV
    hamming_weight: int | None = None
    seed: int = 1

    def __post_init__(self) -> None:
        n = self.ring_degree
        if n < 4 or n & (n - 1):
            raise ConfigurationError(f"Ring degree must be a power of two, got {n}")
        if self.slots < 1 or self.slots & (self.slots - 1) or self.slots > n // 2:
            raise ConfigurationError(f"Slot count {self.slots} must be a power of two <= N/2")
        if self.max_level < 0 or (self.max_level + 1) % self.dnum:
            raise ConfigurationError(f"L+1={self.max_level + 1} is not divisible by dnum={self.dnum}")
        if len(self.ciphertext_basis) != self.max_level + 1:
            raise ConfigurationError("Ciphertext basis must hold L+1 primes")
        if len(self.special_basis) != self.alpha:
            raise ConfigurationError(f"Special basis must hold alpha={self.alpha} primes")
        if self.hamming_weight is not None and not 0 < self.hamming_weight <= n:
            raise ConfigurationError(f"Hamming weight {self.hamming_weight} out of range")
        # raises on repeated primes across C and B
        self.ciphertext_basis.union(self.special_basis)

    @classmethod
    def generate(
        cls,
        ring_degree: int,
        slots: int,
        max_level: int,
        dnum: int,
        scale_bits: int = DEFAULT_SCALE_BITS,
        q0_bits: int = DEFAULT_Q0_BITS,
        qi_bits: int = DEFAULT_QI_BITS,
        special_bits: int = DEFAULT_SPECIAL_BITS,
        error_stddev: float = DEFAULT_ERROR_STDDEV,
        hamming_weight: int | None = None,
        seed: int = 1,
    ) -> CkksParams:
        """Generate distinct NTT-friendly primes and assemble a parameter set."""
        if (max_level + 1) % dnum:
            raise ConfigurationError(f"L+1={max_level + 1} is not divisible by dnum={dnum}")
        alpha = (max_level + 1) // dnum
        taken: set[int] = set()
        q0 = generate_ntt_primes(ring_degree, q0_bits, 1)
        taken.update(q0)
        qi = generate_ntt_primes(ring_degree, qi_bits, max_level, exclude=taken)
        taken.update(qi)
        pj = generate_ntt_primes(ring_degree, special_bits, alpha, exclude=taken)
        c_basis = LimbBasis(
            tuple(PrimeModulus.from_prime(q, ring_degree) for q in q0 + qi), BasisKind.CIPHERTEXT
        )
        b_basis = LimbBasis(
            tuple(PrimeModulus.from_prime(p, ring_degree) for p in pj), BasisKind.SPECIAL
        )
        return cls(
            ring_degree=ring_degree,
            slots=slots,
            max_level=max_level,
            dnum=dnum,
            scale=float(2**scale_bits),
            ciphertext_basis=c_basis,
            special_basis=b_basis,
            error_stddev=error_stddev,
            hamming_weight=hamming_weight,
            seed=seed,
        )

    @property
    def alpha(self) -> int:
        return (self.max_level + 1) // self.dnum

    @property
    def q0(self) -> int:
        return self.ciphertext_basis[0].q

    @property
    def special_product(self) -> int:
        return self.special_basis.product

    @property
    def extended_basis(self) -> LimbBasis:
        """D = C ∪ B, C first."""
        return self.ciphertext_basis.union(self.special_basis)

    def level_basis(self, level: int) -> LimbBasis:
        self.check_level(level)
        return self.ciphertext_basis.prefix(level + 1)

    def extended_level_basis(self, level: int) -> LimbBasis:
        return self.level_basis(level).union(self.special_basis)

    def group(self, index: int) -> LimbBasis:
        """Partial group C_i."""
        if not 0 <= index < self.dnum:
            raise ConfigurationError(f"Group index {index} outside [0, {self.dnum})")
        return self.ciphertext_basis.partial(index * self.alpha, (index + 1) * self.alpha)

    def pieces_at(self, level: int) -> list[LimbBasis]:
        """Non-empty ``C_i ∩ C_ℓ`` groups used by key switching at ``level``."""
        self.check_level(level)
        beta = math.ceil((level + 1) / self.alpha)
        return [
            self.ciphertext_basis.partial(i * self.alpha, min((i + 1) * self.alpha, level + 1))
            for i in range(beta)
        ]

    def check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_level:
            raise ConfigurationError(f"Level {level} outside [0, {self.max_level}]")

    def normalize_rotation(self, rotation: int) -> int:
        return rotation % (self.ring_degree // 2)


# ============= Keys and messages =============


@dataclass(frozen=True, eq=False)
class SecretKey:
    """Ternary secret in evaluation representation over D."""

    poly: RnsPolynomial
    coefficients: tuple[int, ...] = field(repr=False)


@dataclass(eq=False)
class Plaintext:
    poly: RnsPolynomial
    scale: float
    level: int

    def __post_init__(self) -> None:
        if self.poly.limb_count != self.level + 1:
            raise LevelMismatchError(
                f"Plaintext at level {self.level} needs {self.level + 1} limbs, "
                f"has {self.poly.limb_count}"
            )


@dataclass(eq=False)
class Ciphertext:
    """``(b, a)`` with ``b + a·s ≈ Δ·m``."""

    b: RnsPolynomial
    a: RnsPolynomial
    level: int
    scale: float

    def __post_init__(self) -> None:
        if not self.b.basis.same_primes(self.a.basis):
            raise BasisMismatchError("Ciphertext components must share a basis")
        for part in (self.b, self.a):
            if part.representation is not Representation.EVALUATION:
                raise RepresentationError("Ciphertext components must be in evaluation form")
        if self.b.limb_count != self.level + 1:
            raise LevelMismatchError(
                f"Ciphertext at level {self.level} needs {self.level + 1} limbs, "
                f"has {self.b.limb_count}"
            )

    def identical_to(self, other: Ciphertext) -> bool:
        return (
            self.level == other.level
            and self.scale == other.scale
            and self.b == other.b
            and self.a == other.a
        )


class EvkKind(str, Enum):
    MULT = "mult"
    ROTATION = "rot"


@dataclass(frozen=True, eq=False)
class EvaluationKey:
    """``dnum`` pairs ``(b_i, a_i)`` over D in evaluation representation."""

    pairs: tuple[tuple[RnsPolynomial, RnsPolynomial], ...]
    kind: EvkKind
    rotation: int | None = None

    @property
    def evk_id(self) -> str:
        return evk_id_for(self.kind, self.rotation)

    @property
    def limb_count(self) -> int:
        return self.pairs[0][0].limb_count


def evk_id_for(kind: EvkKind, rotation: int | None = None) -> str:
    if kind is EvkKind.MULT:
        return "mult"
    return f"rot:{rotation}"


@dataclass
class KeySet:
    """Keys produced by ``keygen``; rotation keys are indexed by ``r mod N/2``."""

    secret: SecretKey | None
    mult: EvaluationKey | None
    rotations: dict[int, EvaluationKey] = field(default_factory=dict)

    def rotation_key(self, rotation: int, period: int) -> EvaluationKey:
        key = self.rotations.get(rotation % period)
        if key is None:
            raise MissingEvaluationKeyError(f"No rotation key for r={rotation} (mod {period})")
        return key

    def mult_key(self) -> EvaluationKey:
        if self.mult is None:
            raise MissingEvaluationKeyError("No multiplication key in this key set")
        return self.mult


__all__ = [
    "Ciphertext",
    "CkksParams",
    "EncodingRangeError",
    "EvaluationKey",
    "EvkKind",
    "KeySet",
    "LevelExhaustedError",
    "LevelMismatchError",
    "MissingEvaluationKeyError",
    "Plaintext",
    "ScaleMismatchError",
    "SecretKey",
    "evk_id_for",
]
