"""RNS polynomials and limb-level primitives.

A polynomial over ``Z_Q[X]/(X^N + 1)`` is held as a ``(limbs, N)`` uint64 matrix whose
row ``i`` stores the residues modulo the basis prime ``q_i``. Operations never mutate
their inputs.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import prod
from typing import Literal

import numpy as np
from loguru import logger

from utils.constants import BCONV_BLOCK_COLUMNS, BCONV_BLOCK_ROWS
from utils.errors import (
    BasisMismatchError,
    ConfigurationError,
    RepresentationError,
)
from utils.modular import (
    LAZY_ACCUMULATION_TERMS,
    NTT_REDUCTION,
    PrimeModulus,
    ReductionStrategy,
    make_reducer,
    to_centered,
    to_residues,
    vec_add,
    vec_mul,
    vec_neg,
    vec_scalar_mul,
    vec_sub,
)
from utils.ntt import Limb, ntt_values

LoopOrder = Literal["blocked", "naive"]


class Representation(str, Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


class BasisKind(str, Enum):
    CIPHERTEXT = "C"
    SPECIAL = "B"
    EXTENDED = "D"
    PARTIAL = "C_i"


# ============= Limb basis =============


@dataclass(frozen=True)
class LimbBasis:
    """Ordered set of distinct primes a polynomial is represented over."""

    primes: tuple[PrimeModulus, ...]
    kind: BasisKind = BasisKind.CIPHERTEXT

    def __post_init__(self) -> None:
        values = [p.q for p in self.primes]
        if len(set(values)) != len(values):
            raise ConfigurationError(f"Basis primes must be distinct: {values}")
        if len({p.ring_degree for p in self.primes}) > 1:
            raise ConfigurationError("Basis primes were generated for different ring degrees")

    def __len__(self) -> int:
        return len(self.primes)

    def __iter__(self) -> Iterator[PrimeModulus]:
        return iter(self.primes)

    def __getitem__(self, index: int) -> PrimeModulus:
        return self.primes[index]

    @property
    def q_values(self) -> tuple[int, ...]:
        return tuple(p.q for p in self.primes)

    @property
    def product(self) -> int:
        return prod(self.q_values)

    @property
    def ring_degree(self) -> int:
        return self.primes[0].ring_degree

    def prefix(self, count: int) -> LimbBasis:
        """First ``count`` primes, e.g. the level-ℓ slice of C."""
        if not 0 < count <= len(self):
            raise ConfigurationError(f"Cannot take {count} primes from a basis of {len(self)}")
        return LimbBasis(self.primes[:count], self.kind)

    def partial(self, start: int, stop: int) -> LimbBasis:
        """Contiguous slice used as a decomposition group C_i."""
        if not 0 <= start < stop <= len(self):
            raise ConfigurationError(f"Invalid partial group [{start}, {stop}) of {len(self)}")
        return LimbBasis(self.primes[start:stop], BasisKind.PARTIAL)

    def union(self, other: LimbBasis, kind: BasisKind = BasisKind.EXTENDED) -> LimbBasis:
        return LimbBasis(self.primes + other.primes, kind)

    def without(self, other: LimbBasis) -> LimbBasis:
        skip = set(other.q_values)
        return LimbBasis(tuple(p for p in self.primes if p.q not in skip), self.kind)

    def same_primes(self, other: LimbBasis) -> bool:
        return self.q_values == other.q_values

    def q_column(self) -> np.ndarray:
        return np.array(self.q_values, dtype=np.uint64).reshape(-1, 1)


# ============= Polynomial =============


@dataclass(eq=False)
class RnsPolynomial:
    """Residue matrix plus basis and representation flag."""

    coeffs: np.ndarray
    basis: LimbBasis
    representation: Representation

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.uint64)
        if coeffs.ndim != 2 or coeffs.shape[0] != len(self.basis):
            raise ConfigurationError(
                f"Polynomial has shape {coeffs.shape} but basis has {len(self.basis)} limbs"
            )
        n = coeffs.shape[1]
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"Ring degree must be a power of two, got {n}")
        if not (coeffs < self.basis.q_column()).all():
            raise ConfigurationError("Polynomial residues must be reduced modulo their primes")
        self.coeffs = coeffs

    # ---- constructors ----

    @classmethod
    def zeros(
        cls, basis: LimbBasis, degree: int, representation: Representation
    ) -> RnsPolynomial:
        return cls(np.zeros((len(basis), degree), dtype=np.uint64), basis, representation)

    @classmethod
    def from_integers(
        cls,
        values: Sequence[int] | np.ndarray,
        basis: LimbBasis,
        representation: Representation = Representation.COEFFICIENT,
    ) -> RnsPolynomial:
        """Reduce one integer vector (signed, unbounded) modulo every basis prime."""
        ints = np.asarray(values, dtype=object)
        rows = [to_residues(ints, q) for q in basis.q_values]
        return cls(np.vstack(rows), basis, representation)

    @classmethod
    def from_limbs(cls, limbs: Sequence[Limb], representation: Representation) -> RnsPolynomial:
        basis = LimbBasis(tuple(limb.modulus for limb in limbs))
        return cls(np.vstack([limb.values for limb in limbs]), basis, representation)

    @classmethod
    def random_uniform(
        cls,
        basis: LimbBasis,
        degree: int,
        rng: np.random.Generator,
        representation: Representation = Representation.EVALUATION,
    ) -> RnsPolynomial:
        rows = [rng.integers(0, q, size=degree, dtype=np.uint64) for q in basis.q_values]
        return cls(np.vstack(rows), basis, representation)

    # ---- views ----

    @property
    def degree(self) -> int:
        return int(self.coeffs.shape[1])

    @property
    def limb_count(self) -> int:
        return int(self.coeffs.shape[0])

    def limb(self, index: int) -> Limb:
        return Limb(self.coeffs[index].copy(), self.basis[index])

    @property
    def limbs(self) -> list[Limb]:
        return [self.limb(i) for i in range(self.limb_count)]

    def copy(self) -> RnsPolynomial:
        return RnsPolynomial(self.coeffs.copy(), self.basis, self.representation)

    def restrict(self, basis: LimbBasis) -> RnsPolynomial:
        """Rows for the primes of ``basis``, in that basis' order."""
        index = {q: i for i, q in enumerate(self.basis.q_values)}
        try:
            rows = [index[q] for q in basis.q_values]
        except KeyError as exc:
            raise BasisMismatchError(f"Prime {exc.args[0]} is not part of this polynomial") from exc
        return RnsPolynomial(self.coeffs[rows].copy(), basis, self.representation)

    def concat(self, other: RnsPolynomial, kind: BasisKind = BasisKind.EXTENDED) -> RnsPolynomial:
        _require_same_representation(self, other)
        return RnsPolynomial(
            np.vstack([self.coeffs, other.coeffs]),
            self.basis.union(other.basis, kind),
            self.representation,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RnsPolynomial):
            return NotImplemented
        return (
            self.basis.same_primes(other.basis)
            and self.representation == other.representation
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None  # type: ignore[assignment]

    # ---- representation changes ----

    def to_evaluation(self) -> RnsPolynomial:
        if self.representation is Representation.EVALUATION:
            return self
        rows = [ntt_values(self.coeffs[i], p, "forward") for i, p in enumerate(self.basis)]
        return RnsPolynomial(np.vstack(rows), self.basis, Representation.EVALUATION)

    def to_coefficient(self) -> RnsPolynomial:
        if self.representation is Representation.COEFFICIENT:
            return self
        rows = [ntt_values(self.coeffs[i], p, "inverse") for i, p in enumerate(self.basis)]
        return RnsPolynomial(np.vstack(rows), self.basis, Representation.COEFFICIENT)


def _require_same_representation(a: RnsPolynomial, b: RnsPolynomial) -> None:
    if a.representation != b.representation:
        raise RepresentationError(
            f"Representation mismatch: {a.representation.value} vs {b.representation.value}"
        )


def _require_same_basis(a: RnsPolynomial, b: RnsPolynomial) -> None:
    if not a.basis.same_primes(b.basis):
        raise BasisMismatchError(
            f"Basis mismatch: {len(a.basis)} limbs {a.basis.q_values[:2]}... vs "
            f"{len(b.basis)} limbs {b.basis.q_values[:2]}..."
        )


# ============= Element-wise arithmetic =============

ElementwiseOp = Literal["add", "sub", "mul", "scalar_mul"]


def elementwise(
    op: ElementwiseOp, a: RnsPolynomial, b: RnsPolynomial | int
) -> RnsPolynomial:
    """Limb-wise modular arithmetic.

    ``scalar_mul`` takes a Python int (any sign or size) and works in either representation;
    ``mul`` needs both operands in evaluation representation.
    """
    qs = a.basis.q_values
    if op == "scalar_mul":
        if isinstance(b, RnsPolynomial):
            raise ConfigurationError("scalar_mul expects an integer operand")
        rows = [vec_scalar_mul(a.coeffs[i], int(b), q) for i, q in enumerate(qs)]
        return RnsPolynomial(np.vstack(rows), a.basis, a.representation)

    if not isinstance(b, RnsPolynomial):
        raise ConfigurationError(f"{op} expects a polynomial operand")
    _require_same_basis(a, b)
    _require_same_representation(a, b)
    if op == "add":
        kernel = vec_add
    elif op == "sub":
        kernel = vec_sub
    elif op == "mul":
        if a.representation is not Representation.EVALUATION:
            raise RepresentationError("Polynomial multiplication needs evaluation representation")
        kernel = vec_mul
    else:
        raise ConfigurationError(f"Unknown element-wise op: {op}")
    rows = [kernel(a.coeffs[i], b.coeffs[i], q) for i, q in enumerate(qs)]
    return RnsPolynomial(np.vstack(rows), a.basis, a.representation)


def add(a: RnsPolynomial, b: RnsPolynomial) -> RnsPolynomial:
    return elementwise("add", a, b)


def sub(a: RnsPolynomial, b: RnsPolynomial) -> RnsPolynomial:
    return elementwise("sub", a, b)


def mul(a: RnsPolynomial, b: RnsPolynomial) -> RnsPolynomial:
    return elementwise("mul", a, b)


def scalar_mul(a: RnsPolynomial, c: int) -> RnsPolynomial:
    return elementwise("scalar_mul", a, c)


def neg(a: RnsPolynomial) -> RnsPolynomial:
    rows = [vec_neg(a.coeffs[i], q) for i, q in enumerate(a.basis.q_values)]
    return RnsPolynomial(np.vstack(rows), a.basis, a.representation)


def mul_per_limb(a: RnsPolynomial, factors: Sequence[int]) -> RnsPolynomial:
    """Multiply limb ``i`` by ``factors[i]`` (already reduced or not)."""
    pairs = zip(factors, a.basis.q_values, strict=True)
    rows = [vec_scalar_mul(a.coeffs[i], f, q) for i, (f, q) in enumerate(pairs)]
    return RnsPolynomial(np.vstack(rows), a.basis, a.representation)


# ============= Base conversion =============


@dataclass(frozen=True, eq=False)
class BaseTable:
    """``p̂_j mod q_i`` for every (target, source) pair plus ``p̂_j⁻¹ mod p_j``."""

    source: LimbBasis
    target: LimbBasis
    matrix: np.ndarray
    inverse_factors: np.ndarray

    @classmethod
    def build(cls, source: LimbBasis, target: LimbBasis) -> BaseTable:
        """Build the table and verify every entry against the exact big product.

        Raises:
            ConfigurationError: If a modular entry disagrees with the big-integer value.
        """
        src = source.q_values
        big = source.product
        matrix = np.empty((len(target), len(src)), dtype=object)
        for i, q in enumerate(target):
            for j in range(len(src)):
                acc = 1
                for k, p in enumerate(src):
                    if k != j:
                        acc = q.barrett.mul(acc, p % q.q)
                if acc != (big // src[j]) % q.q:
                    raise ConfigurationError(f"Base table entry ({i}, {j}) failed verification")
                matrix[i, j] = acc
        inverse = np.array([pow(big // p % p, -1, p) for p in src], dtype=object)
        return cls(source=source, target=target, matrix=matrix, inverse_factors=inverse)


@lru_cache(maxsize=256)
def base_table(source: LimbBasis, target: LimbBasis) -> BaseTable:
    """Cached ``BaseTable.build``; tables are immutable and shareable."""
    logger.debug(f"Building base table {len(source)} -> {len(target)} limbs")
    return BaseTable.build(source, target)


@lru_cache(maxsize=256)
def _prepared_table(
    table: BaseTable, strategy: ReductionStrategy
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse factors and matrix rows moved into the domain of ``strategy``."""
    inverse = np.array(
        [
            make_reducer(p, strategy).prepare(np.array([f], dtype=object))[0]
            for f, p in zip(table.inverse_factors, table.source.q_values, strict=True)
        ],
        dtype=object,
    )
    matrix = np.empty(table.matrix.shape, dtype=object)
    for i, q in enumerate(table.target.q_values):
        matrix[i] = make_reducer(q, strategy).prepare(table.matrix[i])
    return inverse, matrix


def _add_reduced(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    s = a + b
    return np.where(s >= q, s - q, s)


def _lazy_dot(
    matrix: np.ndarray, scaled: np.ndarray, q_values: Sequence[int], strategy: ReductionStrategy
) -> np.ndarray:
    """Row ``i`` is ``Σ_j matrix[i, j]·scaled[j] mod q_i`` with one reduction per lazy chunk."""
    out = np.zeros((len(q_values), scaled.shape[1]), dtype=object)
    for s0 in range(0, scaled.shape[0], LAZY_ACCUMULATION_TERMS):
        s1 = min(s0 + LAZY_ACCUMULATION_TERMS, scaled.shape[0])
        partial = np.dot(matrix[:, s0:s1], scaled[s0:s1])
        for i, q in enumerate(q_values):
            out[i] = _add_reduced(out[i], make_reducer(q, strategy).reduce_products(partial[i]), q)
    return out


def base_convert(
    p: RnsPolynomial,
    target: LimbBasis,
    table: BaseTable | None = None,
    loop_order: LoopOrder = "blocked",
    strategy: ReductionStrategy = NTT_REDUCTION,
) -> RnsPolynomial:
    """Fast base conversion; the result may carry an extra ``k·P`` with ``0 <= k < |source|``."""
    if p.representation is not Representation.COEFFICIENT:
        raise RepresentationError("Base conversion needs coefficient representation")
    if table is None:
        table = base_table(p.basis, target)
    if not (table.source.same_primes(p.basis) and table.target.same_primes(target)):
        raise BasisMismatchError("Base table does not match the requested conversion")

    inverse, matrix = _prepared_table(table, strategy)
    coeffs = p.coeffs.astype(object)
    # step 1: y_j = [a]_{p_j} · p̂_j⁻¹ mod p_j
    scaled = np.empty(coeffs.shape, dtype=object)
    for j, q in enumerate(p.basis.q_values):
        scaled[j] = make_reducer(q, strategy).reduce_products(coeffs[j] * inverse[j])
    tgt_q = target.q_values
    out = np.empty((len(target), p.degree), dtype=object)
    if loop_order == "blocked":
        for r0 in range(0, len(target), BCONV_BLOCK_ROWS):
            r1 = min(r0 + BCONV_BLOCK_ROWS, len(target))
            for c0 in range(0, p.degree, BCONV_BLOCK_COLUMNS):
                c1 = min(c0 + BCONV_BLOCK_COLUMNS, p.degree)
                out[r0:r1, c0:c1] = _lazy_dot(
                    matrix[r0:r1], scaled[:, c0:c1], tgt_q[r0:r1], strategy
                )
    elif loop_order == "naive":
        for i, q in enumerate(tgt_q):
            reducer = make_reducer(q, strategy)
            acc = np.zeros(p.degree, dtype=object)
            for s0 in range(0, len(p.basis), LAZY_ACCUMULATION_TERMS):
                lazy = np.zeros(p.degree, dtype=object)
                for j in range(s0, min(s0 + LAZY_ACCUMULATION_TERMS, len(p.basis))):
                    lazy = lazy + scaled[j] * matrix[i, j]
                acc = _add_reduced(acc, reducer.reduce_products(lazy), q)
            out[i] = acc
    else:
        raise ConfigurationError(f"Unknown loop order: {loop_order}")
    return RnsPolynomial(out.astype(np.uint64), target, Representation.COEFFICIENT)


def bconv_routine(p: RnsPolynomial, target: LimbBasis) -> RnsPolynomial:
    """INTT → base conversion → NTT."""
    if p.representation is not Representation.EVALUATION:
        raise RepresentationError("BConvRoutine expects evaluation representation")
    return base_convert(p.to_coefficient(), target).to_evaluation()


def extend_centered(values: np.ndarray, source_q: int, target: LimbBasis) -> np.ndarray:
    """Exact extension of one coefficient limb through its centered lift."""
    lifted = to_centered(values, source_q)
    return np.vstack([to_residues(lifted, q) for q in target.q_values])


# ============= Automorphism =============


def galois_element(rotation: int, degree: int) -> int:
    """``5^r mod 2N``; 5 has order N/2, so ``r`` is taken modulo N/2."""
    return pow(5, rotation % (degree // 2), 2 * degree)


@lru_cache(maxsize=512)
def _automorphism_maps(galois: int, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = np.arange(degree, dtype=np.int64)
    t = (idx * galois) % (2 * degree)
    coeff_dest = t % degree
    coeff_negate = t >= degree
    eval_source = (((2 * idx + 1) * galois) % (2 * degree) - 1) // 2
    return coeff_dest, coeff_negate, eval_source


def automorphism(p: RnsPolynomial, rotation: int) -> RnsPolynomial:
    """Apply ``X -> X^(5^r mod 2N)`` in either representation."""
    n = p.degree
    galois = galois_element(rotation, n)
    if galois == 1:
        return p.copy()
    dest, negate, source = _automorphism_maps(galois, n)
    if p.representation is Representation.EVALUATION:
        return RnsPolynomial(p.coeffs[:, source], p.basis, p.representation)
    out = np.zeros_like(p.coeffs)
    for i, q in enumerate(p.basis.q_values):
        row = p.coeffs[i]
        out[i, dest] = np.where(negate, vec_neg(row, q), row)
    return RnsPolynomial(out, p.basis, p.representation)


# ============= CRT reconstruction =============


@lru_cache(maxsize=256)
def _crt_weights(q_values: tuple[int, ...]) -> tuple[int, np.ndarray]:
    big = prod(q_values)
    weights = [(big // q) * pow(big // q % q, -1, q) for q in q_values]
    return big, np.array(weights, dtype=object).reshape(-1, 1)


def crt_compose(p: RnsPolynomial, centered: bool = True) -> np.ndarray:
    """Big-integer coefficients of ``p`` (converted to coefficient representation first)."""
    coeffs = p.to_coefficient().coeffs.astype(object)
    big, weights = _crt_weights(p.basis.q_values)
    values = (coeffs * weights).sum(axis=0) % big
    if centered:
        values = np.where(values > big // 2, values - big, values)
    return values


__all__ = [
    "BaseTable",
    "BasisKind",
    "LimbBasis",
    "LoopOrder",
    "Representation",
    "RnsPolynomial",
    "add",
    "automorphism",
    "base_convert",
    "base_table",
    "bconv_routine",
    "crt_compose",
    "elementwise",
    "extend_centered",
    "galois_element",
    "mul",
    "mul_per_limb",
    "neg",
    "scalar_mul",
    "sub",
]
