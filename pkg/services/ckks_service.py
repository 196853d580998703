"""CKKS scheme operations over RNS polynomials.

Encryption produces ``b = -a·s + m + e`` so decryption is ``b + a·s``. Evaluation keys use
the generalized key-switching gadget: pair ``i`` satisfies
``b_i + a_i·s = e_i + G_i·s'`` over D, where ``G_i ≡ P (mod q)`` for ``q ∈ C_i`` and
``G_i ≡ 0`` for every other prime of D.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np
from loguru import logger

from utils.ckks_types import (
    Ciphertext,
    CkksParams,
    EncodingRangeError,
    EvaluationKey,
    EvkKind,
    KeySet,
    LevelExhaustedError,
    LevelMismatchError,
    Plaintext,
    ScaleMismatchError,
    SecretKey,
)
from utils.constants import SCALE_MATCH_REL_TOL
from utils.encoding import SlotEncoder
from utils.errors import ConfigurationError
from utils.ntt import ntt_values
from utils.rns_poly import (
    LimbBasis,
    Representation,
    RnsPolynomial,
    add,
    automorphism,
    bconv_routine,
    crt_compose,
    extend_centered,
    mul,
    mul_per_limb,
    neg,
    sub,
)

SlotValues = Sequence[complex] | np.ndarray


class CkksService:
    """Key generation, encoding, encryption and homomorphic operations for one parameter set."""

    def __init__(self, params: CkksParams, rng: np.random.Generator | None = None):
        self.params = params
        self.encoder = SlotEncoder(params.ring_degree, params.slots)
        self.rng = rng or np.random.default_rng(params.seed)
        self.key_switch_count = 0

    # ============= Sampling =============

    def _rng(self, rng: np.random.Generator | None) -> np.random.Generator:
        return rng if rng is not None else self.rng

    def _sample_ternary(self, rng: np.random.Generator) -> np.ndarray:
        n = self.params.ring_degree
        weight = self.params.hamming_weight
        if weight is None:
            return rng.integers(-1, 2, size=n).astype(np.int64)
        coeffs = np.zeros(n, dtype=np.int64)
        positions = rng.choice(n, size=weight, replace=False)
        coeffs[positions] = rng.choice(np.array([-1, 1]), size=weight)
        return coeffs

    def _sample_error(self, basis: LimbBasis, rng: np.random.Generator) -> RnsPolynomial:
        noise = np.rint(rng.normal(0.0, self.params.error_stddev, self.params.ring_degree))
        return RnsPolynomial.from_integers(noise.astype(np.int64), basis).to_evaluation()

    # ============= Keys =============

    def generate_secret_key(self, rng: np.random.Generator | None = None) -> SecretKey:
        coeffs = self._sample_ternary(self._rng(rng))
        poly = RnsPolynomial.from_integers(coeffs, self.params.extended_basis).to_evaluation()
        return SecretKey(poly=poly, coefficients=tuple(int(c) for c in coeffs))

    def _gadget_factors(self, group_index: int) -> list[int]:
        p_big = self.params.special_product
        group = set(self.params.group(group_index).q_values)
        return [p_big % q if q in group else 0 for q in self.params.extended_basis.q_values]

    def generate_switching_key(
        self,
        sk: SecretKey,
        target: RnsPolynomial,
        kind: EvkKind,
        rotation: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> EvaluationKey:
        """Key switching from ``target`` (over D, evaluation form) back to ``sk``."""
        rng = self._rng(rng)
        basis = self.params.extended_basis
        pairs = []
        for i in range(self.params.dnum):
            a_i = RnsPolynomial.random_uniform(basis, self.params.ring_degree, rng)
            e_i = self._sample_error(basis, rng)
            payload = mul_per_limb(target, self._gadget_factors(i))
            b_i = add(sub(e_i, mul(a_i, sk.poly)), payload)
            pairs.append((b_i, a_i))
        return EvaluationKey(pairs=tuple(pairs), kind=kind, rotation=rotation)

    def generate_mult_key(
        self, sk: SecretKey, rng: np.random.Generator | None = None
    ) -> EvaluationKey:
        return self.generate_switching_key(sk, mul(sk.poly, sk.poly), EvkKind.MULT, rng=rng)

    def generate_rotation_key(
        self, sk: SecretKey, rotation: int, rng: np.random.Generator | None = None
    ) -> EvaluationKey:
        r = self.params.normalize_rotation(rotation)
        return self.generate_switching_key(
            sk, automorphism(sk.poly, r), EvkKind.ROTATION, rotation=r, rng=rng
        )

    def keygen(
        self, rotations: Iterable[int] = (), rng: np.random.Generator | None = None
    ) -> KeySet:
        """Secret key, multiplication key and one rotation key per distinct ``r mod N/2``."""
        rng = self._rng(rng)
        sk = self.generate_secret_key(rng)
        mult_key = self.generate_mult_key(sk, rng)
        wanted = sorted({self.params.normalize_rotation(r) for r in rotations} - {0})
        rot_keys = {r: self.generate_rotation_key(sk, r, rng) for r in wanted}
        logger.info(
            f"Generated keys for N={self.params.ring_degree}, L={self.params.max_level}, "
            f"dnum={self.params.dnum} with {len(rot_keys)} rotation keys"
        )
        return KeySet(secret=sk, mult=mult_key, rotations=rot_keys)

    # ============= Encoding =============

    def encode(
        self, values: SlotValues, scale: float | None = None, level: int | None = None
    ) -> Plaintext:
        """Encode ``n`` complex slots at ``scale`` (default Δ) and ``level`` (default L).

        Raises:
            EncodingRangeError: If a scaled coefficient reaches q0/2.
        """
        scale = self.params.scale if scale is None else scale
        level = self.params.max_level if level is None else level
        self.params.check_level(level)
        ints = self.encoder.scaled_integers(np.asarray(values, dtype=np.complex128), scale)
        bound = self.params.q0 // 2
        peak = max((abs(int(c)) for c in ints), default=0)
        if peak >= bound:
            raise EncodingRangeError(
                f"Scaled coefficient magnitude {peak} exceeds q0/2 ({bound}) at scale {scale}"
            )
        poly = RnsPolynomial.from_integers(ints, self.params.level_basis(level)).to_evaluation()
        return Plaintext(poly=poly, scale=scale, level=level)

    def encode_constant(self, value: complex, scale: float, level: int) -> Plaintext:
        return self.encode(np.full(self.params.slots, value, dtype=np.complex128), scale, level)

    def decode(self, pt: Plaintext) -> np.ndarray:
        return self.encoder.from_integers(crt_compose(pt.poly), pt.scale)

    # ============= Encryption =============

    def encrypt(
        self, pt: Plaintext, sk: SecretKey, rng: np.random.Generator | None = None
    ) -> Ciphertext:
        rng = self._rng(rng)
        basis = self.params.level_basis(pt.level)
        s = sk.poly.restrict(basis)
        a = RnsPolynomial.random_uniform(basis, self.params.ring_degree, rng)
        e = self._sample_error(basis, rng)
        b = add(sub(e, mul(a, s)), pt.poly)
        return Ciphertext(b=b, a=a, level=pt.level, scale=pt.scale)

    def decrypt(self, ct: Ciphertext, sk: SecretKey) -> Plaintext:
        s = sk.poly.restrict(ct.b.basis)
        return Plaintext(poly=add(ct.b, mul(ct.a, s)), scale=ct.scale, level=ct.level)

    def decrypt_values(self, ct: Ciphertext, sk: SecretKey) -> np.ndarray:
        return self.decode(self.decrypt(ct, sk))

    def zero_like(self, ct: Ciphertext) -> Ciphertext:
        zero = RnsPolynomial.zeros(ct.b.basis, self.params.ring_degree, Representation.EVALUATION)
        return Ciphertext(b=zero, a=zero.copy(), level=ct.level, scale=ct.scale)

    # ============= Bookkeeping checks =============

    @staticmethod
    def _require_level(level: int, other: int) -> None:
        if level != other:
            raise LevelMismatchError(f"Level mismatch: {level} vs {other}")

    @staticmethod
    def _require_scale(scale: float, other: float) -> None:
        if not math.isclose(scale, other, rel_tol=SCALE_MATCH_REL_TOL):
            raise ScaleMismatchError(f"Scale mismatch: {scale:.6g} vs {other:.6g}")

    def _require_product_room(self, level: int, scale: float, other: float) -> None:
        """A product needs a level to rescale into and a scale that fits below Q_ℓ/2."""
        if level == 0:
            raise LevelExhaustedError("No level left for a multiplication at level 0")
        if other <= 0 or scale * other >= self.params.level_basis(level).product // 2:
            raise ScaleMismatchError(
                f"Product scale {scale:.6g} x {other:.6g} does not fit below Q_{level}/2"
            )

    def drop_to_level(self, ct: Ciphertext, level: int) -> Ciphertext:
        """Discard top limbs without rescaling."""
        if level > ct.level:
            raise LevelMismatchError(f"Cannot raise level {ct.level} to {level} by dropping limbs")
        basis = self.params.level_basis(level)
        return Ciphertext(ct.b.restrict(basis), ct.a.restrict(basis), level, ct.scale)

    # ============= Primitive operations =============

    def hadd(self, ct: Ciphertext, other: Ciphertext) -> Ciphertext:
        self._require_level(ct.level, other.level)
        self._require_scale(ct.scale, other.scale)
        return Ciphertext(add(ct.b, other.b), add(ct.a, other.a), ct.level, ct.scale)

    def hsub(self, ct: Ciphertext, other: Ciphertext) -> Ciphertext:
        self._require_level(ct.level, other.level)
        self._require_scale(ct.scale, other.scale)
        return Ciphertext(sub(ct.b, other.b), sub(ct.a, other.a), ct.level, ct.scale)

    def negate(self, ct: Ciphertext) -> Ciphertext:
        return Ciphertext(neg(ct.b), neg(ct.a), ct.level, ct.scale)

    def padd(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        self._require_level(ct.level, pt.level)
        self._require_scale(ct.scale, pt.scale)
        return Ciphertext(add(ct.b, pt.poly), ct.a, ct.level, ct.scale)

    def pmult(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        """Slot-wise product with a plaintext; the scale becomes ``ct.scale · pt.scale``.

        Raises:
            LevelMismatchError: If the plaintext sits at another level.
            LevelExhaustedError: At level 0.
            ScaleMismatchError: If the product scale does not fit the level modulus.
        """
        self._require_level(ct.level, pt.level)
        self._require_product_room(ct.level, ct.scale, pt.scale)
        return Ciphertext(
            mul(ct.b, pt.poly), mul(ct.a, pt.poly), ct.level, ct.scale * pt.scale
        )

    def cadd(self, ct: Ciphertext, value: complex | SlotValues) -> Ciphertext:
        return self.padd(ct, self._constant_plaintext(value, ct.scale, ct.level))

    def cmult(
        self, ct: Ciphertext, value: complex | SlotValues, scale: float | None = None
    ) -> Ciphertext:
        scale = self.params.scale if scale is None else scale
        self._require_product_room(ct.level, ct.scale, scale)
        return self.pmult(ct, self._constant_plaintext(value, scale, ct.level))

    def _constant_plaintext(
        self, value: complex | SlotValues, scale: float, level: int
    ) -> Plaintext:
        if np.isscalar(value):
            return self.encode_constant(complex(value), scale, level)  # type: ignore[arg-type]
        return self.encode(np.asarray(value), scale, level)

    # ============= Key switching =============

    def mod_up(self, piece: RnsPolynomial, level: int) -> RnsPolynomial:
        """Extend one decomposition piece to ``C_ℓ ∪ B`` (evaluation form)."""
        full = self.params.extended_level_basis(level)
        rest = full.without(piece.basis)
        converted = bconv_routine(piece, rest)
        rows = {q: piece.coeffs[i] for i, q in enumerate(piece.basis.q_values)}
        rows.update({q: converted.coeffs[i] for i, q in enumerate(rest.q_values)})
        stacked = np.vstack([rows[q] for q in full.q_values])
        return RnsPolynomial(stacked, full, Representation.EVALUATION)

    def mod_down(self, poly: RnsPolynomial, level: int) -> RnsPolynomial:
        """``(x_C − BConvRoutine(x_B → C_ℓ)) · P⁻¹`` over ``C_ℓ``."""
        c_basis = self.params.level_basis(level)
        special = self.params.special_basis
        correction = bconv_routine(poly.restrict(special), c_basis)
        diff = sub(poly.restrict(c_basis), correction)
        p_big = self.params.special_product
        return mul_per_limb(diff, [pow(p_big % q, -1, q) for q in c_basis.q_values])

    def decompose(self, poly: RnsPolynomial, level: int) -> list[RnsPolynomial]:
        return [self.mod_up(poly.restrict(g), level) for g in self.params.pieces_at(level)]

    def key_switch(
        self, poly: RnsPolynomial, evk: EvaluationKey, level: int
    ) -> tuple[RnsPolynomial, RnsPolynomial]:
        """Return ``(k0, k1)`` over ``C_ℓ`` with ``k0 + k1·s ≈ poly·s'``."""
        if poly.representation is not Representation.EVALUATION:
            poly = poly.to_evaluation()
        self._require_level(poly.limb_count - 1, level)
        full = self.params.extended_level_basis(level)
        pieces = self.decompose(poly, level)
        acc0 = RnsPolynomial.zeros(full, self.params.ring_degree, Representation.EVALUATION)
        acc1 = acc0.copy()
        for piece, (b_i, a_i) in zip(pieces, evk.pairs, strict=False):
            acc0 = add(acc0, mul(piece, b_i.restrict(full)))
            acc1 = add(acc1, mul(piece, a_i.restrict(full)))
        self.key_switch_count += 1
        logger.debug(f"Key switch with {evk.evk_id} at level {level}: {len(pieces)} pieces")
        return self.mod_down(acc0, level), self.mod_down(acc1, level)

    def apply_switch(self, ct: Ciphertext, evk: EvaluationKey) -> Ciphertext:
        """Switch the key of a whole ciphertext ``(b, a)``; used for identity re-randomization."""
        k0, k1 = self.key_switch(ct.a, evk, ct.level)
        return Ciphertext(add(ct.b, k0), k1, ct.level, ct.scale)

    def hmult(self, ct: Ciphertext, other: Ciphertext, evk: EvaluationKey) -> Ciphertext:
        """Relinearized product at the same level; the caller rescales.

        Raises:
            LevelExhaustedError: At level 0, where the product could never be rescaled.
        """
        self._require_level(ct.level, other.level)
        self._require_scale(ct.scale, other.scale)
        self._require_product_room(ct.level, ct.scale, other.scale)
        d0 = mul(ct.b, other.b)
        d1 = add(mul(ct.a, other.b), mul(other.a, ct.b))
        d2 = mul(ct.a, other.a)
        k0, k1 = self.key_switch(d2, evk, ct.level)
        return Ciphertext(add(d0, k0), add(d1, k1), ct.level, ct.scale * other.scale)

    def hrot(self, ct: Ciphertext, rotation: int, evk: EvaluationKey) -> Ciphertext:
        """Rotate slots left by ``rotation`` using the key for ``ψ_r(s)``."""
        r = self.params.normalize_rotation(rotation)
        if evk.kind is not EvkKind.ROTATION or evk.rotation != r:
            raise ConfigurationError(f"Key {evk.evk_id} cannot rotate by {rotation} (r={r})")
        k0, k1 = self.key_switch(automorphism(ct.a, r), evk, ct.level)
        return Ciphertext(add(automorphism(ct.b, r), k0), k1, ct.level, ct.scale)

    def rotate(self, ct: Ciphertext, rotation: int, keys: KeySet) -> Ciphertext:
        """``hrot`` with key lookup; rotations by a multiple of N/2 are the identity."""
        period = self.params.ring_degree // 2
        if rotation % period == 0:
            return ct
        return self.hrot(ct, rotation, keys.rotation_key(rotation, period))

    # ============= Rescale =============

    def _rescale_poly(self, poly: RnsPolynomial, level: int) -> RnsPolynomial:
        basis = self.params.level_basis(level)
        lower = self.params.level_basis(level - 1)
        top = basis[level]
        last = ntt_values(poly.coeffs[level], top, "inverse")
        extended = extend_centered(last, top.q, lower)
        rows = [ntt_values(extended[i], p, "forward") for i, p in enumerate(lower)]
        correction = RnsPolynomial(np.vstack(rows), lower, Representation.EVALUATION)
        diff = sub(poly.restrict(lower), correction)
        return mul_per_limb(diff, [pow(top.q, -1, q) for q in lower.q_values])

    def hrescale(self, ct: Ciphertext) -> Ciphertext:
        """Drop ``q_ℓ`` and divide by it.

        Raises:
            LevelExhaustedError: At level 0.
        """
        if ct.level == 0:
            raise LevelExhaustedError("Cannot rescale a level-0 ciphertext")
        q_top = self.params.ciphertext_basis[ct.level].q
        return Ciphertext(
            b=self._rescale_poly(ct.b, ct.level),
            a=self._rescale_poly(ct.a, ct.level),
            level=ct.level - 1,
            scale=ct.scale / q_top,
        )


__all__ = ["CkksService", "SlotValues"]
