"""Tests for CKKS keygen, encoding, encryption, arithmetic, key switching and rescaling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats, integers
from test_helpers import random_slots

from services.ckks_service import CkksService
from utils.ckks_types import (
    EncodingRangeError,
    EvkKind,
    LevelExhaustedError,
    LevelMismatchError,
    MissingEvaluationKeyError,
    ScaleMismatchError,
)
from utils.constants import (
    ADDITIVE_NOISE_BUDGET,
    FRESH_NOISE_BUDGET,
    MULT_RELATIVE_ERROR_BOUND,
    ROTATION_NOISE_BUDGET,
)
from utils.errors import ConfigurationError
from utils.rns_poly import (
    Representation,
    RnsPolynomial,
    add,
    crt_compose,
    mul,
    mul_per_limb,
    sub,
)


def _max_error(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


@pytest.fixture
def secret(test_keys):
    return test_keys.secret


def test_params_shape(test_params):
    """test set: L=5, dnum=3 gives alpha=2 and groups of two primes."""
    assert test_params.alpha == 2
    assert len(test_params.ciphertext_basis) == 6
    assert len(test_params.special_basis) == 2
    assert [len(g) for g in test_params.pieces_at(5)] == [2, 2, 2]
    assert [len(g) for g in test_params.pieces_at(2)] == [2, 1]
    assert test_params.q0.bit_length() == 60


def test_encode_decode_roundtrip(ckks, rng):
    values = random_slots(rng, ckks.params.slots)

    decoded = ckks.decode(ckks.encode(values))

    assert _max_error(decoded, values) < 8 * ckks.params.slots / ckks.params.scale


def test_encode_rejects_values_beyond_q0(ckks):
    with pytest.raises(EncodingRangeError):
        ckks.encode(np.full(ckks.params.slots, 2.0**25))


def test_fresh_encryption_noise(ckks, secret, rng):
    values = random_slots(rng, ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(values), secret)

    assert ct.level == ckks.params.max_level
    assert _max_error(ckks.decrypt_values(ct, secret), values) < FRESH_NOISE_BUDGET


def test_additive_operations(ckks, secret, rng):
    m1 = random_slots(rng, ckks.params.slots)
    m2 = random_slots(rng, ckks.params.slots)
    ct1 = ckks.encrypt(ckks.encode(m1), secret)
    ct2 = ckks.encrypt(ckks.encode(m2), secret)

    assert _max_error(ckks.decrypt_values(ckks.hadd(ct1, ct2), secret), m1 + m2) < (
        ADDITIVE_NOISE_BUDGET
    )
    assert _max_error(ckks.decrypt_values(ckks.hsub(ct1, ct2), secret), m1 - m2) < (
        ADDITIVE_NOISE_BUDGET
    )
    assert _max_error(ckks.decrypt_values(ckks.negate(ct1), secret), -m1) < FRESH_NOISE_BUDGET
    assert _max_error(ckks.decrypt_values(ckks.padd(ct1, ckks.encode(m2)), secret), m1 + m2) < (
        ADDITIVE_NOISE_BUDGET
    )
    assert _max_error(ckks.decrypt_values(ckks.cadd(ct1, 0.5), secret), m1 + 0.5) < (
        ADDITIVE_NOISE_BUDGET
    )


def test_plaintext_multiplication_then_rescale(ckks, secret, rng):
    m1 = random_slots(rng, ckks.params.slots)
    m2 = random_slots(rng, ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(m1), secret)

    product = ckks.hrescale(ckks.pmult(ct, ckks.encode(m2)))
    scaled = ckks.hrescale(ckks.cmult(ct, 2.0))

    expected = m1 * m2
    rel = _max_error(ckks.decrypt_values(product, secret), expected) / np.max(np.abs(expected))
    assert rel < MULT_RELATIVE_ERROR_BOUND
    assert _max_error(ckks.decrypt_values(scaled, secret), 2 * m1) < 2.0**-20


def test_hmult_relinearizes_and_rescales(ckks, test_keys, rng):
    m1 = random_slots(rng, ckks.params.slots)
    m2 = random_slots(rng, ckks.params.slots)
    ct1 = ckks.encrypt(ckks.encode(m1), test_keys.secret)
    ct2 = ckks.encrypt(ckks.encode(m2), test_keys.secret)

    product = ckks.hrescale(ckks.hmult(ct1, ct2, test_keys.mult_key()))

    expected = m1 * m2
    decrypted = ckks.decrypt_values(product, test_keys.secret)
    assert product.level == ckks.params.max_level - 1
    assert _max_error(decrypted, expected) / np.max(np.abs(expected)) < MULT_RELATIVE_ERROR_BOUND


@pytest.mark.parametrize("level", [5, 3, 2, 1])
def test_hmult_at_every_level(ckks, test_keys, rng, level):
    """Key switching works with full and partial decomposition groups."""
    m1 = random_slots(rng, ckks.params.slots)
    m2 = random_slots(rng, ckks.params.slots)
    ct1 = ckks.encrypt(ckks.encode(m1, level=level), test_keys.secret)
    ct2 = ckks.encrypt(ckks.encode(m2, level=level), test_keys.secret)

    product = ckks.hmult(ct1, ct2, test_keys.mult_key())
    decrypted = ckks.decrypt_values(product, test_keys.secret)

    assert _max_error(decrypted, m1 * m2) < 2.0**-12


@pytest.mark.parametrize("rotation", [1, 2, 3, -1])
def test_rotation_shifts_slots_left(ckks, test_keys, rng, rotation):
    values = random_slots(rng, ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(values), test_keys.secret)

    rotated = ckks.rotate(ct, rotation, test_keys)

    expected = np.roll(values, -rotation)
    assert _max_error(ckks.decrypt_values(rotated, test_keys.secret), expected) < (
        ROTATION_NOISE_BUDGET
    )


def test_rotation_by_half_ring_degree_is_identity(ckks, test_keys, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots)), test_keys.secret)
    count = ckks.key_switch_count

    assert ckks.rotate(ct, ckks.params.ring_degree // 2, test_keys) is ct
    assert ckks.key_switch_count == count


def test_missing_or_wrong_rotation_key(ckks, test_keys, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots)), test_keys.secret)
    with pytest.raises(MissingEvaluationKeyError):
        ckks.rotate(ct, 5, test_keys)
    with pytest.raises(ConfigurationError):
        ckks.hrot(ct, 2, test_keys.rotations[1])
    with pytest.raises(ConfigurationError):
        ckks.hrot(ct, 1, test_keys.mult_key())


def test_keygen_indexes_rotations_modulo_half_ring(test_params):
    service = CkksService(test_params, rng=np.random.default_rng(1))
    half = test_params.ring_degree // 2

    keys = service.keygen(rotations=(0, 1, 1 + half, -1, half))

    assert sorted(keys.rotations) == [1, half - 1]
    assert keys.rotations[1].kind is EvkKind.ROTATION
    assert keys.rotation_key(-1, half).rotation == half - 1
    assert keys.mult_key().evk_id == "mult"
    assert len(keys.mult_key().pairs) == test_params.dnum
    assert keys.mult_key().limb_count == test_params.max_level + 1 + test_params.alpha


def test_identity_key_switch_preserves_the_message(ckks, secret, rng):
    """Switching from s to s only adds key-switching noise."""
    values = random_slots(rng, ckks.params.slots)
    evk = ckks.generate_switching_key(secret, secret.poly, EvkKind.MULT)
    ct = ckks.encrypt(ckks.encode(values), secret)

    switched = ckks.apply_switch(ct, evk)

    assert _max_error(ckks.decrypt_values(switched, secret), values) < ROTATION_NOISE_BUDGET


def test_decompose_counts_pieces(ckks, test_keys, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots), level=2), test_keys.secret)

    pieces = ckks.decompose(ct.a, 2)

    assert len(pieces) == 2
    assert all(len(p.basis) == 3 + ckks.params.alpha for p in pieces)


def test_rescale_divides_scale_and_drops_a_limb(ckks, secret, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots)), secret)
    q_top = ckks.params.ciphertext_basis[ct.level].q

    rescaled = ckks.hrescale(ct)

    assert rescaled.level == ct.level - 1
    assert rescaled.scale == pytest.approx(ct.scale / q_top)


def test_rescale_at_level_zero_fails(ckks, secret, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots), level=0), secret)
    with pytest.raises(LevelExhaustedError):
        ckks.hrescale(ct)


def test_level_and_scale_mismatches(ckks, secret, rng):
    values = random_slots(rng, ckks.params.slots)
    top = ckks.encrypt(ckks.encode(values), secret)
    low = ckks.encrypt(ckks.encode(values, level=2), secret)
    other_scale = ckks.encrypt(ckks.encode(values, scale=2.0**30), secret)

    with pytest.raises(LevelMismatchError):
        ckks.hadd(top, low)
    with pytest.raises(ScaleMismatchError):
        ckks.hadd(top, other_scale)
    with pytest.raises(LevelMismatchError):
        ckks.drop_to_level(low, 4)

    dropped = ckks.drop_to_level(top, 2)
    assert _max_error(ckks.decrypt_values(ckks.hadd(dropped, low), secret), 2 * values) < (
        ADDITIVE_NOISE_BUDGET
    )


def test_key_switch_counter(ckks, test_keys, rng):
    ct = ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots)), test_keys.secret)

    ckks.rotate(ct, 1, test_keys)
    ckks.hmult(ct, ct, test_keys.mult_key())

    assert ckks.key_switch_count == 2


# ============= Multiplicative depth =============


def test_multiplications_exhaust_every_level(ckks, test_keys, rng):
    values = random_slots(rng, ckks.params.slots)
    ones = np.ones(ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(values), test_keys.secret)

    for _ in range(ckks.params.max_level):
        factor = ckks.encrypt(ckks.encode(ones, scale=ct.scale, level=ct.level), test_keys.secret)
        ct = ckks.hrescale(ckks.hmult(ct, factor, test_keys.mult_key()))

    assert ct.level == 0
    assert _max_error(ckks.decrypt_values(ct, test_keys.secret), values) < 2.0**-10
    with pytest.raises(LevelExhaustedError):
        ckks.hmult(ct, ct, test_keys.mult_key())
    with pytest.raises(LevelExhaustedError):
        ckks.pmult(ct, ckks.encode(ones, scale=ct.scale, level=0))
    with pytest.raises(LevelExhaustedError):
        ckks.cmult(ct, 2.0)


def test_pmult_checks_level_and_product_scale(ckks, secret, rng):
    values = random_slots(rng, ckks.params.slots)
    top = ckks.encrypt(ckks.encode(values), secret)
    low = ckks.encrypt(ckks.encode(values, level=1), secret)
    zeros = np.zeros(ckks.params.slots)

    with pytest.raises(LevelMismatchError):
        ckks.pmult(top, ckks.encode(values, level=2))
    with pytest.raises(ScaleMismatchError):
        ckks.pmult(low, ckks.encode(zeros, scale=2.0**70, level=1))
    with pytest.raises(ScaleMismatchError):
        ckks.cmult(low, 1.0, scale=2.0**70)


# ============= Keys =============


def _centered_rows(poly) -> np.ndarray:
    coeffs = poly.to_coefficient().coeffs.astype(object)
    q = np.array(poly.basis.q_values, dtype=object).reshape(-1, 1)
    return np.where(coeffs > q // 2, coeffs - q, coeffs)


def test_switching_key_satisfies_gadget_identity_on_every_limb(ckks, test_keys):
    """``b_i + a_i·s − G_i·s'`` is the small key error on every prime of D."""
    params = ckks.params
    secret = test_keys.secret
    target = mul(secret.poly, secret.poly)
    for i, (b_i, a_i) in enumerate(test_keys.mult_key().pairs):
        group = set(params.group(i).q_values)
        gadget = [
            params.special_product % q if q in group else 0
            for q in params.extended_basis.q_values
        ]
        residual = sub(add(b_i, mul(a_i, secret.poly)), mul_per_limb(target, gadget))

        rows = _centered_rows(residual)
        assert rows.shape[0] == len(params.extended_basis)
        assert max(abs(int(v)) for v in rows.ravel()) < 12 * params.error_stddev


@settings(max_examples=3, deadline=None)
@given(integers(min_value=0, max_value=2**32 - 1))
def test_keygen_is_deterministic_under_a_seed(test_params, seed):
    first = CkksService(test_params, rng=np.random.default_rng(seed)).keygen(rotations=(1,))
    second = CkksService(test_params, rng=np.random.default_rng(seed)).keygen(rotations=(1,))

    assert first.secret.coefficients == second.secret.coefficients
    pairs = [(first.mult_key(), second.mult_key()), (first.rotations[1], second.rotations[1])]
    for left, right in pairs:
        assert all(b1 == b2 and a1 == a2 for (b1, a1), (b2, a2) in zip(left.pairs, right.pairs))


def _negacyclic(a, b) -> list[int]:
    n = len(a)
    out = [0] * n
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b):
            k = i + j
            if k < n:
                out[k] += int(x) * int(y)
            else:
                out[k - n] -= int(x) * int(y)
    return out


@pytest.mark.parametrize("level", [5, 2])
def test_key_switch_matches_big_integer_identity(boot_params, level):
    """Over Z_Q without RNS: ``k0 + k1·s − poly·s²`` stays small."""
    service = CkksService(boot_params, rng=np.random.default_rng(3))
    keys = service.keygen()
    basis = boot_params.level_basis(level)
    poly = RnsPolynomial.random_uniform(basis, boot_params.ring_degree, np.random.default_rng(4))

    k0, k1 = service.key_switch(poly, keys.mult_key(), level)

    modulus = basis.product
    s = list(keys.secret.coefficients)
    lhs = [int(x) + y for x, y in zip(crt_compose(k0), _negacyclic(crt_compose(k1), s))]
    rhs = _negacyclic(crt_compose(poly, centered=False), _negacyclic(s, s))
    residual = [(x - y) % modulus for x, y in zip(lhs, rhs)]
    residual = [r - modulus if r > modulus // 2 else r for r in residual]
    assert max(abs(r) for r in residual) < 2**16


# ============= Encoding edge values =============


def test_encoding_zeros_gives_the_zero_polynomial(ckks):
    pt = ckks.encode(np.zeros(ckks.params.slots))

    assert pt.poly == RnsPolynomial.zeros(
        ckks.params.level_basis(pt.level), ckks.params.ring_degree, Representation.EVALUATION
    )


@settings(max_examples=25, deadline=None)
@given(floats(min_value=-1.0, max_value=1.0, allow_nan=False))
def test_encoding_a_constant_sets_only_the_constant_term(test_params, value):
    service = CkksService(test_params, rng=np.random.default_rng(0))

    coeffs = crt_compose(service.encode_constant(value, test_params.scale, 1).poly)

    assert abs(int(coeffs[0]) - value * test_params.scale) <= 1
    assert all(int(c) == 0 for c in coeffs[1:])


@settings(max_examples=5, deadline=None)
@given(integers(min_value=0, max_value=2**32 - 1))
def test_encryption_of_zero_decrypts_near_zero(test_params, test_keys, seed):
    service = CkksService(test_params, rng=np.random.default_rng(seed))

    ct = service.encrypt(service.encode(np.zeros(test_params.slots)), test_keys.secret)

    decrypted = service.decrypt_values(ct, test_keys.secret)
    assert float(np.max(np.abs(decrypted))) < FRESH_NOISE_BUDGET


@pytest.mark.parametrize("rotation", [5, 8])
def test_rotation_by_keys_generated_on_demand(ckks, secret, rng, rotation):
    """Rotations by 5 and by n/2 with keys made outside ``keygen``."""
    values = random_slots(rng, ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(values), secret)
    evk = ckks.generate_rotation_key(secret, rotation)

    rotated = ckks.hrot(ct, rotation, evk)

    expected = np.roll(values, -rotation)
    assert _max_error(ckks.decrypt_values(rotated, secret), expected) < ROTATION_NOISE_BUDGET
