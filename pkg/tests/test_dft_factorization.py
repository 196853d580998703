"""Tests for the sparse radix-2^k factorization of the slot DFT."""

import numpy as np
import pytest
from test_helpers import random_slots

from utils.dft_factorization import (
    apply_diagonals,
    apply_reference,
    bit_reversal_permutation,
    butterfly_stage,
    compose,
    conjugate_transpose,
    fold_modulo,
    merged_stages,
    reference_matrix,
)
from utils.errors import ConfigurationError


def to_dense(a, n: int) -> np.ndarray:
    dense = np.zeros((n, n), dtype=np.complex128)
    rows = np.arange(n)
    for s, vec in a.items():
        dense[rows, (rows + s) % n] += vec
    return dense


def test_bit_reversal_permutation():
    assert list(bit_reversal_permutation(8)) == [0, 4, 2, 6, 1, 5, 3, 7]


def test_compose_matches_dense_product(rng):
    n = 16
    a = butterfly_stage(n, 2)
    b = butterfly_stage(n, 1)

    assert np.allclose(to_dense(compose(a, b), n), to_dense(a, n) @ to_dense(b, n))


def test_conjugate_transpose_matches_dense(rng):
    n = 16
    stage = butterfly_stage(n, 3)

    assert np.allclose(to_dense(conjugate_transpose(stage), n), to_dense(stage, n).conj().T)


@pytest.mark.parametrize(("n", "k"), [(16, 1), (16, 2), (16, 4), (64, 3), (64, 2)])
@pytest.mark.parametrize("direction", ["dft", "idft"])
def test_merged_stages_multiply_to_reference(n, k, direction):
    product = np.eye(n, dtype=np.complex128)
    for stage in merged_stages(n, k, direction):
        product = to_dense(stage.diagonals, n) @ product

    assert np.allclose(product, reference_matrix(n, direction))


def test_merged_stage_has_2_pow_k_plus_1_minus_1_diagonals():
    """Merging k stages with stride d yields offsets i*d for |i| < 2^k."""
    n, k = 2**9, 3
    for s, stage in enumerate(merged_stages(n, k, "dft")):
        d = 1 << (k * s)
        assert stage.stride == d
        assert len(stage.diagonals) == 2 ** (k + 1) - 1
        assert sorted(stage.diagonals) == [i * d for i in range(-(2**k) + 1, 2**k)]


def test_idft_runs_strides_in_reverse():
    strides = [stage.stride for stage in merged_stages(64, 2, "idft")]

    assert strides == [16, 4, 1]


def test_fold_modulo_preserves_the_matrix():
    n = 16
    stage = merged_stages(n, 2, "dft")[-1]
    folded = fold_modulo(stage.diagonals, n)

    assert len(folded) == 4
    assert np.allclose(to_dense(folded, n), to_dense(stage.diagonals, n))


def test_apply_reference_roundtrip(rng):
    values = random_slots(rng, 64)

    transformed = apply_reference(values, 3, "idft")
    restored = apply_reference(transformed, 3, "dft")

    assert np.allclose(restored, values)
    assert np.allclose(transformed, reference_matrix(64, "idft") @ values)


def test_apply_diagonals_matches_dense(rng):
    n = 16
    stage = merged_stages(n, 2, "dft")[0]
    values = random_slots(rng, n)

    assert np.allclose(apply_diagonals(stage.diagonals, values), to_dense(stage.diagonals, n) @ values)


def test_merged_stages_rejects_bad_radix():
    with pytest.raises(ConfigurationError):
        merged_stages(64, 4, "dft")
    with pytest.raises(ConfigurationError):
        merged_stages(48, 1, "dft")
    with pytest.raises(ConfigurationError):
        reference_matrix(8, "fft")  # type: ignore[arg-type]


# ============= Relation to the plain DFT =============


@pytest.mark.parametrize(("n", "k"), [(16, 2), (64, 3), (64, 1)])
def test_dft_stages_are_the_plain_dft_after_bit_reversal(rng, n, k):
    """The stages compute ``F·R``: bit-reverse the input, then a textbook DFT."""
    values = random_slots(rng, n)
    perm = bit_reversal_permutation(n)

    assert np.allclose(apply_reference(values[perm], k, "dft"), np.fft.fft(values))
    assert np.allclose(apply_reference(values, k, "idft"), np.fft.ifft(values)[perm])
    assert np.allclose(reference_matrix(n, "dft")[:, perm], np.fft.fft(np.eye(n), axis=0))
