"""Tests for H-(I)DFT plans: BSGS regrouping, rotation schedules, seeds and usage logs."""

import numpy as np
import pytest
from test_helpers import random_slots

from utils.dft_factorization import apply_reference
from utils.dft_plan import (
    DftPlan,
    EvkUsageLog,
    PlaintextSeed,
    PlanError,
    SeedRangeError,
    build_dft_plan,
)
from utils.errors import ScheduleError


def _simulate(plan: DftPlan, values: np.ndarray) -> np.ndarray:
    """Run a plan on clear slots with the same rotations the encrypted pass performs."""
    x = np.asarray(values, dtype=np.complex128)
    for it in plan.iterations:
        b_step = (1 << plan.split[0]) * it.stride
        shifted = np.roll(x, -it.pre_rotation)
        out = np.zeros_like(x)
        for term in it.terms:
            baby = np.roll(shifted, -term.baby * it.stride)
            out += np.roll(term.values * baby, -term.giant * b_step)
        x = out
    return x


@pytest.fixture(scope="module")
def ark_plans():
    """n = 2^15, k = 5, split (3, 3) plans for both directions and variants."""
    n = 2**15
    return {
        (direction, variant): build_dft_plan(n, 5, (3, 3), direction, variant=variant)
        for direction in ("idft", "dft")
        for variant in ("baseline", "minks")
    }


# ============= Clear-slot correctness =============


@pytest.mark.parametrize(
    ("n", "k", "split"),
    [(16, 2, (1, 2)), (16, 2, (2, 1)), (16, 1, (1, 1)), (64, 3, (2, 2)), (64, 2, (1, 2))],
)
@pytest.mark.parametrize("direction", ["idft", "dft"])
@pytest.mark.parametrize("variant", ["baseline", "minks"])
@pytest.mark.parametrize("fold", [True, False])
def test_plan_reproduces_reference_transform(n, k, split, direction, variant, fold, rng):
    plan = build_dft_plan(n, k, split, direction, variant=variant, fold_wrapped_diagonals=fold)
    values = random_slots(rng, n)

    assert np.allclose(_simulate(plan, values), apply_reference(values, k, direction))


@pytest.mark.parametrize("variant", ["baseline", "minks"])
def test_rotation_residue_cancels_over_the_pass(variant):
    plan = build_dft_plan(64, 2, (1, 2), "idft", variant=variant)

    assert plan.iterations[0].residue_in == 0
    for prev, nxt in zip(plan.iterations, plan.iterations[1:], strict=False):
        assert nxt.residue_in == prev.residue_out
    assert plan.iterations[-1].residue_out % 64 == 0


def test_baseline_keeps_slot_order_after_every_iteration():
    plan = build_dft_plan(64, 2, (1, 2), "dft", variant="baseline")

    assert all(it.residue_out == 0 for it in plan.iterations)


def test_minks_leaves_one_rotation_per_iteration():
    plan = build_dft_plan(16, 2, (1, 2), "idft", variant="minks")

    assert [it.residue_out for it in plan.iterations] == [12, 0]
    assert all(it.pre_rotation == 0 for it in plan.iterations)


# ============= Counts at the published plan shape =============


def test_baseline_idft_counts(ark_plans):
    """Folded wrap iteration plus two full iterations: 10/15/15 HRots, 32/63/63 PMults."""
    plan = ark_plans[("idft", "baseline")]
    per_iteration = [
        sum(1 for i, _ in plan.rotation_schedule() if i == it.index) for it in plan.iterations
    ]

    assert [it.stride for it in plan.iterations] == [1024, 32, 1]
    assert per_iteration == [10, 15, 15]
    assert plan.hrot_count == 40
    assert [len(it.terms) for it in plan.iterations] == [32, 63, 63]
    assert plan.pmult_count == 158
    assert [it.raw_diagonal_count for it in plan.iterations] == [63, 63, 63]
    assert plan.iterations[0].folded and not plan.iterations[1].folded


def test_unfolded_plan_keeps_every_diagonal():
    plan = build_dft_plan(2**15, 5, (3, 3), "idft", fold_wrapped_diagonals=False)

    assert plan.pmult_count == 189
    assert plan.hrot_count == 44


def test_minks_needs_two_keys_per_iteration(ark_plans):
    plan = ark_plans[("idft", "minks")]
    log = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)

    assert plan.hrot_count == 38
    assert all(len(ids) == 2 for ids in log.distinct_per_iteration().values())
    assert len(log.loads()) == 6
    assert plan.required_rotations() == {1024, 8192, 32, 256, 1, 8}


@pytest.mark.parametrize(
    ("direction", "loads"), [("idft", [10, 14, 14]), ("dft", [15, 14, 9])]
)
def test_baseline_loads_count_cross_iteration_reuse(ark_plans, direction, loads):
    plan = ark_plans[(direction, "baseline")]
    log = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)

    per_iteration = [sum(1 for e in log.loads() if e.iteration == i) for i in range(3)]
    assert per_iteration == loads


def test_giant_step_equal_to_n_is_skipped():
    """With k1 = k the wrap iteration's giant rotation B*d is a multiple of n."""
    plan = build_dft_plan(16, 2, (2, 1), "idft", variant="minks")
    wrap = plan.iterations[0]

    assert wrap.giants == [0]
    assert {amount for i, amount in plan.rotation_schedule() if i == 0} == {4}


def test_small_schedules():
    baseline = build_dft_plan(16, 2, (1, 2), "idft")
    minks = build_dft_plan(16, 2, (1, 2), "idft", variant="minks")

    assert baseline.rotation_schedule() == [(0, 4), (0, 8), (1, -4), (1, 1), (1, 2), (1, 4), (1, 6)]
    assert minks.rotation_schedule() == [(0, 4), (0, 8), (1, 1), (1, 2), (1, 2), (1, 2)]
    assert baseline.pmult_count == minks.pmult_count == 11


# ============= Validation =============


def test_invalid_splits_and_levels(test_params):
    with pytest.raises(PlanError):
        build_dft_plan(16, 2, (2, 2), "idft")
    with pytest.raises(PlanError):
        build_dft_plan(16, 3, (2, 2), "idft")
    with pytest.raises(PlanError):
        build_dft_plan(16, 1, (1, 1), "idft", start_level=3)
    with pytest.raises(PlanError):
        build_dft_plan(64, 2, (1, 2), "idft", params=test_params)
    with pytest.raises(PlanError):
        build_dft_plan(16, 2, (1, 2), "idft", variant="fast")  # type: ignore[arg-type]


def test_plan_levels_descend_from_start_level(test_params):
    plan = build_dft_plan(16, 2, (1, 2), "idft", params=test_params)

    assert plan.start_level == test_params.max_level
    assert [it.level for it in plan.iterations] == [5, 4]
    assert plan.ring_degree == test_params.ring_degree


# ============= Seeds =============


def test_seeds_cover_every_term_at_the_iteration_scale(test_params):
    plan = build_dft_plan(16, 2, (1, 2), "dft", params=test_params, start_level=3)
    seeds = list(plan.seeds())

    assert len(seeds) == plan.pmult_count
    for it in plan.iterations:
        q_level = test_params.ciphertext_basis[it.level].q
        assert all(t.seed.scale == float(q_level) for t in it.terms)
        assert all(2 * t.seed.magnitude < test_params.q0 for t in it.terms)


def test_seed_roundtrips_signed_coefficients(test_params):
    q0 = test_params.ciphertext_basis[0]
    coeffs = np.array([3, -3, 0, 2**40] + [0] * (test_params.ring_degree - 4), dtype=object)

    seed = PlaintextSeed.from_integers(coeffs, q0, 2.0**40, "t")

    assert list(seed.centered_coefficients()) == list(coeffs)
    assert seed.magnitude == 2**40


def test_seed_rejects_coefficients_beyond_half_q0(test_params):
    q0 = test_params.ciphertext_basis[0]
    coeffs = np.zeros(test_params.ring_degree, dtype=object)
    coeffs[0] = q0.q // 2 + 1
    with pytest.raises(SeedRangeError):
        PlaintextSeed.from_integers(coeffs, q0, 1.0, "too-big")


# ============= Usage log =============


def test_usage_log_text_roundtrip(ark_plans):
    plan = ark_plans[("dft", "baseline")]
    log = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)

    text = log.to_text()
    parsed = EvkUsageLog.from_text(text)

    assert text.startswith(EvkUsageLog.HEADER)
    assert parsed.to_text() == text
    assert len(parsed.reuses()) == plan.hrot_count - len(parsed.loads())


@pytest.mark.parametrize(
    "text",
    [
        "0 4 rot:4 load\n",
        "# evk-usage v1\n0 4 rot:4\n",
        "# evk-usage v1\n0 4 rot:4 reuse\n",
        "# evk-usage v1\n0 4 rot:4 load\n1 4 rot:4 load\n",
        "# evk-usage v1\n0 4 rot:4 fetch\n",
    ],
)
def test_usage_log_rejects_malformed_text(text):
    with pytest.raises(ScheduleError):
        EvkUsageLog.from_text(text)
