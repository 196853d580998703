"""
H-DFT Service - Encrypted (I)DFT passes used by CKKS bootstrapping.

Executes ``DftPlan`` iterations with either the baseline baby-step/giant-step schedule or
the minimum key-switching (Min-KS) schedule, optionally regenerating every plaintext from
its q0 limb (OF-Limb). Also hosts the pieces of a reference bootstrapping pipeline:
modulus raising and an EvalMod stand-in that works on the decrypted message.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from loguru import logger

from services.ckks_service import CkksService
from utils.ckks_types import (
    Ciphertext,
    EvaluationKey,
    KeySet,
    LevelMismatchError,
    Plaintext,
    SecretKey,
)
from utils.constants import STORED_PLAINTEXT_CACHE_SIZE
from utils.dft_factorization import apply_reference
from utils.dft_plan import (
    BsgsTerm,
    DftPlan,
    EvkUsageLog,
    PlaintextSeed,
    PlanError,
    PlanIteration,
    PlanVariant,
    SeedRangeError,
    build_dft_plan,
)
from utils.errors import ConfigurationError
from utils.ntt import ntt_values
from utils.rns_poly import Representation, RnsPolynomial, extend_centered


@dataclass
class BootstrapResult:
    """Outcome of one reference bootstrapping roundtrip."""

    max_error: float
    raised_level: int
    level_after_idft: int
    level_after_evalmod: int
    level_after_dft: int
    iterations_per_pass: int
    idft_log: EvkUsageLog = field(repr=False)
    dft_log: EvkUsageLog = field(repr=False)

    @property
    def consumed_levels(self) -> int:
        return self.raised_level - self.level_after_dft


class HdftService:
    """Runs encrypted DFT plans on top of a ``CkksService``."""

    def __init__(self, ckks: CkksService):
        """
        Initialize the H-DFT service.

        Args:
            ckks: Scheme service whose parameters every plan must match
        """
        self.ckks = ckks
        self.params = ckks.params
        # seeds hash by identity; the cache holds them, so an id is never reused
        self.stored_plaintext = lru_cache(maxsize=STORED_PLAINTEXT_CACHE_SIZE)(
            self._encode_stored_plaintext
        )

    # ============= Plans and keys =============

    def build_plan(
        self,
        k: int,
        split: tuple[int, int],
        direction: str,
        variant: PlanVariant = "baseline",
        start_level: int | None = None,
        fold_wrapped_diagonals: bool = True,
    ) -> DftPlan:
        """Plan over this service's slot count with seeds encoded for its modulus chain."""
        return build_dft_plan(
            self.params.slots,
            k,
            split,
            direction,  # type: ignore[arg-type]
            variant=variant,
            params=self.params,
            start_level=start_level,
            fold_wrapped_diagonals=fold_wrapped_diagonals,
        )

    def keys_for_plans(
        self,
        secret: SecretKey,
        plans: Iterable[DftPlan],
        keys: KeySet | None = None,
        rng: np.random.Generator | None = None,
    ) -> KeySet:
        """Add every rotation key the plans need to ``keys`` (a fresh set if ``None``)."""
        keys = keys or KeySet(secret=secret, mult=None)
        needed: set[int] = set()
        for plan in plans:
            needed |= plan.required_rotations()
        for r in sorted(needed - set(keys.rotations)):
            keys.rotations[r] = self.ckks.generate_rotation_key(secret, r, rng)
        logger.debug(f"Key set holds {len(keys.rotations)} rotation keys")
        return keys

    # ============= OF-Limb =============

    def of_limb_extend(self, seed: PlaintextSeed, level: int) -> Plaintext:
        """Rebuild the full plaintext at ``level`` from its q0 limb.

        Raises:
            SeedRangeError: If the seed's coefficients may not lift exactly.
        """
        q0 = self.params.ciphertext_basis[0]
        if seed.q0_limb.modulus.q != q0.q:
            raise SeedRangeError(f"Seed {seed.tag!r} is not stored modulo q0")
        if 2 * seed.magnitude >= q0.q:
            raise SeedRangeError(f"Seed {seed.tag!r} magnitude is not below q0/2")
        basis = self.params.level_basis(level)
        extended = extend_centered(seed.q0_limb.values, q0.q, basis)
        rows = [ntt_values(extended[i], p, "forward") for i, p in enumerate(basis)]
        poly = RnsPolynomial(np.vstack(rows), basis, Representation.EVALUATION)
        return Plaintext(poly=poly, scale=seed.scale, level=level)

    def _encode_stored_plaintext(self, seed: PlaintextSeed, level: int) -> Plaintext:
        """Full-width plaintext as a non-OF-Limb implementation keeps it in memory."""
        poly = RnsPolynomial.from_integers(
            seed.centered_coefficients(), self.params.level_basis(level)
        ).to_evaluation()
        return Plaintext(poly=poly, scale=seed.scale, level=level)

    def _term_plaintext(self, term: BsgsTerm, level: int, oflimb: bool) -> Plaintext:
        if term.seed is None:
            raise PlanError("Plan carries no plaintext seeds; build it with parameters")
        if oflimb:
            return self.of_limb_extend(term.seed, level)
        return self.stored_plaintext(term.seed, level)

    # ============= Rotations =============

    def _hrot_logged(
        self,
        ct: Ciphertext,
        rotation: int,
        evk: EvaluationKey | None,
        log: EvkUsageLog | None,
        iteration: int,
    ) -> Ciphertext:
        if rotation % (self.params.ring_degree // 2) == 0:
            return ct
        if evk is None:
            raise PlanError(f"No evaluation key supplied for rotation {rotation}")
        if log is not None:
            log.record(iteration, rotation, evk.evk_id)
        return self.ckks.hrot(ct, rotation, evk)

    def minks_rotations(
        self,
        ct: Ciphertext,
        rotation: int,
        count: int,
        evk: EvaluationKey | None,
        log: EvkUsageLog | None = None,
        iteration: int = 0,
    ) -> list[Ciphertext]:
        """Element ``j`` is ``ct`` rotated by ``(j+1)·rotation``, all through one key."""
        out: list[Ciphertext] = []
        current = ct
        for _ in range(count):
            current = self._hrot_logged(current, rotation, evk, log, iteration)
            out.append(current)
        return out

    def minks_rotate_accumulate(
        self,
        cts: Sequence[Ciphertext | None],
        rotation: int,
        evk: EvaluationKey | None,
        log: EvkUsageLog | None = None,
        iteration: int = 0,
    ) -> Ciphertext:
        """``Σ_g HRot(cts[g], g·rotation)`` by Horner's rule.

        Raises:
            LevelMismatchError: If the inputs sit at different levels.
        """
        present = [ct for ct in cts if ct is not None]
        if not present:
            raise PlanError("Nothing to accumulate")
        if len({ct.level for ct in present}) > 1:
            raise LevelMismatchError("Accumulated ciphertexts must share a level")
        acc: Ciphertext | None = None
        for ct in reversed(cts):
            if acc is not None:
                acc = self._hrot_logged(acc, rotation, evk, log, iteration)
            if ct is not None:
                acc = ct if acc is None else self.ckks.hadd(acc, ct)
        assert acc is not None  # nosec B101
        return acc

    # ============= Passes =============

    def _check_plan(self, ct: Ciphertext, plan: DftPlan) -> Ciphertext:
        if plan.slots != self.params.slots or plan.ring_degree != self.params.ring_degree:
            raise PlanError("Plan was built for different parameters")
        if ct.level < plan.consumed_levels:
            raise PlanError(
                f"Ciphertext level {ct.level} is below the {plan.consumed_levels} levels needed"
            )
        if ct.level < plan.start_level:
            raise PlanError(f"Plan starts at level {plan.start_level}, ciphertext is at {ct.level}")
        if ct.level > plan.start_level:
            ct = self.ckks.drop_to_level(ct, plan.start_level)
        return ct

    def _inner_products(
        self,
        babies: dict[int, Ciphertext],
        it: PlanIteration,
        oflimb: bool,
    ) -> list[Ciphertext | None]:
        inner: list[Ciphertext | None] = []
        for g in range(it.giant_count):
            acc: Ciphertext | None = None
            for term in it.terms_for_giant(g):
                pt = self._term_plaintext(term, it.level, oflimb)
                prod = self.ckks.pmult(babies[term.baby], pt)
                acc = prod if acc is None else self.ckks.hadd(acc, prod)
            inner.append(acc)
        return inner

    def _baseline_iteration(
        self,
        ct: Ciphertext,
        it: PlanIteration,
        split: tuple[int, int],
        keys: KeySet,
        oflimb: bool,
        log: EvkUsageLog | None,
    ) -> Ciphertext:
        period = self.params.ring_degree // 2
        d = it.stride
        b_step = (1 << split[0]) * d

        def key(r: int) -> EvaluationKey | None:
            return None if r % period == 0 else keys.rotation_key(r, period)

        shifted = self._hrot_logged(ct, it.pre_rotation, key(it.pre_rotation), log, it.index)
        babies = {0: shifted}
        for b in it.babies:
            if b > 0:
                babies[b] = self._hrot_logged(shifted, b * d, key(b * d), log, it.index)
        total: Ciphertext | None = None
        for g, inner in enumerate(self._inner_products(babies, it, oflimb)):
            if inner is None:
                continue
            moved = self._hrot_logged(inner, g * b_step, key(g * b_step), log, it.index)
            total = moved if total is None else self.ckks.hadd(total, moved)
        assert total is not None  # nosec B101
        return total

    def _minks_iteration(
        self,
        ct: Ciphertext,
        it: PlanIteration,
        split: tuple[int, int],
        keys: KeySet,
        oflimb: bool,
        log: EvkUsageLog | None,
    ) -> Ciphertext:
        period = self.params.ring_degree // 2
        d = it.stride
        b_step = (1 << split[0]) * d

        def key(r: int) -> EvaluationKey | None:
            return None if r % period == 0 else keys.rotation_key(r, period)

        chain = self.minks_rotations(ct, d, max(it.babies), key(d), log, it.index)
        babies = {0: ct, **{j + 1: c for j, c in enumerate(chain)}}
        inner = self._inner_products(babies, it, oflimb)
        return self.minks_rotate_accumulate(inner, b_step, key(b_step), log, it.index)

    def _run(
        self,
        ct: Ciphertext,
        plan: DftPlan,
        keys: KeySet,
        oflimb: bool,
        log: EvkUsageLog | None,
    ) -> Ciphertext:
        current = self._check_plan(ct, plan)
        step = self._baseline_iteration if plan.variant == "baseline" else self._minks_iteration
        before = self.ckks.key_switch_count
        for it in plan.iterations:
            if current.level != it.level:
                raise LevelMismatchError(f"Iteration {it.index} expects level {it.level}")
            product = step(current, it, plan.split, keys, oflimb, log)
            current = self.ckks.hrescale(product)
            logger.debug(
                f"{plan.direction} iteration {it.index}: stride {it.stride}, "
                f"{len(it.terms)} terms, now at level {current.level}"
            )
        logger.info(
            f"H-{plan.direction.upper()} ({plan.variant}{', OF-Limb' if oflimb else ''}) done: "
            f"{self.ckks.key_switch_count - before} key switches, level {current.level}"
        )
        return current

    def hdft_baseline(
        self,
        ct: Ciphertext,
        plan: DftPlan,
        keys: KeySet,
        oflimb: bool = False,
        log: EvkUsageLog | None = None,
    ) -> Ciphertext:
        """Apply a baseline plan: one key per distinct rotation amount in every iteration.

        Raises:
            PlanError: If the plan is not a baseline plan or the level is insufficient.
            MissingEvaluationKeyError: If a needed rotation key is absent.
        """
        if plan.variant != "baseline":
            raise PlanError(f"Expected a baseline plan, got {plan.variant}")
        return self._run(ct, plan, keys, oflimb, log)

    def hdft_minks(
        self,
        ct: Ciphertext,
        plan: DftPlan,
        keys: KeySet,
        oflimb: bool = False,
        log: EvkUsageLog | None = None,
    ) -> Ciphertext:
        """Apply a Min-KS plan: two rotation keys per iteration, reused along chains."""
        if plan.variant != "minks":
            raise PlanError(f"Expected a minks plan, got {plan.variant}")
        return self._run(ct, plan, keys, oflimb, log)

    def run(
        self,
        ct: Ciphertext,
        plan: DftPlan,
        keys: KeySet,
        oflimb: bool = False,
        log: EvkUsageLog | None = None,
    ) -> Ciphertext:
        if plan.variant == "baseline":
            return self.hdft_baseline(ct, plan, keys, oflimb, log)
        return self.hdft_minks(ct, plan, keys, oflimb, log)

    # ============= Bootstrapping pieces =============

    def mod_raise(self, ct: Ciphertext) -> Ciphertext:
        """Reinterpret a level-0 ciphertext modulo the full chain.

        The result decrypts to ``m + q0·I`` for a small integer polynomial ``I``.
        """
        if ct.level != 0:
            raise LevelMismatchError(f"Modulus raising expects level 0, got {ct.level}")
        q0 = self.params.ciphertext_basis[0]
        top = self.params.level_basis(self.params.max_level)

        def lift(poly: RnsPolynomial) -> RnsPolynomial:
            coeffs = ntt_values(poly.coeffs[0], q0, "inverse")
            extended = extend_centered(coeffs, q0.q, top)
            rows = [ntt_values(extended[i], p, "forward") for i, p in enumerate(top)]
            return RnsPolynomial(np.vstack(rows), top, Representation.EVALUATION)

        return Ciphertext(lift(ct.b), lift(ct.a), self.params.max_level, ct.scale)

    def reference_eval_mod(self, ct: Ciphertext, secret: SecretKey, k: int) -> Ciphertext:
        """Remove the ``q0·I`` term after H-IDFT by working on the decrypted message.

        Undoes the IDFT, reduces the coefficients centered modulo q0, re-applies the
        IDFT and re-encrypts at the same level and scale.
        """
        if self.params.slots != self.params.ring_degree // 2:
            raise ConfigurationError("Reference EvalMod needs fully packed slots (n = N/2)")
        slots = apply_reference(self.ckks.decrypt_values(ct, secret), k, "dft")
        coeffs = self.ckks.encoder.to_coefficients(slots) * ct.scale
        q0 = float(self.params.q0)
        reduced = coeffs - q0 * np.rint(coeffs / q0)
        message = self.ckks.encoder.to_slots(reduced / ct.scale)
        restored = apply_reference(message, k, "idft")
        return self.ckks.encrypt(self.ckks.encode(restored, ct.scale, ct.level), secret)

    def bootstrap_reference_roundtrip(
        self,
        values: np.ndarray,
        keys: KeySet,
        k: int,
        split: tuple[int, int],
        variant: PlanVariant = "baseline",
        oflimb: bool = False,
    ) -> BootstrapResult:
        """Encrypt at level 0, raise, run H-IDFT, reference EvalMod, then H-DFT.

        Raises:
            ConfigurationError: If slots are not fully packed or no secret key is present.
        """
        if self.params.slots != self.params.ring_degree // 2:
            raise ConfigurationError("Bootstrapping roundtrip needs fully packed slots (n = N/2)")
        if keys.secret is None:
            raise ConfigurationError("Bootstrapping roundtrip needs the secret key")
        secret = keys.secret
        top = self.params.max_level
        idft_plan = self.build_plan(k, split, "idft", variant, start_level=top)
        dft_start = top - idft_plan.iteration_count
        dft_plan = self.build_plan(k, split, "dft", variant, start_level=dft_start)
        self.keys_for_plans(secret, (idft_plan, dft_plan), keys)

        fresh = self.ckks.encrypt(self.ckks.encode(values, level=0), secret)
        raised = self.mod_raise(fresh)
        idft_log, dft_log = EvkUsageLog(), EvkUsageLog()
        after_idft = self.run(raised, idft_plan, keys, oflimb, idft_log)
        after_mod = self.reference_eval_mod(after_idft, secret, k)
        after_dft = self.run(after_mod, dft_plan, keys, oflimb, dft_log)

        recovered = self.ckks.decrypt_values(after_dft, secret)
        max_error = float(np.max(np.abs(recovered - np.asarray(values))))
        logger.info(
            f"Bootstrap roundtrip: max error {max_error:.3e}, "
            f"level {raised.level} -> {after_dft.level}"
        )
        return BootstrapResult(
            max_error=max_error,
            raised_level=raised.level,
            level_after_idft=after_idft.level,
            level_after_evalmod=after_mod.level,
            level_after_dft=after_dft.level,
            iterations_per_pass=idft_plan.iteration_count,
            idft_log=idft_log,
            dft_log=dft_log,
        )


__all__ = ["BootstrapResult", "HdftService"]
