"""Homomorphic (I)DFT plans: BSGS-regrouped diagonals, OF-Limb seeds and evk usage logs.

Each iteration multiplies the slot vector by one merged stage whose diagonals sit at
offsets ``i·d`` (``d`` the iteration stride). A term with diagonal ``i`` is realized
through the rotation ``u·d`` with ``u = i + o = g·B + b``:

* baseline: the input is pre-rotated by ``-2^k·d`` and ``o = 2^k``, so every iteration
  leaves the slot order untouched;
* minks: no pre-rotation; ``o = 2^k`` for the stride-1 iteration and ``2^k - 1`` for the
  others. The leftover rotation ``o·d`` is carried into the next iteration's constants and
  the total over a pass is ``n ≡ 0``.

In the iteration whose offsets wrap around (``2^k·d = n``) offsets that agree modulo ``n``
may be folded into a single diagonal, leaving ``2^k`` terms and no pre-rotation.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from utils.ckks_types import CkksParams
from utils.dft_factorization import DftDirection, MergedStage, fold_modulo, merged_stages
from utils.encoding import SlotEncoder
from utils.errors import CkksError, ConfigurationError, ScheduleError
from utils.modular import PrimeModulus, to_centered, to_residues
from utils.ntt import Limb

PlanVariant = Literal["baseline", "minks"]


class SeedRangeError(CkksError):
    """Raised when a plaintext seed cannot be lifted exactly from its q0 limb."""


class PlanError(CkksError):
    """Raised for invalid radix splits or plans that do not fit the ciphertext level."""


# ============= Plaintext seeds =============


@dataclass(frozen=True, eq=False)
class PlaintextSeed:
    """Coefficient-form q0 limb of a plaintext plus the magnitude of its true coefficients."""

    q0_limb: Limb
    scale: float
    tag: str
    magnitude: int

    def __post_init__(self) -> None:
        if 2 * self.magnitude >= self.q0_limb.modulus.q:
            raise SeedRangeError(
                f"Seed {self.tag!r} magnitude {self.magnitude} is not below q0/2"
            )

    @classmethod
    def from_integers(
        cls, coeffs: np.ndarray, modulus: PrimeModulus, scale: float, tag: str
    ) -> PlaintextSeed:
        """Store signed integer coefficients through their q0 residues.

        Raises:
            SeedRangeError: If any ``|c| >= q0/2``.
        """
        ints = np.asarray(coeffs, dtype=object)
        magnitude = int(max((abs(int(c)) for c in ints), default=0))
        if 2 * magnitude >= modulus.q:
            raise SeedRangeError(f"Seed {tag!r} coefficient {magnitude} is not below q0/2")
        return cls(
            q0_limb=Limb(to_residues(ints, modulus.q), modulus),
            scale=scale,
            tag=tag,
            magnitude=magnitude,
        )

    def centered_coefficients(self) -> np.ndarray:
        return to_centered(self.q0_limb.values, self.q0_limb.modulus.q)


# ============= Plan structure =============


@dataclass(frozen=True, eq=False)
class BsgsTerm:
    """One regrouped diagonal: plaintext ``Q_{g,b}`` applied to baby step ``b`` of giant ``g``."""

    offset: int
    giant: int
    baby: int
    values: np.ndarray | None = None
    seed: PlaintextSeed | None = None


@dataclass(frozen=True, eq=False)
class PlanIteration:
    index: int
    stride: int
    level: int
    wraps: bool
    folded: bool
    pre_rotation: int
    residue_in: int
    residue_out: int
    baby_count: int
    giant_count: int
    raw_diagonal_count: int
    terms: tuple[BsgsTerm, ...]

    @property
    def babies(self) -> list[int]:
        return sorted({t.baby for t in self.terms})

    @property
    def giants(self) -> list[int]:
        return sorted({t.giant for t in self.terms})

    def terms_for_giant(self, giant: int) -> list[BsgsTerm]:
        return [t for t in self.terms if t.giant == giant]


@dataclass(frozen=True, eq=False)
class DftPlan:
    slots: int
    radix_exponent: int
    split: tuple[int, int]
    direction: DftDirection
    variant: PlanVariant
    ring_degree: int
    start_level: int
    fold_wrapped_diagonals: bool
    iterations: tuple[PlanIteration, ...]

    @property
    def iteration_count(self) -> int:
        return len(self.iterations)

    @property
    def consumed_levels(self) -> int:
        return len(self.iterations)

    @property
    def rotation_period(self) -> int:
        return self.ring_degree // 2

    def rotation_schedule(self) -> list[tuple[int, int]]:
        """``(iteration, rotation)`` pairs in the order execution performs them."""
        schedule: list[tuple[int, int]] = []
        period = self.rotation_period
        for it in self.iterations:
            b_step = (1 << self.split[0]) * it.stride
            if self.variant == "baseline":
                amounts = [it.pre_rotation] if it.pre_rotation % period else []
                amounts += [b * it.stride for b in it.babies if b > 0]
                amounts += [g * b_step for g in it.giants if g > 0]
            else:
                amounts = [it.stride] * max(it.babies)
                amounts += [b_step] * (max(it.giants))
            schedule.extend((it.index, a) for a in amounts if a % period)
        return schedule

    def required_rotations(self) -> set[int]:
        period = self.rotation_period
        return {amount % period for _, amount in self.rotation_schedule()}

    @property
    def hrot_count(self) -> int:
        return len(self.rotation_schedule())

    @property
    def pmult_count(self) -> int:
        return sum(len(it.terms) for it in self.iterations)

    def seeds(self) -> Iterator[PlaintextSeed]:
        for it in self.iterations:
            for term in it.terms:
                if term.seed is not None:
                    yield term.seed


# ============= Evk usage log =============


@dataclass(frozen=True)
class EvkUsage:
    iteration: int
    rotation: int
    evk_id: str
    reused: bool


@dataclass
class EvkUsageLog:
    """Ordered record of evaluation-key uses within one pass."""

    entries: list[EvkUsage] = field(default_factory=list)
    _loaded: set[str] = field(default_factory=set, repr=False)

    HEADER = "# evk-usage v1"

    def record(self, iteration: int, rotation: int, evk_id: str) -> EvkUsage:
        entry = EvkUsage(iteration, rotation, evk_id, reused=evk_id in self._loaded)
        self._loaded.add(evk_id)
        self.entries.append(entry)
        return entry

    def loads(self) -> list[EvkUsage]:
        return [e for e in self.entries if not e.reused]

    def reuses(self) -> list[EvkUsage]:
        return [e for e in self.entries if e.reused]

    def distinct_per_iteration(self) -> dict[int, set[str]]:
        out: dict[int, set[str]] = {}
        for e in self.entries:
            out.setdefault(e.iteration, set()).add(e.evk_id)
        return out

    def to_text(self) -> str:
        lines = [self.HEADER]
        lines += [
            f"{e.iteration} {e.rotation} {e.evk_id} {'reuse' if e.reused else 'load'}"
            for e in self.entries
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> EvkUsageLog:
        """Parse ``to_text`` output, re-deriving and checking every load/reuse flag.

        Raises:
            ScheduleError: On malformed lines or flags that contradict the load order.
        """
        log = cls()
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != cls.HEADER:
            raise ScheduleError("Evk usage log is missing its header")
        for number, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if len(parts) != 4 or parts[3] not in ("load", "reuse"):
                raise ScheduleError(f"Malformed evk usage line {number}: {line!r}")
            entry = log.record(int(parts[0]), int(parts[1]), parts[2])
            if entry.reused != (parts[3] == "reuse"):
                raise ScheduleError(f"Line {number} flag contradicts the load order: {line!r}")
        return log

    @classmethod
    def from_schedule(cls, schedule: Iterable[tuple[int, int]], period: int) -> EvkUsageLog:
        log = cls()
        for iteration, amount in schedule:
            log.record(iteration, amount, f"rot:{amount % period}")
        return log


# ============= Plan builder =============


def _rot(values: np.ndarray, amount: int) -> np.ndarray:
    """Slot rotation matching HRot: left shift by ``amount``."""
    return np.roll(values, -amount)


def _check_split(n: int, k: int, split: tuple[int, int]) -> int:
    if n < 2 or n & (n - 1):
        raise PlanError(f"Slot count must be a power of two, got {n}")
    log_n = n.bit_length() - 1
    k1, k2 = split
    if k < 1 or log_n % k:
        raise PlanError(f"Radix exponent k={k} must divide log2(n)={log_n}")
    if k1 < 1 or k2 < 1 or k1 + k2 != k + 1:
        raise PlanError(f"Split ({k1}, {k2}) must be positive with k1 + k2 = k + 1 = {k + 1}")
    return log_n // k


def build_plan_from_stages(
    stages: list[MergedStage],
    n: int,
    k: int,
    split: tuple[int, int],
    direction: DftDirection,
    variant: PlanVariant = "baseline",
    params: CkksParams | None = None,
    start_level: int | None = None,
    ring_degree: int | None = None,
    fold_wrapped_diagonals: bool = True,
) -> DftPlan:
    """Regroup merged stages for BSGS; encode seeds when ``params`` is given.

    Raises:
        PlanError: On invalid splits or when the plan needs more levels than available.
    """
    if variant not in ("baseline", "minks"):
        raise PlanError(f"Unknown plan variant: {variant}")
    iterations_expected = _check_split(n, k, split)
    if len(stages) != iterations_expected:
        raise PlanError(f"Expected {iterations_expected} stages, got {len(stages)}")
    radix = 1 << k
    baby_count = 1 << split[0]

    encoder: SlotEncoder | None = None
    if params is not None:
        if params.slots != n:
            raise PlanError(f"Plan has {n} slots but parameters use {params.slots}")
        ring_degree = params.ring_degree
        start_level = params.max_level if start_level is None else start_level
        encoder = SlotEncoder(params.ring_degree, params.slots)
    ring_degree = ring_degree or 2 * n
    start_level = len(stages) if start_level is None else start_level
    if start_level < len(stages):
        raise PlanError(f"Plan needs {len(stages)} levels, start level is {start_level}")

    residue = 0
    built: list[PlanIteration] = []
    for index, stage in enumerate(stages):
        d = stage.stride
        level = start_level - index
        wraps = radix * d == n
        folded = wraps and fold_wrapped_diagonals
        raw_count = len(stage.diagonals)

        source = fold_modulo(stage.diagonals, n) if folded else stage.diagonals
        diagonals = {offset // d: vec for offset, vec in source.items()}

        if variant == "baseline":
            pre = 0 if folded else -radix * d
            shift = 0 if folded else radix
        else:
            pre = 0
            shift = radix if d == 1 else radix - 1
        residue_out = (residue + pre + shift * d) % n

        terms = []
        for i in sorted(diagonals):
            u = (i + shift) % radix if folded else i + shift
            if u < 0:
                raise PlanError(f"Negative rotation index {u} for offset {i}")
            giant, baby = divmod(u, baby_count)
            vec = diagonals[i]
            values = _rot(vec, residue_out - giant * baby_count * d)
            seed = None
            if encoder is not None and params is not None:
                if level < 1:
                    raise PlanError("H-(I)DFT iterations need level >= 1 to rescale")
                q_level = params.ciphertext_basis[level]
                seed = PlaintextSeed.from_integers(
                    encoder.scaled_integers(values, float(q_level.q)),
                    params.ciphertext_basis[0],
                    float(q_level.q),
                    tag=f"{direction}:{index}:{giant}:{baby}",
                )
            terms.append(BsgsTerm(i, giant, baby, values=values, seed=seed))

        giant_count = max(t.giant for t in terms) + 1
        built.append(
            PlanIteration(
                index=index,
                stride=d,
                level=level,
                wraps=wraps,
                folded=folded,
                pre_rotation=pre,
                residue_in=residue,
                residue_out=residue_out,
                baby_count=baby_count,
                giant_count=giant_count,
                raw_diagonal_count=raw_count,
                terms=tuple(terms),
            )
        )
        residue = residue_out

    if residue % n:
        raise PlanError(f"Rotation residue {residue} does not cancel over the pass")
    return DftPlan(
        slots=n,
        radix_exponent=k,
        split=split,
        direction=direction,
        variant=variant,
        ring_degree=ring_degree,
        start_level=start_level,
        fold_wrapped_diagonals=fold_wrapped_diagonals,
        iterations=tuple(built),
    )


def build_dft_plan(
    n: int,
    k: int,
    split: tuple[int, int],
    direction: DftDirection,
    variant: PlanVariant = "baseline",
    params: CkksParams | None = None,
    start_level: int | None = None,
    ring_degree: int | None = None,
    fold_wrapped_diagonals: bool = True,
) -> DftPlan:
    """Factorize the (I)DFT into ``log_{2^k} n`` stages and regroup them for BSGS."""
    _check_split(n, k, split)
    try:
        stages = merged_stages(n, k, direction)
    except ConfigurationError as exc:
        raise PlanError(str(exc)) from exc
    return build_plan_from_stages(
        stages,
        n,
        k,
        split,
        direction,
        variant=variant,
        params=params,
        start_level=start_level,
        ring_degree=ring_degree,
        fold_wrapped_diagonals=fold_wrapped_diagonals,
    )


__all__ = [
    "BsgsTerm",
    "DftPlan",
    "EvkUsage",
    "EvkUsageLog",
    "PlanError",
    "PlanIteration",
    "PlanVariant",
    "PlaintextSeed",
    "SeedRangeError",
    "build_dft_plan",
    "build_plan_from_stages",
]
