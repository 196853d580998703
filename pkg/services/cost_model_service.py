"""
Cost Model Service - Analytical counters for data sizes, traffic and arithmetic intensity.

One "op" is one modular multiplication; modular additions are not counted. Polynomial
counts are carried in units of ``N`` and multiplied out at the end. A limb (I)NTT costs
``N/2·log2 N`` butterfly multiplications plus ``N`` twisting multiplications (the latter
can be excluded to count butterflies only).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

from loguru import logger

from utils.constants import MIB
from utils.dft_plan import DftPlan, EvkUsageLog
from utils.errors import ConfigurationError, ScheduleError

CostVariant = Literal["baseline", "minks", "minks+oflimb"]
DistributionPolicy = Literal["alternating", "limb_wise_only"]

COST_VARIANTS: tuple[CostVariant, ...] = ("baseline", "minks", "minks+oflimb")


# ============= Profiles =============


@dataclass(frozen=True)
class ParamProfile:
    """Parameter set for analytic counting; ``boot_level`` is ``None`` when not reported."""

    name: str
    ring_degree: int
    max_level: int
    dnum: int
    slots: int
    word_bytes: int = 8
    boot_level: int | None = None

    def __post_init__(self) -> None:
        if (self.max_level + 1) % self.dnum:
            raise ConfigurationError(
                f"Profile {self.name}: L+1={self.max_level + 1} not divisible by dnum={self.dnum}"
            )
        if self.ring_degree < 2 or self.ring_degree & (self.ring_degree - 1):
            raise ConfigurationError(f"Profile {self.name}: ring degree must be a power of two")

    @property
    def alpha(self) -> int:
        return (self.max_level + 1) // self.dnum

    @property
    def log_degree(self) -> int:
        return self.ring_degree.bit_length() - 1

    def beta(self, level: int) -> int:
        return math.ceil((level + 1) / self.alpha)

    def check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_level:
            raise ScheduleError(f"Level {level} outside [0, {self.max_level}] for {self.name}")


@dataclass(frozen=True)
class MachineProfile:
    name: str
    modular_multiplier_count: int
    clock_hz: float
    offchip_bandwidth_bytes_per_s: float
    onchip_capacity_bytes: float

    def __post_init__(self) -> None:
        values = (
            self.modular_multiplier_count,
            self.clock_hz,
            self.offchip_bandwidth_bytes_per_s,
            self.onchip_capacity_bytes,
        )
        if any(v <= 0 for v in values):
            raise ConfigurationError(f"Machine profile {self.name} needs positive values")


PROFILES: dict[str, ParamProfile] = {
    "lattigo": ParamProfile("lattigo", 2**16, 24, 5, 2**15, 8, boot_level=15),
    "100x": ParamProfile("100x", 2**17, 29, 3, 2**16, 8, boot_level=19),
    "f1": ParamProfile("f1", 2**14, 15, 16, 1, 4),
    "ark": ParamProfile("ark", 2**16, 23, 4, 2**15, 8, boot_level=15),
    "desk": ParamProfile("desk", 2**13, 7, 2, 2**6, 8),
}

# Published data sizes in MiB: (plaintext, ciphertext, evk)
PUBLISHED_SIZES_MIB: dict[str, tuple[float, float, float]] = {
    "lattigo": (12.5, 25.0, 150.0),
    "100x": (30.0, 60.0, 240.0),
    "f1": (1.0, 2.0, 34.0),
    "ark": (12.0, 24.0, 120.0),
}

SCALED_F1 = MachineProfile(
    "scaled_f1",
    modular_multiplier_count=40_960,
    clock_hz=1e9,
    offchip_bandwidth_bytes_per_s=3e12,
    onchip_capacity_bytes=512 * MIB,
)

MACHINES: dict[str, MachineProfile] = {"scaled_f1": SCALED_F1}


def get_profile(name: str) -> ParamProfile:
    try:
        return PROFILES[name]
    except KeyError as exc:
        raise ConfigurationError(
            f"Unknown profile {name!r}; choose from {', '.join(sorted(PROFILES))}"
        ) from exc


# ============= Reports =============


@dataclass(frozen=True)
class DataSizes:
    plaintext_bytes: int
    ciphertext_bytes: int
    evk_bytes: int

    def in_mib(self) -> tuple[float, float, float]:
        return (
            self.plaintext_bytes / MIB,
            self.ciphertext_bytes / MIB,
            self.evk_bytes / MIB,
        )


@dataclass(frozen=True)
class KeySwitchCount:
    """Modular multiplications of one key switch, split by kernel."""

    ntt: int
    bconv: int
    elementwise: int

    @property
    def total(self) -> int:
        return self.ntt + self.bconv + self.elementwise

    @property
    def ntt_share(self) -> float:
        return self.ntt / self.total

    @property
    def bconv_share(self) -> float:
        return self.bconv / self.total


@dataclass
class IterationCost:
    index: int
    level: int
    hrot_count: int = 0
    pmult_count: int = 0
    key_switches: int = 0
    rescales: int = 0
    evk_loads: int = 0
    evk_bytes: int = 0
    plaintext_bytes: int = 0
    modular_mults: int = 0


@dataclass
class CostReport:
    """Off-chip traffic and modular multiplications of one H-(I)DFT pass."""

    label: str
    variant: str
    evk_bytes: int = 0
    plaintext_bytes: int = 0
    ciphertext_bytes: int = 0
    twist_bytes: int = 0
    modular_mults: int = 0
    oflimb_mults: int = 0
    evk_loads: int = 0
    evk_reuses: int = 0
    iterations: list[IterationCost] = field(default_factory=list)

    @property
    def offchip_bytes(self) -> int:
        return self.evk_bytes + self.plaintext_bytes + self.ciphertext_bytes + self.twist_bytes

    @property
    def single_use_bytes(self) -> int:
        """Evaluation keys and plaintexts: data touched once per pass."""
        return self.evk_bytes + self.plaintext_bytes

    @property
    def ops_per_byte(self) -> float:
        if self.offchip_bytes == 0:
            return 0.0
        return self.modular_mults / self.offchip_bytes

    @property
    def hrot_count(self) -> int:
        return sum(it.hrot_count for it in self.iterations)

    @property
    def pmult_count(self) -> int:
        return sum(it.pmult_count for it in self.iterations)

    @property
    def plaintext_share(self) -> float:
        return self.plaintext_bytes / self.offchip_bytes if self.offchip_bytes else 0.0

    @property
    def oflimb_share(self) -> float:
        return self.oflimb_mults / self.modular_mults if self.modular_mults else 0.0


@dataclass(frozen=True)
class TwistStorage:
    table_bytes: int
    schedule_bytes: int

    @property
    def saved_bytes(self) -> int:
        return self.table_bytes - self.schedule_bytes

    @property
    def saved_fraction(self) -> float:
        return self.saved_bytes / self.table_bytes


# ============= Service =============


class CostModelService:
    """Closed-form counters over ``ParamProfile`` values."""

    def __init__(self, include_twist: bool = True):
        """
        Initialize the cost model.

        Args:
            include_twist: Count the ``N`` twisting multiplications of every limb (I)NTT
        """
        self.include_twist = include_twist

    # ---- kernels (units of N) ----

    def ntt_limb_units(self, profile: ParamProfile) -> float:
        butterflies = profile.log_degree / 2
        return butterflies + 1 if self.include_twist else butterflies

    @staticmethod
    def bconv_units(source: int, target: int) -> int:
        """Step one scales each source limb, step two is a ``target x source`` matmul."""
        return source + source * target

    # ---- operations ----

    def data_sizes(self, profile: ParamProfile) -> DataSizes:
        limbs = profile.max_level + 1
        word = profile.ring_degree * profile.word_bytes
        return DataSizes(
            plaintext_bytes=limbs * word,
            ciphertext_bytes=2 * limbs * word,
            evk_bytes=profile.dnum * 2 * (profile.alpha + limbs) * word,
        )

    def evk_bytes_at(self, profile: ParamProfile, level: int) -> int:
        """Bytes of the ``beta`` evk pairs a key switch at ``level`` reads."""
        return (
            profile.beta(level)
            * 2
            * (profile.alpha + level + 1)
            * profile.ring_degree
            * profile.word_bytes
        )

    def keyswitch_mults(self, profile: ParamProfile, level: int) -> KeySwitchCount:
        """Mod-up of every piece, inner product with the evk and mod-down of both halves."""
        profile.check_level(level)
        limbs = level + 1
        alpha = profile.alpha
        ntt_limbs = 0
        bconv = 0
        for i in range(profile.beta(level)):
            piece = min(alpha, limbs - i * alpha)
            rest = limbs - piece + alpha
            ntt_limbs += piece + rest
            bconv += self.bconv_units(piece, rest)
        ntt_limbs += 2 * (alpha + limbs)
        bconv += 2 * self.bconv_units(alpha, limbs)
        elementwise = profile.beta(level) * 2 * (limbs + alpha) + 2 * limbs
        n = profile.ring_degree
        return KeySwitchCount(
            ntt=round(ntt_limbs * self.ntt_limb_units(profile) * n),
            bconv=bconv * n,
            elementwise=elementwise * n,
        )

    def rescale_mults(self, profile: ParamProfile, level: int) -> int:
        """One polynomial: INTT of the top limb, then NTT and a scalar multiply per remaining limb."""
        unit = self.ntt_limb_units(profile)
        return round((unit + level * (unit + 1)) * profile.ring_degree)

    def pmult_mults(self, profile: ParamProfile, level: int) -> int:
        return 2 * (level + 1) * profile.ring_degree

    def oflimb_extension_mults(self, profile: ParamProfile, level: int) -> int:
        return round((level + 1) * self.ntt_limb_units(profile) * profile.ring_degree)

    def _levels(self, plan: DftPlan, levels: Sequence[int] | None) -> list[int]:
        schedule = [it.level for it in plan.iterations] if levels is None else list(levels)
        if len(schedule) != plan.iteration_count:
            raise ScheduleError(
                f"Level schedule has {len(schedule)} entries for {plan.iteration_count} iterations"
            )
        for earlier, later in zip(schedule, schedule[1:], strict=False):
            if later != earlier - 1:
                raise ScheduleError(f"Level schedule must drop by one per iteration: {schedule}")
        if schedule and schedule[-1] < 1:
            raise ScheduleError("Every iteration needs level >= 1 to rescale")
        return schedule

    def hdft_pass_cost(
        self,
        plan: DftPlan,
        profile: ParamProfile,
        variant: CostVariant,
        usage: EvkUsageLog | None = None,
        levels: Sequence[int] | None = None,
        on_the_fly_twist: bool = True,
    ) -> CostReport:
        """Traffic and multiplications of one pass; evks are loaded at first use in the pass.

        Raises:
            ScheduleError: If plan, variant, level schedule or usage log disagree.
        """
        if variant not in COST_VARIANTS:
            raise ScheduleError(f"Unknown cost variant: {variant}")
        core = "baseline" if variant == "baseline" else "minks"
        if plan.variant != core:
            raise ScheduleError(f"A {plan.variant} plan cannot be costed as {variant}")
        if plan.ring_degree != profile.ring_degree:
            raise ScheduleError(
                f"Plan ring degree {plan.ring_degree} differs from profile {profile.ring_degree}"
            )
        schedule = self._levels(plan, levels)
        for level in schedule:
            profile.check_level(level)
        if usage is None:
            usage = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)
        oflimb = variant == "minks+oflimb"

        n = profile.ring_degree
        word = n * profile.word_bytes
        report = CostReport(label=f"H-{plan.direction.upper()}", variant=variant)
        costs = [
            IterationCost(index=it.index, level=level)
            for it, level in zip(plan.iterations, schedule, strict=True)
        ]
        for entry in usage.entries:
            if not 0 <= entry.iteration < len(costs):
                raise ScheduleError(f"Usage entry names unknown iteration {entry.iteration}")
            cost = costs[entry.iteration]
            cost.hrot_count += 1
            cost.key_switches += 1
            if not entry.reused:
                cost.evk_loads += 1
                cost.evk_bytes += self.evk_bytes_at(profile, cost.level)

        for it, cost in zip(plan.iterations, costs, strict=True):
            level = cost.level
            cost.pmult_count = len(it.terms)
            cost.rescales = 1
            cost.plaintext_bytes = cost.pmult_count * (word if oflimb else (level + 1) * word)
            cost.modular_mults = (
                cost.key_switches * self.keyswitch_mults(profile, level).total
                + cost.pmult_count * self.pmult_mults(profile, level)
                + 2 * self.rescale_mults(profile, level)
            )
            if oflimb:
                extra = cost.pmult_count * self.oflimb_extension_mults(profile, level)
                cost.modular_mults += extra
                report.oflimb_mults += extra

        report.iterations = costs
        report.evk_bytes = sum(c.evk_bytes for c in costs)
        report.plaintext_bytes = sum(c.plaintext_bytes for c in costs)
        report.modular_mults = sum(c.modular_mults for c in costs)
        report.evk_loads = len(usage.loads())
        report.evk_reuses = len(usage.reuses())
        report.ciphertext_bytes = 2 * (schedule[0] + 1) * word + 2 * schedule[-1] * word
        if not on_the_fly_twist:
            report.twist_bytes = self.twist_storage(profile).table_bytes
        logger.debug(
            f"{report.label} {variant}: {report.offchip_bytes / MIB:.1f} MiB, "
            f"{report.modular_mults / n:.0f}N mults, {report.ops_per_byte:.3f} ops/byte"
        )
        return report

    def utilization_bound(
        self, machine: MachineProfile, single_use_bytes: float, workload_mults: float
    ) -> float:
        """Best-case multiplier utilization while single-use data streams in; 0 with no work."""
        if workload_mults <= 0:
            return 0.0
        if single_use_bytes <= 0:
            return 1.0
        load_time = single_use_bytes / machine.offchip_bandwidth_bytes_per_s
        capacity = machine.modular_multiplier_count * machine.clock_hz * load_time
        return min(1.0, workload_mults / capacity)

    def distribution_transfer(self, profile: ParamProfile, policy: DistributionPolicy) -> int:
        """Words moved between chiplet groups in one key switch."""
        span = (profile.alpha + profile.max_level + 1) * profile.ring_degree
        if policy == "alternating":
            return (profile.dnum + 2) * span
        if policy == "limb_wise_only":
            return 2 * profile.dnum * span
        raise ConfigurationError(f"Unknown distribution policy: {policy}")

    def tas_metric(
        self, t_boot: float, t_mult: Callable[[int], float], profile: ParamProfile
    ) -> float:
        """Amortized multiplication time per slot, in seconds.

        Raises:
            ConfigurationError: If ``L <= L_boot`` or the profile reports no ``L_boot``.
        """
        if profile.boot_level is None:
            raise ConfigurationError(f"Profile {profile.name} has no bootstrapping level")
        usable = profile.max_level - profile.boot_level
        if usable <= 0:
            raise ConfigurationError(
                f"L={profile.max_level} must exceed L_boot={profile.boot_level}"
            )
        if profile.slots <= 0:
            raise ConfigurationError("Slot count must be positive")
        total = t_boot + sum(t_mult(level) for level in range(1, usable + 1))
        return total / usable / profile.slots

    def twist_storage(self, profile: ParamProfile) -> TwistStorage:
        """Full twisting tables for all primes versus start/ratio schedules."""
        primes = profile.alpha + profile.max_level + 1
        side = math.isqrt(profile.ring_degree)
        return TwistStorage(
            table_bytes=2 * primes * profile.ring_degree * profile.word_bytes,
            schedule_bytes=2 * primes * 2 * side * profile.word_bytes,
        )


_default_service = None


def get_cost_model_service() -> CostModelService:
    """Get the default cost model service instance."""
    global _default_service
    if _default_service is None:
        _default_service = CostModelService()
    return _default_service


def reset_cost_model_service() -> None:
    """Reset the global cost model service instance."""
    global _default_service
    _default_service = None


__all__ = [
    "COST_VARIANTS",
    "CostModelService",
    "CostReport",
    "CostVariant",
    "DataSizes",
    "IterationCost",
    "KeySwitchCount",
    "MACHINES",
    "MachineProfile",
    "PROFILES",
    "PUBLISHED_SIZES_MIB",
    "ParamProfile",
    "SCALED_F1",
    "TwistStorage",
    "get_cost_model_service",
    "get_profile",
    "reset_cost_model_service",
]
