"""
Run Controller - Orchestrates CLI commands over the scheme, H-DFT and cost-model services.

Every command returns a ``Report``; the exit status is 0 when all checks pass and 1 when
any check fails. Configuration problems surface as ``CkksError`` for ``main`` to map to 2.
"""

from __future__ import annotations

import math
import tempfile
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from repositories.artifact_repository import ArtifactRepository, get_artifact_repository
from repositories.params_repository import ParamsRepository, get_params_repository
from services.ckks_service import CkksService
from services.cost_model_service import (
    COST_VARIANTS,
    PUBLISHED_SIZES_MIB,
    SCALED_F1,
    CostModelService,
    CostReport,
    CostVariant,
    ParamProfile,
    get_cost_model_service,
    get_profile,
)
from services.hdft_service import HdftService
from services.report_service import Report, ReportService, get_report_service
from utils.ckks_types import CkksParams, KeySet, LevelExhaustedError
from utils.constants import (
    ADDITIVE_NOISE_BUDGET,
    ARTIFACTS_DIR,
    BOOTSTRAP_ROUNDTRIP_BOUND,
    DEFAULT_SEED,
    FRESH_NOISE_BUDGET,
    HDFT_ROUNDTRIP_BOUND,
    MIB,
    MINKS_NOISE_FACTOR,
    MULT_RELATIVE_ERROR_BOUND,
    ROTATION_NOISE_BUDGET,
    SELFTEST_PASS_TRIALS,
)
from utils.dft_factorization import apply_reference
from utils.dft_plan import DftPlan, EvkUsageLog, PlaintextSeed, PlanVariant, build_dft_plan
from utils.errors import ConfigurationError
from utils.modular import PrimeModulus, generate_ntt_primes, mod_mul, vec_mul
from utils.ntt import Limb, TwistSchedule, expand_twist, four_step_ntt, ntt
from utils.rns_poly import (
    Representation,
    RnsPolynomial,
    add,
    automorphism,
    base_convert,
    crt_compose,
    mul,
)

COMMANDS = ("selftest", "hdft", "sizes", "keygen", "bench")
VARIANTS = ("baseline", "minks", "minks-oflimb")

# Published reference values used as tolerance checks against the analytic model
PUBLISHED_OPS_PER_BYTE = {"idft": 11.1, "dft": 9.6}
PUBLISHED_TRAFFIC_CUT = {"idft": 0.88, "dft": 0.78}
PUBLISHED_MINKS_GAIN = {"idft": 2.6, "dft": 2.0}
PUBLISHED_SINGLE_USE_BYTES = {"idft": 6.4e9, "dft": 0.6e9}
PUBLISHED_UTILIZATION = {"idft": 0.0861, "dft": 0.1332}
PUBLISHED_OFLIMB_SHARE = {"idft": 0.229, "dft": 0.241}
PUBLISHED_PLAINTEXT_SHARE = {"idft": 0.275, "dft": 0.409}
PUBLISHED_NTT_SHARE = 0.548
PUBLISHED_BCONV_SHARE = 0.342
PUBLISHED_NTT_SHARE_MAX_DNUM = 0.733
PUBLISHED_TAS_SECONDS = 14.3e-9


@dataclass
class RunConfig:
    """One CLI invocation."""

    command: str
    params: str = "desk"
    seed: int = DEFAULT_SEED
    variant: str = "baseline"
    profile: str = "ark"
    out: Path | None = None
    analytic_only: bool = False
    slots: int | None = None
    k: int | None = None
    trials: int = 64
    repeats: int = 3
    fixture: Path | None = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command {self.command!r}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"Unknown variant {self.variant!r}")
        if self.trials < 1 or self.repeats < 1:
            raise ConfigurationError("Trial and repeat counts must be positive")

    @property
    def plan_variant(self) -> PlanVariant:
        return "baseline" if self.variant == "baseline" else "minks"

    @property
    def oflimb(self) -> bool:
        return self.variant == "minks-oflimb"

    @property
    def cost_variant(self) -> CostVariant:
        return "minks+oflimb" if self.oflimb else self.plan_variant  # type: ignore[return-value]


def default_split(k: int) -> tuple[int, int]:
    k1 = (k + 1) // 2
    return k1, k + 1 - k1


def _log2(n: int) -> int:
    return n.bit_length() - 1


def _max_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _within(value: float, expected: float, rel: float) -> bool:
    return abs(value - expected) <= rel * abs(expected)


class RunController:
    """Command implementations shared by ``main`` and the tests."""

    def __init__(
        self,
        params_repository: ParamsRepository | None = None,
        artifact_repository: ArtifactRepository | None = None,
        cost_model: CostModelService | None = None,
        report_service: ReportService | None = None,
    ):
        self.params_repository = params_repository or get_params_repository()
        self.artifact_repository = artifact_repository or get_artifact_repository()
        self.cost_model = cost_model or get_cost_model_service()
        self.reports = report_service or get_report_service()

    # ============= Shared setup =============

    def load_params(self, config: RunConfig) -> CkksParams:
        overrides = {"slots": config.slots} if config.slots else None
        return self.params_repository.load_params(config.params, config.seed, overrides)

    @staticmethod
    def plan_shape(slots: int, k: int | None) -> tuple[int, tuple[int, int]]:
        """Radix exponent and split; without ``k`` the largest of 3, 2, 1 dividing log2 n."""
        log_n = _log2(slots)
        if log_n < 1:
            raise ConfigurationError(f"{slots} slot(s) leave no slot DFT to evaluate")
        if k is None:
            k = next(c for c in (3, 2, 1) if log_n % c == 0)
        return k, default_split(k)

    def _services(self, params: CkksParams, seed: int) -> tuple[CkksService, HdftService]:
        ckks = CkksService(params, rng=np.random.default_rng(seed))
        return ckks, HdftService(ckks)

    @staticmethod
    def _random_message(rng: np.random.Generator, slots: int) -> np.ndarray:
        return rng.uniform(-1, 1, slots) + 1j * rng.uniform(-1, 1, slots)

    @staticmethod
    def execution_profile(params: CkksParams) -> ParamProfile:
        return ParamProfile(
            name="execution",
            ring_degree=params.ring_degree,
            max_level=params.max_level,
            dnum=params.dnum,
            slots=params.slots,
        )

    # ============= selftest =============

    def cmd_selftest(self, config: RunConfig) -> Report:
        """Run the kernel, scheme, H-DFT, bootstrapping, serialization and cost-model checks.

        Randomized properties run ``config.trials`` times. Encrypted DFT passes and the
        bootstrapping loop run ``min(trials, SELFTEST_PASS_TRIALS)`` times.
        """
        report = self.reports.new_report("selftest")
        rng = np.random.default_rng(config.seed)
        params = self.load_params(config)
        pass_trials = min(config.trials, SELFTEST_PASS_TRIALS)
        report.lines.append(
            f"params: {config.params} N={params.ring_degree} n={params.slots} "
            f"L={params.max_level} dnum={params.dnum} seed={config.seed} "
            f"trials={config.trials} pass_trials={pass_trials}"
        )
        self._check_modular(report, params, rng, config.trials)
        self._check_ntt(report, rng, config.trials)
        self._check_rns(report, params, rng, config.trials)
        ckks, hdft = self._services(params, config.seed)
        keys = ckks.keygen(rotations=self._selftest_rotations(params))
        self._check_scheme(report, ckks, keys, rng, config)
        self._check_hdft(report, hdft, keys, config, rng, pass_trials)
        self._check_bootstrap(report, config, pass_trials)
        self._check_artifacts(report, ckks, keys, rng, config)
        self._check_cost_model(report)
        return report

    @staticmethod
    def _selftest_rotations(params: CkksParams) -> tuple[int, ...]:
        return tuple(sorted({1, 2, 5, max(params.slots // 2, 1)}))

    def _repeat(
        self, report: Report, name: str, trials: int, trial: Callable[[], float], bound: float
    ) -> bool:
        """Run ``trial`` repeatedly; the check passes when the worst error stays below ``bound``."""
        worst = max(trial() for _ in range(trials))
        return self.reports.check(
            report, name, worst < bound, f"max {worst:.3e} over {trials} trials"
        )

    def _check_modular(
        self, report: Report, params: CkksParams, rng: np.random.Generator, trials: int
    ) -> None:
        agree = True
        vectors_agree = True
        for modulus in params.extended_basis:
            q = modulus.q
            pairs = [(0, 0), (1, q - 1), (q - 1, q - 1)]
            pairs += [
                (int(a), int(b))
                for a, b in rng.integers(0, q, size=(trials, 2), dtype=np.uint64)
            ]
            for a, b in pairs:
                expected = (a * b) % q
                agree &= mod_mul(a, b, modulus, "barrett") == expected
                agree &= mod_mul(a, b, modulus, "montgomery") == expected
            left = np.array([a for a, _ in pairs], dtype=object)
            right = np.array([b for _, b in pairs], dtype=object)
            expected_vec = (left * right) % q
            for strategy in ("barrett", "montgomery"):
                got = vec_mul(left, right, q, strategy)
                vectors_agree &= all(int(x) == int(y) for x, y in zip(got, expected_vec))
        self.reports.check(report, "mod_mul strategies agree with the wide-integer oracle", agree)
        self.reports.check(
            report, "vector barrett and montgomery products agree with the oracle", vectors_agree
        )

    @staticmethod
    def _schoolbook(a: np.ndarray, b: np.ndarray, q: int) -> list[int]:
        n = len(a)
        out = [0] * n
        for i in range(n):
            for j in range(n):
                term = int(a[i]) * int(b[j])
                if i + j < n:
                    out[i + j] += term
                else:
                    out[i + j - n] -= term
        return [v % q for v in out]

    def _check_ntt(self, report: Report, rng: np.random.Generator, trials: int) -> None:
        n = 64
        modulus = PrimeModulus.from_prime(generate_ntt_primes(n, 40, 1)[0], n)
        q = modulus.q
        convolution = True
        strategies = True
        for _ in range(trials):
            a = rng.integers(0, q, size=n, dtype=np.uint64)
            b = rng.integers(0, q, size=n, dtype=np.uint64)
            fa = ntt(Limb(a, modulus), "forward")
            fb = ntt(Limb(b, modulus), "forward").values.astype(object)
            pointwise = ((fa.values.astype(object) * fb) % q).astype(np.uint64)
            product = ntt(Limb(pointwise, modulus), "inverse").values
            oracle = self._schoolbook(a, b, q)
            convolution &= all(int(x) == y for x, y in zip(product, oracle, strict=True))
            strategies &= ntt(Limb(a, modulus), "forward", "barrett") == fa
            strategies &= ntt(fa, "inverse", "barrett") == Limb(a, modulus)
        self.reports.check(
            report,
            f"ntt convolution matches schoolbook negacyclic product (N=64, {trials} trials)",
            convolution,
        )
        self.reports.check(
            report, "ntt butterflies agree under barrett and montgomery reduction", strategies
        )

        big = 1 << 10
        wide = PrimeModulus.from_prime(generate_ntt_primes(big, 50, 1)[0], big)
        same = True
        for _ in range(trials):
            limb = Limb(rng.integers(0, wide.q, size=big, dtype=np.uint64), wide)
            forward = ntt(limb, "forward")
            same &= four_step_ntt(limb, "forward") == forward
            same &= four_step_ntt(forward, "inverse") == limb
        self.reports.check(report, "four-step ntt is bit-identical to ntt (N=2^10)", same)

        schedule = TwistSchedule.for_modulus(wide)
        side = math.isqrt(big)
        table = expand_twist(schedule, side)
        psi = wide.ntt_root
        direct = all(
            int(table[c, j]) == pow(psi, c * (2 * j + 1), wide.q)
            for c in range(side)
            for j in range(side)
        )
        self.reports.check(report, "expanded twist schedule equals direct powers", direct)

    def _check_rns(
        self, report: Report, params: CkksParams, rng: np.random.Generator, trials: int
    ) -> None:
        source = params.ciphertext_basis.prefix(params.alpha)
        target = params.special_basis
        big = source.product
        ok = True
        strategies = True
        for _ in range(trials):
            poly = RnsPolynomial.random_uniform(
                source, params.ring_degree, rng, Representation.COEFFICIENT
            )
            converted = base_convert(poly, target)
            strategies &= base_convert(poly, target, strategy="barrett") == converted
            values = crt_compose(poly, centered=False)
            for j in rng.integers(0, params.ring_degree, size=4):
                x = int(values[j])
                ok &= any(
                    all(
                        (x + k * big) % p == int(converted.coeffs[i, j])
                        for i, p in enumerate(target.q_values)
                    )
                    for k in range(len(source))
                )
        self.reports.check(report, "base conversion matches CRT oracle up to k*P slack", ok)
        self.reports.check(
            report, "base conversion agrees under barrett and montgomery reduction", strategies
        )

        basis = params.level_basis(1)
        commute = True
        homomorphic = True
        for _ in range(trials):
            coeff = RnsPolynomial.random_uniform(
                basis, params.ring_degree, rng, Representation.COEFFICIENT
            )
            commute &= automorphism(coeff, 3).to_evaluation() == automorphism(
                coeff.to_evaluation(), 3
            )
            a = RnsPolynomial.random_uniform(basis, params.ring_degree, rng)
            b = RnsPolynomial.random_uniform(basis, params.ring_degree, rng)
            for r in (1, 3, -1):
                homomorphic &= automorphism(mul(a, b), r) == mul(
                    automorphism(a, r), automorphism(b, r)
                )
                homomorphic &= automorphism(add(a, b), r) == add(
                    automorphism(a, r), automorphism(b, r)
                )
        self.reports.check(report, "automorphism commutes with the ntt", commute)
        self.reports.check(report, "automorphism is a ring homomorphism", homomorphic)

    def _check_scheme(
        self,
        report: Report,
        ckks: CkksService,
        keys: KeySet,
        rng: np.random.Generator,
        config: RunConfig,
    ) -> None:
        params = ckks.params
        sk = keys.secret
        assert sk is not None  # nosec B101
        trials = config.trials
        n = params.slots

        def message() -> np.ndarray:
            return self._random_message(rng, n)

        def relative(got: np.ndarray, expected: np.ndarray) -> float:
            return _max_error(got, expected) / float(np.max(np.abs(expected)))

        def encode_roundtrip() -> float:
            m = message()
            return _max_error(ckks.decode(ckks.encode(m)), m)

        def fresh() -> float:
            m = message()
            return _max_error(ckks.decrypt_values(ckks.encrypt(ckks.encode(m), sk), sk), m)

        zero = ckks.encode(np.zeros(n))

        def encrypted_zero() -> float:
            return float(np.max(np.abs(ckks.decrypt_values(ckks.encrypt(zero, sk), sk))))

        def hadd() -> float:
            m1, m2 = message(), message()
            ct1, ct2 = ckks.encrypt(ckks.encode(m1), sk), ckks.encrypt(ckks.encode(m2), sk)
            return _max_error(ckks.decrypt_values(ckks.hadd(ct1, ct2), sk), m1 + m2)

        def pmult() -> float:
            m1, m2 = message(), message()
            ct = ckks.encrypt(ckks.encode(m1), sk)
            product = ckks.hrescale(ckks.pmult(ct, ckks.encode(m2)))
            return relative(ckks.decrypt_values(product, sk), m1 * m2)

        def cmult() -> float:
            m = message()
            c = float(rng.uniform(-2, 2))
            scaled = ckks.hrescale(ckks.cmult(ckks.encrypt(ckks.encode(m), sk), c))
            return _max_error(ckks.decrypt_values(scaled, sk), c * m)

        def hmult() -> float:
            m1, m2 = message(), message()
            ct1, ct2 = ckks.encrypt(ckks.encode(m1), sk), ckks.encrypt(ckks.encode(m2), sk)
            product = ckks.hrescale(ckks.hmult(ct1, ct2, keys.mult_key()))
            return relative(ckks.decrypt_values(product, sk), m1 * m2)

        def rotation(r: int) -> Callable[[], float]:
            def trial() -> float:
                m = message()
                rotated = ckks.rotate(ckks.encrypt(ckks.encode(m), sk), r, keys)
                return _max_error(ckks.decrypt_values(rotated, sk), np.roll(m, -r))

            return trial

        bound = 8 * n / params.scale
        self._repeat(report, "encode/decode roundtrip", trials, encode_roundtrip, bound)
        self.reports.check(
            report, "encoding zeros gives the zero polynomial", not np.any(zero.poly.coeffs)
        )
        self._repeat(report, "fresh encryption noise", trials, fresh, FRESH_NOISE_BUDGET)
        self._repeat(
            report, "encryption of zero decrypts near zero", trials, encrypted_zero,
            FRESH_NOISE_BUDGET,
        )
        self._repeat(report, "hadd", trials, hadd, ADDITIVE_NOISE_BUDGET)
        self._repeat(report, "pmult + rescale", trials, pmult, MULT_RELATIVE_ERROR_BOUND)
        self._repeat(report, "cmult + rescale", trials, cmult, ROTATION_NOISE_BUDGET)
        self._repeat(report, "hmult + rescale", trials, hmult, MULT_RELATIVE_ERROR_BOUND)
        half = max(n // 2, 1)
        for r in self._selftest_rotations(params):
            name = f"hrot by {r}" + (" (n/2)" if r == half else "")
            self._repeat(report, name, trials, rotation(r), ROTATION_NOISE_BUDGET)
        self._check_depth(report, ckks, keys, message())
        self._check_keygen_determinism(report, params, config.seed)

    def _check_depth(
        self, report: Report, ckks: CkksService, keys: KeySet, values: np.ndarray
    ) -> None:
        """Multiply by encrypted ones down to level 0; one more product must be refused."""
        sk = keys.secret
        assert sk is not None  # nosec B101
        ones = np.ones(ckks.params.slots)
        ct = ckks.encrypt(ckks.encode(values), sk)
        for _ in range(ckks.params.max_level):
            factor = ckks.encrypt(ckks.encode(ones, scale=ct.scale, level=ct.level), sk)
            ct = ckks.hrescale(ckks.hmult(ct, factor, keys.mult_key()))
        err = _max_error(ckks.decrypt_values(ct, sk), values)
        try:
            ckks.hmult(ct, ct, keys.mult_key())
            refused = False
        except LevelExhaustedError:
            refused = True
        self.reports.check(
            report,
            f"{ckks.params.max_level} multiplications reach level 0, then hmult is refused",
            ct.level == 0 and refused and err < HDFT_ROUNDTRIP_BOUND,
            f"{err:.3e}",
        )

    def _check_keygen_determinism(self, report: Report, params: CkksParams, seed: int) -> None:
        services = [CkksService(params, rng=np.random.default_rng(seed)) for _ in range(2)]
        secrets = [service.generate_secret_key() for service in services]
        mult_keys = [s.generate_mult_key(k) for s, k in zip(services, secrets)]
        same = secrets[0].coefficients == secrets[1].coefficients and all(
            x == y
            for pair0, pair1 in zip(mult_keys[0].pairs, mult_keys[1].pairs)
            for x, y in zip(pair0, pair1)
        )
        self.reports.check(report, "keygen is deterministic under a fixed seed", same)

    def _plan_pair(
        self, hdft: HdftService, k: int, split: tuple[int, int], variant: PlanVariant
    ) -> tuple[DftPlan, DftPlan]:
        """H-IDFT from level L and the H-DFT that follows it."""
        top = hdft.params.max_level
        idft_plan = hdft.build_plan(k, split, "idft", variant, start_level=top)
        dft_plan = hdft.build_plan(
            k, split, "dft", variant, start_level=top - idft_plan.iteration_count
        )
        return idft_plan, dft_plan

    def _hdft_roundtrip(
        self,
        hdft: HdftService,
        keys: KeySet,
        message: np.ndarray,
        plans: tuple[DftPlan, DftPlan],
        oflimb: bool,
    ) -> tuple[float, float, EvkUsageLog, EvkUsageLog, np.ndarray]:
        """Errors of H-IDFT and of the full roundtrip, both usage logs and the restored slots."""
        ckks = hdft.ckks
        sk = keys.secret
        assert sk is not None  # nosec B101
        idft_plan, dft_plan = plans
        ct = ckks.encrypt(ckks.encode(message), sk)
        idft_log, dft_log = EvkUsageLog(), EvkUsageLog()
        transformed = hdft.run(ct, idft_plan, keys, oflimb, idft_log)
        k = idft_plan.radix_exponent
        idft_err = _max_error(
            ckks.decrypt_values(transformed, sk), apply_reference(message, k, "idft")
        )
        restored = ckks.decrypt_values(hdft.run(transformed, dft_plan, keys, oflimb, dft_log), sk)
        return idft_err, _max_error(restored, message), idft_log, dft_log, restored

    def _check_hdft(
        self,
        report: Report,
        hdft: HdftService,
        keys: KeySet,
        config: RunConfig,
        rng: np.random.Generator,
        trials: int,
    ) -> None:
        sk = keys.secret
        assert sk is not None  # nosec B101
        ckks = hdft.ckks
        k, split = self.plan_shape(hdft.params.slots, config.k)
        label = f"k={k}, split={split}"
        variants: tuple[PlanVariant, ...] = ("baseline", "minks")
        plans = {v: self._plan_pair(hdft, k, split, v) for v in variants}
        hdft.keys_for_plans(sk, [p for pair in plans.values() for p in pair], keys)

        idft_worst = dict.fromkeys(variants, 0.0)
        roundtrip_worst = dict.fromkeys(variants, 0.0)
        agreement = 0.0
        logs: dict[PlanVariant, tuple[EvkUsageLog, EvkUsageLog]] = {}
        for _ in range(trials):
            message = self._random_message(rng, hdft.params.slots)
            restored = {}
            for variant in variants:
                idft_err, err, idft_log, dft_log, restored[variant] = self._hdft_roundtrip(
                    hdft, keys, message, plans[variant], oflimb=False
                )
                idft_worst[variant] = max(idft_worst[variant], idft_err)
                roundtrip_worst[variant] = max(roundtrip_worst[variant], err)
                logs[variant] = (idft_log, dft_log)
            agreement = max(agreement, _max_error(restored["baseline"], restored["minks"]))

        for variant in variants:
            self.reports.check(
                report,
                f"H-IDFT matches reference ({variant}, {label})",
                idft_worst[variant] < HDFT_ROUNDTRIP_BOUND,
                f"max {idft_worst[variant]:.3e} over {trials} trials",
            )
            self.reports.check(
                report,
                f"H-IDFT -> H-DFT roundtrip ({variant}, {label})",
                roundtrip_worst[variant] < HDFT_ROUNDTRIP_BOUND,
                f"max {roundtrip_worst[variant]:.3e} over {trials} trials",
            )
            for plan, log in zip(plans[variant], logs[variant], strict=True):
                synthesized = EvkUsageLog.from_schedule(
                    plan.rotation_schedule(), plan.rotation_period
                )
                self.reports.check(
                    report,
                    f"{variant} {plan.direction} usage log equals synthesized schedule",
                    synthesized.to_text() == log.to_text(),
                )
        self.reports.check(
            report,
            "minks agrees with baseline",
            agreement < MINKS_NOISE_FACTOR * HDFT_ROUNDTRIP_BOUND,
            f"max {agreement:.3e}",
        )
        per_iteration = [
            len(ids)
            for log in logs["minks"]
            for ids in log.distinct_per_iteration().values()
        ]
        self.reports.check(
            report,
            "minks loads at most two distinct evks per iteration",
            max(per_iteration) <= 2,
            f"per iteration {per_iteration}",
        )
        self._check_minks_chain(report, hdft, keys, rng, trials)
        self._check_oflimb(report, hdft, keys, plans["minks"], rng, trials)

    def _check_minks_chain(
        self,
        report: Report,
        hdft: HdftService,
        keys: KeySet,
        rng: np.random.Generator,
        trials: int,
    ) -> None:
        """Three chained rotations by 1 against one rotation by 3 under its own key."""
        ckks = hdft.ckks
        sk = keys.secret
        assert sk is not None  # nosec B101
        period = ckks.params.ring_degree // 2
        step_key = keys.rotation_key(1, period)
        direct_key = ckks.generate_rotation_key(sk, 3)
        worst = 0.0
        for _ in range(trials):
            m = self._random_message(rng, hdft.params.slots)
            ct = ckks.encrypt(ckks.encode(m), sk)
            chained = ckks.decrypt_values(hdft.minks_rotations(ct, 1, 3, step_key)[-1], sk)
            direct = ckks.decrypt_values(ckks.hrot(ct, 3, direct_key), sk)
            worst = max(worst, _max_error(chained, direct), _max_error(chained, np.roll(m, -3)))
        self.reports.check(
            report,
            "minks rotation chain matches a direct rotation by 3",
            worst < 4 * ROTATION_NOISE_BUDGET,
            f"max {worst:.3e} over {trials} trials",
        )

    def _check_oflimb(
        self,
        report: Report,
        hdft: HdftService,
        keys: KeySet,
        plans: tuple[DftPlan, DftPlan],
        rng: np.random.Generator,
        trials: int,
    ) -> None:
        sk = keys.secret
        assert sk is not None  # nosec B101
        params = hdft.params
        q0 = params.ciphertext_basis[0]
        half = q0.q // 2
        exact = True
        for trial in range(trials):
            coeffs = rng.integers(-half, half, size=params.ring_degree).astype(object)
            seed = PlaintextSeed.from_integers(coeffs, q0, params.scale, f"selftest-{trial}")
            for level in range(params.max_level + 1):
                exact &= hdft.of_limb_extend(seed, level).poly == hdft.stored_plaintext(
                    seed, level
                ).poly
        for plan in plans:
            for it in plan.iterations:
                for term in it.terms:
                    assert term.seed is not None  # nosec B101
                    exact &= hdft.of_limb_extend(term.seed, it.level).poly == (
                        hdft.stored_plaintext(term.seed, it.level).poly
                    )
        self.reports.check(
            report, f"oflimb plaintexts are bit-exact at every level 0..{params.max_level}", exact
        )

        identical = True
        for _ in range(trials):
            ct = hdft.ckks.encrypt(
                hdft.ckks.encode(self._random_message(rng, params.slots)), sk
            )
            for plan in plans:
                identical &= hdft.run(ct, plan, keys, oflimb=True).identical_to(
                    hdft.run(ct, plan, keys)
                )
        self.reports.check(report, "minks-oflimb passes are identical to minks", identical)

    def _check_bootstrap(self, report: Report, config: RunConfig, trials: int) -> None:
        """Reference bootstrapping loop; sparse parameter sets fall back to the ``boot`` set."""
        params = self.load_params(config)
        name = config.params
        k = config.k
        if params.slots != params.ring_degree // 2:
            params = self.params_repository.load_params("boot", config.seed)
            name, k = "boot", None
        k, split = self.plan_shape(params.slots, k)
        ckks, service = self._services(params, config.seed)
        keys = ckks.keygen()
        rng = np.random.default_rng(config.seed + 1)
        cases: tuple[tuple[PlanVariant, bool], ...] = (
            ("baseline", False),
            ("minks", False),
            ("minks", True),
        )
        for variant, oflimb in cases:
            results = [
                service.bootstrap_reference_roundtrip(
                    0.5 * self._random_message(rng, params.slots), keys, k, split, variant, oflimb
                )
                for _ in range(trials)
            ]
            worst = max(r.max_error for r in results)
            levels_ok = all(r.consumed_levels == 2 * r.iterations_per_pass for r in results)
            label = f"{variant}{'-oflimb' if oflimb else ''}"
            self.reports.check(
                report,
                f"bootstrap roundtrip ({label}) on {name}",
                worst < BOOTSTRAP_ROUNDTRIP_BOUND and levels_ok,
                f"max {worst:.3e} over {trials} trials",
            )

    def _check_artifacts(
        self,
        report: Report,
        ckks: CkksService,
        keys: KeySet,
        rng: np.random.Generator,
        config: RunConfig,
    ) -> None:
        assert keys.secret is not None  # nosec B101
        pt = ckks.encode(self._random_message(rng, ckks.params.slots))
        ct = ckks.encrypt(pt, keys.secret)
        with tempfile.TemporaryDirectory() as tmp:
            path = self.artifact_repository.save_ciphertext(ct, Path(tmp) / "roundtrip.ct")
            loaded = self.artifact_repository.load_ciphertext(path, ckks.params)
            self.reports.check(report, "ciphertext artifact roundtrip", loaded.identical_to(ct))
            bundle = self.artifact_repository.save_fixture(
                ct, keys.secret, pt, Path(tmp) / "fixture.ct"
            )
            self._check_fixture(report, ckks, bundle, "written fixture")
        if config.fixture is not None:
            self._check_fixture(report, ckks, config.fixture, f"fixture {config.fixture}")

    def _check_fixture(self, report: Report, ckks: CkksService, path: Path, label: str) -> None:
        """Decrypt a fixture with its own key and compare against its plaintext."""
        ct, sk, expected = self.artifact_repository.load_fixture(path, ckks.params)
        err = _max_error(ckks.decrypt_values(ct, sk), ckks.decode(expected))
        self.reports.check(
            report, f"{label} decrypts to its plaintext", err < ROTATION_NOISE_BUDGET, f"{err:.3e}"
        )

    def _check_cost_model(self, report: Report) -> None:
        sizes_ok = all(
            self.cost_model.data_sizes(get_profile(name)).in_mib() == expected
            for name, expected in PUBLISHED_SIZES_MIB.items()
        )
        self.reports.check(report, "data sizes reproduce the published table", sizes_ok)
        butterflies = CostModelService(include_twist=False)
        ark = get_profile("ark")
        count = butterflies.keyswitch_mults(ark, ark.max_level)
        self.reports.check(
            report,
            "key-switch ntt/bconv shares at ark",
            abs(count.ntt_share - PUBLISHED_NTT_SHARE) < 0.01
            and abs(count.bconv_share - PUBLISHED_BCONV_SHARE) < 0.01,
            f"{count.ntt_share:.3f}/{count.bconv_share:.3f}",
        )

        costs = self.analytic_costs(ark)
        for direction in ("idft", "dft"):
            base = costs[direction]["baseline"]
            utilization = self.cost_model.utilization_bound(
                SCALED_F1, base.single_use_bytes, base.modular_mults
            )
            self.reports.check(
                report,
                f"ark {direction} utilization bound near {PUBLISHED_UTILIZATION[direction]:.2%}",
                _within(utilization, PUBLISHED_UTILIZATION[direction], 0.20),
                f"{utilization:.2%}",
            )
        self.reports.check(
            report,
            "utilization of an empty workload is zero",
            self.cost_model.utilization_bound(SCALED_F1, 1.0, 0) == 0.0,
        )

        assert ark.boot_level is not None  # nosec B101
        usable = ark.max_level - ark.boot_level
        t_mult = 2e-6
        t_boot = PUBLISHED_TAS_SECONDS * usable * ark.slots - usable * t_mult
        tas = self.cost_model.tas_metric(t_boot, lambda level: t_mult, ark)
        linear = self.cost_model.tas_metric(0.05, lambda level: level * 1e-4, ark)
        closed_form = (0.05 + 1e-4 * usable * (usable + 1) / 2) / usable / ark.slots
        self.reports.check(
            report,
            "T_A.S. reproduces the published per-slot time and a linear schedule",
            _within(tas, PUBLISHED_TAS_SECONDS, 1e-9) and _within(linear, closed_form, 1e-12),
            f"{tas * 1e9:.2f} ns",
        )

        span = (ark.alpha + ark.max_level + 1) * ark.ring_degree
        alternating = self.cost_model.distribution_transfer(ark, "alternating")
        limb_wise = self.cost_model.distribution_transfer(ark, "limb_wise_only")
        self.reports.check(
            report,
            "alternating distribution moves less than limb-wise only",
            alternating == (ark.dnum + 2) * span
            and limb_wise == 2 * ark.dnum * span
            and alternating < limb_wise,
            f"{alternating} vs {limb_wise} words",
        )

    # ============= hdft =============

    def cmd_hdft(self, config: RunConfig) -> Report:
        """Execute H-IDFT/H-DFT at desk scale and cost the passes for desk and published profiles."""
        report = self.reports.new_report(f"hdft --variant {config.variant}")
        if not config.analytic_only:
            self._execute_hdft(report, config)
        self._analytic_hdft(report, get_profile(config.profile))
        return report

    def _execute_hdft(self, report: Report, config: RunConfig) -> None:
        params = self.load_params(config)
        rng = np.random.default_rng(config.seed)
        ckks, hdft = self._services(params, config.seed)
        k, split = self.plan_shape(params.slots, config.k)
        keys = KeySet(secret=ckks.generate_secret_key(), mult=None)
        message = self._random_message(rng, params.slots)
        idft_plan, dft_plan = self._plan_pair(hdft, k, split, config.plan_variant)
        assert keys.secret is not None  # nosec B101
        hdft.keys_for_plans(keys.secret, (idft_plan, dft_plan), keys)
        before = ckks.key_switch_count
        idft_err, err, idft_log, dft_log, _ = self._hdft_roundtrip(
            hdft, keys, message, (idft_plan, dft_plan), config.oflimb
        )
        report.lines.append(
            f"execution: N={params.ring_degree} n={params.slots} L={params.max_level} "
            f"dnum={params.dnum} k={k} split={split} variant={config.variant}"
        )
        self.reports.check(
            report, "H-IDFT matches reference", idft_err < HDFT_ROUNDTRIP_BOUND, f"{idft_err:.3e}"
        )
        self.reports.check(
            report, "H-IDFT -> H-DFT roundtrip", err < HDFT_ROUNDTRIP_BOUND, f"{err:.3e}"
        )
        switches = ckks.key_switch_count - before
        self.reports.record(report, "key_switches", config.variant, switches, "count")
        self.reports.record(report, "idft_max_error", config.variant, idft_err, "abs")
        self.reports.record(report, "roundtrip_max_error", config.variant, err, "abs")
        profile = self.execution_profile(params)
        rows = []
        for plan, log in ((idft_plan, idft_log), (dft_plan, dft_log)):
            synthesized = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)
            self.reports.check(
                report,
                f"{plan.direction} execution log equals synthesized schedule",
                synthesized.to_text() == log.to_text(),
            )
            cost = self.cost_model.hdft_pass_cost(plan, profile, config.cost_variant, usage=log)
            metric = f"{plan.direction}_evk_loads"
            self.reports.record(report, metric, config.variant, cost.evk_loads, "count")
            rows.append(self._cost_row(plan.direction, cost, profile.ring_degree))
        self.reports.table(report, self._cost_headers(), rows)

    @staticmethod
    def _cost_headers() -> list[str]:
        return [
            "pass", "variant", "offchip MiB", "single-use MiB", "mults/N", "ops/byte", "evk loads"
        ]

    @staticmethod
    def _cost_row(direction: str, cost: CostReport, ring_degree: int) -> list[str]:
        return [
            f"H-{direction.upper()}",
            cost.variant,
            f"{cost.offchip_bytes / MIB:.1f}",
            f"{cost.single_use_bytes / MIB:.1f}",
            f"{cost.modular_mults / ring_degree:.0f}",
            f"{cost.ops_per_byte:.3f}",
            str(cost.evk_loads),
        ]

    def analytic_plans(
        self, profile: ParamProfile, direction: str, variant: PlanVariant
    ) -> DftPlan:
        """Plan at profile scale: idft starts at L, dft ends at level 1."""
        log_n = _log2(profile.slots)
        if log_n < 1:
            raise ConfigurationError(f"Profile {profile.name} has no slot DFT to cost")
        k = next(c for c in (5, 4, 3, 2, 1) if log_n % c == 0)
        iterations = log_n // k
        start = profile.max_level if direction == "idft" else iterations
        return build_dft_plan(
            profile.slots,
            k,
            default_split(k),
            direction,  # type: ignore[arg-type]
            variant=variant,
            start_level=start,
            ring_degree=profile.ring_degree,
        )

    def analytic_costs(self, profile: ParamProfile) -> dict[str, dict[str, CostReport]]:
        costs: dict[str, dict[str, CostReport]] = {}
        for direction in ("idft", "dft"):
            plans = {v: self.analytic_plans(profile, direction, v) for v in ("baseline", "minks")}
            costs[direction] = {
                variant: self.cost_model.hdft_pass_cost(
                    plans["baseline" if variant == "baseline" else "minks"], profile, variant
                )
                for variant in COST_VARIANTS
            }
        return costs

    def _analytic_hdft(self, report: Report, profile: ParamProfile) -> None:
        costs = self.analytic_costs(profile)
        rows = []
        for direction, by_variant in costs.items():
            for variant, cost in by_variant.items():
                rows.append(self._cost_row(direction, cost, profile.ring_degree))
                self.reports.record(
                    report, f"{profile.name}_{direction}_ops_per_byte", variant,
                    round(cost.ops_per_byte, 4), "ops/byte",
                )
                self.reports.record(
                    report, f"{profile.name}_{direction}_offchip", variant,
                    round(cost.offchip_bytes / MIB, 2), "MiB",
                )
            base, minks, oflimb = (by_variant[v] for v in COST_VARIANTS)
            self.reports.check(
                report,
                f"{profile.name} {direction} traffic is monotone across variants",
                base.offchip_bytes >= minks.offchip_bytes >= oflimb.offchip_bytes
                and oflimb.modular_mults >= minks.modular_mults,
            )
            if profile.name == "ark":
                self._published_checks(report, direction, base, minks, oflimb)
        report.lines.append(f"analytic profile: {profile.name}")
        self.reports.table(report, self._cost_headers(), rows)

    def _published_checks(
        self,
        report: Report,
        direction: str,
        base: CostReport,
        minks: CostReport,
        oflimb: CostReport,
    ) -> None:
        check = self.reports.check
        check(
            report,
            f"ark {direction} minks+oflimb ops/byte near {PUBLISHED_OPS_PER_BYTE[direction]}",
            _within(oflimb.ops_per_byte, PUBLISHED_OPS_PER_BYTE[direction], 0.15),
            f"{oflimb.ops_per_byte:.2f}",
        )
        cut = 1 - oflimb.offchip_bytes / base.offchip_bytes
        check(
            report,
            f"ark {direction} traffic reduction near {PUBLISHED_TRAFFIC_CUT[direction]:.0%}",
            abs(cut - PUBLISHED_TRAFFIC_CUT[direction]) < 0.05,
            f"{cut:.1%}",
        )
        gain = minks.ops_per_byte / base.ops_per_byte
        check(
            report,
            f"ark {direction} minks intensity gain near {PUBLISHED_MINKS_GAIN[direction]}x",
            _within(gain, PUBLISHED_MINKS_GAIN[direction], 0.15),
            f"{gain:.2f}x",
        )
        check(
            report,
            f"ark {direction} single-use data near published volume",
            _within(base.single_use_bytes, PUBLISHED_SINGLE_USE_BYTES[direction], 0.15),
            f"{base.single_use_bytes / 1e9:.2f} GB",
        )
        utilization = self.cost_model.utilization_bound(
            SCALED_F1, base.single_use_bytes, base.modular_mults
        )
        check(
            report,
            f"ark {direction} scaled-F1 utilization bound near published rate",
            _within(utilization, PUBLISHED_UTILIZATION[direction], 0.20),
            f"{utilization:.2%}",
        )
        check(
            report,
            f"ark {direction} OF-Limb compute share",
            abs(oflimb.oflimb_share - PUBLISHED_OFLIMB_SHARE[direction]) < 0.02,
            f"{oflimb.oflimb_share:.1%}",
        )
        check(
            report,
            f"ark {direction} plaintext traffic share",
            abs(base.plaintext_share - PUBLISHED_PLAINTEXT_SHARE[direction]) < 0.03,
            f"{base.plaintext_share:.1%}",
        )

    # ============= sizes =============

    def cmd_report_sizes(self, config: RunConfig) -> Report:
        """Reproduce the published data-size table and print the selected profile."""
        report = self.reports.new_report("sizes")
        rows = []
        for name, expected in PUBLISHED_SIZES_MIB.items():
            profile = get_profile(name)
            got = self.cost_model.data_sizes(profile).in_mib()
            rows.append([name, *(f"{v:g}" for v in got)])
            labels = ("plaintext", "ciphertext", "evk")
            for label, value, want in zip(labels, got, expected, strict=True):
                self.reports.check(report, f"{name} {label} = {want:g} MiB", value == want)
                self.reports.record(report, f"{name}_{label}", "size", value, "MiB")
        selected = get_profile(config.profile)
        if selected.name not in PUBLISHED_SIZES_MIB:
            sizes = self.cost_model.data_sizes(selected).in_mib()
            rows.append([selected.name, *(f"{v:g}" for v in sizes)])
        self.reports.table(report, ["profile", "plaintext MiB", "ciphertext MiB", "evk MiB"], rows)

        alternating = self.cost_model.distribution_transfer(selected, "alternating")
        limb_wise = self.cost_model.distribution_transfer(selected, "limb_wise_only")
        twist = self.cost_model.twist_storage(selected)
        report.lines.append(
            f"{selected.name}: key-switch transfer {alternating} words (alternating) vs "
            f"{limb_wise} words (limb-wise only); twist tables {twist.table_bytes / MIB:g} MiB, "
            f"schedules {twist.schedule_bytes} bytes"
        )
        record = self.reports.record
        record(report, f"{selected.name}_transfer", "alternating", alternating, "words")
        record(report, f"{selected.name}_transfer", "limb_wise_only", limb_wise, "words")
        record(report, f"{selected.name}_twist_table", "size", twist.table_bytes / MIB, "MiB")
        return report

    # ============= keygen =============

    def cmd_keygen(self, config: RunConfig) -> Report:
        """Write the secret key, multiplication key, plan rotation keys and plan seeds."""
        report = self.reports.new_report("keygen")
        params = self.load_params(config)
        ckks, hdft = self._services(params, config.seed)
        k, split = self.plan_shape(params.slots, config.k)
        top = params.max_level
        idft_plan = hdft.build_plan(k, split, "idft", config.plan_variant, start_level=top)
        dft_plan = hdft.build_plan(
            k, split, "dft", config.plan_variant, start_level=top - idft_plan.iteration_count
        )
        keys = ckks.keygen(rotations=idft_plan.required_rotations() | dft_plan.required_rotations())
        assert keys.secret is not None  # nosec B101
        out_dir = Path(config.out) if config.out else ARTIFACTS_DIR / "keys"
        repo = self.artifact_repository
        written = [
            repo.save_secret_key(keys.secret, out_dir / "secret.key"),
            repo.save_evaluation_key(keys.mult_key(), out_dir / "mult.evk"),
        ]
        for r, evk in sorted(keys.rotations.items()):
            written.append(repo.save_evaluation_key(evk, out_dir / f"rot_{r}.evk"))
        for plan in (idft_plan, dft_plan):
            written.append(repo.save_seeds(list(plan.seeds()), out_dir / f"{plan.direction}.seeds"))
        for path in written:
            report.lines.append(f"{path.name}: {path.stat().st_size} bytes")
        reloaded = repo.load_secret_key(out_dir / "secret.key", params)
        self.reports.check(
            report, "secret key reloads identically", reloaded.poly == keys.secret.poly
        )
        self.reports.record(report, "rotation_keys", config.variant, len(keys.rotations), "count")
        logger.info(f"Wrote {len(written)} artifacts to {out_dir}")
        return report

    # ============= bench =============

    def cmd_bench(self, config: RunConfig) -> Report:
        """Time the main kernels and operations at the chosen parameters."""
        report = self.reports.new_report("bench")
        params = self.load_params(config)
        rng = np.random.default_rng(config.seed)
        ckks, _ = self._services(params, config.seed)
        keys = ckks.keygen(rotations=(1,))
        assert keys.secret is not None  # nosec B101
        modulus = params.ciphertext_basis[0]
        limb = Limb(rng.integers(0, modulus.q, size=params.ring_degree, dtype=np.uint64), modulus)
        poly = RnsPolynomial.random_uniform(
            params.ciphertext_basis.prefix(params.alpha), params.ring_degree, rng,
            Representation.COEFFICIENT,
        )
        ct = ckks.encrypt(ckks.encode(self._random_message(rng, params.slots)), keys.secret)
        cases: list[tuple[str, Callable[[], object]]] = [
            ("ntt", lambda: ntt(limb, "forward")),
            ("base_convert", lambda: base_convert(poly, params.special_basis)),
            ("key_switch", lambda: ckks.key_switch(ct.a, keys.mult_key(), ct.level)),
            ("hmult", lambda: ckks.hmult(ct, ct, keys.mult_key())),
            ("hrot", lambda: ckks.rotate(ct, 1, keys)),
        ]
        if math.isqrt(params.ring_degree) ** 2 == params.ring_degree:
            cases.insert(1, ("four_step_ntt", lambda: four_step_ntt(limb, "forward")))
        rows = []
        for name, fn in cases:
            timings = []
            for _ in range(config.repeats):
                start = time.perf_counter()
                fn()
                timings.append(time.perf_counter() - start)
            best, avg = min(timings), sum(timings) / len(timings)
            logger.info(f"{name}: min {best * 1e3:.2f} ms, avg {avg * 1e3:.2f} ms")
            rows.append([name, f"{best * 1e3:.2f}", f"{avg * 1e3:.2f}"])
            self.reports.record(report, f"bench_{name}", "min", best, "s")
        self.reports.table(report, ["operation", "min ms", "avg ms"], rows)
        return report

    # ============= Dispatch =============

    def run(self, config: RunConfig) -> tuple[int, Report]:
        handlers: dict[str, Callable[[RunConfig], Report]] = {
            "selftest": self.cmd_selftest,
            "hdft": self.cmd_hdft,
            "sizes": self.cmd_report_sizes,
            "keygen": self.cmd_keygen,
            "bench": self.cmd_bench,
        }
        report = handlers[config.command](config)
        if config.out is not None and config.command != "keygen":
            self.reports.write(report, config.out)
        status = 0 if report.passed else 1
        logger.info(
            f"{config.command}: {len(report.checks) - len(report.failed)}/{len(report.checks)} "
            f"checks passed"
        )
        return status, report


_default_controller = None


def get_run_controller() -> RunController:
    """Get the default run controller instance."""
    global _default_controller
    if _default_controller is None:
        _default_controller = RunController()
    return _default_controller


def reset_run_controller() -> None:
    """Reset the global run controller instance."""
    global _default_controller
    _default_controller = None


__all__ = [
    "COMMANDS",
    "RunConfig",
    "RunController",
    "VARIANTS",
    "default_split",
    "get_run_controller",
    "reset_run_controller",
]
