"""Tests for CLI command orchestration and exit codes."""

from __future__ import annotations

import sys

import numpy as np
import pytest

import main as cli
from controllers import run_controller
from controllers.run_controller import RunConfig, RunController, default_split
from repositories.artifact_repository import ArtifactRepository
from repositories.params_repository import ParamsRepository
from services.ckks_service import CkksService
from services.cost_model_service import CostModelService
from services.report_service import ReportService
from utils.errors import ConfigurationError, SerializationError


@pytest.fixture
def controller(tmp_path):
    return RunController(
        ParamsRepository(config_dir=tmp_path),
        ArtifactRepository(artifacts_dir=tmp_path),
        CostModelService(),
        ReportService(),
    )


@pytest.fixture
def quiet_main(monkeypatch, tmp_path):
    """Keep ``main`` from touching the real data directories or the global excepthook."""
    monkeypatch.setattr(cli, "ensure_base_dirs", lambda: None)
    monkeypatch.setattr(cli, "configure_logging", lambda logs_dir, level="INFO": None)
    monkeypatch.setattr(sys, "excepthook", sys.excepthook)
    return cli.main


def _record(report, metric, variant):
    return next(r.value for r in report.records if r.metric == metric and r.variant == variant)


# ============= Configuration =============


def test_run_config_validation():
    with pytest.raises(ConfigurationError):
        RunConfig(command="decrypt")
    with pytest.raises(ConfigurationError):
        RunConfig(command="hdft", variant="fast")
    with pytest.raises(ConfigurationError):
        RunConfig(command="selftest", trials=0)


def test_variant_properties():
    config = RunConfig(command="hdft", variant="minks-oflimb")

    assert config.plan_variant == "minks"
    assert config.oflimb
    assert config.cost_variant == "minks+oflimb"
    assert RunConfig(command="hdft").cost_variant == "baseline"


def test_plan_shape():
    assert default_split(5) == (3, 3)
    assert default_split(2) == (1, 2)
    assert RunController.plan_shape(16, None) == (2, (1, 2))
    assert RunController.plan_shape(64, None) == (3, (2, 2))
    assert RunController.plan_shape(64, 2) == (2, (1, 2))
    with pytest.raises(ConfigurationError):
        RunController.plan_shape(1, None)


# ============= Commands =============


@pytest.fixture
def fixture_bundle(controller, tmp_path):
    """A ciphertext written with its secret key and the plaintext it must decrypt to."""
    params = ParamsRepository().load_params("test")
    ckks = CkksService(params, rng=np.random.default_rng(21))
    sk = ckks.generate_secret_key()
    pt = ckks.encode(np.linspace(-1, 1, params.slots), level=3)
    path = controller.artifact_repository.save_fixture(
        ckks.encrypt(pt, sk), sk, pt, tmp_path / "bundle.ct"
    )
    return ckks, path


def test_selftest_passes_on_small_parameters(controller, fixture_bundle):
    _, fixture = fixture_bundle
    status, report = controller.run(
        RunConfig(command="selftest", params="test", trials=4, fixture=fixture)
    )

    names = [c.name for c in report.checks]
    assert [c.name for c in report.failed] == []
    assert status == 0
    for expected in (
        "pmult + rescale",
        "cmult + rescale",
        "hrot by 2",
        "hrot by 5",
        "hrot by 8 (n/2)",
        "minks agrees with baseline",
        "minks loads at most two distinct evks per iteration",
        "minks rotation chain matches a direct rotation by 3",
        "oflimb plaintexts are bit-exact at every level 0..5",
        "minks-oflimb passes are identical to minks",
        "automorphism is a ring homomorphism",
        "keygen is deterministic under a fixed seed",
        "ntt butterflies agree under barrett and montgomery reduction",
        "utilization of an empty workload is zero",
        "alternating distribution moves less than limb-wise only",
        f"fixture {fixture} decrypts to its plaintext",
    ):
        assert expected in names
    assert sum(name.startswith("bootstrap roundtrip") for name in names) == 3
    assert any(name.startswith("T_A.S.") for name in names)
    assert any("over 4 trials" in c.detail for c in report.checks)


def test_fixture_check_fails_on_the_wrong_plaintext(controller, fixture_bundle):
    ckks, path = fixture_bundle
    _, key_path, pt_path = controller.artifact_repository.fixture_paths(path)
    other = ckks.encode(np.zeros(ckks.params.slots), level=3)
    controller.artifact_repository.save_plaintext(other, pt_path)
    report = controller.reports.new_report("selftest")

    controller._check_fixture(report, ckks, path, "tampered fixture")

    assert [c.name for c in report.failed] == ["tampered fixture decrypts to its plaintext"]
    assert key_path.exists()


def test_selftest_rejects_an_unreadable_fixture(controller, tmp_path):
    fixture = tmp_path / "broken.ct"
    fixture.write_bytes(b"RNSC")

    with pytest.raises(SerializationError, match="broken.ct"):
        controller.run(RunConfig(command="selftest", params="test", trials=2, fixture=fixture))


def test_analytic_hdft_reproduces_published_trends(controller, tmp_path):
    out = tmp_path / "hdft.txt"
    status, report = controller.run(
        RunConfig(command="hdft", analytic_only=True, profile="ark", out=out)
    )

    assert status == 0, [c.name for c in report.failed]
    assert out.read_text(encoding="utf-8") == report.render()
    assert _record(report, "ark_idft_offchip", "baseline") == pytest.approx(6238.5)
    assert _record(report, "ark_dft_offchip", "minks+oflimb") == pytest.approx(138.0)


@pytest.mark.parametrize("profile", ["desk", "lattigo"])
def test_analytic_hdft_on_other_profiles(controller, profile):
    status, report = controller.run(RunConfig(command="hdft", analytic_only=True, profile=profile))

    assert status == 0
    assert all("traffic is monotone" in c.name for c in report.checks)


def test_analytic_hdft_needs_a_slot_dft(controller):
    with pytest.raises(ConfigurationError):
        controller.run(RunConfig(command="hdft", analytic_only=True, profile="f1"))


def test_executed_hdft_variants_agree(controller):
    reports = {}
    for variant in ("baseline", "minks", "minks-oflimb"):
        status, report = controller.run(
            RunConfig(command="hdft", params="test", variant=variant, profile="desk")
        )
        assert status == 0, [c.name for c in report.failed]
        reports[variant] = report

    minks = _record(reports["minks"], "roundtrip_max_error", "minks")
    assert _record(reports["minks"], "idft_evk_loads", "minks") < _record(
        reports["baseline"], "idft_evk_loads", "baseline"
    )
    assert _record(reports["minks-oflimb"], "roundtrip_max_error", "minks-oflimb") == minks


def test_reports_are_reproducible_under_a_fixed_seed(tmp_path):
    """Two runs with the same seed render byte-identical reports."""
    rendered = []
    for run in range(2):
        controller = RunController(
            ParamsRepository(config_dir=tmp_path),
            ArtifactRepository(artifacts_dir=tmp_path / str(run)),
            CostModelService(),
            ReportService(),
        )
        _, report = controller.run(
            RunConfig(command="hdft", params="test", variant="minks", profile="desk", seed=5)
        )
        rendered.append(report.render())

    assert rendered[0] == rendered[1]
    assert "roundtrip_max_error" in rendered[0]


def test_sizes_report(controller):
    status, report = controller.run(RunConfig(command="sizes", profile="desk"))

    assert status == 0
    assert len(report.checks) == 12
    assert any(line.startswith("desk:") for line in report.lines)
    assert _record(report, "ark_evk", "size") == 120.0


def test_keygen_writes_artifacts(controller, tmp_path):
    out = tmp_path / "keys"
    status, report = controller.run(RunConfig(command="keygen", params="test", out=out))

    assert status == 0
    names = {p.name for p in out.iterdir()}
    assert {"secret.key", "mult.evk", "idft.seeds", "dft.seeds"} <= names
    assert any(name.startswith("rot_") for name in names)
    assert _record(report, "rotation_keys", "baseline") == sum(
        1 for name in names if name.startswith("rot_")
    )


def test_bench_records_every_case(controller):
    status, report = controller.run(RunConfig(command="bench", params="test", repeats=1))

    assert status == 0
    metrics = {r.metric for r in report.records}
    assert {"bench_ntt", "bench_key_switch", "bench_hmult", "bench_hrot"} <= metrics


def test_default_controller_singleton():
    first = run_controller.get_run_controller()
    assert run_controller.get_run_controller() is first
    run_controller.reset_run_controller()
    assert run_controller.get_run_controller() is not first


# ============= Exit codes =============


def test_main_exit_ok(quiet_main, capsys):
    assert quiet_main(["sizes"]) == cli.EXIT_OK
    assert "summary: 12/12 passed" in capsys.readouterr().out


def test_main_exit_on_failed_check(quiet_main, monkeypatch):
    monkeypatch.setattr(run_controller, "PUBLISHED_SIZES_MIB", {"ark": (1.0, 2.0, 3.0)})

    assert quiet_main(["sizes"]) == cli.EXIT_CHECK_FAILED


def test_main_exit_on_configuration_error(quiet_main):
    assert quiet_main(["hdft", "--analytic-only", "--profile", "f1"]) == cli.EXIT_ERROR
    assert quiet_main(["selftest", "--params", "missing-set"]) == cli.EXIT_ERROR
