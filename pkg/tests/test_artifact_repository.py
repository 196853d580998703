"""Tests for binary artifact storage and evk usage logs."""

import numpy as np
import pytest
from test_helpers import random_slots

from repositories.artifact_repository import (
    MAGIC,
    ArtifactRepository,
    get_artifact_repository,
    reset_artifact_repository,
)
from repositories.params_repository import ParamsRepository
from utils.ckks_types import EvkKind
from utils.dft_plan import EvkUsageLog, build_dft_plan
from utils.errors import SerializationError


@pytest.fixture
def repo(tmp_path):
    return ArtifactRepository(artifacts_dir=tmp_path)


@pytest.fixture
def ciphertext(ckks, test_keys, rng):
    return ckks.encrypt(ckks.encode(random_slots(rng, ckks.params.slots), level=3), test_keys.secret)


# ============= Roundtrips =============


def test_ciphertext_roundtrip(repo, ciphertext, test_params, tmp_path):
    path = repo.save_ciphertext(ciphertext, "ct.bin")

    loaded = repo.load_ciphertext(path, test_params)

    assert path == tmp_path / "ct.bin"
    assert loaded.identical_to(ciphertext)
    assert loaded.level == 3


def test_plaintext_roundtrip(repo, ckks, test_params, rng):
    pt = ckks.encode(random_slots(rng, ckks.params.slots), level=2)

    loaded = repo.load_plaintext(repo.save_plaintext(pt, "pt.bin"), test_params)

    assert loaded.poly == pt.poly
    assert (loaded.level, loaded.scale) == (pt.level, pt.scale)


def test_secret_key_roundtrip(repo, test_keys, test_params):
    loaded = repo.load_secret_key(repo.save_secret_key(test_keys.secret, "sk.bin"), test_params)

    assert loaded.poly == test_keys.secret.poly
    assert loaded.coefficients == test_keys.secret.coefficients


def test_evaluation_key_roundtrip(repo, test_keys, test_params):
    rotation = test_keys.rotations[1]
    mult = test_keys.mult_key()

    loaded_rot = repo.load_evaluation_key(repo.save_evaluation_key(rotation, "r1.evk"), test_params)
    loaded_mult = repo.load_evaluation_key(repo.save_evaluation_key(mult, "m.evk"), test_params)

    assert loaded_rot.kind is EvkKind.ROTATION
    assert loaded_rot.rotation == 1
    assert loaded_mult.kind is EvkKind.MULT
    assert loaded_mult.rotation is None
    for (b1, a1), (b2, a2) in zip(loaded_mult.pairs, mult.pairs, strict=True):
        assert b1 == b2 and a1 == a2


def test_loaded_keys_still_decrypt(repo, ckks, test_keys, test_params, rng):
    values = random_slots(rng, ckks.params.slots)
    ct = ckks.encrypt(ckks.encode(values), test_keys.secret)

    secret = repo.load_secret_key(repo.save_secret_key(test_keys.secret, "sk.bin"), test_params)

    assert np.max(np.abs(ckks.decrypt_values(ct, secret) - values)) < 2.0**-20


def test_fixture_bundle_decrypts_to_its_plaintext(repo, ckks, test_keys, test_params, rng, tmp_path):
    pt = ckks.encode(random_slots(rng, ckks.params.slots), level=2)
    ct = ckks.encrypt(pt, test_keys.secret)

    path = repo.save_fixture(ct, test_keys.secret, pt, "case.ct")
    loaded_ct, secret, expected = repo.load_fixture(path, test_params)

    assert {p.name for p in tmp_path.iterdir()} >= {"case.ct", "case.key", "case.pt"}
    assert loaded_ct.identical_to(ct)
    assert expected.level == 2
    decrypted = ckks.decrypt_values(loaded_ct, secret)
    assert np.max(np.abs(decrypted - ckks.decode(expected))) < 2.0**-20


def test_fixture_without_its_key_names_the_missing_file(repo, ciphertext, test_params, tmp_path):
    repo.save_ciphertext(ciphertext, "lonely.ct")

    with pytest.raises(SerializationError, match="lonely.key"):
        repo.load_fixture(tmp_path / "lonely.ct", test_params)


def test_seed_roundtrip(repo, test_params):
    plan = build_dft_plan(16, 2, (1, 2), "idft", params=test_params)
    seeds = list(plan.seeds())

    loaded = repo.load_seeds(repo.save_seeds(seeds, "idft.seeds"), test_params)

    assert len(loaded) == len(seeds)
    for got, want in zip(loaded, seeds, strict=True):
        assert np.array_equal(got.q0_limb.values, want.q0_limb.values)
        assert (got.tag, got.scale, got.magnitude) == (want.tag, want.scale, want.magnitude)


def test_empty_seed_file_is_refused(repo):
    with pytest.raises(SerializationError):
        repo.save_seeds([], "none.seeds")


def test_usage_log_roundtrip(repo):
    plan = build_dft_plan(16, 2, (1, 2), "idft", variant="minks")
    log = EvkUsageLog.from_schedule(plan.rotation_schedule(), plan.rotation_period)

    loaded = repo.load_usage_log(repo.save_usage_log(log, "usage.log"))

    assert loaded.to_text() == log.to_text()


# ============= Corruption =============


def test_bad_magic_names_the_file(repo, ciphertext, test_params):
    path = repo.save_ciphertext(ciphertext, "ct.bin")
    data = bytearray(path.read_bytes())
    data[: len(MAGIC)] = b"XXXX"
    path.write_bytes(bytes(data))

    with pytest.raises(SerializationError, match="ct.bin"):
        repo.load_ciphertext(path, test_params)


@pytest.mark.parametrize("keep", [10, 200, -3])
def test_truncated_artifact(repo, ciphertext, test_params, keep):
    path = repo.save_ciphertext(ciphertext, "ct.bin")
    path.write_bytes(path.read_bytes()[:keep])

    with pytest.raises(SerializationError, match="ct.bin"):
        repo.load_ciphertext(path, test_params)


def test_wrong_kind(repo, ciphertext, test_params):
    path = repo.save_ciphertext(ciphertext, "ct.bin")

    with pytest.raises(SerializationError, match="expected plaintext"):
        repo.load_plaintext(path, test_params)


def test_artifact_from_other_parameters(repo, ciphertext):
    path = repo.save_ciphertext(ciphertext, "ct.bin")
    other = ParamsRepository().load_params("test", overrides={"q0_bits": 59})
    boot = ParamsRepository().load_params("boot")

    with pytest.raises(SerializationError, match="outside the parameters"):
        repo.load_ciphertext(path, other)
    with pytest.raises(SerializationError, match="N="):
        repo.load_ciphertext(path, boot)


def test_missing_file(repo, test_params):
    with pytest.raises(SerializationError, match="missing.bin"):
        repo.load_ciphertext("missing.bin", test_params)
    with pytest.raises(SerializationError):
        repo.load_usage_log("missing.log")


def test_malformed_usage_log(repo, tmp_path):
    (tmp_path / "bad.log").write_text("# evk-usage v1\n0 4 rot:4 fetch\n", encoding="utf-8")

    with pytest.raises(SerializationError, match="bad.log"):
        repo.load_usage_log("bad.log")


def test_default_repository_singleton():
    first = get_artifact_repository()
    assert get_artifact_repository() is first
    reset_artifact_repository()
    assert get_artifact_repository() is not first
