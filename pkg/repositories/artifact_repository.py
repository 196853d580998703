"""
Artifact Repository - Binary storage for keys, ciphertexts, plaintexts and plan seeds.

Layout (little-endian): a fixed header, one uint64 per limb prime, the residue payload
``polys × limbs × N`` as uint64 words in index-major order, then a length-prefixed UTF-8
JSON trailer with per-artifact metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from utils.ckks_types import (
    Ciphertext,
    CkksParams,
    EvaluationKey,
    EvkKind,
    Plaintext,
    SecretKey,
)
from utils.constants import ARTIFACTS_DIR
from utils.dft_plan import EvkUsageLog, PlaintextSeed
from utils.errors import CkksError, SerializationError
from utils.modular import PrimeModulus, to_centered
from utils.ntt import Limb
from utils.rns_poly import BasisKind, LimbBasis, Representation, RnsPolynomial

MAGIC = b"RNSC"
FORMAT_VERSION = 1
# magic, version, kind, representation, ring degree, level, scale, polys, limbs, extra
HEADER = struct.Struct("<4sHHHIidIIi")
WORD = np.dtype("<u8")
TRAILER_LENGTH = struct.Struct("<I")


class ArtifactKind(IntEnum):
    SECRET_KEY = 1
    EVALUATION_KEY = 2
    CIPHERTEXT = 3
    PLAINTEXT = 4
    SEEDS = 5


@dataclass
class _Artifact:
    kind: ArtifactKind
    representation: Representation
    ring_degree: int
    level: int
    scale: float
    extra: int
    primes: tuple[int, ...]
    polys: np.ndarray
    trailer: dict[str, Any]


class ArtifactRepository:
    """Repository for binary scheme artifacts and evk usage logs."""

    def __init__(self, artifacts_dir: Path = ARTIFACTS_DIR):
        """
        Initialize the artifact repository.

        Args:
            artifacts_dir: Default directory for relative artifact names
        """
        self.artifacts_dir = Path(artifacts_dir)

    def _resolve(self, path: Path | str) -> Path:
        path = Path(path)
        return path if path.is_absolute() or path.parent != Path(".") else self.artifacts_dir / path

    # ============= Raw encoding =============

    def _write(self, path: Path | str, artifact: _Artifact) -> Path:
        target = self._resolve(path)
        polys = np.ascontiguousarray(artifact.polys, dtype=WORD)
        header = HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            int(artifact.kind),
            1 if artifact.representation is Representation.EVALUATION else 0,
            artifact.ring_degree,
            artifact.level,
            artifact.scale,
            polys.shape[0],
            len(artifact.primes),
            artifact.extra,
        )
        trailer = json.dumps(artifact.trailer, sort_keys=True).encode("utf-8")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with target.open("wb") as f:
                f.write(header)
                f.write(np.asarray(artifact.primes, dtype=WORD).tobytes())
                f.write(polys.tobytes())
                f.write(TRAILER_LENGTH.pack(len(trailer)))
                f.write(trailer)
        except OSError as exc:
            raise SerializationError(f"Failed to write artifact {target}: {exc}") from exc
        logger.debug(f"Wrote {artifact.kind.name.lower()} artifact to {target}")
        return target

    def _read(self, path: Path | str, expected: ArtifactKind) -> _Artifact:
        source = self._resolve(path)
        try:
            data = source.read_bytes()
        except OSError as exc:
            raise SerializationError(f"Failed to read artifact {source}: {exc}") from exc
        if len(data) < HEADER.size:
            raise SerializationError(f"Artifact {source} is truncated (no header)")
        magic, version, kind, rep, degree, level, scale, count, limbs, extra = HEADER.unpack_from(
            data
        )
        if magic != MAGIC:
            raise SerializationError(f"Artifact {source} has bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise SerializationError(f"Artifact {source} has unsupported version {version}")
        if kind != int(expected):
            raise SerializationError(
                f"Artifact {source} holds kind {kind}, expected {expected.name.lower()}"
            )
        offset = HEADER.size
        primes_end = offset + limbs * WORD.itemsize
        payload_end = primes_end + count * limbs * degree * WORD.itemsize
        if len(data) < payload_end + TRAILER_LENGTH.size:
            raise SerializationError(f"Artifact {source} is truncated")
        (trailer_size,) = TRAILER_LENGTH.unpack_from(data, payload_end)
        trailer_start = payload_end + TRAILER_LENGTH.size
        if len(data) != trailer_start + trailer_size:
            raise SerializationError(f"Artifact {source} has a corrupt trailer length")
        try:
            trailer = json.loads(data[trailer_start:].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SerializationError(f"Artifact {source} has an unreadable trailer: {exc}") from exc
        primes = tuple(int(q) for q in np.frombuffer(data[offset:primes_end], dtype=WORD))
        polys = np.frombuffer(data[primes_end:payload_end], dtype=WORD).astype(np.uint64)
        return _Artifact(
            kind=ArtifactKind(kind),
            representation=Representation.EVALUATION if rep else Representation.COEFFICIENT,
            ring_degree=degree,
            level=level,
            scale=scale,
            extra=extra,
            primes=primes,
            polys=polys.reshape(count, limbs, degree),
            trailer=trailer,
        )

    @staticmethod
    def _basis(
        artifact: _Artifact, params: CkksParams, kind: BasisKind, source: Path | str
    ) -> LimbBasis:
        if artifact.ring_degree != params.ring_degree:
            raise SerializationError(
                f"Artifact {source} uses N={artifact.ring_degree}, parameters use "
                f"N={params.ring_degree}"
            )
        known = {p.q: p for p in params.extended_basis}
        try:
            return LimbBasis(tuple(known[q] for q in artifact.primes), kind)
        except KeyError as exc:
            raise SerializationError(
                f"Artifact {source} references prime {exc.args[0]} outside the parameters"
            ) from exc

    def _polys(
        self, artifact: _Artifact, params: CkksParams, kind: BasisKind, source: Path | str
    ) -> list[RnsPolynomial]:
        basis = self._basis(artifact, params, kind, source)
        try:
            return [RnsPolynomial(p, basis, artifact.representation) for p in artifact.polys]
        except CkksError as exc:
            raise SerializationError(f"Artifact {source} holds invalid residues: {exc}") from exc

    # ============= Typed artifacts =============

    def save_ciphertext(self, ct: Ciphertext, path: Path | str) -> Path:
        return self._write(
            path,
            _Artifact(
                ArtifactKind.CIPHERTEXT,
                Representation.EVALUATION,
                ct.b.degree,
                ct.level,
                ct.scale,
                -1,
                ct.b.basis.q_values,
                np.stack([ct.b.coeffs, ct.a.coeffs]),
                {},
            ),
        )

    def load_ciphertext(self, path: Path | str, params: CkksParams) -> Ciphertext:
        artifact = self._read(path, ArtifactKind.CIPHERTEXT)
        b, a = self._polys(artifact, params, BasisKind.CIPHERTEXT, path)
        return Ciphertext(b=b, a=a, level=artifact.level, scale=artifact.scale)

    def save_plaintext(self, pt: Plaintext, path: Path | str) -> Path:
        return self._write(
            path,
            _Artifact(
                ArtifactKind.PLAINTEXT,
                pt.poly.representation,
                pt.poly.degree,
                pt.level,
                pt.scale,
                -1,
                pt.poly.basis.q_values,
                pt.poly.coeffs[np.newaxis],
                {},
            ),
        )

    def load_plaintext(self, path: Path | str, params: CkksParams) -> Plaintext:
        artifact = self._read(path, ArtifactKind.PLAINTEXT)
        (poly,) = self._polys(artifact, params, BasisKind.CIPHERTEXT, path)
        return Plaintext(poly=poly, scale=artifact.scale, level=artifact.level)

    def save_secret_key(self, sk: SecretKey, path: Path | str) -> Path:
        return self._write(
            path,
            _Artifact(
                ArtifactKind.SECRET_KEY,
                Representation.EVALUATION,
                sk.poly.degree,
                sk.poly.limb_count - 1,
                0.0,
                -1,
                sk.poly.basis.q_values,
                sk.poly.coeffs[np.newaxis],
                {},
            ),
        )

    def load_secret_key(self, path: Path | str, params: CkksParams) -> SecretKey:
        artifact = self._read(path, ArtifactKind.SECRET_KEY)
        (poly,) = self._polys(artifact, params, BasisKind.EXTENDED, path)
        first = poly.to_coefficient().coeffs[0]
        coefficients = tuple(int(c) for c in to_centered(first, poly.basis[0].q))
        if any(c not in (-1, 0, 1) for c in coefficients):
            raise SerializationError(f"Artifact {path} does not hold a ternary secret")
        return SecretKey(poly=poly, coefficients=coefficients)

    def save_evaluation_key(self, evk: EvaluationKey, path: Path | str) -> Path:
        first = evk.pairs[0][0]
        stacked = np.stack([poly.coeffs for pair in evk.pairs for poly in pair])
        return self._write(
            path,
            _Artifact(
                ArtifactKind.EVALUATION_KEY,
                Representation.EVALUATION,
                first.degree,
                first.limb_count - 1,
                0.0,
                -1 if evk.kind is EvkKind.MULT else int(evk.rotation or 0),
                first.basis.q_values,
                stacked,
                {"kind": evk.kind.value},
            ),
        )

    def load_evaluation_key(self, path: Path | str, params: CkksParams) -> EvaluationKey:
        artifact = self._read(path, ArtifactKind.EVALUATION_KEY)
        polys = self._polys(artifact, params, BasisKind.EXTENDED, path)
        if len(polys) % 2:
            raise SerializationError(f"Artifact {path} holds an odd number of key polynomials")
        try:
            kind = EvkKind(artifact.trailer.get("kind", "mult"))
        except ValueError as exc:
            raise SerializationError(f"Artifact {path} has unknown key kind") from exc
        pairs = tuple((polys[i], polys[i + 1]) for i in range(0, len(polys), 2))
        rotation = None if kind is EvkKind.MULT else artifact.extra
        return EvaluationKey(pairs=pairs, kind=kind, rotation=rotation)

    def save_seeds(self, seeds: list[PlaintextSeed], path: Path | str) -> Path:
        """Store plan seeds: their q0 limbs plus tag, scale and magnitude per seed."""
        if not seeds:
            raise SerializationError("Refusing to write an empty seed file")
        modulus = seeds[0].q0_limb.modulus
        trailer = {
            "seeds": [
                {"tag": s.tag, "scale": s.scale, "magnitude": str(s.magnitude)} for s in seeds
            ]
        }
        return self._write(
            path,
            _Artifact(
                ArtifactKind.SEEDS,
                Representation.COEFFICIENT,
                modulus.ring_degree,
                0,
                0.0,
                -1,
                (modulus.q,),
                np.stack([s.q0_limb.values for s in seeds])[:, np.newaxis, :],
                trailer,
            ),
        )

    def load_seeds(self, path: Path | str, params: CkksParams) -> list[PlaintextSeed]:
        artifact = self._read(path, ArtifactKind.SEEDS)
        self._basis(artifact, params, BasisKind.CIPHERTEXT, path)
        if artifact.primes != (params.q0,):
            raise SerializationError(f"Artifact {path} is not stored modulo q0")
        meta = artifact.trailer.get("seeds", [])
        if len(meta) != artifact.polys.shape[0]:
            raise SerializationError(f"Artifact {path} has mismatched seed metadata")
        q0: PrimeModulus = params.ciphertext_basis[0]
        try:
            return [
                PlaintextSeed(
                    q0_limb=Limb(poly[0], q0),
                    scale=float(m["scale"]),
                    tag=str(m["tag"]),
                    magnitude=int(m["magnitude"]),
                )
                for poly, m in zip(artifact.polys, meta, strict=True)
            ]
        except (KeyError, ValueError, CkksError) as exc:
            raise SerializationError(f"Artifact {path} holds an invalid seed: {exc}") from exc

    # ============= Fixtures =============

    @staticmethod
    def fixture_paths(path: Path | str) -> tuple[Path, Path, Path]:
        """Ciphertext, secret key (``.key``) and expected plaintext (``.pt``) of a fixture."""
        ct_path = Path(path)
        return ct_path, ct_path.with_suffix(".key"), ct_path.with_suffix(".pt")

    def save_fixture(
        self, ct: Ciphertext, sk: SecretKey, expected: Plaintext, path: Path | str
    ) -> Path:
        """Write a ciphertext with the key that decrypts it and the plaintext it should give."""
        ct_path, key_path, pt_path = self.fixture_paths(self._resolve(path))
        self.save_secret_key(sk, key_path)
        self.save_plaintext(expected, pt_path)
        return self.save_ciphertext(ct, ct_path)

    def load_fixture(
        self, path: Path | str, params: CkksParams
    ) -> tuple[Ciphertext, SecretKey, Plaintext]:
        """Raises SerializationError naming whichever of the three files is missing or corrupt."""
        ct_path, key_path, pt_path = self.fixture_paths(self._resolve(path))
        ct = self.load_ciphertext(ct_path, params)
        return ct, self.load_secret_key(key_path, params), self.load_plaintext(pt_path, params)

    # ============= Evk usage logs =============

    def save_usage_log(self, log: EvkUsageLog, path: Path | str) -> Path:
        target = self._resolve(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(log.to_text(), encoding="utf-8")
        except OSError as exc:
            raise SerializationError(f"Failed to write usage log {target}: {exc}") from exc
        return target

    def load_usage_log(self, path: Path | str) -> EvkUsageLog:
        source = self._resolve(path)
        try:
            text = source.read_text(encoding="utf-8")
        except OSError as exc:
            raise SerializationError(f"Failed to read usage log {source}: {exc}") from exc
        try:
            return EvkUsageLog.from_text(text)
        except CkksError as exc:
            raise SerializationError(f"Usage log {source} is invalid: {exc}") from exc


_default_repository = None


def get_artifact_repository() -> ArtifactRepository:
    """Get the default artifact repository instance."""
    global _default_repository
    if _default_repository is None:
        _default_repository = ArtifactRepository()
    return _default_repository


def reset_artifact_repository() -> None:
    """Reset the global artifact repository instance."""
    global _default_repository
    _default_repository = None


__all__ = [
    "ArtifactKind",
    "ArtifactRepository",
    "FORMAT_VERSION",
    "MAGIC",
    "get_artifact_repository",
    "reset_artifact_repository",
]
