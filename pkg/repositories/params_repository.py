"""
Params Repository - Data access layer for CKKS parameter sets.

Parameter sets are JSON objects; a few named sets are built in. Primes are not stored:
they are regenerated deterministically from the bit widths.
"""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from typing import Any

from loguru import logger

from utils.ckks_types import CkksParams
from utils.constants import (
    CONFIG_DIR,
    DEFAULT_ERROR_STDDEV,
    DEFAULT_Q0_BITS,
    DEFAULT_QI_BITS,
    DEFAULT_SCALE_BITS,
    DEFAULT_SEED,
    DEFAULT_SPECIAL_BITS,
)
from utils.errors import ConfigurationError

REQUIRED_KEYS = ("ring_degree", "slots", "max_level", "dnum")

BUILTIN_PARAMS: dict[str, dict[str, Any]] = {
    "desk": {"ring_degree": 2**13, "slots": 2**6, "max_level": 7, "dnum": 2},
    "test": {"ring_degree": 2**7, "slots": 2**4, "max_level": 5, "dnum": 3},
    "boot": {"ring_degree": 2**5, "slots": 2**4, "max_level": 5, "dnum": 3},
}


def _with_defaults(raw: dict[str, Any]) -> dict[str, Any]:
    spec = {
        "scale_bits": DEFAULT_SCALE_BITS,
        "q0_bits": DEFAULT_Q0_BITS,
        "qi_bits": DEFAULT_QI_BITS,
        "special_bits": DEFAULT_SPECIAL_BITS,
        "error_stddev": DEFAULT_ERROR_STDDEV,
        "hamming_weight": None,
        "seed": DEFAULT_SEED,
    }
    spec.update(raw)
    return spec


@lru_cache(maxsize=16)
def _generate(frozen: tuple[tuple[str, Any], ...]) -> CkksParams:
    spec = dict(frozen)
    return CkksParams.generate(
        ring_degree=int(spec["ring_degree"]),
        slots=int(spec["slots"]),
        max_level=int(spec["max_level"]),
        dnum=int(spec["dnum"]),
        scale_bits=int(spec["scale_bits"]),
        q0_bits=int(spec["q0_bits"]),
        qi_bits=int(spec["qi_bits"]),
        special_bits=int(spec["special_bits"]),
        error_stddev=float(spec["error_stddev"]),
        hamming_weight=spec["hamming_weight"],
        seed=int(spec["seed"]),
    )


class ParamsRepository:
    """Repository for parameter files and the built-in parameter sets."""

    def __init__(self, config_dir: Path = CONFIG_DIR):
        """
        Initialize the params repository.

        Args:
            config_dir: Directory searched for ``<name>.json`` parameter files
        """
        self.config_dir = Path(config_dir)

    # ============= Loading =============

    def spec_for(self, name_or_path: str | Path) -> dict[str, Any]:
        """Raw parameter mapping for a built-in name, a config-dir name or a file path.

        Raises:
            ConfigurationError: If the file is missing, unreadable or incomplete.
        """
        text = str(name_or_path)
        if text in BUILTIN_PARAMS:
            return _with_defaults(BUILTIN_PARAMS[text])
        path = Path(name_or_path)
        if not path.suffix:
            path = self.config_dir / f"{text}.json"
        if not path.exists():
            raise ConfigurationError(
                f"Unknown parameter set {text!r}: no built-in and no file at {path}"
            )
        try:
            with path.open("r", encoding="utf-8") as f:
                raw = json.load(f)
        except (json.JSONDecodeError, OSError) as exc:
            raise ConfigurationError(f"Failed to read parameter file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"Parameter file {path} must hold a JSON object")
        missing = [key for key in REQUIRED_KEYS if key not in raw]
        if missing:
            raise ConfigurationError(f"Parameter file {path} lacks {', '.join(missing)}")
        logger.debug(f"Loaded parameter file {path}")
        return _with_defaults(raw)

    def load_params(
        self,
        name_or_path: str | Path,
        seed: int | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> CkksParams:
        """Build parameters, regenerating primes; ``overrides`` replace individual keys."""
        spec = self.spec_for(name_or_path)
        spec.update(overrides or {})
        if seed is not None:
            spec["seed"] = seed
        params = _generate(tuple(sorted(spec.items())))
        logger.info(
            f"Parameters {name_or_path}: N={params.ring_degree}, n={params.slots}, "
            f"L={params.max_level}, dnum={params.dnum}, alpha={params.alpha}"
        )
        return params

    # ============= Saving =============

    def save_params(self, spec: dict[str, Any], path: Path) -> Path:
        """Write a parameter mapping as JSON."""
        missing = [key for key in REQUIRED_KEYS if key not in spec]
        if missing:
            raise ConfigurationError(f"Parameter mapping lacks {', '.join(missing)}")
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8") as f:
                json.dump(_with_defaults(spec), f, indent=2)
        except OSError as exc:
            raise ConfigurationError(f"Failed to save parameter file {path}: {exc}") from exc
        return path


_default_repository = None


def get_params_repository() -> ParamsRepository:
    """Get the default params repository instance."""
    global _default_repository
    if _default_repository is None:
        _default_repository = ParamsRepository()
    return _default_repository


def reset_params_repository() -> None:
    """Reset the global params repository instance."""
    global _default_repository
    _default_repository = None


__all__ = [
    "BUILTIN_PARAMS",
    "ParamsRepository",
    "get_params_repository",
    "reset_params_repository",
]
