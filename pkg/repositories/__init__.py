"""
Repositories package - Data access layer.

This package loads parameter sets and reads and writes binary artifacts, isolating the
scheme and the controllers from on-disk formats.
"""

from repositories.artifact_repository import ArtifactRepository, get_artifact_repository
from repositories.params_repository import ParamsRepository, get_params_repository

__all__ = [
    "ArtifactRepository",
    "ParamsRepository",
    "get_artifact_repository",
    "get_params_repository",
]
