"""Controllers module - Command-level controllers for coordinating services."""

from controllers.run_controller import (
    RunConfig,
    RunController,
    get_run_controller,
    reset_run_controller,
)

__all__ = [
    "RunConfig",
    "RunController",
    "get_run_controller",
    "reset_run_controller",
]
