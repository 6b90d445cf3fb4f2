from .settings import Settings, load_settings
from .imageio import (
    NetpbmError,
    boundary_overlay,
    read_image,
    read_labels,
    write_image,
    write_labels,
)
from .validation import ExperimentKeyValidator, ValidationResult, load_experiment_config
from .orchestrator import BackendOrchestrator, CommandResult, RunManifest

__all__ = [
    # Core orchestrator
    "BackendOrchestrator",
    "CommandResult",
    "RunManifest",

    # Settings
    "Settings",
    "load_settings",

    # Image files
    "NetpbmError",
    "boundary_overlay",
    "read_image",
    "read_labels",
    "write_image",
    "write_labels",

    # Validation components
    "ExperimentKeyValidator",
    "ValidationResult",
    "load_experiment_config",
]
