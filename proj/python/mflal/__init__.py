"""Multi-fidelity latent-space active learning on a synthetic design benchmark."""

from ._core import (
    CheckpointError,
    ConfigError,
    NumericalError,
    Oracles,
    Run,
    diversity_penalty,
    mixture_log_density,
    resolve_config,
    spearman,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "NumericalError",
    "Oracles",
    "Run",
    "diversity_penalty",
    "mixture_log_density",
    "resolve_config",
    "spearman",
]
