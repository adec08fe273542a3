"""Fragment embedding with FCI and sample-based subspace solvers."""

import json as _json

from ._core import (
    KCAL_PER_HARTREE,
    ClusterHamiltonian,
    Error,
    IoError,
    SolverError,
    ValidationError,
    dispatch_solver,
    fci,
    lucj_samples,
    read_fcidump,
    relative_energy,
    sector_dimension,
    sqd,
)
from ._core import run as _run
from ._core import validate_config as _validate_config


def validate_config(config):
    """Returns the config with every default filled in."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_validate_config(config))


def run(config):
    """Runs the whole pipeline; `config` is a dict or a JSON string."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run(config)


__all__ = [
    "KCAL_PER_HARTREE",
    "ClusterHamiltonian",
    "Error",
    "IoError",
    "SolverError",
    "ValidationError",
    "dispatch_solver",
    "fci",
    "lucj_samples",
    "read_fcidump",
    "relative_energy",
    "run",
    "sector_dimension",
    "sqd",
    "validate_config",
]
