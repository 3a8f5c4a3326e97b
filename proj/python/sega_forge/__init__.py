"""Python bindings for the sega_forge guidance engine and experiment runner."""

import json as _json

from . import _sega
from ._sega import (
    ConceptEdit,
    ConfigError,
    Direction,
    DomainError,
    GuidanceConfig,
    GuidanceState,
    NumericError,
    ShapeError,
    cfg_term,
    gamma,
    momentum_update,
    mu_mask,
    percentile_threshold,
    psi,
    sega_step,
)

__all__ = [
    "ConceptEdit",
    "ConfigError",
    "Direction",
    "DomainError",
    "GuidanceConfig",
    "GuidanceState",
    "NumericError",
    "ShapeError",
    "ablate",
    "canonical_config",
    "cfg_term",
    "diag",
    "gamma",
    "momentum_update",
    "mu_mask",
    "percentile_threshold",
    "psi",
    "run",
    "sega_step",
]


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def canonical_config(config):
    """Config with every default filled in, as a dict."""
    return _json.loads(_sega.canonical_config(_text(config)))


def run(config, jobs=1):
    return _json.loads(_sega.run(_text(config), jobs))


def ablate(config, jobs=1, long_form=False):
    return _json.loads(_sega.ablate(_text(config), jobs, long_form))


def diag(config, jobs=1):
    return _json.loads(_sega.diag(_text(config), jobs))
