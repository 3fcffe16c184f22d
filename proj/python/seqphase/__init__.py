"""Sequential ensemble phase estimation: simulator, protocol and experiment runner."""

import json

from ._core import (
    ConfigError,
    DomainError,
    FieldScenario,
    InfeasibleScenario,
    IoError,
    Tolerance,
    __version__,
    alternatives,
    coherence_rotation_limit,
    contrast,
    effective_sigma,
    erf,
    g_of_beta,
    gaussian_entropy,
    measure_field,
    nu_factor,
    nu_factor_asymptotic,
    plan_scenario,
    posterior_p,
    resource_scaling,
    run_protocol,
    sample,
    shannon_entropy,
    steps_for_precision,
)
from ._core import _run_experiment


def _text(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_text(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def run_experiment(mode, **settings):
    """Run one experiment mode; returns (summary dict, csv text).

    Keyword names follow the config-file keys, e.g. trials, atoms, beta_tilde, phi, out.
    """
    settings = {k.replace("-", "_"): v for k, v in settings.items()}
    if mode.replace("-", "_") == "single_run":
        settings.setdefault("trials", 1)
    pairs = [("mode", mode)] + [(k, _text(v)) for k, v in settings.items()]
    summary, csv = _run_experiment(pairs)
    return json.loads(summary), csv


__all__ = [name for name in dir() if not name.startswith("_")]
