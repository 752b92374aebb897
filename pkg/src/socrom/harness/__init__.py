"""Experiment configuration, pipeline and command line interface.

Names are resolved lazily so that the ``fit`` and ``report`` paths of the
command line never import the finite element modules.
"""

import importlib

_EXPORTS = {
    "ExperimentConfig": "config",
    "PRESETS": "config",
    "preset": "config",
    "sample_parameters": "config",
    "holdout_parameters": "config",
    "RunResult": "experiment",
    "StageError": "experiment",
    "build_models": "experiment",
    "dump_solution_fields": "experiment",
    "run_experiment": "experiment",
    "ErrorReport": "report",
    "load_errors": "report",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name not in _EXPORTS:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
