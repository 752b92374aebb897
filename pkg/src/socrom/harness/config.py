"""Experiment configuration, presets and parameter sampling."""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from ..ddrom.model import TrainingSet
from ..fem import DEFAULT_INCLUSIONS
from ..problems import OUTPUTS, PROBLEMS

SAMPLING_MODES = ("uniform_linspace", "random_uniform")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``coarse`` (a pair of coarse cell counts) switches the data-generating
    model from the fine FOM to the GMsFEM coarse system with ``modes``
    spectral functions per coarse node. ``pattern`` is either ``"default"``
    or a list of ``[x0, x1, y0, y1]`` inclusion rectangles for kappa1.
    ``test_count`` defaults to ``train_count - 1`` so the test grid sits
    half a step off the training linspace.
    """

    name: str = "experiment"
    problem: str = "diffusion"
    output: str = "full"
    fine: tuple = (64, 64)
    coarse: tuple = None
    modes: int = 3
    beta: float = 1e-3
    interval: tuple = (1.0, 10.0)
    train_count: int = 100
    test_count: int = None
    sampling: str = "uniform_linspace"
    N: int = 3
    maxit: int = 1000
    tol: float = 1e-16
    structured: bool = True
    contrast: float = 1e4
    pattern: object = "default"
    seed: int = 0
    write_fields: bool = True

    def __post_init__(self):
        self.fine = tuple(int(v) for v in self.fine)
        if self.coarse is not None:
            self.coarse = tuple(int(v) for v in self.coarse)
        self.interval = tuple(float(v) for v in self.interval)
        if self.test_count is None:
            self.test_count = max(1, int(self.train_count) - 1)
        self.validate()

    def validate(self):
        a, b = self.interval
        if not a < b:
            raise ValueError(f"parameter interval must satisfy a < b, got {self.interval}")
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")
        for name in ("train_count", "test_count", "N", "modes", "maxit"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if len(self.fine) != 2 or min(self.fine) < 1:
            raise ValueError("fine must be two positive cell counts")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.coarse is not None:
            if len(self.coarse) != 2 or min(self.coarse) < 1:
                raise ValueError("coarse must be two positive cell counts")
            ratios = {f / c for f, c in zip(self.fine, self.coarse)}
            if any(f % c for f, c in zip(self.fine, self.coarse)) or len(ratios) != 1:
                raise ValueError(
                    f"fine grid {self.fine} is not a uniform refinement of {self.coarse}")

    @property
    def refinement(self):
        return None if self.coarse is None else self.fine[0] // self.coarse[0]

    @property
    def reference_mu(self):
        return 0.5 * (self.interval[0] + self.interval[1])

    def to_dict(self):
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


PRESETS = {
    "experiment1": dict(name="experiment1", problem="diffusion", fine=(64, 64)),
    "experiment2": dict(name="experiment2", problem="advection_diffusion", fine=(64, 64)),
    "experiment2-gmsfem": dict(name="experiment2-gmsfem", problem="advection_diffusion",
                               fine=(128, 128), coarse=(8, 8), modes=3),
    "smoke": dict(name="smoke", fine=(8, 8), train_count=5, N=1, maxit=50),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


def sample_parameters(interval, count, mode="uniform_linspace", seed=0):
    """Training samples with uniform weights.

    ``uniform_linspace`` includes both endpoints; ``random_uniform`` draws
    sorted samples from a seeded generator.
    """
    a, b = (float(v) for v in interval)
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    if mode == "uniform_linspace":
        mus = np.linspace(a, b, count)
    elif mode == "random_uniform":
        mus = np.sort(np.random.default_rng(seed).uniform(a, b, count))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return TrainingSet(mus, interval=(a, b))


def holdout_parameters(interval, count):
    """Midpoints of ``count + 1`` equispaced points: a half-step offset grid."""
    a, b = (float(v) for v in interval)
    edges = np.linspace(a, b, int(count) + 1)
    return TrainingSet(0.5 * (edges[:-1] + edges[1:]), interval=(a, b))


def kappa1_pattern(config):
    if isinstance(config.pattern, str):
        if config.pattern != "default":
            raise ValueError(f"unknown kappa1 pattern {config.pattern!r}")
        return DEFAULT_INCLUSIONS
    return [tuple(float(v) for v in r) for r in config.pattern]

