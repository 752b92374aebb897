"""Output error reports; free of any finite element dependency."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..io import read_csv, write_csv

REL_GUARD = 1e-14
ERROR_COLUMNS = ["mu", "y", "y_hat", "abs_err", "rel_err"]


@dataclass
class ErrorReport:
    """Pointwise and summary output errors on a set of parameters."""

    mus: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    weights: np.ndarray = None
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mus = np.asarray(self.mus, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.y_hat = np.asarray(self.y_hat, dtype=float)
        if self.weights is None:
            self.weights = np.full(self.mus.size, 1.0 / self.mus.size)

    @property
    def abs_err(self):
        return np.abs(self.y - self.y_hat)

    @property
    def rel_err(self):
        """``|y - yhat| / |y|``; NaN where ``|y| <= 1e-14``."""
        out = np.full(self.y.shape, np.nan)
        ok = np.abs(self.y) > REL_GUARD
        out[ok] = self.abs_err[ok] / np.abs(self.y[ok])
        return out

    def summary(self):
        w = self.weights
        l2 = math.sqrt(float(np.sum(w * self.abs_err ** 2)))
        ynorm = math.sqrt(float(np.sum(w * self.y ** 2)))
        rel = self.rel_err
        defined = ~np.isnan(rel)
        return {
            "count": int(self.mus.size),
            "l2_abs": l2,
            "l2_rel": l2 / ynorm if ynorm > REL_GUARD else None,
            "max_abs": float(self.abs_err.max()),
            "max_rel": float(rel[defined].max()) if defined.any() else None,
            "rel_undefined": int((~defined).sum()),
        }

    def rows(self):
        rel = self.rel_err
        return [{"mu": float(m), "y": float(a), "y_hat": float(b), "abs_err": float(e),
                 "rel_err": "undefined" if np.isnan(r) else float(r)}
                for m, a, b, e, r in zip(self.mus, self.y, self.y_hat, self.abs_err, rel)]

    def write_csv(self, path):
        write_csv(path, self.rows(), ERROR_COLUMNS)


def load_errors(path):
    """Read an ``errors.csv`` back as an :class:`ErrorReport`."""
    rows = read_csv(path)
    return ErrorReport([float(r["mu"]) for r in rows], [float(r["y"]) for r in rows],
                       [float(r["y_hat"]) for r in rows])

