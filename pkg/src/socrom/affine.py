"""Scalar parameter functions of the affine (parameter-separable) forms.

Every coefficient function used by the toolkit is a polynomial in the scalar
parameter, which keeps them cheap to evaluate and trivially serializable.
"""

import numpy as np
from numpy.polynomial import Polynomial


def constant(c=1.0):
    return Polynomial([float(c)])


def linear(slope=1.0, intercept=0.0):
    return Polynomial([float(intercept), float(slope)])


def as_scalar_function(f):
    if isinstance(f, Polynomial):
        return f
    if np.isscalar(f):
        return constant(f)
    return Polynomial(np.asarray(f, dtype=float))


def evaluate(funcs, mus):
    """Evaluate a list of scalar functions at ``mus``; shape ``(len(mus), len(funcs))``."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    if not funcs:
        return np.zeros((mus.size, 0))
    return np.column_stack([f(mus) for f in funcs])


def to_json(funcs):
    return [[float(c) for c in f.coef] for f in funcs]


def from_json(data):
    return [Polynomial(np.asarray(c, dtype=float)) for c in data]
