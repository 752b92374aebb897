"""scikit-learn style wrapper around the L2-optimal DDROM fit."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import FEASIBILITY_CAP, TrainingSet, predict
from .optimize import C1, C2, fit


class DdromRegressor(RegressorMixin, BaseEstimator):
    """Learn ``mu -> y`` with a parameter-separable reduced model.

    Parameters
    ----------
    initial : DdromMatrices
        Starting DDROM, typically a Galerkin projection. Defines the reduced
        size, block skeleton and scalar coefficient functions.
    maxit : int
        Maximum BFGS iterations.
    tol : float
        Stop when the relative L2 change of the outputs between iterates
        falls to this value.
    structured : bool
        Optimize only the saddle-point sub-blocks (True) or every entry of
        the DDROM matrices (False).
    c1, c2 : float
        Strong Wolfe constants.
    feasibility_cap : float
        Largest admissible weighted ``||A(mu)^-1||_F`` on the training set.

    Attributes
    ----------
    matrices_ : DdromMatrices
        Fitted DDROM.
    report_ : FitReport
        Iterate history and stop reason.
    """

    def __init__(self, initial=None, maxit=1000, tol=1e-16, structured=True,
                 c1=C1, c2=C2, feasibility_cap=FEASIBILITY_CAP):
        self.initial = initial
        self.maxit = maxit
        self.tol = tol
        self.structured = structured
        self.c1 = c1
        self.c2 = c2
        self.feasibility_cap = feasibility_cap

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        mus = _as_mu(X)
        if self.initial is None:
            raise ValueError("DdromRegressor needs an initial DDROM")
        if sample_weight is not None:
            w = np.asarray(sample_weight, dtype=float)
            sample_weight = w / w.sum()
        training = TrainingSet(mus, sample_weight)
        self.matrices_, self.report_ = fit(
            self.initial, list(zip(mus, y)), training, maxit=self.maxit, tol=self.tol,
            structured=self.structured, c1=self.c1, c2=self.c2, cap=self.feasibility_cap)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "matrices_")
        X = check_array(X, ensure_2d=False)
        return predict(self.matrices_, _as_mu(X))


def _as_mu(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single parameter column, got {X.shape[1]}")
        X = X[:, 0]
    return X
