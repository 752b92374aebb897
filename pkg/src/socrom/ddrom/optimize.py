"""BFGS with a strong Wolfe line search, driving the L2-optimal DDROM fit."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FEASIBILITY_CAP, InfeasibleDdromError, TrainingSet, evaluate, \
    matrix_gradients, parametrization_for

logger = logging.getLogger(__name__)

C1 = 1e-4
C2 = 0.9


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating values and slopes at ``a`` and ``b``."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if not (math.isfinite(disc) and disc >= 0.0):
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t if math.isfinite(t) else None


def strong_wolfe(phi, f0, d0, alpha=1.0, c1=C1, c2=C2, max_evals=60):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, slope, payload)``; a non-finite value marks
    an infeasible trial point, which is treated as a failed decrease.
    Returns ``(alpha, value, slope, payload, n_evals)`` and raises
    :class:`LineSearchError` (carrying the best decreasing point, if any) on
    failure.
    """
    if not d0 < 0:
        raise ValueError("search direction is not a descent direction")
    evals = 0
    best = None

    def armijo(a, f):
        return math.isfinite(f) and f <= f0 + c1 * a * d0

    def call(a):
        nonlocal evals, best
        evals += 1
        f, d, pay = phi(a)
        if armijo(a, f) and (best is None or f < best[1]):
            best = (a, f, d, pay)
        return f, d, pay

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while evals < max_evals:
            width = hi - lo
            t = _cubic_min(lo, flo, dlo, hi, fhi, dhi) if math.isfinite(fhi) else None
            margin = 0.1 * abs(width)
            if t is None or not (min(lo, hi) + margin <= t <= max(lo, hi) - margin):
                t = lo + 0.5 * width
            f, d, pay = call(t)
            if not armijo(t, f) or f >= flo:
                hi, fhi, dhi = t, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return t, f, d, pay
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = t, f, d
            if abs(hi - lo) <= 1e-16 * max(abs(lo), abs(hi), 1e-300):
                break
        raise LineSearchError(best)

    prev, fprev, dprev = 0.0, f0, d0
    a = alpha
    while evals < max_evals:
        f, d, pay = call(a)
        if not armijo(a, f) or (evals > 1 and f >= fprev):
            return (*zoom(prev, fprev, dprev, a, f, d), evals)
        if abs(d) <= -c2 * d0:
            return a, f, d, pay, evals
        if d >= 0:
            return (*zoom(a, f, d, prev, fprev, dprev), evals)
        prev, fprev, dprev = a, f, d
        a *= 2.0
    raise LineSearchError(best)


@dataclass
class FitReport:
    J: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    line_search_evals: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    stop_reason: str = ""
    n_iter: int = 0
    n_params: int = 0
    structured: bool = True
    c1: float = C1
    c2: float = C2

    @property
    def final_rel_change(self):
        return self.rel_change[-1] if self.rel_change else float("nan")

    def rows(self):
        """Iterate table; iteration 0 is the initial guess."""
        out = []
        for i, J in enumerate(self.J):
            out.append({
                "iteration": i,
                "J": J,
                "grad_norm": self.grad_norm[i],
                "step": self.step[i - 1] if i else 0.0,
                "line_search_evals": self.line_search_evals[i - 1] if i else 0,
                "rel_change": self.rel_change[i - 1] if i else float("nan"),
            })
        return out

    def to_dict(self):
        return {
            "stop_reason": self.stop_reason,
            "n_iter": self.n_iter,
            "n_params": self.n_params,
            "structured": self.structured,
            "wolfe_c1": self.c1,
            "wolfe_c2": self.c2,
            "initial_J": self.J[0] if self.J else None,
            "final_J": self.J[-1] if self.J else None,
            "final_rel_change": self.final_rel_change,
            "iterations": self.rows(),
        }


class _Problem:
    """Objective, gradient and outputs over the free-parameter vector."""

    def __init__(self, param, training, y, cap):
        self.param, self.training, self.y, self.cap = param, training, y, cap

    def __call__(self, theta):
        m = self.param.unpack(theta)
        try:
            ev = evaluate(m, self.training.samples, cap=self.cap)
        except InfeasibleDdromError:
            return math.inf, None, None
        w = self.training.weights
        J = float(np.sum(w * (self.y - ev.yhat) ** 2))
        g = self.param.pullback(*matrix_gradients(m, ev, self.y, w))
        return J, g, ev.yhat


def fit(initial, data, training=None, maxit=1000, tol=1e-16, structured=True,
        c1=C1, c2=C2, cap=FEASIBILITY_CAP, callback=None):
    """Fit DDROM matrices to ``(mu, y)`` data by BFGS on the squared L2 error.

    Stops when the relative change of the DDROM outputs between consecutive
    iterates, measured in the discrete L2 norm, drops to ``tol`` or after
    ``maxit`` iterations. Returns the best iterate and a :class:`FitReport`.
    """
    mus = np.array([float(mu) for mu, _ in data])
    y = np.array([float(v) for _, v in data])
    if training is None:
        training = TrainingSet(mus)
    elif not np.allclose(mus, training.samples, rtol=0, atol=1e-14):
        raise ValueError("data samples are not aligned with the training set")

    evaluate(initial, training.samples, cap=cap, dual=False)  # raises if infeasible
    param = parametrization_for(initial, structured)
    problem = _Problem(param, training, y, cap)
    theta = param.pack(initial)
    J, g, yhat = problem(theta)

    report = FitReport(n_params=param.size, structured=param.structured, c1=c1, c2=c2)
    report.J.append(J)
    report.grad_norm.append(float(np.linalg.norm(g)))
    H = None

    for it in range(1, maxit + 1):
        p = -g if H is None else -(H @ g)
        slope = float(g @ p)
        if not slope < 0 and H is not None:
            H, p = None, -g
            slope = float(g @ p)
        if not slope < 0:
            # zero gradient: the step is null and the outputs do not change
            report.n_iter = it
            report.step.append(0.0)
            report.line_search_evals.append(0)
            report.rel_change.append(0.0)
            report.J.append(J)
            report.grad_norm.append(float(np.linalg.norm(g)))
            report.stop_reason = "tol"
            break

        alpha0 = 1.0 if H is not None else max(J / -slope, 1e-300)

        def phi(a, theta=theta, p=p):
            Jt, gt, yt = problem(theta + a * p)
            if gt is None:
                return math.inf, math.nan, None
            return Jt, float(gt @ p), (gt, yt)

        try:
            a, J_new, _, (g_new, yhat_new), n_evals = strong_wolfe(phi, J, slope, alpha0, c1, c2)
            failed = False
        except LineSearchError as exc:
            failed = True
            best = exc.args[0] if exc.args else None
            if best is None:
                report.stop_reason = "wolfe_failed"
                report.n_iter = it - 1
                break
            a, J_new, _, (g_new, yhat_new) = best
            n_evals = -1

        s = a * p
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(yv):
            if H is None:
                H = (sy / float(yv @ yv)) * np.eye(param.size)
            rho = 1.0 / sy
            Hy = H @ yv
            H = H + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) \
                - rho * (np.outer(Hy, s) + np.outer(s, Hy))

        rel = training.norm(yhat - yhat_new) / max(training.norm(yhat_new), np.finfo(float).tiny)
        theta, J, g, yhat = theta + s, J_new, g_new, yhat_new
        report.J.append(J)
        report.grad_norm.append(float(np.linalg.norm(g)))
        report.step.append(float(np.linalg.norm(s)))
        report.line_search_evals.append(n_evals)
        report.rel_change.append(float(rel))
        report.n_iter = it
        if callback is not None:
            callback(it, J, rel)
        # an accepted (Armijo) point that meets the output criterion counts as converged
        if rel <= tol:
            report.stop_reason = "tol"
            break
        if failed:
            report.stop_reason = "wolfe_failed"
            break
    else:
        report.stop_reason = "maxit"

    logger.info("DDROM fit stopped (%s) after %d iterations: J %.3e -> %.3e",
                report.stop_reason, report.n_iter, report.J[0], report.J[-1])
    return param.unpack(theta), report
