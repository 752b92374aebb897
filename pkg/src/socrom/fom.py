"""Full-order KKT solves and the scalar output map ``mu -> y(mu)``."""

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

COND_WARN_THRESHOLD = 1e14


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, mu, detail=""):
        self.mu = mu
        super().__init__(f"KKT matrix is singular at mu={mu!r}{': ' + detail if detail else ''}")


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass
class FomSolution:
    F: np.ndarray
    U: np.ndarray
    Lam: np.ndarray
    y: float
    mu: float
    residual: float = 0.0

    @property
    def x(self):
        return np.concatenate([self.F, self.U, self.Lam])


def max_workers():
    """Thread cap from ``SOCROM_THREADS`` (default: CPU count)."""
    env = os.environ.get("SOCROM_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def assemble_kkt(sys, mu):
    """Sparse block matrix ``A_h(mu)`` and right-hand side ``[0; Uhat(mu); d]``."""
    K = sys.K(mu)
    M1, M2, M3 = sys.M1, sys.M2, sys.M3
    if not sp.issparse(K):
        K, M1, M2, M3 = (sp.csr_matrix(np.asarray(a)) for a in (K, M1, M2, M3))
    A = sp.bmat([
        [2.0 * sys.beta * M1, None, -M2.T],
        [None, M3, K.T],
        [-M2, K, None],
    ], format="csc")
    rhs = np.concatenate([np.zeros(sys.n_control), sys.U_hat(mu), sys.d])
    return A, rhs


def kkt_residual(sys, mu, x):
    """Relative residuals of the state, adjoint and gradient block rows."""
    F, U, L = sys.split(x)
    K = sys.K(mu)
    state = K @ U - sys.M2 @ F - sys.d
    adjoint = sys.M3 @ U + K.T @ L - sys.U_hat(mu)
    gradient = 2.0 * sys.beta * (sys.M1 @ F) - sys.M2.T @ L

    def rel(r, *terms):
        scale = sum(np.linalg.norm(np.asarray(t).ravel()) for t in terms)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))

    return {
        "state": rel(state, K @ U, sys.M2 @ F, sys.d),
        "adjoint": rel(adjoint, sys.M3 @ U, K.T @ L, sys.U_hat(mu)),
        "gradient": rel(gradient, 2.0 * sys.beta * (sys.M1 @ F), sys.M2.T @ L),
    }


class _CondensedFactor:
    """Solver for the KKT matrix with the diagonal control block eliminated.

    The KKT matrix is symmetric, so ``trans`` is accepted and ignored.
    """

    def __init__(self, sys, mu, K):
        d = 2.0 * sys.beta * sp.csr_matrix(sys.M1).diagonal()
        if np.any(d <= 0):
            raise RuntimeError("control mass has a nonpositive diagonal entry")
        self.dinv = 1.0 / d
        self.M2 = sp.csr_matrix(sys.M2)
        self.ne, self.nh = sys.n_control, sys.n_state
        schur = self.M2 @ sp.diags(self.dinv) @ self.M2.T
        R = sp.bmat([[sp.csr_matrix(sys.M3), K.T], [K, -schur]], format="csc")
        self.lu = spla.splu(R)

    def solve(self, r, trans="N"):
        r = np.ravel(r)
        rf, ru, rl = r[:self.ne], r[self.ne:self.ne + self.nh], r[self.ne + self.nh:]
        ul = self.lu.solve(np.concatenate([ru, rl + self.M2 @ (self.dinv * rf)]))
        lam = ul[self.nh:]
        f = self.dinv * (rf + self.M2.T @ lam)
        return np.concatenate([f, ul])


def _is_diagonal(a):
    a = sp.csr_matrix(a)
    return sp.triu(a, 1).nnz == 0 and sp.tril(a, -1).nnz == 0


def factorize_kkt(sys, mu, A=None):
    """Factor ``A_h(mu)``; condenses out the control when ``M1`` is diagonal."""
    if _is_diagonal(sys.M1):
        K = sys.K(mu)
        K = sp.csr_matrix(K) if not sp.issparse(K) else K
        return _CondensedFactor(sys, mu, K)
    if A is None:
        A, _ = assemble_kkt(sys, mu)
    return spla.splu(A)


def _condition_estimate(A, lu):
    inv = spla.LinearOperator(
        A.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="T"), dtype=float)
    return spla.norm(A, 1) * spla.onenormest(inv)


def evaluate_output(x, sys, mu):
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.size,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.size},)")
    return float(sys.C(mu) @ x)


def solve_fom(sys, mu, check_conditioning=True, refine_steps=2):
    mu = float(mu)
    A, rhs = assemble_kkt(sys, mu)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = factorize_kkt(sys, mu, A)
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise SingularSystemError(mu, str(exc)) from exc
    x = lu.solve(rhs)
    for _ in range(refine_steps):
        x += lu.solve(rhs - A @ x)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(mu, "non-finite solution")
    if check_conditioning:
        cond = _condition_estimate(A, lu)
        if cond > COND_WARN_THRESHOLD:
            warnings.warn(f"KKT matrix condition estimate {cond:.3e} at mu={mu}",
                          IllConditionedWarning)
    res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    F, U, L = sys.split(x)
    return FomSolution(F=F.copy(), U=U.copy(), Lam=L.copy(),
                       y=evaluate_output(x, sys, mu), mu=mu, residual=float(res))


def solve_many(sys, mus, **kwargs):
    """Independent solves, threaded up to ``SOCROM_THREADS``; order is preserved."""
    mus = [float(m) for m in np.atleast_1d(mus)]
    if not mus:
        raise ValueError("need at least one parameter sample")

    def one(mu):
        try:
            return solve_fom(sys, mu, **kwargs)
        except SingularSystemError:
            raise
        except Exception as exc:
            raise RuntimeError(f"FOM solve failed at mu={mu}: {exc}") from exc

    workers = min(max_workers(), len(mus))
    if workers == 1:
        return [one(mu) for mu in mus]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, mus))


def sweep_outputs(sys, samples, **kwargs):
    """``[(mu, y(mu))]`` for every sample; the only data a DDROM fit may consume."""
    mus = getattr(samples, "samples", samples)
    return [(s.mu, s.y) for s in solve_many(sys, mus, **kwargs)]


def control_cost(sys, mu, F, U):
    """``J = 1/2 ||u - uhat||^2 + beta ||f||^2`` for discrete (F, U)."""
    uhat = sys.U_hat(mu)
    misfit = U @ (sys.M3 @ U) - 2.0 * U @ uhat + sys.uhat_norm_sq(mu)
    return float(0.5 * misfit + sys.beta * F @ (sys.M1 @ F))


def solve_state(sys, mu, F):
    """State for a given control: ``K(mu) U = M2 F + d``."""
    K = sys.K(mu)
    rhs = sys.M2 @ F + sys.d
    if sp.issparse(K):
        return spla.spsolve(K.tocsc(), rhs)
    return np.linalg.solve(K, rhs)
