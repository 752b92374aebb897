"""POD-Galerkin reduced models of the affine KKT system."""

from dataclasses import dataclass

import numpy as np

from .ddrom.model import DdromMatrices
from .fem import AffineSaddleSystem
from .fom import SingularSystemError, assemble_kkt, solve_many

RANK_TOL = 1e-14


class RankDeficiencyError(ValueError):
    pass


@dataclass
class SnapshotSet:
    samples: np.ndarray
    F_snap: np.ndarray
    U_snap: np.ndarray
    L_snap: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        n = len(self.samples)
        for name in ("F_snap", "U_snap", "L_snap"):
            block = getattr(self, name)
            if block.shape[1] != n:
                raise ValueError(f"{name} has {block.shape[1]} columns for {n} samples")
            if np.isnan(block).any():
                raise ValueError(f"{name} contains NaN")


@dataclass
class ProjectionBasis:
    """Orthonormal control basis ``V`` (N columns) and state/adjoint basis ``W`` (2N)."""

    V: np.ndarray
    W: np.ndarray
    sv_control: np.ndarray = None
    sv_state: np.ndarray = None

    @property
    def N(self):
        return self.V.shape[1]

    def energy_fraction(self):
        """Captured POD energy ``sum_{k<=n} s_k^2 / sum s_k^2`` for both blocks."""
        out = {}
        for name, s, n in (("control", self.sv_control, self.V.shape[1]),
                           ("state", self.sv_state, self.W.shape[1])):
            if s is not None:
                out[name] = float(np.sum(s[:n] ** 2) / np.sum(s ** 2))
        return out


def collect_snapshots(sys, training, **kwargs):
    mus = np.asarray(getattr(training, "samples", training), dtype=float)
    sols = solve_many(sys, mus, **kwargs)
    return SnapshotSet(
        samples=mus,
        F_snap=np.column_stack([s.F for s in sols]),
        U_snap=np.column_stack([s.U for s in sols]),
        L_snap=np.column_stack([s.Lam for s in sols]),
        outputs=np.array([s.y for s in sols]),
    )


def _leading_modes(X, n, block):
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if n > s.size or s[n - 1] <= RANK_TOL * s[0]:
        avail = int(np.sum(s > RANK_TOL * s[0])) if s.size else 0
        raise RankDeficiencyError(
            f"{block} snapshots have numerical rank {avail}; {n} modes requested")
    return U[:, :n], s


def pod_basis(snapshots, N):
    """Leading left singular vectors of the raw (unweighted) snapshot blocks."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    V, s_f = _leading_modes(snapshots.F_snap, N, "control")
    W, s_s = _leading_modes(np.hstack([snapshots.U_snap, snapshots.L_snap]), 2 * N, "state/adjoint")
    return ProjectionBasis(V=V, W=W, sv_control=s_f, sv_state=s_s)


def snapshot_rank(snapshots, rtol=1e-10):
    """Largest ``N`` with ``N`` control modes and ``2N`` state modes above ``rtol``."""
    def rank(X):
        s = np.linalg.svd(X, compute_uv=False)
        return int(np.sum(s > rtol * s[0]))
    return min(rank(snapshots.F_snap),
               rank(np.hstack([snapshots.U_snap, snapshots.L_snap])) // 2)


class GalerkinRom:
    """Galerkin projection of an :class:`AffineSaddleSystem` onto ``blockdiag(V, W, W)``."""

    def __init__(self, reduced, basis):
        self.reduced = reduced
        self.basis = basis

    @property
    def blocks(self):
        return (self.reduced.n_control, self.reduced.n_state, self.reduced.n_state)

    def solve(self, mu):
        A, rhs = assemble_kkt(self.reduced, mu)
        A = A.toarray()
        try:
            x = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(mu, str(exc)) from exc
        return x, float(self.reduced.C(mu) @ x)

    def predict(self, mus):
        return np.array([self.solve(mu)[1] for mu in np.atleast_1d(mus)])

    def lift(self, x):
        """Fine-space ``(F, U, Lambda)`` from a reduced state."""
        F, U, L = self.reduced.split(x)
        return self.basis.V @ F, self.basis.W @ U, self.basis.W @ L

    def to_ddrom(self):
        """The parameter-separable DDROM tuple this projection induces."""
        r = self.reduced
        return DdromMatrices.from_blocks(
            M1=np.asarray(r.M1), M2=np.asarray(r.M2), M3=np.asarray(r.M3),
            K_terms=[np.asarray(K) for K in r.K_terms], d=r.d,
            U_hat_terms=r.U_hat_terms, C_terms=r.C_terms,
            theta_a=r.theta_a, theta_u=r.theta_u, theta_l=r.theta_l, beta=r.beta)


def _dense(a):
    return a.toarray() if hasattr(a, "toarray") else np.asarray(a)


def project_rom(sys, basis):
    for name, B in (("V", basis.V), ("W", basis.W)):
        if B.shape[0] != (sys.n_control if name == "V" else sys.n_state):
            raise ValueError(f"basis {name} has {B.shape[0]} rows, system needs "
                             f"{sys.n_control if name == 'V' else sys.n_state}")
    red = sys.project(basis.V, basis.W)
    dense = AffineSaddleSystem(
        M1=_dense(red.M1), M2=_dense(red.M2), M3=_dense(red.M3),
        K_terms=[_dense(K) for K in red.K_terms], theta_a=red.theta_a,
        U_hat_terms=red.U_hat_terms, theta_u=red.theta_u, d=red.d, beta=red.beta,
        C_terms=red.C_terms, theta_l=red.theta_l, nonsymmetric=red.nonsymmetric,
        uhat_gram=red.uhat_gram)
    return GalerkinRom(dense, basis)


def solve_rom(rom, mu):
    return rom.solve(mu)
