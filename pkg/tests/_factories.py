"""Random, well-conditioned DDROM instances and a finite-difference oracle."""

import numpy as np

from socrom import affine
from socrom.ddrom import DdromMatrices, TrainingSet, objective


def _spd(rng, n):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + np.eye(n)


def random_structured_ddrom(rng, n_control=2, n_state=4, qa=2, qu=2, ql=2, beta=0.5):
    """Saddle-skeleton DDROM of size ``n_control + 2 n_state``."""
    r = n_control + 2 * n_state
    K = [np.eye(n_state) * (2.0 if q == 0 else 0.3) + 0.2 * rng.standard_normal((n_state, n_state))
         for q in range(qa)]
    return DdromMatrices.from_blocks(
        M1=_spd(rng, n_control), M2=rng.standard_normal((n_state, n_control)),
        M3=_spd(rng, n_state), K_terms=K, d=rng.standard_normal(n_state),
        U_hat_terms=[rng.standard_normal(n_state) for _ in range(qu)],
        C_terms=[rng.standard_normal(r) for _ in range(ql)],
        theta_a=[affine.linear(1.0, 0.5 * q) for q in range(qa)],
        theta_u=[affine.linear(0.5 + p, 0.0) for p in range(qu)],
        theta_l=[affine.constant(1.0)] + [affine.linear(0.3 * k, 1.0) for k in range(1, ql)],
        beta=beta)


def random_dense_ddrom(rng, r=10, qa=2, qu=2, ql=2):
    """Unstructured DDROM with a diagonally dominant constant term."""
    A = [4.0 * np.eye(r) + rng.standard_normal((r, r))] + [
        0.3 * rng.standard_normal((r, r)) for _ in range(qa)]
    return DdromMatrices(
        A_terms=A,
        B_terms=[rng.standard_normal(r) for _ in range(qu + 1)],
        C_terms=[rng.standard_normal(r) for _ in range(ql)],
        theta_a=[affine.linear(1.0, 0.0), affine.linear(-0.5, 2.0)][:qa]
        + [affine.constant(1.0)] * max(0, qa - 2),
        theta_u=[affine.linear(1.0, 0.0)] * qu,
        theta_l=[affine.constant(1.0)] + [affine.linear(0.2, 0.0)] * (ql - 1))


def synthetic_data(rng, m, n=20, interval=(1.0, 2.0), noise=0.5):
    """Training set plus outputs that differ from ``m``'s predictions."""
    from socrom.ddrom import predict

    mus = np.linspace(*interval, n)
    y = predict(m, mus) + noise * rng.standard_normal(n)
    return TrainingSet(mus, interval=interval), list(zip(mus, y))


def fd_matrix_gradients(m, data, training, h=1e-6):
    """Central differences of ``J`` w.r.t. every entry of every DDROM matrix."""
    out = {"A": [], "B": [], "C": []}
    for key, terms in (("A", m.A_terms), ("B", m.B_terms), ("C", m.C_terms)):
        for t in range(len(terms)):
            base = terms[t]
            g = np.zeros_like(base)
            for idx in np.ndindex(base.shape):
                vals = []
                for sign in (1.0, -1.0):
                    mm = m.copy()
                    getattr(mm, f"{key}_terms")[t][idx] += sign * h
                    vals.append(objective(mm, data, training))
                g[idx] = (vals[0] - vals[1]) / (2 * h)
            out[key].append(g)
    return out
