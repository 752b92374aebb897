"""Parameter-separable data-driven reduced models and their L2 output error.

A DDROM is a tuple ``(A_0..A_Qa, B_0..B_Qu, C_1..C_Ql)`` with

    A(mu) = A_0 + sum_q theta_a[q](mu) A_q
    B(mu) = B_0 + sum_p theta_u[p](mu) B_p
    C(mu) = sum_k theta_l[k](mu) C_k
    yhat(mu) = C(mu) A(mu)^{-1} B(mu)

Nothing in this module knows about meshes or full-order matrices; the only
data it consumes are ``(mu, y)`` pairs.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import affine

FEASIBILITY_CAP = 1e12


class InfeasibleDdromError(np.linalg.LinAlgError):
    """``A(mu)`` is singular or too close to singular at some sample."""

    def __init__(self, mu, value=np.inf):
        self.mu = mu
        self.value = value
        super().__init__(f"DDROM matrix not uniformly invertible at mu={mu!r} "
                         f"(weighted ||A^-1||_F = {value:.3e})")


@dataclass
class TrainingSet:
    """Parameter samples with quadrature weights of a discrete measure on Gamma."""

    samples: np.ndarray
    weights: np.ndarray = None
    interval: tuple = None

    def __post_init__(self):
        self.samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if self.samples.size == 0:
            raise ValueError("training set is empty")
        if self.weights is None:
            self.weights = np.full(self.samples.size, 1.0 / self.samples.size)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != self.samples.shape:
            raise ValueError("one weight per sample required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.interval is not None:
            a, b = self.interval
            if np.any(self.samples < a) or np.any(self.samples > b):
                raise ValueError(f"samples leave the parameter interval [{a}, {b}]")

    def __len__(self):
        return self.samples.size

    def norm(self, v):
        """Discrete ``L2(Gamma, P)`` norm."""
        return float(np.sqrt(np.sum(self.weights * np.asarray(v) ** 2)))


@dataclass
class DdromMatrices:
    A_terms: list
    B_terms: list
    C_terms: list
    theta_a: list = field(default_factory=list)
    theta_u: list = field(default_factory=list)
    theta_l: list = field(default_factory=list)
    blocks: tuple = None
    beta: float = None

    def __post_init__(self):
        self.A_terms = [np.array(a, dtype=float) for a in self.A_terms]
        self.B_terms = [np.array(b, dtype=float).ravel() for b in self.B_terms]
        self.C_terms = [np.array(c, dtype=float).ravel() for c in self.C_terms]
        self.theta_a = [affine.as_scalar_function(f) for f in self.theta_a]
        self.theta_u = [affine.as_scalar_function(f) for f in self.theta_u]
        self.theta_l = [affine.as_scalar_function(f) for f in self.theta_l]
        r = self.r
        if len(self.A_terms) != len(self.theta_a) + 1:
            raise ValueError("need A_0 plus one A_q per theta_a function")
        if len(self.B_terms) != len(self.theta_u) + 1:
            raise ValueError("need B_0 plus one B_p per theta_u function")
        if len(self.C_terms) != len(self.theta_l) or not self.C_terms:
            raise ValueError("need one C_k per theta_l function (at least one)")
        if any(a.shape != (r, r) for a in self.A_terms):
            raise ValueError("all A terms must be square of the same size")
        if any(v.shape != (r,) for v in self.B_terms + self.C_terms):
            raise ValueError(f"all B and C terms must have length {r}")
        if self.blocks is not None:
            self.blocks = tuple(int(b) for b in self.blocks)
            if len(self.blocks) != 3 or sum(self.blocks) != r or self.blocks[1] != self.blocks[2]:
                raise ValueError(f"blocks {self.blocks} do not match size {r}")

    @property
    def r(self):
        return self.A_terms[0].shape[0]

    @classmethod
    def from_blocks(cls, M1, M2, M3, K_terms, d, U_hat_terms, C_terms,
                    theta_a, theta_u, theta_l, beta):
        """Build the saddle skeleton from its free sub-blocks."""
        nf, ns = M1.shape[0], M3.shape[0]
        blocks = (nf, ns, ns)
        sk = _Skeleton(blocks, beta)
        return cls(
            A_terms=[sk.A0(M1, M2, M3)] + [sk.Aq(K) for K in K_terms],
            B_terms=[sk.B0(d)] + [sk.Bp(u) for u in U_hat_terms],
            C_terms=list(C_terms),
            theta_a=theta_a, theta_u=theta_u, theta_l=theta_l,
            blocks=blocks, beta=beta)

    def to_blocks(self):
        """Free sub-blocks ``(M1, M2, M3, K_terms, d, U_hat_terms)`` of a structured DDROM."""
        if self.blocks is None:
            raise ValueError("unstructured DDROM has no block skeleton")
        f, s, l = _Skeleton(self.blocks, self.beta).slices
        A0 = self.A_terms[0]
        return (A0[f, f] / (2.0 * self.beta), -A0[l, f], A0[s, s],
                [A[l, s] for A in self.A_terms[1:]],
                self.B_terms[0][l], [b[s] for b in self.B_terms[1:]])

    def copy(self):
        return DdromMatrices([a.copy() for a in self.A_terms], [b.copy() for b in self.B_terms],
                             [c.copy() for c in self.C_terms], list(self.theta_a),
                             list(self.theta_u), list(self.theta_l), self.blocks, self.beta)

    def coefficients(self, mus):
        """Scalar coefficient tables with the constant term prepended for A and B."""
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        one = np.ones((mus.size, 1))
        return (np.hstack([one, affine.evaluate(self.theta_a, mus)]),
                np.hstack([one, affine.evaluate(self.theta_u, mus)]),
                affine.evaluate(self.theta_l, mus))

    def assemble(self, mus):
        """Stacked ``A(mu)``, ``B(mu)``, ``C(mu)`` for every sample."""
        ta, tu, tl = self.coefficients(mus)
        A = np.einsum("nq,qij->nij", ta, np.stack(self.A_terms))
        B = tu @ np.stack(self.B_terms)
        C = tl @ np.stack(self.C_terms)
        return A, B, C


class _Skeleton:
    """Index bookkeeping for the ``[[2b M1, 0, -M2^T], [0, M3, K^T], [-M2, K, 0]]`` layout."""

    def __init__(self, blocks, beta):
        nf, ns, _ = blocks
        self.blocks, self.beta = blocks, beta
        self.r = nf + 2 * ns
        self.slices = (slice(0, nf), slice(nf, nf + ns), slice(nf + ns, nf + 2 * ns))

    def A0(self, M1, M2, M3):
        f, s, l = self.slices
        A = np.zeros((self.r, self.r))
        A[f, f] = 2.0 * self.beta * M1
        A[f, l] = -M2.T
        A[l, f] = -M2
        A[s, s] = M3
        return A

    def Aq(self, K):
        _, s, l = self.slices
        A = np.zeros((self.r, self.r))
        A[s, l] = K.T
        A[l, s] = K
        return A

    def B0(self, d):
        v = np.zeros(self.r)
        v[self.slices[2]] = d
        return v

    def Bp(self, u):
        v = np.zeros(self.r)
        v[self.slices[1]] = u
        return v


# --- forward and dual solves ----------------------------------------------------

@dataclass
class Evaluation:
    """Per-sample reduced states, dual states and outputs of a DDROM."""

    mus: np.ndarray
    xhat: np.ndarray
    xdual: np.ndarray
    yhat: np.ndarray
    margin: float


def _weighted_inverse_norms(m, A, mus):
    ta = m.coefficients(mus)[0]
    scale = 1.0 + np.abs(ta[:, 1:]).sum(axis=1)
    return scale * np.linalg.norm(np.linalg.inv(A), axis=(1, 2))


def evaluate(m, mus, cap=FEASIBILITY_CAP, dual=True):
    """Forward (and dual) reduced solves at every sample.

    Raises :class:`InfeasibleDdromError` if ``A(mu)`` is singular or its
    weighted inverse Frobenius norm exceeds ``cap`` at any sample.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    A, B, C = m.assemble(mus)
    try:
        norms = _weighted_inverse_norms(m, A, mus)
    except np.linalg.LinAlgError:
        for mu, Ai in zip(mus, A):
            if np.linalg.matrix_rank(Ai) < m.r:
                raise InfeasibleDdromError(float(mu)) from None
        raise
    bad = ~np.isfinite(norms) | (norms > cap)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise InfeasibleDdromError(float(mus[j]), float(norms[j]))
    xhat = np.linalg.solve(A, B[:, :, None])[:, :, 0]
    xdual = (np.linalg.solve(np.transpose(A, (0, 2, 1)), C[:, :, None])[:, :, 0]
             if dual else None)
    yhat = np.einsum("ni,ni->n", C, xhat)
    return Evaluation(mus, xhat, xdual, yhat, float(norms.max()))


def ddrom_solve(m, mu):
    ev = evaluate(m, [mu], dual=False)
    return ev.xhat[0], float(ev.yhat[0])


def dual_solve(m, mu):
    return evaluate(m, [mu]).xdual[0]


def predict(m, mus):
    return evaluate(m, mus, dual=False).yhat


def feasibility_margin(m, mus):
    """``max_mu (1 + sum_q |theta_a[q](mu)|) ||A(mu)^-1||_F`` over the samples."""
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    A, _, _ = m.assemble(mus)
    try:
        return float(_weighted_inverse_norms(m, A, mus).max())
    except np.linalg.LinAlgError:
        return np.inf


# --- objective and gradients ----------------------------------------------------

def _align(data, training):
    mus = np.array([float(mu) for mu, _ in data])
    y = np.array([float(v) for _, v in data])
    if training is None:
        training = TrainingSet(mus)
    elif mus.shape != training.samples.shape or not np.allclose(mus, training.samples,
                                                                rtol=0, atol=1e-14):
        raise ValueError("data samples are not aligned with the training set")
    return training, y


def objective(m, data, training=None):
    """Discrete squared L2 output error ``sum_j w_j (y_j - yhat_j)^2``."""
    training, y = _align(data, training)
    yhat = evaluate(m, training.samples, dual=False).yhat
    return float(np.sum(training.weights * (y - yhat) ** 2))


def matrix_gradients(m, ev, y, weights):
    """Gradients of ``J`` w.r.t. every full ``A_q``, ``B_p`` and ``C_k``."""
    ta, tu, tl = m.coefficients(ev.mus)
    resid = weights * (y - ev.yhat)  # w_j (y_j - yhat_j)
    gA = [2.0 * np.einsum("n,ni,nj->ij", resid * ta[:, q], ev.xdual, ev.xhat)
          for q in range(ta.shape[1])]
    gB = [-2.0 * np.einsum("n,ni->i", resid * tu[:, p], ev.xdual) for p in range(tu.shape[1])]
    gC = [-2.0 * np.einsum("n,ni->i", resid * tl[:, k], ev.xhat) for k in range(tl.shape[1])]
    return gA, gB, gC


def gradients(m, data, training=None):
    training, y = _align(data, training)
    ev = evaluate(m, training.samples)
    gA, gB, gC = matrix_gradients(m, ev, y, training.weights)
    return {"A": gA, "B": gB, "C": gC}


# --- free-parameter maps --------------------------------------------------------

class DenseParametrization:
    """Every entry of every ``A_q``, ``B_p`` and ``C_k`` is free."""

    structured = False

    def __init__(self, template):
        self.template = template
        self.shapes = ([a.shape for a in template.A_terms] + [b.shape for b in template.B_terms]
                       + [c.shape for c in template.C_terms])
        self.size = int(sum(np.prod(s) for s in self.shapes))

    def pack(self, m):
        return np.concatenate([a.ravel() for a in m.A_terms + m.B_terms + m.C_terms])

    def unpack(self, theta):
        t = self.template
        parts, pos = [], 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            parts.append(theta[pos:pos + n].reshape(shape))
            pos += n
        na, nb = len(t.A_terms), len(t.B_terms)
        return DdromMatrices(parts[:na], parts[na:na + nb], parts[na + nb:], t.theta_a,
                             t.theta_u, t.theta_l, t.blocks, t.beta)

    def pullback(self, gA, gB, gC):
        return np.concatenate([g.ravel() for g in list(gA) + list(gB) + list(gC)])


class StructuredParametrization:
    """Only the skeleton's sub-blocks are free; tied entries share one parameter.

    Free parameters, in order: ``M1, M2, M3, K_1..K_Qa, d, Uhat_1..Uhat_Qu,
    C_1..C_Ql``.
    """

    structured = True

    def __init__(self, template):
        if template.blocks is None or template.beta is None:
            raise ValueError("structured fitting needs a DDROM with block skeleton and beta")
        self.template = template
        self.sk = _Skeleton(template.blocks, template.beta)
        nf, ns, _ = template.blocks
        r = self.sk.r
        qa, qu, ql = len(template.theta_a), len(template.theta_u), len(template.theta_l)
        self.shapes = ([(nf, nf), (ns, nf), (ns, ns)] + [(ns, ns)] * qa + [(ns,)]
                       + [(ns,)] * qu + [(r,)] * ql)
        self.counts = (qa, qu, ql)
        self.size = int(sum(np.prod(s) for s in self.shapes))

    def _split(self, theta):
        parts, pos = [], 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            parts.append(theta[pos:pos + n].reshape(shape))
            pos += n
        qa, qu, _ = self.counts
        M1, M2, M3 = parts[:3]
        K = parts[3:3 + qa]
        d = parts[3 + qa]
        U = parts[4 + qa:4 + qa + qu]
        C = parts[4 + qa + qu:]
        return M1, M2, M3, K, d, U, C

    def pack(self, m):
        M1, M2, M3, K, d, U = m.to_blocks()
        return np.concatenate([a.ravel() for a in [M1, M2, M3, *K, d, *U, *m.C_terms]])

    def unpack(self, theta):
        M1, M2, M3, K, d, U, C = self._split(theta)
        t = self.template
        return DdromMatrices.from_blocks(M1, M2, M3, K, d, U, C, t.theta_a, t.theta_u,
                                         t.theta_l, t.beta)

    def pullback(self, gA, gB, gC):
        """Chain rule through the skeleton: tied entries sum their contributions."""
        f, s, l = self.sk.slices
        G0 = gA[0]
        parts = [2.0 * self.sk.beta * G0[f, f], -(G0[f, l].T + G0[l, f]), G0[s, s]]
        parts += [G[l, s] + G[s, l].T for G in gA[1:]]
        parts.append(gB[0][l])
        parts += [g[s] for g in gB[1:]]
        parts += list(gC)
        return np.concatenate([p.ravel() for p in parts])


def parametrization_for(m, structured=True):
    return StructuredParametrization(m) if structured else DenseParametrization(m)
