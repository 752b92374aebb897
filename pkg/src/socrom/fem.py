"""P1/P0 finite element assembly for the distributed control optimality system.

State and adjoint live in continuous piecewise-linear space on the vertices,
the control in piecewise-constant space on the cells. All ``assemble_*``
functions return matrices over *all* vertices; homogeneous Dirichlet data is
imposed afterwards by :func:`restrict_to_interior`.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import affine

DIFFUSION_KINDS = ("diffusion", "high_contrast")

# Thin channels plus a few blocky inclusions, all aligned to multiples of 1/32
# so the field is exactly piecewise constant on 32x32 and finer grids.
# About 15% of the unit square.
DEFAULT_INCLUSIONS = (
    (0.0625, 0.9375, 0.21875, 0.25),
    (0.125, 1.0, 0.59375, 0.625),
    (0.0, 0.75, 0.84375, 0.875),
    (0.40625, 0.4375, 0.0625, 0.59375),
    (0.78125, 0.8125, 0.25, 0.9375),
    (0.125, 0.25, 0.375, 0.5),
    (0.5625, 0.6875, 0.375, 0.46875),
    (0.25, 0.34375, 0.6875, 0.78125),
)


@dataclass(frozen=True)
class CoefficientField:
    """A spatial coefficient ``x -> value`` evaluated on arrays of points.

    ``kind`` is one of ``diffusion``, ``high_contrast``, ``affine_in_mu``,
    ``advection`` or ``desired_state``. Diffusion kinds must stay positive.
    """

    kind: str
    evaluator: object
    name: str = ""

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(self.evaluator(points), dtype=float)
        return np.broadcast_to(values, points.shape[:1]).copy()


def constant_field(value, kind="diffusion"):
    return CoefficientField(kind, lambda p: np.full(p.shape[0], float(value)), f"const({value})")


def make_high_contrast_field(contrast=1e4, pattern=DEFAULT_INCLUSIONS):
    """Background 1 with rectangular inclusions of value ``contrast``.

    ``pattern`` is a sequence of ``(x0, x1, y0, y1)`` rectangles inside the
    unit square. The field is evaluated at cell centroids by the assemblers,
    so it is piecewise constant on the fine cells.
    """
    if contrast < 1:
        raise ValueError(f"contrast must be >= 1, got {contrast}")
    rects = np.asarray(pattern, dtype=float).reshape(-1, 4)
    if rects.size and (rects.min() < 0 or rects.max() > 1
                       or np.any(rects[:, 1] <= rects[:, 0])
                       or np.any(rects[:, 3] <= rects[:, 2])):
        raise ValueError("inclusion rectangles must be non-empty and lie in [0, 1]^2")

    def evaluate(p):
        x, y = p[:, 0:1], p[:, 1:2]
        inside = ((x >= rects[:, 0]) & (x <= rects[:, 1])
                  & (y >= rects[:, 2]) & (y <= rects[:, 3])).any(axis=1)
        return np.where(inside, float(contrast), 1.0)

    return CoefficientField("high_contrast", evaluate, f"kappa1(contrast={contrast:g})")


# --- element geometry ----------------------------------------------------------

def _geometry(mesh, cells=None):
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    conn = mesh.cells[cells]
    p = mesh.vertices[conn]
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edges
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    area = 0.5 * det
    # gradients of barycentric functions: B^{-T} applied to reference gradients
    binv_t = np.stack([
        np.stack([B[:, 1, 1], -B[:, 1, 0]], axis=1),
        np.stack([-B[:, 0, 1], B[:, 0, 0]], axis=1),
    ], axis=1) / det[:, None, None]
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("cij,kj->cki", binv_t, ref)  # (cells, 3 local, 2)
    return cells, conn, area, grads, p.mean(axis=1)


def _scatter(conn, local, n):
    rows = np.repeat(conn, 3, axis=1).ravel()
    cols = np.tile(conn, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


_P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _edge_midpoint_rule(p):
    """Degree-2 exact triangle rule: edge midpoints with barycentric weights."""
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    pts = np.einsum("qk,ckd->cqd", bary, p)
    return pts, bary


# --- matrices ------------------------------------------------------------------

def assemble_mass_matrices(mesh):
    """Control mass ``M1`` (P0), coupling ``M2`` (P1 x P0) and state mass ``M3`` (P1)."""
    _, conn, area, _, _ = _geometry(mesh)
    M1 = sp.diags(area).tocsr()
    rows = conn.ravel()
    cols = np.repeat(np.arange(mesh.n_cells), 3)
    M2 = sp.coo_matrix((np.repeat(area / 3.0, 3), (rows, cols)),
                       shape=(mesh.n_vertices, mesh.n_cells)).tocsr()
    M3 = _scatter(conn, area[:, None, None] * _P1_MASS, mesh.n_vertices)
    return M1, M2, M3


def assemble_weighted_mass(mesh, cell_weights, cells=None):
    """P1 mass matrix with a per-cell constant weight (exact for that weight)."""
    cells, conn, area, _, _ = _geometry(mesh, cells)
    w = np.asarray(cell_weights, dtype=float)
    if w.shape[0] != cells.shape[0]:
        w = w[cells]
    return _scatter(conn, (w * area)[:, None, None] * _P1_MASS, mesh.n_vertices)


def assemble_stiffness(mesh, coeff, cells=None):
    """``(coeff grad psi_j, grad psi_i)`` with the coefficient sampled at centroids."""
    cells, conn, area, grads, centroids = _geometry(mesh, cells)
    kappa = coeff(centroids)
    if coeff.kind in DIFFUSION_KINDS and np.any(kappa <= 0):
        bad = int(np.argmin(kappa))
        raise ValueError(
            f"nonpositive diffusion coefficient {kappa[bad]:g} at quadrature point "
            f"{tuple(centroids[bad])} ({coeff.name or coeff.kind})")
    local = (kappa * area)[:, None, None] * np.einsum("cid,cjd->cij", grads, grads)
    return _scatter(conn, local, mesh.n_vertices)


def assemble_advection(mesh, delta):
    """``(delta . grad psi_j, psi_i)``: row ``i`` is the test function."""
    _, conn, area, grads, centroids = _geometry(mesh)
    dvec = np.column_stack([delta[0](centroids), delta[1](centroids)])
    flux = np.einsum("cd,cjd->cj", dvec, grads)  # delta . grad psi_j at centroid
    local = (area / 3.0)[:, None, None] * np.broadcast_to(flux[:, None, :], (len(area), 3, 3))
    return _scatter(conn, local, mesh.n_vertices)


def assemble_load(mesh, f):
    """``(f, psi_k)`` with the degree-2 edge-midpoint rule."""
    _, conn, area, _, _ = _geometry(mesh)
    pts, bary = _edge_midpoint_rule(mesh.vertices[conn])
    fv = f(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    local = (area / 3.0)[:, None] * np.einsum("cq,qk->ck", fv, bary)
    return np.bincount(conn.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def assemble_desired_state_loads(mesh, terms):
    return [assemble_load(mesh, t) for t in terms]


def l2_gram(mesh, terms):
    """Gram matrix ``(f_p, f_q)`` of spatial functions, by the edge-midpoint rule."""
    _, conn, area, _, _ = _geometry(mesh)
    pts, _ = _edge_midpoint_rule(mesh.vertices[conn])
    vals = np.stack([t(pts.reshape(-1, 2)).reshape(pts.shape[:2]) for t in terms])
    return np.einsum("pcq,rcq,c->pr", vals, vals, area / 3.0)


def l2_error(mesh, nodal_values, exact):
    """``||u_h - u||_{L2}`` for a P1 field against a callable, edge-midpoint rule."""
    _, conn, area, _, _ = _geometry(mesh)
    pts, bary = _edge_midpoint_rule(mesh.vertices[conn])
    uh = np.einsum("qk,ck->cq", bary, np.asarray(nodal_values)[conn])
    ue = np.asarray(exact(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    return float(np.sqrt(np.sum((area / 3.0)[:, None] * (uh - ue) ** 2)))


def check_ellipticity(mesh, fields, thetas, mu_range, n_mu=101):
    """Minimum of ``sum_q theta_q(mu) kappa_q(x)`` over centroids and a mu grid."""
    centroids = mesh.centroids()
    vals = np.column_stack([f(centroids) for f in fields])
    mus = np.linspace(mu_range[0], mu_range[1], n_mu)
    th = affine.evaluate(thetas, mus)
    return float((vals @ th.T).min())


def restrict_to_interior(mesh, matrix_or_vector, axes=(0, 1)):
    """Drop boundary rows/columns (homogeneous Dirichlet elimination)."""
    idx = mesh.interior_vertices
    a = matrix_or_vector
    if sp.issparse(a):
        a = a.tocsr()
        if 0 in axes:
            a = a[idx]
        if 1 in axes:
            a = a[:, idx]
        return a.tocsr()
    a = np.asarray(a)
    return a[idx] if a.ndim == 1 else (a[np.ix_(idx, idx)] if axes == (0, 1) else a[idx])


# --- the affine saddle-point system --------------------------------------------

def _tr(a):
    return a.T if not sp.issparse(a) else a.T.tocsr()


def _congruence(W, A, V):
    out = W.T @ A @ V
    return out.tocsr() if sp.issparse(out) else np.asarray(out)


@dataclass
class AffineSaddleSystem:
    """Parameter-separable KKT system

    ``[[2b M1, 0, -M2^T], [0, M3, K^T], [-M2, K, 0]] [F; U; L] = [0; Uhat(mu); d]``

    with ``K(mu) = sum_q theta_a[q](mu) K_terms[q]``,
    ``Uhat(mu) = sum_p theta_u[p](mu) U_hat_terms[p]`` and scalar output
    ``y(mu) = sum_k theta_l[k](mu) C_terms[k] . x``.
    """

    M1: object
    M2: object
    M3: object
    K_terms: list
    theta_a: list
    U_hat_terms: list
    theta_u: list
    d: np.ndarray
    beta: float
    C_terms: list = field(default_factory=list)
    theta_l: list = field(default_factory=list)
    nonsymmetric: list = field(default_factory=list)
    uhat_gram: np.ndarray = None
    mesh: object = None

    def __post_init__(self):
        self.theta_a = [affine.as_scalar_function(f) for f in self.theta_a]
        self.theta_u = [affine.as_scalar_function(f) for f in self.theta_u]
        self.theta_l = [affine.as_scalar_function(f) for f in self.theta_l]
        if not self.nonsymmetric:
            self.nonsymmetric = [False] * len(self.K_terms)
        self.validate()

    @property
    def n_control(self):
        return self.M1.shape[0]

    @property
    def n_state(self):
        return self.M3.shape[0]

    @property
    def size(self):
        return self.n_control + 2 * self.n_state

    def validate(self):
        ne, nh = self.n_control, self.n_state
        if self.M1.shape != (ne, ne) or self.M2.shape != (nh, ne) or self.M3.shape != (nh, nh):
            raise ValueError(f"inconsistent mass blocks: M1 {self.M1.shape}, "
                             f"M2 {self.M2.shape}, M3 {self.M3.shape}")
        if len(self.K_terms) != len(self.theta_a) or len(self.U_hat_terms) != len(self.theta_u):
            raise ValueError("each affine term needs exactly one scalar function")
        if len(self.C_terms) != len(self.theta_l):
            raise ValueError("each output term needs exactly one scalar function")
        for K in self.K_terms:
            if K.shape != (nh, nh):
                raise ValueError(f"stiffness term has shape {K.shape}, expected {(nh, nh)}")
        for u in list(self.U_hat_terms) + [self.d]:
            if np.shape(u) != (nh,):
                raise ValueError(f"state vector has shape {np.shape(u)}, expected {(nh,)}")
        for c in self.C_terms:
            if np.shape(c) != (self.size,):
                raise ValueError(f"output row has shape {np.shape(c)}, expected {(self.size,)}")

    def K(self, mu):
        K = sum(float(f(mu)) * Kq for f, Kq in zip(self.theta_a, self.K_terms))
        return K.tocsr() if sp.issparse(K) else K

    def U_hat(self, mu):
        out = np.zeros(self.n_state)
        for f, u in zip(self.theta_u, self.U_hat_terms):
            out += float(f(mu)) * u
        return out

    def C(self, mu):
        out = np.zeros(self.size)
        for f, c in zip(self.theta_l, self.C_terms):
            out += float(f(mu)) * c
        return out

    def uhat_norm_sq(self, mu):
        if self.uhat_gram is None:
            return 0.0
        th = np.array([float(f(mu)) for f in self.theta_u])
        return float(th @ self.uhat_gram @ th)

    def split(self, x):
        ne, nh = self.n_control, self.n_state
        return x[:ne], x[ne:ne + nh], x[ne + nh:]

    def with_outputs(self, C_terms, theta_l):
        return replace(self, C_terms=[np.asarray(c, dtype=float) for c in C_terms],
                       theta_l=list(theta_l))

    def project(self, V, W):
        """Congruence with ``blockdiag(V, W, W)``; ``V=None`` keeps the control space."""
        Vc = sp.identity(self.n_control, format="csr") if V is None else V
        Ct = []
        for c in self.C_terms:
            cF, cU, cL = self.split(c)
            Ct.append(np.concatenate([np.asarray(Vc.T @ cF).ravel(),
                                      np.asarray(W.T @ cU).ravel(),
                                      np.asarray(W.T @ cL).ravel()]))
        return AffineSaddleSystem(
            M1=_congruence(Vc, self.M1, Vc),
            M2=_congruence(W, self.M2, Vc),
            M3=_congruence(W, self.M3, W),
            K_terms=[_congruence(W, K, W) for K in self.K_terms],
            theta_a=self.theta_a,
            U_hat_terms=[np.asarray(W.T @ u).ravel() for u in self.U_hat_terms],
            theta_u=self.theta_u,
            d=np.asarray(W.T @ self.d).ravel(),
            beta=self.beta,
            C_terms=Ct,
            theta_l=self.theta_l,
            nonsymmetric=list(self.nonsymmetric),
            uhat_gram=self.uhat_gram,
        )
