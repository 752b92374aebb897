"""Generalized multiscale basis from local spectral problems.

For every coarse node the Neumann eigenproblem ``K phi = lambda S phi`` is
solved on its neighborhood, with ``K`` the local stiffness for ``kappa`` and
``S`` the mass matrix weighted by ``kappa * sum_j H^2 |grad chi_j|^2``. The
lowest ``M_i`` eigenvectors, multiplied by the bilinear partition of unity
``chi_i``, are the multiscale basis functions.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fem import CoefficientField, assemble_stiffness, assemble_weighted_mass
from .io import write_csv, write_triplets

logger = logging.getLogger(__name__)


class LocalEigenproblemError(RuntimeError):
    pass


@dataclass
class LocalEigenpairs:
    node: int
    vertices: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (len(vertices), modes)


@dataclass
class GmsfemBasis:
    """Rows of ``R`` are multiscale basis vectors over all fine vertices."""

    R: sp.csr_matrix
    counts: np.ndarray
    partition: sp.csr_matrix
    eigenvalues: list = field(default_factory=list)
    interior: np.ndarray = None

    @property
    def M(self):
        return self.R.shape[0]

    @property
    def R_interior(self):
        """Basis restricted to interior fine vertices (homogeneous Dirichlet)."""
        if self.interior is None:
            return self.R
        return self.R[:, self.interior].tocsr()

    def downscale(self, coarse_values):
        """Fine interior nodal values ``R^T u_H``."""
        return np.asarray(self.R_interior.T @ coarse_values).ravel()


def _hat(t):
    return np.clip(1.0 - np.abs(t), 0.0, None)


def build_partition_of_unity(overlay):
    """Bilinear coarse hat functions sampled at the fine vertices, one row per node."""
    cm, fm = overlay.coarse_mesh, overlay.fine_mesh
    xs = fm.vertices[:, 0] * cm.nx
    ys = fm.vertices[:, 1] * cm.ny
    rows, cols, vals = [], [], []
    for node in range(cm.n_vertices):
        I, J = node % (cm.nx + 1), node // (cm.nx + 1)
        v = _hat(xs - I) * _hat(ys - J)
        nz = np.flatnonzero(v)
        rows.append(np.full(nz.size, node))
        cols.append(nz)
        vals.append(v[nz])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(cm.n_vertices, fm.n_vertices))


def pou_gradient_weight(overlay):
    """``sum_j H^2 |grad chi_j|^2`` at each fine cell centroid."""
    cm, fm = overlay.coarse_mesh, overlay.fine_mesh
    c = fm.centroids()
    s = c[:, 0] * cm.nx
    t = c[:, 1] * cm.ny
    s -= np.floor(s)
    t -= np.floor(t)
    # derivatives of the four bilinear shape functions in reference coordinates
    return 2.0 * ((1 - t) ** 2 + t ** 2) + 2.0 * ((1 - s) ** 2 + s ** 2)


def local_eigenproblems(overlay, kappa, per_node_modes=3):
    """Lowest ``per_node_modes`` generalized eigenpairs on every neighborhood."""
    per_node_modes = int(per_node_modes)
    if per_node_modes < 1:
        raise ValueError("per_node_modes must be positive")
    fm = overlay.fine_mesh
    kappa_cells = kappa(fm.centroids())
    kappa_tilde = kappa_cells * pou_gradient_weight(overlay)
    out = []
    for node, cells in enumerate(overlay.neighborhoods):
        if cells.size == 0:
            raise LocalEigenproblemError(f"neighborhood of coarse node {node} is empty")
        verts = overlay.neighborhood_vertices(node)
        K = assemble_stiffness(fm, kappa, cells)[verts][:, verts].toarray()
        S = assemble_weighted_mass(fm, kappa_tilde, cells)[verts][:, verts].toarray()
        modes = min(per_node_modes, verts.size)
        try:
            lam, vec = sla.eigh(K, S, subset_by_index=[0, modes - 1])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LocalEigenproblemError(f"eigensolver failed on node {node}: {exc}") from exc
        out.append(LocalEigenpairs(node, verts, lam, vec))
    return out


def assemble_msbasis(eigenpairs, partition, interior=None, normalize=True):
    """Paste ``chi_i * eigenvector`` into global rows of ``R``."""
    partition = partition.tocsr()
    rows, cols, vals = [], [], []
    counts = []
    k = 0
    for ep in eigenpairs:
        chi = partition[ep.node].toarray().ravel()[ep.vertices]
        for ell in range(ep.eigenvectors.shape[1]):
            phi = chi * ep.eigenvectors[:, ell]
            if normalize:
                phi = phi / np.linalg.norm(phi)
            nz = np.flatnonzero(phi)
            rows.append(np.full(nz.size, k))
            cols.append(ep.vertices[nz])
            vals.append(phi[nz])
            k += 1
        counts.append(ep.eigenvectors.shape[1])
    R = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(k, partition.shape[1]))
    return GmsfemBasis(R=R, counts=np.array(counts), partition=partition,
                       eigenvalues=[ep.eigenvalues for ep in eigenpairs], interior=interior)


def build_gmsfem_basis(overlay, kappa, per_node_modes=3):
    pou = build_partition_of_unity(overlay)
    pairs = local_eigenproblems(overlay, kappa, per_node_modes)
    return assemble_msbasis(pairs, pou, interior=overlay.fine_mesh.interior_vertices)


def polynomial_basis(overlay):
    """The bilinear coarse space (partition of unity functions alone)."""
    pou = build_partition_of_unity(overlay)
    return GmsfemBasis(R=pou, counts=np.ones(pou.shape[0], int), partition=pou,
                       interior=overlay.fine_mesh.interior_vertices)


def coarse_optimality_system(sys, basis):
    """``R A_h(mu) R^T`` with the control block left at fine resolution."""
    R = basis.R_interior if isinstance(basis, GmsfemBasis) else sp.csr_matrix(basis)
    if R.shape[1] != sys.n_state:
        raise ValueError(f"basis acts on {R.shape[1]} fine DOFs, system has {sys.n_state}")
    return sys.project(None, R.T.tocsr())


def frozen_coefficient(fields, thetas, mu):
    """``sum_q theta_q(mu) kappa_q`` as a single field at a fixed parameter."""
    weights = [float(t(mu)) for t in thetas]

    def evaluate(p):
        return sum(w * f(p) for w, f in zip(weights, fields))

    return CoefficientField("diffusion", evaluate, f"frozen at mu={mu:g}")


def export_basis_csv(basis, directory):
    """``basis.txt`` (triplets over fine vertices) and ``eigenvalues.csv``."""
    os.makedirs(directory, exist_ok=True)
    write_triplets(os.path.join(directory, "basis.txt"), basis.R)
    rows = [{"node": node, "mode": mode, "eigenvalue": float(lam)}
            for node, lams in enumerate(basis.eigenvalues) for mode, lam in enumerate(lams)]
    write_csv(os.path.join(directory, "eigenvalues.csv"), rows, ["node", "mode", "eigenvalue"])
    return directory
