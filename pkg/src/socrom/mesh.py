"""Structured triangulations of the unit square and coarse/fine overlays."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform triangulation of [0, 1]^2.

    Vertices are numbered y-major (``v = j * (nx + 1) + i``). Each square is
    split along its bottom-left to top-right diagonal, giving cells
    ``2 * s`` and ``2 * s + 1`` for square ``s = j * nx + i``.
    """

    nx: int
    ny: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertex_flags: np.ndarray

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def interior_vertices(self):
        return np.flatnonzero(~self.boundary_vertex_flags)

    def cell_areas(self):
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    def vertex_grid(self, values):
        """Reshape a per-vertex vector to an ``(ny + 1, nx + 1)`` array."""
        return np.asarray(values).reshape(self.ny + 1, self.nx + 1)

    def cell_grid(self, values):
        """Average the two triangles of each square into an ``(ny, nx)`` array."""
        v = np.asarray(values).reshape(self.ny, self.nx, 2)
        return v.mean(axis=2)


def build_unit_square_mesh(nx, ny):
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    ix = np.tile(np.arange(nx + 1), ny + 1)
    iy = np.repeat(np.arange(ny + 1), nx + 1)
    boundary = (ix == 0) | (ix == nx) | (iy == 0) | (iy == ny)
    return StructuredMesh(nx, ny, vertices, cells, boundary)


@dataclass(frozen=True)
class CoarseOverlay:
    """A coarse mesh together with the fine mesh obtained by refining it.

    ``neighborhoods[i]`` lists the fine cells covered by the union of coarse
    squares that touch coarse node ``i``.
    """

    coarse_mesh: StructuredMesh
    refinement: int
    fine_mesh: StructuredMesh
    neighborhoods: list = field(repr=False)

    @property
    def n_coarse_nodes(self):
        return self.coarse_mesh.n_vertices

    @property
    def H(self):
        return 1.0 / self.coarse_mesh.nx

    def coarse_square_of_fine_cell(self):
        """Index of the coarse square containing each fine cell."""
        fm, r = self.fine_mesh, self.refinement
        square = np.arange(fm.n_cells) // 2
        fi, fj = square % fm.nx, square // fm.nx
        return (fj // r) * self.coarse_mesh.nx + fi // r

    def neighborhood_vertices(self, i):
        """Sorted fine vertex indices of the closed neighborhood of node ``i``."""
        return np.unique(self.fine_mesh.cells[self.neighborhoods[i]])


def build_overlay(coarse, refinement):
    refinement = int(refinement)
    if refinement < 1:
        raise ValueError(f"refinement must be >= 1, got {refinement}")
    cnx, cny = coarse.nx, coarse.ny
    fine = build_unit_square_mesh(cnx * refinement, cny * refinement)

    square = np.arange(fine.n_cells) // 2
    fi, fj = square % fine.nx, square // fine.nx
    csq = (fj // refinement) * cnx + fi // refinement
    order = np.argsort(csq, kind="stable")
    per_square = np.split(order, np.cumsum(np.bincount(csq, minlength=cnx * cny))[:-1])

    neighborhoods = []
    for node in range(coarse.n_vertices):
        I, J = node % (cnx + 1), node // (cnx + 1)
        touching = [
            jj * cnx + ii
            for jj in (J - 1, J)
            for ii in (I - 1, I)
            if 0 <= ii < cnx and 0 <= jj < cny
        ]
        neighborhoods.append(np.sort(np.concatenate([per_square[s] for s in touching])))
    return CoarseOverlay(coarse, refinement, fine, neighborhoods)
