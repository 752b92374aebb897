import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socrom.mesh import build_overlay, build_unit_square_mesh


@pytest.mark.parametrize("n, vertices, cells", [(1, 4, 2), (8, 81, 128), (64, 4225, 8192)])
def test_vertex_and_cell_counts(n, vertices, cells):
    m = build_unit_square_mesh(n, n)
    assert m.n_vertices == vertices
    assert m.n_cells == cells


def test_smallest_mesh_is_all_boundary():
    m = build_unit_square_mesh(1, 1)
    assert m.boundary_vertex_flags.all()
    assert m.interior_vertices.size == 0


@pytest.mark.parametrize("nx, ny", [(0, 1), (1, 0), (-2, 3)])
def test_rejects_nonpositive_counts(nx, ny):
    with pytest.raises(ValueError):
        build_unit_square_mesh(nx, ny)


def test_vertices_are_y_major():
    m = build_unit_square_mesh(3, 2)
    assert np.allclose(m.vertices[:4, 1], 0.0)
    assert np.allclose(m.vertices[:4, 0], [0, 1 / 3, 2 / 3, 1])
    assert np.allclose(m.vertices[4, :], [0.0, 0.5])


def test_deterministic_bitwise():
    a, b = build_unit_square_mesh(5, 7), build_unit_square_mesh(5, 7)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert a.cells.tobytes() == b.cells.tobytes()


@given(st.integers(1, 9), st.integers(1, 9))
@settings(max_examples=30, deadline=None)
def test_mesh_invariants(nx, ny):
    m = build_unit_square_mesh(nx, ny)
    assert m.n_vertices == (nx + 1) * (ny + 1)
    assert m.n_cells == 2 * nx * ny
    areas = m.cell_areas()
    assert np.all(areas > 0)  # counter-clockwise orientation
    assert np.isclose(areas.sum(), 1.0)
    assert m.interior_vertices.size == max(nx - 1, 0) * max(ny - 1, 0)


def test_grids_reshape():
    m = build_unit_square_mesh(4, 3)
    assert m.vertex_grid(np.arange(m.n_vertices)).shape == (4, 5)
    assert m.cell_grid(np.ones(m.n_cells)).shape == (3, 4)


def test_overlay_fine_resolution():
    ov = build_overlay(build_unit_square_mesh(8, 8), 16)
    assert (ov.fine_mesh.nx, ov.fine_mesh.ny) == (128, 128)
    assert ov.n_coarse_nodes == 81
    assert np.isclose(ov.H, 1 / 8)


def test_refinement_one_covers_every_cell():
    ov = build_overlay(build_unit_square_mesh(2, 2), 1)
    covered = np.unique(np.concatenate(ov.neighborhoods))
    assert np.array_equal(covered, np.arange(8))


def test_corner_and_interior_neighborhood_sizes():
    ov = build_overlay(build_unit_square_mesh(4, 4), 2)
    assert len(ov.neighborhoods[0]) == 8
    interior = 2 * 5 + 2  # node (2, 2)
    assert len(ov.neighborhoods[interior]) == 4 * 8


def test_overlay_rejects_zero_refinement():
    with pytest.raises(ValueError):
        build_overlay(build_unit_square_mesh(2, 2), 0)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_overlay_multiplicity(cx, cy, refinement):
    """Every fine cell lies in exactly the four neighborhoods of its coarse square."""
    ov = build_overlay(build_unit_square_mesh(cx, cy), refinement)
    counts = np.bincount(np.concatenate(ov.neighborhoods), minlength=ov.fine_mesh.n_cells)
    assert np.all(counts == 4)
    assert sum(len(n) for n in ov.neighborhoods) == 4 * ov.fine_mesh.n_cells


def test_neighborhood_vertices_are_cell_vertices():
    ov = build_overlay(build_unit_square_mesh(2, 2), 3)
    for i in range(ov.n_coarse_nodes):
        expected = np.unique(ov.fine_mesh.cells[ov.neighborhoods[i]])
        assert np.array_equal(ov.neighborhood_vertices(i), expected)
