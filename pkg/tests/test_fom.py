import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from socrom.fem import AffineSaddleSystem, constant_field, make_high_contrast_field
from socrom.fom import (
    IllConditionedWarning,
    SingularSystemError,
    assemble_kkt,
    control_cost,
    evaluate_output,
    kkt_residual,
    solve_fom,
    solve_many,
    solve_state,
    sweep_outputs,
)
from socrom.mesh import build_unit_square_mesh
from socrom.problems import build_control_problem, interpolate, output_terms


@pytest.fixture(scope="module")
def diffusion16():
    return build_control_problem(build_unit_square_mesh(16, 16), "diffusion")


@pytest.fixture(scope="module")
def advection16():
    return build_control_problem(build_unit_square_mesh(16, 16), "advection_diffusion")


def _naive_blocks(mesh, kappa):
    """Element loops with gradients from the inverse vertex matrix."""
    nv, nc = mesh.n_vertices, mesh.n_cells
    M1, M2 = np.zeros((nc, nc)), np.zeros((nv, nc))
    M3, K = np.zeros((nv, nv)), np.zeros((nv, nv))
    for c, tri in enumerate(mesh.cells):
        P = mesh.vertices[tri]
        V = np.column_stack([np.ones(3), P])
        area = 0.5 * abs(np.linalg.det(V))
        G = np.linalg.inv(V)[1:, :].T  # rows: gradient of each hat function
        k = kappa(P.mean(axis=0, keepdims=True))[0]
        M1[c, c] = area
        for a in range(3):
            M2[tri[a], c] += area / 3
            for b in range(3):
                M3[tri[a], tri[b]] += area / 12 * (2 if a == b else 1)
                K[tri[a], tri[b]] += k * area * G[a] @ G[b]
    idx = mesh.interior_vertices
    return M1, M2[idx], M3[np.ix_(idx, idx)], K[np.ix_(idx, idx)]


def test_blocks_match_hand_assembly():
    mesh = build_unit_square_mesh(2, 2)
    one = constant_field(1.0)
    sys = build_control_problem(mesh, "diffusion", kappa1=one)
    mu = 1.0
    M1, M2, M3, K1 = _naive_blocks(mesh, one)
    _, _, _, Kx = _naive_blocks(mesh, lambda p: 1 - p[:, 0])
    assert np.allclose(sys.M1.toarray(), M1)
    assert np.allclose(sys.M2.toarray(), M2)
    assert np.allclose(sys.M3.toarray(), M3)
    assert np.allclose(sys.K(mu).toarray(), K1 + mu * Kx)
    A, rhs = assemble_kkt(sys, mu)
    ne, nh = sys.n_control, sys.n_state
    D = A.toarray()
    assert np.allclose(D[:ne, :ne], 2e-3 * M1)
    assert np.allclose(D[:ne, ne + nh:], -M2.T)
    assert np.allclose(D[ne + nh:, ne:ne + nh], K1 + mu * Kx)
    assert np.allclose(rhs[:ne], 0)


def test_parameter_enters_only_stiffness_blocks(diffusion16):
    sys = diffusion16
    A0, _ = assemble_kkt(sys, 0.0)
    A1, _ = assemble_kkt(sys, 4.0)
    diff = (A1 - A0).tocoo()
    ne, nh = sys.n_control, sys.n_state
    rows, cols = diff.row[diff.data != 0], diff.col[diff.data != 0]
    in_k = ((rows >= ne + nh) & (cols >= ne) & (cols < ne + nh)) | \
           ((rows >= ne) & (rows < ne + nh) & (cols >= ne + nh))
    assert rows.size > 0 and np.all(in_k)


def test_beta_enters_only_control_block():
    mesh = build_unit_square_mesh(4, 4)
    a = assemble_kkt(build_control_problem(mesh, beta=1e-3), 2.0)[0]
    b = assemble_kkt(build_control_problem(mesh, beta=2e-3), 2.0)[0]
    ne = a.shape[0] - 2 * 9
    diff = (b - a).toarray()
    assert np.allclose(diff[:ne, :ne], a.toarray()[:ne, :ne])
    diff[:ne, :ne] = 0
    assert not np.any(diff)


def test_zero_data_gives_zero_solution(diffusion16):
    sys = diffusion16
    zero = AffineSaddleSystem(
        M1=sys.M1, M2=sys.M2, M3=sys.M3, K_terms=sys.K_terms, theta_a=sys.theta_a,
        U_hat_terms=[np.zeros(sys.n_state)], theta_u=[1.0], d=sys.d, beta=sys.beta,
        C_terms=sys.C_terms, theta_l=sys.theta_l)
    sol = solve_fom(zero, 3.0)
    assert not np.any(sol.x) and sol.y == 0.0


def test_huge_beta_switches_control_off():
    mesh = build_unit_square_mesh(16, 16)
    sys = build_control_problem(mesh, beta=1e6)
    mu = 5.0
    sol = solve_fom(sys, mu)
    from socrom.problems import desired_state_terms
    terms, thetas = desired_state_terms()
    uhat = sum(float(t(mu)) * interpolate(mesh, f) for f, t in zip(terms, thetas))
    assert np.linalg.norm(sol.U) <= 1e-4 * np.linalg.norm(uhat)


@pytest.mark.parametrize("problem", ["diffusion", "advection_diffusion"])
def test_optimal_control_beats_no_control(problem):
    sys = build_control_problem(build_unit_square_mesh(16, 16), problem)
    for mu in (1.0, 5.5, 10.0):
        sol = solve_fom(sys, mu)
        F0 = np.zeros(sys.n_control)
        J0 = control_cost(sys, mu, F0, solve_state(sys, mu, F0))
        assert control_cost(sys, mu, sol.F, sol.U) < J0


@pytest.mark.parametrize("mu", [1.0, 3.7, 10.0])
def test_kkt_block_residuals(diffusion16, advection16, mu):
    for sys in (diffusion16, advection16):
        sol = solve_fom(sys, mu)
        res = kkt_residual(sys, mu, sol.x)
        assert max(res.values()) <= 1e-10, res
        assert sol.residual <= 1e-10


def test_state_mean_of_zero_state_is_zero(diffusion16):
    sys = diffusion16.with_outputs(*output_terms(diffusion16, "state"))
    x = np.zeros(sys.size)
    x[:sys.n_control] = 1.0  # control is ignored by the state-only output
    assert evaluate_output(x, sys, 2.0) == 0.0


def test_full_output_row(diffusion16):
    sys = diffusion16
    x = np.random.default_rng(0).standard_normal(sys.size)
    mu = 2.5
    expected = np.concatenate([np.zeros(sys.n_control + sys.n_state), sys.d]) @ x \
        + mu * np.concatenate([np.zeros(sys.n_control), sys.U_hat_terms[0],
                               np.zeros(sys.n_state)]) @ x
    assert np.isclose(evaluate_output(x, sys, mu), expected, rtol=1e-13)


@given(st.integers(0, 2 ** 31), st.floats(1.0, 10.0))
@settings(max_examples=20, deadline=None)
def test_output_is_linear(seed, mu):
    sys = _small_system()
    rng = np.random.default_rng(seed)
    x1, x2 = rng.standard_normal((2, sys.size))
    lhs = evaluate_output(x1 + x2, sys, mu)
    rhs = evaluate_output(x1, sys, mu) + evaluate_output(x2, sys, mu)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


_CACHE = {}


def _small_system():
    if "s" not in _CACHE:
        _CACHE["s"] = build_control_problem(build_unit_square_mesh(6, 6))
    return _CACHE["s"]


def test_output_dimension_mismatch():
    with pytest.raises(ValueError):
        evaluate_output(np.zeros(3), _small_system(), 1.0)


def test_sweep_single_sample_and_exact_match(diffusion16):
    assert len(sweep_outputs(diffusion16, [1.0])) == 1
    mus = np.linspace(1, 10, 7)
    sweep = sweep_outputs(diffusion16, mus)
    for (mu, y), m in zip(sweep, mus):
        assert mu == m and y == solve_fom(diffusion16, m).y


def test_thread_count_does_not_change_results(diffusion16, monkeypatch):
    mus = np.linspace(1, 10, 6)
    monkeypatch.setenv("SOCROM_THREADS", "1")
    serial = [s.x for s in solve_many(diffusion16, mus)]
    monkeypatch.setenv("SOCROM_THREADS", "4")
    threaded = [s.x for s in solve_many(diffusion16, mus)]
    assert all(np.array_equal(a, b) for a, b in zip(serial, threaded))


def test_output_map_is_continuous(diffusion16):
    ys = np.array([y for _, y in sweep_outputs(diffusion16, np.linspace(1, 10, 40))])
    assert np.all(np.isfinite(ys))
    assert np.max(np.abs(np.diff(ys))) <= 0.1 * np.max(np.abs(ys))


def test_singular_system_reports_mu():
    sys = _small_system()
    nh = sys.n_state
    bad = AffineSaddleSystem(
        M1=sys.M1, M2=sys.M2, M3=sp.csr_matrix((nh, nh)), K_terms=[sp.csr_matrix((nh, nh))],
        theta_a=[1.0], U_hat_terms=sys.U_hat_terms, theta_u=sys.theta_u, d=sys.d,
        beta=sys.beta)
    with pytest.raises(SingularSystemError) as info:
        solve_fom(bad, 2.5)
    assert info.value.mu == 2.5


def test_ill_conditioning_warns():
    sys = build_control_problem(build_unit_square_mesh(4, 4), beta=1e-22)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        solve_fom(sys, 1.0)
    assert any(issubclass(w.category, IllConditionedWarning) for w in caught)


def test_high_contrast_problem_residual():
    mesh = build_unit_square_mesh(32, 32)
    sys = build_control_problem(mesh, kappa1=make_high_contrast_field(1e4))
    sol = solve_fom(sys, 7.0)
    assert max(kkt_residual(sys, 7.0, sol.x).values()) <= 1e-10
