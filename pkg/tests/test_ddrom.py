import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from socrom import affine
from socrom.ddrom import (
    DdromMatrices,
    DdromRegressor,
    InfeasibleDdromError,
    LineSearchError,
    TrainingSet,
    ddrom_solve,
    dual_solve,
    evaluate,
    feasibility_margin,
    fit,
    gradients,
    load_ddrom,
    objective,
    parametrization_for,
    predict,
    save_ddrom,
    strong_wolfe,
)

from _factories import (
    fd_matrix_gradients,
    random_dense_ddrom,
    random_structured_ddrom,
    synthetic_data,
)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize("factory", [random_dense_ddrom, random_structured_ddrom])
def test_gradients_match_finite_differences(factory):
    rng = np.random.default_rng(3)
    m = factory(rng)
    training, data = synthetic_data(rng, m, n=8)
    g = gradients(m, data, training)
    fd = fd_matrix_gradients(m, data, training)
    for key in "ABC":
        for exact, approx in zip(g[key], fd[key]):
            assert _rel(exact, approx) <= 1e-6


def test_structured_gradient_is_directional_derivative():
    rng = np.random.default_rng(5)
    m = random_structured_ddrom(rng)
    training, data = synthetic_data(rng, m, n=10)
    param = parametrization_for(m, structured=True)
    theta = param.pack(m)
    assert np.allclose(param.pack(param.unpack(theta)), theta)
    g = param.pullback(*gradients(m, data, training).values())
    for _ in range(3):
        v = rng.standard_normal(theta.size)
        h = 1e-6
        fd = (objective(param.unpack(theta + h * v), data, training)
              - objective(param.unpack(theta - h * v), data, training)) / (2 * h)
        assert abs(fd - g @ v) <= 1e-6 * max(abs(fd), 1e-12)


def test_structured_unpack_keeps_skeleton():
    rng = np.random.default_rng(8)
    m = random_structured_ddrom(rng)
    param = parametrization_for(m)
    mm = param.unpack(rng.standard_normal(param.size))
    A0 = mm.A_terms[0]
    nf, ns, _ = mm.blocks
    assert not np.any(A0[:nf, nf:nf + ns]) and not np.any(A0[nf + ns:, nf + ns:])
    assert np.array_equal(A0[:nf, nf + ns:], A0[nf + ns:, :nf].T)
    for K in mm.A_terms[1:]:
        assert np.array_equal(K, K.T)


def test_duality_identity():
    rng = np.random.default_rng(1)
    m = random_dense_ddrom(rng)
    for mu in (1.0, 1.7):
        x, y = ddrom_solve(m, mu)
        xd = dual_solve(m, mu)
        _, B, C = m.assemble([mu])
        assert np.isclose(C[0] @ x, B[0] @ xd, rtol=1e-12)
        assert np.isclose(y, B[0] @ xd, rtol=1e-12)


def test_symmetric_operator_dual_uses_same_matrix():
    rng = np.random.default_rng(2)
    m = random_structured_ddrom(rng)  # the saddle skeleton is symmetric
    A, _, C = m.assemble([1.3])
    assert np.allclose(A[0], A[0].T)
    assert np.allclose(dual_solve(m, 1.3), np.linalg.solve(A[0], C[0]))


def test_zero_output_vector_gives_zero_dual():
    rng = np.random.default_rng(4)
    m = random_dense_ddrom(rng)
    m.C_terms = [np.zeros(m.r) for _ in m.C_terms]
    assert not np.any(dual_solve(m, 1.5))


@given(st.floats(-3, 3), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_output_linear_in_constant_source(scale, seed):
    m = random_dense_ddrom(np.random.default_rng(seed))
    m2 = m.copy()
    m2.B_terms[0] = m.B_terms[0] * scale
    m.B_terms[1:] = [np.zeros(m.r) for _ in m.B_terms[1:]]
    m2.B_terms[1:] = [np.zeros(m.r) for _ in m2.B_terms[1:]]
    assert np.allclose(predict(m2, [1.2, 1.8]), scale * predict(m, [1.2, 1.8]), atol=1e-12)


def test_objective_brute_force():
    rng = np.random.default_rng(6)
    m = random_dense_ddrom(rng)
    mus, w = np.array([1.0, 1.4, 2.0]), np.array([0.2, 0.3, 0.5])
    y = rng.standard_normal(3)
    expected = 0.0
    for mu, wj, yj in zip(mus, w, y):
        A = sum(float(t(mu)) * Aq for t, Aq in zip([lambda _: 1.0] + m.theta_a, m.A_terms))
        B = sum(float(t(mu)) * Bp for t, Bp in zip([lambda _: 1.0] + m.theta_u, m.B_terms))
        C = sum(float(t(mu)) * Ck for t, Ck in zip(m.theta_l, m.C_terms))
        expected += wj * (yj - C @ np.linalg.solve(A, B)) ** 2
    got = objective(m, list(zip(mus, y)), TrainingSet(mus, w))
    assert np.isclose(got, expected, rtol=1e-12)


def test_single_sample_objective():
    rng = np.random.default_rng(7)
    m = random_dense_ddrom(rng)
    y = predict(m, [1.5])[0] + 1.0
    assert np.isclose(objective(m, [(1.5, y)]), 1.0, rtol=1e-12)


def test_objective_is_quadratic_in_output_vectors():
    rng = np.random.default_rng(9)
    m = random_dense_ddrom(rng)
    training, data = synthetic_data(rng, m, n=6)
    E = rng.standard_normal(m.r)
    gC = gradients(m, data, training)["C"][0]
    ev = evaluate(m, training.samples)
    tl = m.coefficients(training.samples)[2][:, 0]
    curvature = np.sum(training.weights * (tl * (ev.xhat @ E)) ** 2)
    J0 = objective(m, data, training)
    for t in (0.3, -1.1, 2.0):
        mm = m.copy()
        mm.C_terms[0] = m.C_terms[0] + t * E
        assert np.isclose(objective(mm, data, training),
                          J0 + t * gC @ E + t * t * curvature, rtol=1e-10)


def test_gradients_vanish_at_perfect_fit():
    rng = np.random.default_rng(10)
    m = random_dense_ddrom(rng)
    training, data = synthetic_data(rng, m, noise=0.0)
    g = gradients(m, data, training)
    assert all(np.max(np.abs(a)) <= 1e-12 for k in "ABC" for a in g[k])


def test_output_gradient_sign():
    m = random_dense_ddrom(np.random.default_rng(11))
    mu = 1.5
    x, y = ddrom_solve(m, mu)
    # data above the prediction pulls C along +x, so the gradient points along -x
    gC = gradients(m, [(mu, y + 1.0)])["C"][0]
    assert gC @ x < 0


def test_feasibility_margin_and_infeasible_error():
    rng = np.random.default_rng(12)
    m = random_dense_ddrom(rng)
    assert np.isfinite(feasibility_margin(m, [1.0, 2.0]))
    bad = m.copy()
    bad.A_terms = [np.zeros((m.r, m.r)) for _ in m.A_terms]
    assert feasibility_margin(bad, [1.0]) == math.inf
    with pytest.raises(InfeasibleDdromError) as info:
        evaluate(bad, [1.0, 2.0])
    assert info.value.mu == 1.0
    with pytest.raises(InfeasibleDdromError):
        fit(bad, [(1.0, 0.0), (2.0, 1.0)])


def test_misaligned_data_rejected():
    m = random_dense_ddrom(np.random.default_rng(13))
    with pytest.raises(ValueError):
        objective(m, [(1.0, 0.0)], TrainingSet([2.0]))


@pytest.mark.parametrize("structured", [True, False])
def test_fit_decreases_objective_monotonically(structured):
    rng = np.random.default_rng(14)
    m = random_structured_ddrom(rng)
    training, data = synthetic_data(rng, m, n=15, noise=0.3)
    fitted, report = fit(m, data, training, maxit=40, tol=1e-14, structured=structured)
    J = np.array(report.J)
    assert np.all(np.diff(J) <= 1e-15 * J[:-1])
    assert J[-1] < 0.5 * J[0]
    assert np.isclose(objective(fitted, data, training), J[-1], rtol=1e-10)
    assert feasibility_margin(fitted, training.samples) <= 1e12


def test_fit_stops_immediately_on_self_generated_data():
    rng = np.random.default_rng(15)
    m = random_structured_ddrom(rng)
    training, data = synthetic_data(rng, m, noise=0.0)
    fitted, report = fit(m, data, training, tol=1e-14)
    assert report.stop_reason == "tol" and report.n_iter == 1
    assert report.final_rel_change <= 10 * 1e-14
    assert np.allclose(predict(fitted, training.samples), predict(m, training.samples))


def test_fit_respects_maxit():
    rng = np.random.default_rng(16)
    m = random_dense_ddrom(rng)
    training, data = synthetic_data(rng, m)
    _, report = fit(m, data, training, maxit=3, tol=0.0, structured=False)
    assert report.stop_reason == "maxit" and report.n_iter == 3
    rows = report.rows()
    assert len(rows) == 4 and rows[0]["step"] == 0.0


def test_unstructured_fit_of_dense_model_needs_flag():
    m = random_dense_ddrom(np.random.default_rng(17))
    with pytest.raises(ValueError):
        fit(m, [(1.0, 0.0)], structured=True)


def test_strong_wolfe_on_quadratic():
    # phi(a) = (a - 2)^2: any accepted step satisfies both Wolfe conditions
    def phi(a):
        return (a - 2.0) ** 2, 2.0 * (a - 2.0), None

    a, f, d, _, evals = strong_wolfe(phi, 4.0, -4.0, alpha=0.1)
    assert f <= 4.0 + 1e-4 * a * -4.0
    assert abs(d) <= 0.9 * 4.0
    assert evals >= 1


def test_strong_wolfe_rejects_ascent_direction():
    with pytest.raises((LineSearchError, ValueError)):
        strong_wolfe(lambda a: (a, 1.0, None), 0.0, 1.0)


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(18)
    for m in (random_structured_ddrom(rng), random_dense_ddrom(rng)):
        path = tmp_path / f"m{m.r}"
        save_ddrom(m, path)
        back = load_ddrom(path)
        for a, b in zip(m.A_terms + m.B_terms + m.C_terms,
                        back.A_terms + back.B_terms + back.C_terms):
            assert np.array_equal(a, b)
        assert back.blocks == m.blocks and back.beta == m.beta
        mus = [1.0, 1.5, 2.0]
        assert np.array_equal(predict(back, mus), predict(m, mus))


def test_estimator_interface():
    rng = np.random.default_rng(19)
    m = random_structured_ddrom(rng)
    training, data = synthetic_data(rng, m, n=12, noise=0.2)
    mus, y = training.samples, np.array([v for _, v in data])
    est = DdromRegressor(initial=m, maxit=30, tol=1e-12)
    assert est.get_params()["maxit"] == 30
    twin = clone(est)
    assert twin.get_params()["tol"] == 1e-12 and not hasattr(twin, "matrices_")
    est.fit(mus.reshape(-1, 1), y)
    assert est.predict(mus).shape == (12,)
    assert est.score(mus, y) > 1 - objective(m, data, training) / np.var(y)
    with pytest.raises(ValueError):
        DdromRegressor().fit(mus, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 2)))


def test_training_set_validation():
    ts = TrainingSet([1.0, 2.0, 3.0])
    assert np.allclose(ts.weights, 1 / 3)
    assert np.isclose(ts.norm([1.0, 1.0, 1.0]), 1.0)
    for bad in (dict(samples=[]), dict(samples=[1.0], weights=[0.5]),
                dict(samples=[1.0, 2.0], weights=[1.5, -0.5]),
                dict(samples=[0.5], interval=(1, 2))):
        with pytest.raises(ValueError):
            TrainingSet(**bad)


def test_matrix_validation():
    with pytest.raises(ValueError):
        DdromMatrices([np.eye(2)], [np.ones(2)], [np.ones(3)], [], [], [affine.constant(1.0)])
    with pytest.raises(ValueError):
        DdromMatrices([np.eye(2)], [np.ones(2)], [], [], [], [])
