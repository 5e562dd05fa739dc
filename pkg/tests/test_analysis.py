import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fastpca import analysis, consensus_pca as cp, spectra
from fastpca.errors import ValidationError
from fastpca.harness.validate import random_admissible

from conftest import make_problem


def _spectrum(d=5, seed=0):
    A = np.random.default_rng(seed).standard_normal((d, d))
    return spectra.eig_sym(A @ A.T)


def test_angle_error_examples():
    s = _spectrum()
    Q = s.top(3)
    X = np.stack([Q, Q])
    assert analysis.angle_error(X, s) == 0.0 or analysis.angle_error(X, s) < 1e-15
    assert analysis.angle_error(-X, s) < 1e-15
    ortho = s.eigenvectors[:, [3, 4, 0]]
    assert analysis.angle_error(ortho, s, 3) == pytest.approx(1.0, abs=1e-15)


def test_angle_error_zero_column():
    s = _spectrum()
    X = s.top(2).copy()
    X[:, 1] = 0
    with pytest.raises(ValidationError):
        analysis.angle_error(X, s)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_angle_error_scale_invariant(seed):
    rng = np.random.default_rng(seed)
    s = _spectrum(6, seed % 97)
    X = rng.standard_normal((3, 6, 4))
    D = rng.uniform(0.1, 10, 4) * rng.choice([-1, 1], 4)
    e = analysis.angle_error(X, s)
    assert 0 <= e <= 1
    assert analysis.angle_error(X * D, s) == pytest.approx(e, abs=1e-12)


def test_consensus_error_examples():
    X = np.random.default_rng(0).standard_normal((4, 3, 2))
    same = np.repeat(X[:1], 4, axis=0)
    assert np.all(analysis.consensus_error(same) == 0)
    e1 = np.array([[[1.0], [0.0]], [[-1.0], [0.0]]])
    np.testing.assert_allclose(analysis.consensus_error(e1), [2.0])


def test_consensus_error_decays_on_run():
    covs, mix, _ = make_problem(8, 8, 2, seed=21)
    s = cp.fastpca_init(covs, 8, 2, seed=0)
    series = []
    for _ in range(600):
        s = cp.fastpca_step(s, mix, 0.5, covs)
        series.append(float(np.sum(analysis.consensus_error(s.X))))
    fit = analysis.rate_fit(np.array(series))
    assert fit.rho < 1 and fit.r_squared >= 0.95


def test_tracker_residual_examples(small_problem):
    covs, mix, _ = small_problem
    s = cp.fastpca_init(covs, 8, 3, seed=1)
    assert np.all(analysis.tracker_residual(s, covs) == 0)
    for _ in range(100):
        s = cp.fastpca_step(s, mix, 0.5, covs)
    g = analysis.mean_pseudo_gradient_norm(s, covs)
    assert np.all(analysis.tracker_residual(s, covs) <= 1e-10 * (1 + g))
    S = s.S.copy()
    S[2, :, 1] += 1e-6
    from dataclasses import replace
    assert analysis.tracker_residual(replace(s, S=S), covs)[1] > 1e-8


def test_distance_to_optimum():
    s = _spectrum()
    Q = s.top(2)
    X = np.stack([3 * Q, 3 * Q])
    assert np.all(analysis.distance_to_optimum(X, s) < 1e-14)
    Y = np.stack([Q + 0.1 * s.eigenvectors[:, [4, 3]]] * 2)
    np.testing.assert_allclose(analysis.distance_to_optimum(Y, s), [0.1, 0.1], atol=1e-14)


def test_eigen_coefficients():
    s = _spectrum(5, 3)
    q = s.eigenvectors
    np.testing.assert_allclose(np.abs(analysis.eigen_coefficients(q[:, 2], s)), np.eye(5)[2], atol=1e-14)
    z = analysis.eigen_coefficients((q[:, 0] + q[:, 1]) / np.sqrt(2), s)
    np.testing.assert_allclose(np.abs(z), [2**-0.5, 2**-0.5, 0, 0, 0], atol=1e-14)
    z = analysis.eigen_coefficients(np.random.default_rng(0).standard_normal(5), s)
    assert np.sum(z**2) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValidationError):
        analysis.eigen_coefficients(np.zeros(5), s)


def _krasulina_z(lam, k, alpha, x0, steps=400):
    d = len(lam)
    spec = spectra.Spectrum(eigenvalues=np.asarray(lam, float), eigenvectors=np.eye(d))
    C = np.diag(lam)
    x = np.asarray(x0, float)
    zs = [analysis.eigen_coefficients(x, spec)]
    for _ in range(steps):
        x = cp.oracle_krasulina_step(C, np.eye(d)[:, : k - 1], x, alpha)
        zs.append(analysis.eigen_coefficients(x, spec))
    return np.array(zs)


def test_decay_k1_lower_vacuous_and_upper_rate():
    lam = [3.0, 2.0, 1.0]
    rep = analysis.coefficient_decay_check(_krasulina_z(lam, 1, 0.1, np.ones(3)), 1, 0.1, lam)
    assert rep.lower_ok and rep.worst_ratios[0] == 0.0
    assert rep.rho == pytest.approx((1.2 / 1.3) ** 2, rel=1e-15)
    assert rep.rho == pytest.approx(0.8521, abs=1e-4)
    assert rep.upper_ok


def test_decay_rejects_large_alpha_and_zero_start():
    lam = [3.0, 2.0, 1.0]
    z = _krasulina_z(lam, 2, 0.1, np.ones(3), steps=5)
    with pytest.raises(ValidationError):
        analysis.coefficient_decay_check(z, 2, 1 / 3.0, lam)
    z0 = _krasulina_z(lam, 2, 0.1, [1.0, 0.0, 1.0], steps=5)
    with pytest.raises(ValidationError):
        analysis.coefficient_decay_check(z0, 2, 0.1, lam)


def test_decay_detects_slower_sequence():
    lam = [3.0, 2.0, 1.0]
    z = np.array([[0.5, 0.5, 0.5 * 0.99**t] for t in range(50)])
    assert not analysis.coefficient_decay_check(z, 2, 0.1, lam).upper_ok


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decay_random_draws(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(3, 9))
    lam = np.sort(rng.uniform(0.05, 5.0, d))[::-1]
    assume(np.min(-np.diff(lam)) > 1e-3)
    k = int(rng.integers(1, d))
    alpha = rng.uniform(0.05, 0.95) / lam[0]
    x0 = rng.standard_normal(d)
    rep = analysis.coefficient_decay_check(_krasulina_z(lam, k, alpha, x0, steps=300), k, alpha, lam)
    assert rep.lower_ok and rep.upper_ok


def test_step_size_bound_example():
    lam = np.array([1.0, 0.5, 0.25])
    assert analysis.step_size_bound(lam, 1, 0.0) == pytest.approx(1.4697236919459142e-4, rel=1e-14)


def test_step_size_bound_limits_and_errors():
    lam = np.array([1.0, 0.5, 0.25])
    assert analysis.step_size_bound(lam, 1, 0.999999) < 1e-15
    with pytest.raises(ValidationError):
        analysis.step_size_bound(np.array([1.0, 1.0, 0.2]), 2, 0.1)
    with pytest.raises(ValidationError):
        analysis.step_size_bound(lam, 1, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.0, 0.9), st.floats(0.01, 0.09), st.integers(1, 4))
def test_step_size_bound_monotone(gap, beta, dbeta, K):
    lam = np.concatenate([[1.0], 1.0 - gap * np.arange(1, 6) / 6])
    lam_wide = np.concatenate([[1.0], 1.0 - 1.1 * gap * np.arange(1, 6) / 6])
    b = analysis.step_size_bound(lam, K, beta)
    assert analysis.step_size_bound(lam_wide, K, beta) > b
    assert analysis.step_size_bound(lam, K, beta + dbeta) < b
    # adding a component cannot increase the bound
    assert analysis.step_size_bound(lam, K + 1, beta) < b


def test_p_matrix_shape():
    P = analysis.p_matrix(0.01, 1, 0.8, 0.5, 1.0, 0.2)
    L = 6.0
    np.testing.assert_allclose(P, [
        [0.6 + 0.01 * L, L * (2 + 0.01 * L), 0.01 * L * L],
        [0.01, 0.6, 0.0],
        [0.0, 0.01 * L, 1.005 / 1.008],
    ])


def test_p_radius_at_zero_is_one():
    for beta in (0.0, 0.3, 0.9):
        assert analysis.p_spectral_radius(0.0, 2, 0.7, 0.4, 1.0, beta) == 1.0


def test_p_radius_at_safe_alpha():
    lam = np.array([1.0, 0.5])
    a = 0.9 * analysis.step_size_bound(lam, 1, 0.0)
    assert analysis.p_spectral_radius(a, 1, 1.0, 0.5, 1.0, 0.0) < 1.0
    assert analysis.p_spectral_gap(a, 1, 1.0, 0.5, 1.0, 0.0) > 0


def test_p_radius_matches_float_eigvals_off_the_edge():
    args = (0.05, 2, 0.8, 0.5, 1.2, 0.4)
    ref = np.max(np.abs(np.linalg.eigvals(analysis.p_matrix(*args))))
    assert analysis.p_spectral_radius(*args) == pytest.approx(ref, rel=1e-12)
    assert ref > 1  # large step: the contraction is lost


def test_p_radius_random_admissible():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        lam, beta, K, k = random_admissible(rng)
        a = 0.9 * analysis.step_size_bound(lam, K, beta)
        assert analysis.p_spectral_gap(a, k, lam[k - 1], lam[k], lam[0], beta) > 0


def test_lipschitz_examples():
    assert analysis.lipschitz_probe(np.zeros((3, 3)), 1, n_trials=200) == 0.0
    assert analysis.lipschitz_probe(np.diag([2.0, 1.0]), 1, n_trials=10_000, seed=1) <= 12.0
    rng = np.random.default_rng(5)
    A = rng.standard_normal((6, 6))
    C = A @ A.T
    prefix = spectra.random_orthonormal(6, 2, rng)
    lam1 = spectra.eig_sym(C).eigenvalues[0]
    assert analysis.lipschitz_probe(C, 3, prefix, 10_000, seed=2) <= 8 * lam1
    with pytest.raises(ValidationError):
        analysis.lipschitz_probe(C, 3, prefix[:, :1])


def test_fixed_prefix_gradient_matches_deflated_formula():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((5, 5))
    C = A @ A.T
    P = 2.0 * spectra.random_orthonormal(5, 2, rng)
    v = rng.standard_normal(5)
    expected = C @ v - (v @ C @ v) / (v @ v) * v
    for p in P.T:
        expected -= (p @ C @ v) / (p @ p) * p
    np.testing.assert_allclose(analysis.fixed_prefix_pseudo_gradient(C, P, v)[0], expected, atol=1e-12)


def test_rate_fit_examples():
    r = analysis.rate_fit(0.5 ** np.arange(60))
    assert r.rho == pytest.approx(0.5, rel=1e-12) and r.r_squared == pytest.approx(1.0, abs=1e-12)
    c = analysis.rate_fit(np.full(30, 0.3))
    assert c.rho == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_errors():
    with pytest.raises(ValidationError):
        analysis.rate_fit(np.ones(5))
    with pytest.raises(ValidationError):
        analysis.rate_fit(np.array([1.0] * 30 + [-1.0]))
    with pytest.raises(ValidationError):
        analysis.rate_fit(0.1 ** np.arange(30))  # under 20 points above the floor


def test_rate_fit_ignores_floor_plateau():
    e = np.concatenate([0.8 ** np.arange(130), np.full(500, 3e-16)])
    r = analysis.rate_fit(e)
    assert r.rho == pytest.approx(0.8, rel=1e-10)
    assert r.window[1] <= 130


def test_rate_fit_accepts_exact_zeros():
    e = np.concatenate([0.7 ** np.arange(40), np.zeros(10)])
    assert analysis.rate_fit(e).rho == pytest.approx(0.7, rel=1e-10)


def test_trace_csv_roundtrip():
    tr = analysis.Trace("x")
    tr.append(analysis.TraceRow(0, 0, 0.5, np.array([1.0, 2.0]), None, np.array([3.0, 4.0])))
    tr.append(analysis.TraceRow(1, 1, 0.1, np.array([0.5, 0.5]), np.array([1e-17, 2e-17]), np.array([0.0, 0.0])))
    text = tr.to_csv()
    assert text.splitlines()[0] == "t,comm_units,angle_error,consensus_err,tracker_resid,dist_opt"
    assert text.splitlines()[1] == "0,0,0.5,3,nan,5"
    back = analysis.parse_csv(text)
    assert back[1, 4] == 2e-17 and back[0, 3] == 3.0
    np.testing.assert_array_equal(tr.column("angle_error"), [0.5, 0.1])
    with pytest.raises(ValidationError):
        tr.append(analysis.TraceRow(2, 0, 0.1, np.zeros(2), None, np.zeros(2)))


def test_csv_seventeen_digits():
    row = (3, 3, 0.1 + 0.2, 1 / 3, float("nan"), 2.0 ** -60)
    line = analysis.format_csv([row]).splitlines()[1]
    assert [float(v) for v in line.split(",")][2:4] == [0.1 + 0.2, 1 / 3]
