import numpy as np
import pytest
import scipy.fft

from inexact_newton.exceptions import DegenerateOperatorError, DimensionError
from inexact_newton.forward_models import (DiagonalLinearModel, HammersteinModel, NoisyData,
                                           ScaledModel, SourceSpec, adjoint_mismatch,
                                           derivative_errors, estimate_scaled_norm,
                                           make_diagonal_linear_model, make_hammerstein_model,
                                           make_noisy_data, make_problem, make_source_solution,
                                           rescale_model, smooth_profile)
from inexact_newton.hilbert_scale import ScaleBasis, norm_t


def test_diagonal_examples():
    m = make_diagonal_linear_model(3, 1.0)
    np.testing.assert_allclose(m.evaluate(np.ones(3)), [1, 1 / 2, 1 / 3], rtol=1e-15)
    ident = make_diagonal_linear_model(3, 0.0)
    x = np.array([0.3, -2.0, 5.0])
    np.testing.assert_array_equal(ident.evaluate(x), x)
    with pytest.raises(ValueError):
        make_diagonal_linear_model(3, -0.5)


def test_diagonal_norm_sandwich_is_equality():
    n, a = 32, 1.3
    basis = ScaleBasis.default(n)
    model, c = rescale_model(make_diagonal_linear_model(n, a, basis), basis, 0.0, 0.9)
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = rng.standard_normal(n)
        assert np.linalg.norm(model.d_apply(None, h)) == pytest.approx(c * norm_t(basis, -a, h),
                                                                       rel=1e-13)


def test_hammerstein_reduces_to_diagonal():
    n = 16
    lin = make_diagonal_linear_model(n, 1.0)
    ham = make_hammerstein_model(n, beta_cubic=0.0)
    x = np.random.default_rng(0).standard_normal(n)
    np.testing.assert_allclose(ham.evaluate(x), lin.evaluate(x), atol=1e-14)
    with pytest.raises(ValueError):
        make_hammerstein_model(n, beta_cubic=-0.1)


def test_hammerstein_pointwise_nonlinearity():
    n, beta = 31, 0.1
    ham = make_hammerstein_model(n, beta, a=0.0)
    x = np.random.default_rng(1).standard_normal(n) * 0.1
    f = np.sqrt(n + 1) * scipy.fft.dst(x, type=1, norm="ortho")
    expect = scipy.fft.dst(f + beta * f ** 3, type=1, norm="ortho") / np.sqrt(n + 1)
    np.testing.assert_allclose(ham.evaluate(x), expect, atol=1e-14)


def test_hammerstein_domain():
    ham = make_hammerstein_model(64, 0.1)
    assert ham.nodal_bound == pytest.approx(1 / np.sqrt(0.3))
    assert ham.domain_ball_radius > 0
    assert ham.in_domain(ham.reference_solution)
    assert not ham.in_domain(10 * np.ones(64))
    # Phi' stays within [1, 2] on the domain
    x = ham.reference_solution
    fprime = 1 + 3 * 0.1 * ham.nodal_values(x) ** 2
    assert fprime.max() <= 2


@pytest.mark.parametrize("name", ["diagonal", "hammerstein"])
def test_adjoint_and_derivative(name):
    n = 48
    model = make_problem(name, n, 1.0, 0.1)
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = model.reference_solution + 0.05 * rng.standard_normal(n) / np.arange(1, n + 1)
        h, g = rng.standard_normal(n), rng.standard_normal(n)
        assert adjoint_mismatch(model, x, h, g) <= 1e-10
    x = model.reference_solution
    h = rng.standard_normal(n) / np.arange(1, n + 1)
    errs, slope = derivative_errors(model, x, h, (1e-2, 1e-3, 1e-4))
    if model.is_linear:
        assert errs.max() <= 1e-10
    else:
        assert slope == pytest.approx(1.0, abs=0.1)


def test_scaled_model():
    n = 8
    base = make_hammerstein_model(n, 0.1)
    scaled = ScaledModel(base, 3.0)
    x, h = base.reference_solution, np.ones(n)
    np.testing.assert_allclose(scaled.evaluate(x), 3 * base.evaluate(x))
    np.testing.assert_allclose(scaled.d_adjoint_apply(x, h), 3 * base.d_adjoint_apply(x, h))
    assert isinstance(base.scaled(2.0), HammersteinModel)
    assert isinstance(DiagonalLinearModel([1.0, 2.0]).scaled(2.0), DiagonalLinearModel)


def test_dimension_checks():
    m = make_diagonal_linear_model(4, 1.0)
    with pytest.raises(DimensionError):
        m.evaluate(np.ones(3))
    with pytest.raises(DimensionError):
        m.d_adjoint_apply(None, np.ones(5))


def test_smooth_profile_matches_quadrature():
    n = 64
    s = (np.arange(1, 4001) - 0.5) / 4000
    f = 4 * s * (1 - s)
    k = np.arange(1, n + 1)
    coeffs = np.sqrt(2) * np.sin(np.pi * np.outer(k, s)) @ f / s.size
    np.testing.assert_allclose(smooth_profile(n), coeffs, atol=1e-7)


def test_noise_examples():
    d = make_noisy_data([1.0, 0.0], 0.1, direction=[0.0, 1.0])
    np.testing.assert_allclose(d.y_delta, [1.0, 0.1])
    y = np.arange(5.0)
    np.testing.assert_array_equal(make_noisy_data(y, 0.0, seed=3).y_delta, y)
    a, b = make_noisy_data(y, 0.2, seed=9), make_noisy_data(y, 0.2, seed=9)
    np.testing.assert_array_equal(a.y_delta, b.y_delta)
    with pytest.raises(ValueError):
        make_noisy_data(y, -1.0)


@pytest.mark.parametrize("delta", [1e-8, 1e-3, 1.0, 1e3])
def test_noise_norm_is_exact(delta):
    y = np.random.default_rng(0).standard_normal(200)
    d = make_noisy_data(y, delta, seed=4)
    # forming y + delta u rounds each entry to a unit in the last place of y
    slack = 1e-14 * delta + 4 * np.finfo(float).eps * np.linalg.norm(y)
    assert abs(np.linalg.norm(d.y_delta - y) - delta) <= slack
    small = make_noisy_data(np.zeros(200), delta, seed=4)
    assert abs(np.linalg.norm(small.y_delta) - delta) <= 1e-14 * delta
    assert d.delta == delta


def test_noisy_data_scaling():
    d = NoisyData(np.array([2.0]), 0.5, 0, np.array([1.5]))
    e = d.scaled(2.0)
    assert e.delta == 1.0 and e.y_delta[0] == 4.0 and e.y_exact[0] == 3.0


def test_source_solution():
    n = 128
    basis = ScaleBasis.default(n)
    model = make_diagonal_linear_model(n, 1.0, basis)
    x_true, x0 = make_source_solution(model, basis, SourceSpec(1.0, 1.0, seed=5), s=0.0)
    e0 = x0 - x_true
    assert norm_t(basis, 1.0, e0) == pytest.approx(1.0, rel=1e-12)
    assert norm_t(basis, 1.2, e0) > norm_t(basis, 1.0, e0)
    np.testing.assert_array_equal(x_true, model.reference_solution)
    with pytest.raises(ValueError):
        make_source_solution(model, basis, SourceSpec(0.5, 1.0), s=1.0)
    with pytest.raises(ValueError):
        make_source_solution(model, basis, SourceSpec(1.0, 0.0), s=0.0)


def test_norm_estimates_and_rescaling():
    n = 64
    basis = ScaleBasis.default(n)
    model = make_diagonal_linear_model(n, 1.0, basis)
    x = np.zeros(n)
    assert estimate_scaled_norm(model, basis, 0.0, x).value == pytest.approx(1.0, rel=1e-6)
    assert estimate_scaled_norm(model, basis, 1.0, x).value == pytest.approx(1.0, rel=1e-6)
    scaled, c = rescale_model(DiagonalLinearModel(2 * basis.powers(-1.0)), basis, 0.0, 0.9)
    assert c == pytest.approx(0.45, rel=1e-6)
    assert estimate_scaled_norm(scaled, basis, 0.0, x).value == pytest.approx(0.9, abs=1e-3)
    with pytest.raises(ValueError):
        rescale_model(model, basis, 0.0, 1.0)
    with pytest.raises(DegenerateOperatorError):
        rescale_model(DiagonalLinearModel(np.zeros(n)), basis, 0.0, 0.9)


def test_norm_estimate_against_dense_svd():
    n = 64
    basis = ScaleBasis.default(n)
    ham = make_hammerstein_model(n, 0.1, basis=basis)
    x = ham.reference_solution
    cols = [ham.d_apply(x, basis.powers(-0.5) * e) for e in np.eye(n)]
    top = np.linalg.svd(np.column_stack(cols), compute_uv=False)[0]
    assert estimate_scaled_norm(ham, basis, 0.5, x).value == pytest.approx(top, rel=1e-3)


def test_uniform_rescaling_bounds_the_domain():
    n = 64
    basis = ScaleBasis.default(n)
    ham = make_hammerstein_model(n, 0.1, basis=basis)
    scaled, c = rescale_model(ham, basis, 0.0, 0.9, uniform=True)
    assert c == pytest.approx(0.45)
    x = ham.reference_solution
    assert estimate_scaled_norm(scaled, basis, 0.0, x).value < 0.9


def test_power_iteration_warns_without_convergence():
    basis = ScaleBasis.default(50)
    model = DiagonalLinearModel(np.linspace(1.0, 0.999, 50))
    with pytest.warns(RuntimeWarning):
        est = estimate_scaled_norm(model, basis, 0.0, np.zeros(50), max_iter=2, tol=1e-16)
    assert not est.converged and est.value > 0
