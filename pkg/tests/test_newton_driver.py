import math

import numpy as np
import pytest

from inexact_newton.exceptions import ConfigError, NumericalError
from inexact_newton.forward_models import (DiagonalLinearModel, NoisyData, SourceSpec,
                                           make_diagonal_linear_model, make_hammerstein_model,
                                           make_noisy_data, make_source_solution, rescale_model)
from inexact_newton.hilbert_scale import ScaleBasis
from inexact_newton.newton_driver import (TRACE_COLUMNS, RunTrace, SolverConfig, StopReason,
                                          residual_bounds_check, solve, verify_trace)
from inexact_newton.spectral_filters import FilterKind

SCALAR = ScaleBasis.default(1)


def scalar_run(kind="tikhonov", delta=0.01, path="matrix-free", eta=0.9):
    cfg = SolverConfig(tau=2.5, eta=eta, kind=kind, inner_path=path)
    data = NoisyData(np.array([1.0]), delta, 0, np.array([1.0]))
    return solve(DiagonalLinearModel([0.5]), SCALAR, data, np.zeros(1), cfg,
                 x_true=np.array([2.0]))


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(tau=2.0)
    with pytest.raises(ConfigError):
        SolverConfig(tau=2.5, eta=0.8)
    SolverConfig(tau=2.5, eta=0.8, enforce_tau_eta=False)
    with pytest.raises(ConfigError):
        SolverConfig(eta=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(theta=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(inner_path="gpu")
    with pytest.raises(ValueError):
        SolverConfig(kind="newton")
    assert SolverConfig(kind="landweber").kind is FilterKind.LANDWEBER


@pytest.mark.parametrize("kind", ["tikhonov", "asymptotic"])
@pytest.mark.parametrize("path", ["matrix-free", "spectral"])
def test_scalar_geometric_decay(kind, path):
    expected = math.ceil(math.log(0.025) / math.log(0.9))
    assert expected == 36
    x, trace = scalar_run(kind, path=path)
    assert trace.stop_reason is StopReason.DISCREPANCY
    assert abs(trace.n_delta - expected) <= 1
    rep = verify_trace(trace, eta=0.9)
    assert rep.residual_contraction == pytest.approx(0.9, rel=1e-6)
    assert rep.monotone_ok and rep.tn_floor_ok
    bounds = residual_bounds_check(trace, 0.01, 2.5)
    assert bounds.passed
    assert bounds.max_backward_ratio == pytest.approx(1 / 0.9, rel=1e-6)


def test_discrete_kinds_on_scalar():
    for kind, factor in (("landweber", 0.75), ("implicit", 0.8)):
        _, trace = scalar_run(kind)
        assert trace.stop_reason is StopReason.DISCREPANCY
        assert verify_trace(trace).residual_contraction == pytest.approx(factor)
        assert trace.n_delta == math.ceil(math.log(0.025) / math.log(factor))


def test_immediate_stop():
    x, trace = scalar_run(delta=1.0)
    assert trace.n_delta == 0 and trace.stop_reason is StopReason.DISCREPANCY
    np.testing.assert_array_equal(x, [0.0])
    rep = verify_trace(trace)
    assert rep.monotone_ok and rep.energy_ratio == 0.0
    assert len(trace.rows) == 1


def test_trace_columns_and_invariants():
    _, trace = scalar_run()
    s = trace.column("s_n")
    assert np.all(np.diff(s) > 0)
    np.testing.assert_allclose(s[1:], np.cumsum(trace.t_values))
    res = trace.residuals
    assert np.all(res[:-1] > 2.5 * 0.01) and res[-1] <= 2.5 * 0.01
    assert math.isnan(trace.rows[-1].t_n)


def test_trace_csv_roundtrip(tmp_path):
    _, trace = scalar_run()
    path = tmp_path / "trace.csv"
    text = trace.to_csv(path)
    assert text.splitlines()[0] == ",".join(TRACE_COLUMNS)
    assert path.read_text() == text
    back = RunTrace.from_csv(text)
    np.testing.assert_array_equal(back.residuals, trace.residuals)
    np.testing.assert_array_equal(back.column("t_n")[:-1], trace.t_values)
    with pytest.raises(ValueError):
        RunTrace.from_csv("a,b\n1,2\n")


def test_determinism():
    a = scalar_run("asymptotic")[1].to_csv()
    b = scalar_run("asymptotic")[1].to_csv()
    assert a == b


def test_max_outer():
    cfg = SolverConfig(kind="landweber", max_outer=3)
    data = NoisyData(np.array([1.0]), 1e-6, 0)
    x, trace = solve(DiagonalLinearModel([0.5]), SCALAR, data, np.zeros(1), cfg)
    assert trace.stop_reason is StopReason.MAX_OUTER and trace.n_delta == 3


def test_inner_stall_is_reported():
    basis = ScaleBasis.default(2)
    model = DiagonalLinearModel([0.5, 0.0])
    data = NoisyData(np.array([0.1, 1.0]), 1e-3, 0)
    cfg = SolverConfig(kind="tikhonov", inner_path="spectral")
    x, trace = solve(model, basis, data, np.zeros(2), cfg)
    assert trace.stop_reason is StopReason.INNER_STALL and "floor" in trace.message
    cfg = SolverConfig(kind="landweber", k_max=100)
    x, trace = solve(model, basis, data, np.zeros(2), cfg)
    assert trace.stop_reason is StopReason.INNER_STALL


def test_divergence_detection():
    # data generated by a different operator violates the model assumptions
    basis = ScaleBasis.default(2)
    model = DiagonalLinearModel([0.5, 0.5])
    data = NoisyData(np.array([1.0, -1.0]), 1e-4, 0)
    x_true = np.array([2.0, 2.0])
    _, trace = solve(model, basis, data, np.zeros(2), SolverConfig(), x_true=x_true)
    assert trace.stop_reason is StopReason.DIVERGENCE


def test_non_finite_residual():
    data = NoisyData(np.array([np.inf]), 0.1, 0)
    with pytest.raises(NumericalError):
        solve(DiagonalLinearModel([0.5]), SCALAR, data, np.zeros(1), SolverConfig())


def test_rescale_option():
    basis = ScaleBasis.default(16)
    model = make_diagonal_linear_model(16, 1.0, basis)
    big = DiagonalLinearModel(5 * model.diagonal)
    y = big.evaluate(big.reference_solution)
    data = make_noisy_data(y, 1e-3, seed=0)
    cfg = SolverConfig(rescale=True, inner_path="spectral")
    _, trace = solve(big, basis, data, np.zeros(16), cfg, x_true=big.reference_solution)
    assert trace.stop_reason is StopReason.DISCREPANCY
    with pytest.raises(ConfigError):
        solve(big, basis, data, np.zeros(16), SolverConfig(inner_path="spectral"))


def test_verify_trace_requires_truth():
    data = NoisyData(np.array([1.0]), 0.01, 0)
    _, trace = solve(DiagonalLinearModel([0.5]), SCALAR, data, np.zeros(1), SolverConfig())
    with pytest.raises(ValueError):
        verify_trace(trace)
    with pytest.raises(ValueError):
        verify_trace(RunTrace())


def diagonal_setup(n=256, mu=0.5, s=0.0, delta=1e-4, seed=0):
    basis = ScaleBasis.default(n)
    model, _ = rescale_model(make_diagonal_linear_model(n, 1.0, basis), basis, s, 0.9)
    x_true, x0 = make_source_solution(model, basis, SourceSpec(mu, 1.0, seed), s)
    data = make_noisy_data(model.evaluate(x_true), delta, seed)
    return model, basis, data, x0, x_true


@pytest.mark.parametrize("kind", list(FilterKind))
def test_diagonal_monotone_error(kind):
    model, basis, data, x0, x_true = diagonal_setup()
    cfg = SolverConfig(kind=kind, inner_path="spectral", k_max=10**7, t_max_asymptotic=1e8)
    _, trace = solve(model, basis, data, x0, cfg, x_true=x_true, mu=0.5, a=1.0)
    assert trace.stop_reason is StopReason.DISCREPANCY
    rep = verify_trace(trace, eta=cfg.eta)
    assert rep.monotone_ok and rep.tn_floor_ok and rep.contraction_ok
    assert residual_bounds_check(trace, data.delta, cfg.tau).passed
    assert np.all(np.isfinite(trace.column("err_mu")))
    assert np.all(np.isfinite(trace.column("err_minus_a")))


def test_matrix_free_matches_spectral_run():
    model, basis, data, x0, x_true = diagonal_setup(n=64, delta=1e-3)
    runs = {}
    for path in ("matrix-free", "spectral"):
        cfg = SolverConfig(kind="implicit", inner_path=path)
        runs[path] = solve(model, basis, data, x0, cfg, x_true=x_true)
    np.testing.assert_allclose(runs["matrix-free"][0], runs["spectral"][0], rtol=1e-8, atol=1e-12)
    assert runs["matrix-free"][1].n_delta == runs["spectral"][1].n_delta


def test_hammerstein_run():
    n = 64
    basis = ScaleBasis.default(n)
    model, _ = rescale_model(make_hammerstein_model(n, 0.1, basis=basis), basis, 0.0, 0.9,
                             uniform=True)
    x_true, x0 = make_source_solution(model, basis, SourceSpec(1.0, 0.5, 0), 0.0)
    data = make_noisy_data(model.evaluate(x_true), 1e-3, 0)
    for path in ("matrix-free", "spectral"):
        cfg = SolverConfig(kind="tikhonov", inner_path=path)
        _, trace = solve(model, basis, data, x0, cfg, x_true=x_true)
        assert trace.stop_reason is StopReason.DISCREPANCY
        assert verify_trace(trace).monotone_ok
