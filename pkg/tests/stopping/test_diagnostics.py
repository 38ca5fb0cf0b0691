# stopping/test_diagnostics.py

import math

import numpy as np
import pytest

from viforge.data.dataset import Dataset
from viforge.errors import BudgetError, InvalidArgumentError
from viforge.mlp.config import MlpConfig
from viforge.mlp.network import init
from viforge.numerics.rng import RngStream
from viforge.stopping import diagnostics
from viforge.stopping.diagnostics import (
    compute_diagnostics,
    critical_radius,
    decompose_error,
    hilbert_distance,
    kernel_drift,
    kernel_update_residuals,
    local_rademacher,
    t_max,
)
from viforge.stopping.early_stop import early_stop_train
from viforge.stopping.kernel import KernelMatrix
from viforge.stopping.policy import FixedTPolicy


def _naive_t_max(eigenvalues, c_h, sigma, step):
    lam = np.asarray(eigenvalues)
    threshold = c_h**2 / (2 * math.e * sigma)
    tau = 1
    while True:
        eta = tau * step
        if math.sqrt(np.mean(np.minimum(lam, 1.0 / eta))) > threshold / eta:
            return tau - 1
        tau += 1


# ---------------------------------------------------------------------------------
# Local Rademacher complexity
# ---------------------------------------------------------------------------------


def test_rademacher_examples():
    lam = [4.0, 1.0, 0.25]
    assert local_rademacher(lam, 0.0) == 0.0
    assert local_rademacher(lam, 1.0) == pytest.approx(math.sqrt(2.25 / 3), abs=1e-4)
    assert local_rademacher(lam, 1e6) == pytest.approx(math.sqrt(5.25 / 3))
    assert local_rademacher(lam, math.inf) == pytest.approx(math.sqrt(5.25 / 3))


def test_rademacher_monotone():
    lam = np.random.default_rng(0).exponential(size=50)
    values = [local_rademacher(lam, r) for r in np.linspace(0, 3, 1000)]
    assert np.all(np.diff(values) >= 0)


def test_rademacher_rejects_negative():
    with pytest.raises(InvalidArgumentError):
        local_rademacher([1.0, -0.1], 1.0)
    with pytest.raises(InvalidArgumentError):
        local_rademacher([1.0], -1.0)
    with pytest.raises(InvalidArgumentError):
        local_rademacher([], 1.0)


# ---------------------------------------------------------------------------------
# C_H
# ---------------------------------------------------------------------------------


def test_hilbert_distance_identity_kernel():
    n = 4
    kernel = KernelMatrix(np.eye(n) / n)
    assert hilbert_distance(kernel, np.zeros(n)) == 0.0
    assert hilbert_distance(kernel, np.ones(n)) == pytest.approx(math.sqrt(n))


def test_hilbert_distance_matches_pinv():
    gen = np.random.default_rng(4)
    a = gen.standard_normal((8, 5))
    k = a @ a.T
    c = k @ gen.standard_normal(8)
    expected = c @ np.linalg.pinv(k, rcond=1e-10, hermitian=True) @ c / 8
    assert hilbert_distance(KernelMatrix(k), c) ** 2 == pytest.approx(expected, rel=1e-6)


def test_hilbert_distance_length_check():
    with pytest.raises(InvalidArgumentError):
        hilbert_distance(KernelMatrix(np.eye(3)), np.ones(2))


# ---------------------------------------------------------------------------------
# Critical radius
# ---------------------------------------------------------------------------------


def test_critical_radius_single_eigenvalue():
    assert critical_radius([1.0], 1.0, 1.0) == pytest.approx(math.sqrt(2 * math.e), abs=1e-3)


def test_critical_radius_solves_crossing():
    gen = np.random.default_rng(1)
    for _ in range(20):
        lam = gen.exponential(size=gen.integers(3, 40))
        c_h, sigma = gen.uniform(0.2, 3.0), gen.uniform(0.3, 2.0)
        rho = critical_radius(lam, c_h, sigma)
        r_hat = local_rademacher(lam, rho)
        assert abs(r_hat - rho**2 * c_h**2 / (2 * math.e * sigma)) <= 1e-6 * r_hat


def test_critical_radius_grows_with_sigma():
    lam = [2.0, 1.0, 0.5, 0.1]
    assert critical_radius(lam, 1.0, 2.0) > critical_radius(lam, 1.0, 1.0)


def test_critical_radius_degenerate():
    assert 0.0 < critical_radius([0.0, 0.0], 1.0, 1.0) < 1e-300
    with pytest.raises(InvalidArgumentError):
        critical_radius([1.0], 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        critical_radius([1.0], 1.0, 0.0)


# ---------------------------------------------------------------------------------
# T_max
# ---------------------------------------------------------------------------------


def test_t_max_hand_example():
    assert t_max([1.0], 1.0, 1.0, 0.05) == 3


def test_t_max_matches_naive_scan():
    gen = np.random.default_rng(7)
    for _ in range(100):
        lam = gen.exponential(size=gen.integers(1, 30))
        c_h, sigma = gen.uniform(0.1, 3.0), gen.uniform(0.5, 2.0)
        step = min(1.0, 1.0 / lam.max()) * gen.uniform(0.2, 1.0)
        assert t_max(lam, c_h, sigma, step) == _naive_t_max(lam, c_h, sigma, step)


def test_t_max_monotone_in_sigma_and_step():
    lam = [1.5, 0.7, 0.2, 0.05]
    assert t_max(lam, 2.0, 2.0, 0.5) <= t_max(lam, 2.0, 1.0, 0.5)
    coarse = t_max(lam, 2.0, 1.0, 0.5)
    assert t_max(lam, 2.0, 1.0, 0.25) >= 2 * coarse


def test_t_max_zero_distance_stops_immediately():
    assert t_max([1.0, 0.5], 0.0, 1.0, 0.5) == 0


def test_t_max_step_precondition():
    with pytest.raises(InvalidArgumentError):
        t_max([4.0], 1.0, 1.0, 0.5)
    with pytest.raises(InvalidArgumentError):
        t_max([0.5], 1.0, 1.0, 0.0)


def test_t_max_budget(monkeypatch):
    monkeypatch.setattr(diagnostics, "T_MAX_CAP", 10)
    with pytest.raises(BudgetError):
        t_max([1.0], 100.0, 1.0, 0.5)
    with pytest.raises(BudgetError):
        t_max([0.0, 0.0], 1.0, 1.0, 0.5)


# ---------------------------------------------------------------------------------
# Trajectory diagnostics
# ---------------------------------------------------------------------------------


@pytest.fixture
def linear_problem():
    gen = np.random.default_rng(3)
    x = gen.standard_normal((40, 3))
    truth = x @ np.array([1.0, -2.0, 0.5])
    noise = 0.3 * gen.standard_normal(40)
    return Dataset(x=x, y=truth + noise), truth, noise


def _recorded_run(model, data, n_iters=30):
    kernel = model.kernel(data.x)
    step = min(1.0, 1.0 / kernel.lambda_max)
    _, history = early_stop_train(
        model, data, FixedTPolicy(n_iters=n_iters, step=step), RngStream(seed=0), record_trajectory=True
    )
    return kernel, step, history.trajectory


def test_linear_model_has_no_kernel_drift(linear_problem):
    data, truth, noise = linear_problem
    model = init(MlpConfig(widths=[3, 1]), RngStream(seed=1))
    kernel, step, traj = _recorded_run(model, data)

    residuals = kernel_update_residuals(traj, kernel, data.y, step)
    assert residuals.shape == (30,)
    np.testing.assert_allclose(residuals, 0.0, atol=1e-10)

    decomposition = decompose_error(kernel, traj, model.predict(data.x), truth, noise, step)
    np.testing.assert_allclose(decomposition.difference, 0.0, atol=1e-12)
    assert decomposition.holds


def test_decomposition_at_warm_start(linear_problem):
    data, truth, noise = linear_problem
    model = init(MlpConfig(widths=[3, 1]), RngStream(seed=1))
    kernel, step, traj = _recorded_run(model, data, n_iters=5)
    warm = model.predict(data.x)
    d = decompose_error(kernel, traj, warm, truth, noise, step)
    assert d.n_iters == 5
    assert d.variance[0] == 0.0
    assert d.bias_sq[0] == pytest.approx(2.0 * np.mean((truth - warm) ** 2))
    np.testing.assert_array_equal(d.shrinkage_at(0), np.ones(40))


def test_wide_network_bound_holds(linear_problem):
    data, truth, noise = linear_problem
    model = init(MlpConfig(widths=[3, 512, 1]), RngStream(seed=2))
    kernel, step, traj = _recorded_run(model, data)
    d = decompose_error(kernel, traj, model.predict(data.x), truth, noise, step)

    assert d.holds
    assert np.all(d.bias_sq >= 0) and np.all(d.variance >= 0) and np.all(d.difference >= 0)
    assert np.all(np.diff(d.bias_sq) <= 1e-12)
    assert np.all(np.diff(d.variance) >= -1e-12)


def test_decompose_error_checks(linear_problem):
    data, truth, noise = linear_problem
    kernel = KernelMatrix(np.eye(40) / 40)
    with pytest.raises(InvalidArgumentError):
        decompose_error(kernel, None, truth, truth, noise, 0.5)
    with pytest.raises(InvalidArgumentError):
        decompose_error(kernel, truth[None, :] + 1.0, truth, truth, noise, 0.5)


def test_kernel_drift_grows_with_training(linear_problem):
    data, _, _ = linear_problem
    model = init(MlpConfig(widths=[3, 16, 1]), RngStream(seed=0))
    step = 1.0 / model.kernel(data.x).lambda_max
    trained, _ = early_stop_train(model, data, FixedTPolicy(n_iters=50, step=step), RngStream(seed=0))
    assert kernel_drift(model.kernel(data.x), model.kernel(data.x)) == 0.0
    assert kernel_drift(model.kernel(data.x), trained.kernel(data.x)) > 0.0


def test_compute_diagnostics_bundle(linear_problem):
    data, _, _ = linear_problem
    model = init(MlpConfig(widths=[3, 32, 1]), RngStream(seed=0))
    kernel, step, traj = _recorded_run(model, data, n_iters=10)
    # c inside the kernel range keeps C_H moderate
    c = kernel.matrix @ data.y
    diag = compute_diagnostics(kernel, c, 0.3, step=step, trajectory=traj, y=data.y)

    assert diag.t_max >= 0
    assert diag.rho_hat > 0
    assert diag.eta.shape == (diag.t_max + 1,)
    summary = diag.summary()
    assert summary["n"] == 40
    assert summary["t_max"] == diag.t_max
    assert "max_residual_norm" in summary
    assert diag.t_max == t_max(kernel.eigenvalues, diag.c_h, 0.3, step)


@pytest.mark.slow
def test_wider_networks_stay_closer_to_kernel_regime(linear_problem):
    data, _, _ = linear_problem
    data = Dataset(x=data.x, y=np.tanh(data.y))
    residual_medians, drift_medians = [], []
    for width in (64, 256, 1024):
        residuals, drifts = [], []
        for seed in range(5):
            model = init(MlpConfig(widths=[3, width, 1]), RngStream(seed=seed))
            kernel, step, traj = _recorded_run(model, data, n_iters=50)
            residuals.append(kernel_update_residuals(traj, kernel, data.y, step).max())
            trained, _ = early_stop_train(model, data, FixedTPolicy(n_iters=50, step=step), RngStream(seed=0))
            drifts.append(kernel_drift(kernel, trained.kernel(data.x)))
        residual_medians.append(np.median(residuals))
        drift_medians.append(np.median(drifts))

    assert np.all(np.diff(residual_medians) < 0)
    assert np.all(np.diff(drift_medians) < 0)
