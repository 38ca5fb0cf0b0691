# mlp/test_network.py

import numpy as np
import pytest

from viforge.errors import BudgetError, InvalidArgumentError, NumericOverflowError
from viforge.mlp import network
from viforge.mlp.config import MlpConfig, effective_step, kernel_step
from viforge.mlp.network import (
    MlpModel,
    empirical_ntk,
    grad_step,
    init,
    per_example_jacobian,
)
from viforge.numerics.rng import RngStream


def _model(parameterization="ntk", widths=(3, 16, 8, 1), activation="relu", **kwargs):
    config = MlpConfig(widths=list(widths), parameterization=parameterization, activation=activation, **kwargs)
    return init(config, RngStream(seed=0).child("init"))


def _x(n=7, p=3, seed=1):
    return np.random.default_rng(seed).standard_normal((n, p))


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(widths=[3])
    with pytest.raises(ValueError):
        MlpConfig(widths=[3, 4, 2])
    assert MlpConfig(widths=[3, 64, 1]).width == 64
    assert MlpConfig().with_input_dim(5).widths == [5, 256, 1]


def test_step_sizes():
    ntk = MlpConfig(widths=[2, 50, 1], eta0=0.5)
    std = MlpConfig(widths=[2, 50, 1], eta0=0.5, parameterization="standard")
    assert effective_step(ntk) == 0.5
    assert effective_step(std) == pytest.approx(0.01)
    assert kernel_step(std) == 0.5


def test_init_is_reproducible():
    a, b = _model(), _model()
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    assert a.n_params == 3 * 16 + 16 + 16 * 8 + 8 + 8 + 1


def test_zero_bias_when_disabled():
    model = _model(sigma_b=0.0)
    assert all(np.all(b == 0.0) for b in model.biases)


def test_single_linear_layer():
    config = MlpConfig(widths=[2, 1], sigma_w=1.0, sigma_b=0.0)
    model = MlpModel(config=config, weights=(np.array([[2.0], [-1.0]]),), biases=(np.zeros(1),))
    # NTK scaling divides by sqrt(fan_in)
    np.testing.assert_allclose(model.predict([[1.0, 1.0]]), [1.0 / np.sqrt(2.0)])


def test_predict_checks_shape():
    with pytest.raises(InvalidArgumentError):
        _model().predict(np.zeros((4, 2)))


def test_predict_overflow():
    config = MlpConfig(widths=[2, 1], sigma_w=1.0, sigma_b=0.0)
    model = MlpModel(config=config, weights=(np.array([[1e200], [1e200]]),), biases=(np.zeros(1),))
    with np.errstate(over="ignore"), pytest.raises(NumericOverflowError):
        model.predict([[1e200, 1e200]])


@pytest.mark.parametrize("parameterization", ["ntk", "standard"])
@pytest.mark.parametrize("activation", ["relu", "softplus"])
def test_jacobian_matches_finite_differences(parameterization, activation):
    model = _model(parameterization, activation=activation)
    x = _x()
    jac = per_example_jacobian(model, x)
    theta = model.flat_params()
    assert jac.shape == (7, theta.size)

    eps = 1e-6
    gen = np.random.default_rng(2)
    for k in gen.choice(theta.size, size=12, replace=False):
        bump = np.zeros_like(theta)
        bump[k] = eps
        up = model.with_flat_params(theta + bump).predict(x)
        down = model.with_flat_params(theta - bump).predict(x)
        np.testing.assert_allclose(jac[:, k], (up - down) / (2 * eps), rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("parameterization", ["ntk", "standard"])
def test_ntk_equals_jacobian_gram(parameterization):
    model = _model(parameterization)
    x = _x(n=9)
    jac = per_example_jacobian(model, x)
    expected = jac @ jac.T / 9
    if parameterization == "standard":
        expected /= model.config.width
    np.testing.assert_allclose(empirical_ntk(model, x).matrix, expected, rtol=1e-10, atol=1e-12)


def test_ntk_single_layer_closed_form():
    config = MlpConfig(widths=[2, 1], sigma_w=1.0, sigma_b=0.0)
    model = init(config, RngStream(seed=0))
    x = np.array([[1.0, 0.0], [1.0, 2.0]])
    # Gradient of x·w/√2 is x/√2, so K = X Xᵀ / (2 N)
    np.testing.assert_allclose(empirical_ntk(model, x).matrix, x @ x.T / 4.0)


def test_ntk_is_psd():
    kernel = empirical_ntk(_model(), _x(n=12))
    assert kernel.eigenvalues.min() >= 0.0
    np.testing.assert_allclose(kernel.matrix, kernel.matrix.T)


def test_grad_step_zero_residual_is_fixed_point():
    model = _model()
    x = _x()
    stepped = grad_step(model, x, model.predict(x), 0.5)
    np.testing.assert_allclose(stepped.flat_params(), model.flat_params())


@pytest.mark.parametrize("parameterization", ["ntk", "standard"])
def test_small_step_follows_kernel_update(parameterization):
    model = _model(parameterization, widths=(3, 32, 1))
    x = _x(n=6)
    y = np.random.default_rng(5).standard_normal(6)
    eta = 1e-4
    kernel = empirical_ntk(model, x).matrix
    f0 = model.predict(x)

    session = model.training_session(x, y, step=eta)
    session.step()
    predicted = f0 - eta * kernel @ (f0 - y)
    np.testing.assert_allclose(session.train_pred, predicted, rtol=0, atol=1e-7)


def test_gradient_descent_reduces_loss():
    model = _model(widths=(3, 32, 1))
    x = _x(n=20)
    y = np.sin(x[:, 0])
    session = model.training_session(x, y, x_val=x[:5])
    start = np.mean((session.train_pred - y) ** 2)
    for _ in range(50):
        session.step()
    assert np.mean((session.train_pred - y) ** 2) < start
    assert session.val_pred.shape == (5,)
    assert session.snapshot() is session.model


def test_grad_step_overflow():
    model = _model(widths=(3, 8, 1))
    x = _x() * 1e150
    with pytest.raises(NumericOverflowError):
        grad_step(model, x, np.zeros(7), 1e10)
    with pytest.raises(InvalidArgumentError):
        grad_step(model, _x(), np.zeros(7), 0.0)


def test_jacobian_budget(monkeypatch):
    monkeypatch.setattr(network, "JACOBIAN_ENTRY_CAP", 100)
    with pytest.raises(BudgetError):
        per_example_jacobian(_model(), _x())


def test_checkpoint_round_trip():
    model = _model()
    restored = MlpModel.from_checkpoint(model.to_checkpoint())
    x = _x()
    np.testing.assert_array_equal(restored.predict(x), model.predict(x))

    bad = model.to_checkpoint().model_copy(update={"version": 99})
    with pytest.raises(InvalidArgumentError):
        MlpModel.from_checkpoint(bad)
