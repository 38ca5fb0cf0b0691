# importance/test_shapley.py

import math
from itertools import combinations

import numpy as np
import pytest

from viforge.data.dataset import Dataset
from viforge.errors import BudgetError, InvalidArgumentError
from viforge.importance.shapley import SubsetCache, shapley, shapley_from_value, shapley_weight
from viforge.mlp.config import MlpConfig
from viforge.numerics.rng import RngStream


def _columns(mask, p):
    return [j for j in range(p) if mask & (1 << j)]


@pytest.fixture
def ols_value():
    """val(S) = −MSE of least squares on the columns in S; X3 duplicates X2."""
    gen = np.random.default_rng(0)
    x = gen.standard_normal((300, 3))
    x[:, 0] += 0.6 * x[:, 1]
    x = np.column_stack([x, x[:, 2]])
    y = 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2] + 0.3 * gen.standard_normal(300)

    def value(mask):
        cols = _columns(mask, 4)
        if not cols:
            return -float(np.mean((y - y.mean()) ** 2))
        design = np.column_stack([np.ones(300), x[:, cols]])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return -float(np.mean((y - design @ coef) ** 2))

    return value


def test_weights_sum_to_one():
    for p in range(1, 8):
        total = sum(math.comb(p - 1, s) * shapley_weight(p, s) for s in range(p))
        assert total == pytest.approx(1.0)


def test_exact_additive_game():
    a = np.array([0.5, -1.0, 2.0])
    est = shapley_from_value(lambda mask: float(a[_columns(mask, 3)].sum()), 3, mode="exact")
    np.testing.assert_allclose(est.phi, a)
    np.testing.assert_array_equal(est.std_err, 0.0)
    assert est.n_samples == 4


def test_exact_efficiency_and_symmetry(ols_value):
    est = shapley_from_value(ols_value, 4, mode="exact")
    assert est.phi.sum() == pytest.approx(est.value_full - est.value_empty, rel=1e-10)
    # Identical columns share credit equally
    assert est.phi[2] == pytest.approx(est.phi[3], rel=1e-9)


def test_exact_matches_subset_formula(ols_value):
    p = 4
    est = shapley_from_value(ols_value, p, mode="exact")
    for j in range(p):
        others = [k for k in range(p) if k != j]
        total = 0.0
        for size in range(p):
            for subset in combinations(others, size):
                mask = sum(1 << k for k in subset)
                total += shapley_weight(p, size) * (ols_value(mask | 1 << j) - ols_value(mask))
        assert est.phi[j] == pytest.approx(total)


def test_exact_budget():
    with pytest.raises(BudgetError):
        shapley_from_value(lambda mask: 0.0, 13, mode="exact")


def test_sampled_additive_game_is_exact():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    est = shapley_from_value(lambda mask: float(a[_columns(mask, 4)].sum()), 4, m=5, rng=RngStream(seed=0))
    np.testing.assert_allclose(est.phi, a)
    np.testing.assert_allclose(est.std_err, 0.0, atol=1e-12)


def test_sampled_close_to_exact(ols_value):
    exact = shapley_from_value(ols_value, 4, mode="exact")
    sampled = shapley_from_value(ols_value, 4, mode="sampled", m=400, rng=RngStream(seed=1))
    assert np.all(np.abs(sampled.phi - exact.phi) <= 4 * sampled.std_err + 1e-9)


def test_sampled_is_reproducible_across_jobs(ols_value):
    a = shapley_from_value(ols_value, 4, m=20, rng=RngStream(seed=3), n_jobs=1)
    b = shapley_from_value(ols_value, 4, m=20, rng=RngStream(seed=3), n_jobs=2)
    np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(a.std_err, b.std_err)


def test_sampled_checks():
    with pytest.raises(InvalidArgumentError):
        shapley_from_value(lambda mask: 0.0, 3, m=0)
    with pytest.raises(InvalidArgumentError):
        shapley_from_value(lambda mask: 0.0, 0)
    with pytest.raises(InvalidArgumentError):
        shapley_from_value(lambda mask: 0.0, 3, mode="kernel")


def test_cache_evaluates_each_subset_once():
    calls = []

    def value(mask):
        calls.append(mask)
        return float(mask)

    cache = SubsetCache(value)
    cache.fill([3, 1, 3, 2, 1], n_jobs=2)
    assert sorted(calls) == [1, 2, 3]
    assert cache.get(3) == 3.0
    assert len(calls) == 3


class LinearModel:
    family = "linear"

    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=float)

    def predict(self, x):
        return np.asarray(x) @ self.coef


@pytest.fixture
def independent_split():
    gen = np.random.default_rng(1)
    coef = np.array([1.0, 2.0, 0.0])
    x_train = gen.standard_normal((200, 3))
    x_hold = gen.standard_normal((100, 3))
    return (
        Dataset(x=x_train, y=x_train @ coef),
        Dataset(x=x_hold, y=x_hold @ coef),
        coef,
    )


def test_dropout_shapley_efficiency(independent_split):
    train, hold, coef = independent_split
    est = shapley(
        train, hold, config=None, mode="exact", vi_method="dropout", full_model=LinearModel(coef)
    )
    assert est.method == "dropout"
    assert est.feature_names == ("x1", "x2", "x3")
    assert est.value_full == pytest.approx(0.0)
    assert est.phi.sum() == pytest.approx(est.value_full - est.value_empty)
    assert est.phi[1] > est.phi[0] > abs(est.phi[2])
    assert est.phi[2] == pytest.approx(0.0, abs=1e-12)


class InteractionModel(LinearModel):
    def __init__(self, coef, order=(0, 1, 2)):
        super().__init__(coef)
        self.order = np.argsort(order)

    def predict(self, x):
        x = np.asarray(x)[:, self.order]
        return x @ self.coef + x[:, 0] * x[:, 1]


def test_exact_shapley_follows_column_order(independent_split):
    train, hold, coef = independent_split
    base = shapley(train, hold, None, mode="exact", vi_method="dropout", full_model=InteractionModel(coef))

    order = [2, 0, 1]
    permuted = shapley(
        Dataset(x=train.x[:, order], y=train.y),
        Dataset(x=hold.x[:, order], y=hold.y),
        None,
        mode="exact",
        vi_method="dropout",
        full_model=InteractionModel(coef, order),
    )
    np.testing.assert_allclose(permuted.phi, base.phi[order], rtol=1e-10, atol=1e-12)
    assert permuted.value_full == pytest.approx(base.value_full)


def test_shapley_rejects_unknown_method(independent_split):
    train, hold, coef = independent_split
    with pytest.raises(InvalidArgumentError):
        shapley(train, hold, None, vi_method="lazy", full_model=LinearModel(coef))


def test_earlystop_shapley_on_mlp(independent_split):
    train, hold, _ = independent_split
    est = shapley(
        train, hold, MlpConfig(widths=[3, 32, 1]), m_samples=3, vi_method="early_stop",
        rng=RngStream(seed=0),
    )
    assert est.mode == "sampled"
    assert est.n_samples == 3
    assert np.argmax(est.phi) == 1
