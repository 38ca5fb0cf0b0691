# gbdt/test_ensemble.py

import numpy as np
import pytest

from viforge.data.dataset import Dataset
from viforge.errors import InvalidArgumentError
from viforge.gbdt.config import GbdtConfig
from viforge.gbdt.ensemble import average_predictions, init_ensemble, train_gbdt
from viforge.numerics.rng import RngStream
from viforge.stopping.policy import PatiencePolicy


@pytest.fixture
def data():
    gen = np.random.default_rng(0)
    x = np.column_stack([gen.choice([-1.0, 1.0], size=120), gen.uniform(-1, 1, size=120)])
    y = np.where(x[:, 0] > 0, 2.0, -1.0) + 0.1 * gen.standard_normal(120)
    return Dataset(x=x, y=y)


def test_empty_ensemble_predicts_zero(data):
    model = init_ensemble(GbdtConfig())
    assert model.is_empty
    np.testing.assert_array_equal(model.predict(data.x), np.zeros(120))


def test_boosting_fits_step_function(data):
    cfg = GbdtConfig(depth=1, beta=0.0, epsilon=0.5, n_borders=8)
    model = train_gbdt(cfg, data, RngStream(seed=0), stop=20)
    assert model.n_trees == 20
    assert np.mean((model.predict(data.x) - data.y) ** 2) < 0.05


def test_session_predictions_match_snapshot(data):
    cfg = GbdtConfig(depth=2, beta=1.0, epsilon=0.3)
    session = init_ensemble(cfg).training_session(data.x, data.y, x_val=data.x[:10])
    rng = RngStream(seed=3)
    for i in range(5):
        session.step(rng.child("tree-noise", i))
    snapshot = session.snapshot()
    np.testing.assert_allclose(snapshot.predict(data.x), session.train_pred)
    np.testing.assert_allclose(snapshot.predict(data.x[:10]), session.val_pred)


def test_snapshot_without_steps_is_original(data):
    model = init_ensemble(GbdtConfig())
    assert model.training_session(data.x, data.y).snapshot() is model


def test_warm_start_is_additive(data):
    cfg = GbdtConfig(depth=2, beta=10.0)
    warm = train_gbdt(cfg, data, RngStream(seed=1), stop=5)
    shifted = data.with_x(np.column_stack([np.zeros(120), data.x[:, 1]]))
    cont = train_gbdt(cfg, shifted, RngStream(seed=2), warm_start=warm, stop=4)

    assert cont.warm_start.n_trees == 5
    assert cont.n_trees == 9
    x = shifted.x
    np.testing.assert_allclose(cont.predict(x), warm.predict(x) + cont.contribution(x))


def test_shrinkage_decays_previous_predictions(data):
    cfg = GbdtConfig(depth=1, beta=0.0, shrink=10.0, epsilon=0.3)
    warm = train_gbdt(cfg.model_copy(update={"shrink": 0.0}), data, RngStream(seed=0), stop=3)
    cont = train_gbdt(cfg, data, RngStream(seed=1), warm_start=warm, stop=2)
    decay = 1.0 - 10.0 * 0.3 / 120
    assert cont.decay == pytest.approx(decay)
    np.testing.assert_allclose(
        cont.predict(data.x), decay**2 * warm.predict(data.x) + cont.contribution(data.x)
    )


def test_warm_start_feature_mismatch(data):
    warm = train_gbdt(GbdtConfig(), data, RngStream(seed=0), stop=1)
    narrow = Dataset(x=data.x[:, :1], y=data.y)
    with pytest.raises(InvalidArgumentError):
        train_gbdt(GbdtConfig(), narrow, RngStream(seed=0), warm_start=warm, stop=1)


def test_patience_training_returns_best(data):
    cfg = GbdtConfig(depth=1, beta=0.0, epsilon=0.5)
    model = train_gbdt(cfg, data, RngStream(seed=0), stop=PatiencePolicy(patience=3, max_epochs=200))
    assert 1 <= model.n_trees < 200


def test_average_predictions(data):
    cfg = GbdtConfig(depth=2, beta=100.0)
    models = [train_gbdt(cfg, data, RngStream(seed=s), stop=3) for s in range(3)]
    expected = np.mean([m.predict(data.x) for m in models], axis=0)
    np.testing.assert_allclose(average_predictions(models, data.x), expected)
    with pytest.raises(InvalidArgumentError):
        average_predictions([], data.x)
