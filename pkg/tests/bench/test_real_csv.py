# bench/test_real_csv.py

import json
from pathlib import Path

import numpy as np
import pytest

from viforge.bench.experiments import run_real_csv
from viforge.bench.records import write_records
from viforge.config import load_config
from viforge.data.csv_io import load_csv
from viforge.data.generators import GAS_TURBINE_COLUMNS
from viforge.stopping.policy import FixedTPolicy

ROOT = Path(__file__).resolve().parents[2]
FIXTURE = ROOT / "tests" / "fixtures" / "gas_turbine_sample.csv"
CONFIG = ROOT / "configs" / "real-csv.toml"


def quick_config(**updates):
    cfg = load_config(str(CONFIG))
    return cfg.model_copy(
        update={
            "gbdt": cfg.gbdt.model_copy(update={"depth": 3, "n_borders": 16}),
            "stop": FixedTPolicy(n_iters=8),
            "shapley_samples": 2,
            **updates,
        }
    )


def test_shipped_fixture():
    cfg = load_config(str(CONFIG))
    assert ROOT / cfg.data.csv_path == FIXTURE
    data = load_csv(FIXTURE, cfg.data.target_column)
    assert data.n_samples == 500
    assert data.names == GAS_TURBINE_COLUMNS
    assert np.all(np.isfinite(data.x))


def test_one_record_per_feature_and_method():
    records = run_real_csv(quick_config(), FIXTURE)
    keys = [(r.params["feature"], r.params["method"]) for r in records]
    assert len(keys) == len(set(keys)) == len(GAS_TURBINE_COLUMNS) * 3
    assert all({"phi", "vi_hat", "tau_hat"} <= r.metrics.keys() for r in records)


def test_rerun_writes_identical_json(tmp_path):
    cfg = quick_config()
    first = write_records(run_real_csv(cfg, FIXTURE), tmp_path / "a", "real-csv", include_timing=False)
    second = write_records(run_real_csv(cfg, FIXTURE), tmp_path / "b", "real-csv", include_timing=False)
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text())["name"] == "real-csv"


@pytest.mark.slow
def test_dropout_credits_top_feature_more_than_early_stop():
    cfg = load_config(str(CONFIG), {"shapley_samples": 10})
    records = run_real_csv(cfg, FIXTURE)
    phi = {(r.params["feature"], r.params["method"]): r.metrics["phi"] for r in records}
    top = max(GAS_TURBINE_COLUMNS, key=lambda name: phi[(name, "dropout")])
    assert phi[(top, "dropout")] >= phi[(top, "early_stop")]
