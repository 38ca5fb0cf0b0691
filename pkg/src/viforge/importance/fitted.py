import json
import logging
from pathlib import Path
from typing import Annotated, Tuple, Union

from pydantic import Field

from viforge.data.dataset import Dataset
from viforge.errors import InvalidArgumentError
from viforge.gbdt.config import GbdtConfig
from viforge.gbdt.ensemble import GbdtEnsemble, init_ensemble
from viforge.mlp.config import MlpConfig
from viforge.mlp.network import MlpCheckpoint, MlpModel
from viforge.mlp.network import init as init_mlp
from viforge.numerics.rng import RngStream
from viforge.stopping.early_stop import TrainingHistory, early_stop_train
from viforge.stopping.policy import PatiencePolicy

logger = logging.getLogger(__name__)

MODEL_FILE_VERSION = 1

FittedModel = Annotated[Union[MlpModel, GbdtEnsemble], Field(discriminator="family")]
ModelConfig = Annotated[Union[MlpConfig, GbdtConfig], Field(discriminator="family")]


def init_model(config: Union[MlpConfig, GbdtConfig], n_features: int, rng: RngStream):
    """Untrained model for ``n_features`` inputs: a fresh network or the zero ensemble."""
    if isinstance(config, MlpConfig):
        return init_mlp(config.with_input_dim(n_features), rng)
    if isinstance(config, GbdtConfig):
        return init_ensemble(config)
    raise InvalidArgumentError(f"Unknown model config {type(config).__name__}")


def validation_rng(rng: RngStream) -> RngStream:
    """Stream for the validation rows of a patience-rule fit started from ``rng``."""
    return rng.child("split")


def fit_full_model(
    config: Union[MlpConfig, GbdtConfig],
    train: Dataset,
    policy,
    rng: RngStream,
) -> Tuple[Union[MlpModel, GbdtEnsemble], TrainingHistory]:
    """Train f^c on all features from scratch."""
    model = init_model(config, train.n_features, rng.child("init"))
    if policy is None:
        policy = PatiencePolicy()
    fitted, history = early_stop_train(
        model, train, policy, rng.child("train"), split_rng=validation_rng(rng)
    )
    logger.info(
        f"Full {config.family} model trained: best epoch {history.best_epoch}, "
        f"stopped at {history.stopped_epoch}"
    )
    return fitted, history


def save_model(model: Union[MlpModel, GbdtEnsemble], path: Union[str, Path]) -> Path:
    """Versioned JSON; floats are written with round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, MlpModel):
        payload = model.to_checkpoint().model_dump(mode="json")
    else:
        payload = model.model_dump(mode="json")
    doc = {"version": MODEL_FILE_VERSION, "family": model.family, "model": payload}
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def load_model(path: Union[str, Path]) -> Union[MlpModel, GbdtEnsemble]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != MODEL_FILE_VERSION:
        raise InvalidArgumentError(f"Unsupported model file version {doc.get('version')}")
    if doc.get("family") == "mlp":
        return MlpModel.from_checkpoint(MlpCheckpoint.model_validate(doc["model"]))
    if doc.get("family") == "gbdt":
        return GbdtEnsemble.model_validate(doc["model"])
    raise InvalidArgumentError(f"Unknown model family {doc.get('family')!r}")
