from typing import Dict, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# Named sub-streams; the integers are part of the reproducibility contract.
STREAM_IDS: Dict[str, int] = {
    "data": 0,
    "init": 1,
    "tree-noise": 2,
    "subset": 3,
    "split": 4,
    "eval": 5,
    "replicate": 6,
    "train": 7,
    "noise": 8,
}


def _stream_id(key: Union[str, int]) -> int:
    if isinstance(key, str):
        if key not in STREAM_IDS:
            raise ValueError(f"Unknown stream name '{key}'; expected one of {sorted(STREAM_IDS)}")
        return STREAM_IDS[key]
    if key < 0:
        raise ValueError(f"Stream ids must be non-negative, got {key}")
    return int(key)


class RngStream(BaseModel):
    """Reproducible random stream identified by a seed and a path of sub-stream ids.

    Draws come from a counter-based Philox generator keyed by
    ``SeedSequence(seed, spawn_key=stream)``, so identical (seed, stream) pairs give
    identical sequences on every platform, and every call to :meth:`generator`
    restarts the sequence.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *keys: Union[str, int]) -> "RngStream":
        """Derive an independent sub-stream, e.g. ``rng.child("init")`` or ``rng.child("subset", 3)``."""
        return RngStream(seed=self.seed, stream=self.stream + tuple(_stream_id(k) for k in keys))

    def label(self) -> str:
        path = "/".join(str(s) for s in self.stream)
        return f"{self.seed}:{path}" if path else str(self.seed)
