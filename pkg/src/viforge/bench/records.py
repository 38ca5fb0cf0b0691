import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import pandas as pd
from rich.console import Console
from rich.table import Table

from viforge.bench.config import RunRecord

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _strip_timing(record: dict) -> dict:
    record = dict(record)
    record.pop("wall_ms", None)
    record["metrics"] = {k: v for k, v in record["metrics"].items() if not k.endswith("wall_ms")}
    return record


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    """One row per record; params and metrics become columns."""
    rows = []
    for r in records:
        row = {"experiment": r.experiment, "seed": r.seed, "replicate": r.replicate, "wall_ms": r.wall_ms}
        row.update(r.params)
        row.update(r.metrics)
        rows.append(row)
    return pd.DataFrame(rows)


def write_records(
    records: Sequence[RunRecord],
    out_dir: Union[str, Path],
    name: str,
    include_timing: bool = True,
) -> Path:
    """Write ``<name>.json`` (versioned) and a ``<name>.csv`` mirror; returns the JSON path.

    Without timing the JSON depends only on (experiment, seed, config).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dumped = [r.model_dump() for r in records]
    if not include_timing:
        dumped = [_strip_timing(r) for r in dumped]

    json_path = out / f"{name}.json"
    json_path.write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, "name": name, "records": dumped}, indent=2),
        encoding="utf-8",
    )
    frame = records_frame([RunRecord.model_validate(r) for r in dumped])
    frame.to_csv(out / f"{name}.csv", index=False)
    logger.info(f"Wrote {len(records)} records to {json_path}")
    return json_path


def read_records(path: Union[str, Path]) -> List[RunRecord]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [RunRecord.model_validate(r) for r in doc["records"]]


def summarize(
    records: Sequence[RunRecord],
    by: Iterable[str],
    metrics: Optional[Iterable[str]] = None,
    agg: str = "median",
) -> pd.DataFrame:
    """Aggregate metrics over replicates, grouped by parameter columns."""
    frame = records_frame(records)
    by = list(by)
    if metrics is None:
        metrics = sorted({k for r in records for k in r.metrics})
    metrics = [m for m in metrics if m in frame.columns]
    return frame.groupby(by, sort=True)[metrics].agg(agg).reset_index()


def render_summary(frame: pd.DataFrame, title: str, console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column), justify="right" if frame[column].dtype.kind in "fi" else "left")
    for _, row in frame.iterrows():
        table.add_row(*[f"{v:.4g}" if isinstance(v, float) else str(v) for v in row.tolist()])
    console.print(table)
