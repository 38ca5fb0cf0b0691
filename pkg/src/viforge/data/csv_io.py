import logging
import re
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from viforge.data.dataset import Dataset
from viforge.errors import ParseError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# pandas reports ragged rows as "Expected 2 fields in line 3, saw 3"
_PANDAS_LINE = re.compile(r"line (\d+)")


def _read_cells(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} is empty", row=1) from None
    except pd.errors.ParserError as exc:
        match = _PANDAS_LINE.search(str(exc))
        raise ParseError(str(exc).strip(), row=int(match.group(1)) if match else None) from None


def load_csv(path: PathLike, target_column: str) -> Dataset:
    """Load a numeric CSV with a header row; the target column becomes y.

    Row numbers in errors count file lines, so the header is row 1.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"File not found: {path}")

    cells = _read_cells(path)
    cells.columns = [str(c).strip() for c in cells.columns]
    header = list(cells.columns)
    if target_column not in header:
        raise ParseError(f"Target column '{target_column}' not in header {header}", row=1)

    # Short rows come back as NaN; empty cells stay ""
    missing = cells.isna()
    stripped = cells.map(lambda v: v.strip() if isinstance(v, str) else v)
    blank = (missing | (stripped == "")).all(axis=1)
    file_rows = np.arange(len(cells)) + 2
    missing, stripped, file_rows = missing[~blank], stripped[~blank], file_rows[~blank.to_numpy()]
    if stripped.empty:
        raise ParseError(f"{path} has no data rows", row=2)

    ragged = missing.any(axis=1).to_numpy()
    if ragged.any():
        i = int(np.argmax(ragged))
        found = int((~missing.iloc[i]).sum())
        raise ParseError(f"Expected {len(header)} fields, found {found}", row=int(file_rows[i]))

    coerced = stripped.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(coerced))
    if bad.size:
        i, j = (int(k) for k in bad[0])
        cell = stripped.iat[i, j]
        kind = "Non-numeric" if np.isnan(coerced[i, j]) else "Non-finite"
        raise ParseError(f"{kind} cell '{cell}'", row=int(file_rows[i]), column=j + 1)

    # Exact decimal parse; the coerced copy only locates bad cells
    table = stripped.astype(np.float64).to_numpy()

    target = header.index(target_column)
    features = [j for j in range(len(header)) if j != target]
    logger.info(f"Loaded {table.shape[0]} rows x {len(features)} features from {path}")
    return Dataset(
        x=table[:, features],
        y=table[:, target],
        feature_names=tuple(header[j] for j in features),
    )


def write_csv(data: Dataset, path: PathLike, target_column: str = "y") -> Path:
    """Write features then target; 17 significant digits make a reload bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.x, columns=list(data.names))
    frame[target_column] = data.y
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
