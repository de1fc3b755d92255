"""CSV ingestion, design construction and canonical JSON output."""

from __future__ import annotations

import json
import math

import numpy as np
import pandas as pd

from .core import ClusterPartition, DataError, Dataset, build_partition, cross, dummies, singletons, within_transform

FLOAT_FORMAT = "%.6g"


def read_table(path, columns=None) -> pd.DataFrame:
    """Read a header-bearing CSV; referenced columns must exist and be complete."""
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from None
    if columns:
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise DataError(f"columns {missing} not in {path}; have {list(df.columns)}")
        for c in columns:
            bad = df[c].isna().to_numpy()
            if bad.any():
                rows = (np.flatnonzero(bad)[:5] + 2).tolist()   # 1-based, after header
                raise DataError(f"column {c!r} has missing values (file lines {rows}...)")
    return df


def numeric(df: pd.DataFrame, col: str) -> np.ndarray:
    try:
        return pd.to_numeric(df[col], errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError):
        raise DataError(f"column {col!r} must be numeric") from None


def build_dataset(df: pd.DataFrame, outcome: str, regressors, *, dummy_cols=(),
                  absorb: str | None = None, constant: bool = True) -> Dataset:
    """Assemble a Dataset; an absorbed column replaces the intercept."""
    cols, names = [], []
    if constant and absorb is None:
        cols.append(np.ones(len(df)))
        names.append("const")
    for c in regressors:
        cols.append(numeric(df, c))
        names.append(c)
    for c in dummy_cols:
        D, dn = dummies(df[c].to_numpy(), drop_first=True, prefix=c)
        cols.extend(D.T)
        names.extend(dn)
    if not cols:
        raise DataError("no regressors")
    data = Dataset(numeric(df, outcome), np.column_stack(cols), tuple(names))
    if absorb is not None:
        data, _ = within_transform(data, build_partition(df[absorb].to_numpy()))
    return data


def partition_from(df: pd.DataFrame, spec: str | None):
    """``None``/``"none"`` gives singletons, ``"a"`` one column, ``"a,b"`` two-way."""
    if spec is None or spec.lower() == "none":
        return singletons(len(df))
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    for p in parts:
        if p not in df.columns:
            raise DataError(f"cluster column {p!r} not found")
    if len(parts) == 1:
        return build_partition(df[parts[0]].to_numpy())
    if len(parts) == 2:
        return cross(build_partition(df[parts[0]].to_numpy()),
                     build_partition(df[parts[1]].to_numpy()))
    raise DataError("at most two clustering dimensions are supported")


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(FLOAT_FORMAT % x)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, floats rounded to six significant digits, no NaN literals."""
    return json.dumps(_canon(obj), sort_keys=True, indent=2) + "\n"
