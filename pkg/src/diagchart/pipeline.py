"""Real-data preparation: column cleaning and the per-variable
normal-score transform.

Cleaning drops columns that are mostly missing or nearly constant and
imputes what remains by the column median. The transform maps each value
through the inverse normal CDF of its (clamped, tie-averaged) empirical
rank among the reference rows, so marginals of the reference become
approximately standard normal and new values stay finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .cornish_fisher import normal_quantile
from .errors import ConfigError, DimensionError

TRANSFORM_FORMAT_VERSION = 1


@dataclass
class CleaningReport:
    dropped_missing: list
    dropped_near_constant: list
    rows_in: int
    rows_out: int
    cols_in: int
    cols_out: int

    def to_dict(self) -> dict:
        return {
            "dropped_missing": list(self.dropped_missing),
            "dropped_near_constant": list(self.dropped_near_constant),
            "rows_in": self.rows_in, "rows_out": self.rows_out,
            "cols_in": self.cols_in, "cols_out": self.cols_out,
        }


def clean_frame(
    df: pd.DataFrame,
    missing_threshold: float = 0.05,
    variance_threshold: float = 1e-6,
) -> tuple[pd.DataFrame, CleaningReport]:
    """Drop mostly-missing and near-constant columns, impute the rest.

    A column is dropped when its missing fraction exceeds
    missing_threshold, or when its variance falls below
    variance_threshold times the median column variance (computed over
    the columns that survive the missing-fraction cut). Remaining missing
    cells are filled with the column median. Rows are never dropped.
    """
    rows_in, cols_in = df.shape
    numeric = df.apply(pd.to_numeric, errors="coerce")

    missing_frac = numeric.isna().mean(axis=0)
    dropped_missing = [c for c in numeric.columns if missing_frac[c] > missing_threshold]
    kept = numeric.drop(columns=dropped_missing)

    variances = kept.var(axis=0, ddof=1, skipna=True)
    med = float(variances.median()) if len(variances) else 0.0
    cut = variance_threshold * med
    dropped_constant = [c for c in kept.columns if not variances[c] > cut]
    kept = kept.drop(columns=dropped_constant)

    if kept.shape[1] == 0:
        raise ConfigError("input", "no columns survived cleaning")

    medians = kept.median(axis=0, skipna=True)
    cleaned = kept.fillna(medians)

    report = CleaningReport(
        dropped_missing=dropped_missing,
        dropped_near_constant=dropped_constant,
        rows_in=rows_in, rows_out=cleaned.shape[0],
        cols_in=cols_in, cols_out=cleaned.shape[1],
    )
    return cleaned, report


def load_and_clean(
    csv_path,
    missing_threshold: float = 0.05,
    variance_threshold: float = 1e-6,
) -> tuple[pd.DataFrame, CleaningReport]:
    """Read a headered CSV and clean it; blank and NA cells are allowed."""
    df = pd.read_csv(csv_path)
    return clean_frame(df, missing_threshold, variance_threshold)


@dataclass
class TransformModel:
    """Per-column sorted reference values defining the empirical CDFs."""

    references: list = field(default_factory=list)   # list of sorted 1-D arrays
    columns: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.references)


def fit_transform(reference, columns=None) -> TransformModel:
    """Build the normal-score transform from reference rows."""
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 2:
        raise DimensionError("reference must be a 2-D matrix")
    refs = [np.sort(ref[:, j]) for j in range(ref.shape[1])]
    cols = list(columns) if columns is not None else list(range(ref.shape[1]))
    if len(cols) != ref.shape[1]:
        raise DimensionError("columns must match the reference width")
    return TransformModel(references=refs, columns=cols)


def apply_transform(model: TransformModel, data) -> np.ndarray:
    """Map each value through Phi^{-1}(rank / (n + 1)).

    The rank of a value v against the sorted reference is
    (#below + #at-or-below + 1) / 2, clipped to [1, n]: ties share the
    average rank, values off either end clamp to ranks 1 and n, and the
    map is monotone per column.
    """
    x = np.asarray(data, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.p:
        raise DimensionError(f"data has shape {x.shape}, expected (n, {model.p})")
    out = np.empty_like(x)
    for j, ref in enumerate(model.references):
        n = ref.size
        below = np.searchsorted(ref, x[:, j], side="left")
        at_or_below = np.searchsorted(ref, x[:, j], side="right")
        rank = np.clip((below + at_or_below + 1) / 2.0, 1.0, float(n))
        probs = rank / (n + 1.0)
        out[:, j] = [normal_quantile(1.0 - pr) for pr in probs]
    return out[0] if squeeze else out


def transform_to_json(model: TransformModel) -> str:
    doc = {
        "format_version": TRANSFORM_FORMAT_VERSION,
        "columns": [str(c) for c in model.columns],
        "references": [r.tolist() for r in model.references],
    }
    return json.dumps(doc)


def transform_from_json(text: str) -> TransformModel:
    doc = json.loads(text)
    if doc.get("format_version") != TRANSFORM_FORMAT_VERSION:
        raise ConfigError("format_version", f"unsupported: {doc.get('format_version')}")
    refs = [np.asarray(r, dtype=float) for r in doc["references"]]
    return TransformModel(references=refs, columns=list(doc["columns"]))
