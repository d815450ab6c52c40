"""CSV ingestion, report serialization and model reload."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestionError
from .regress import Dataset, RegressionCoefficients, StandardizationRecord, standardize_covariates

__all__ = [
    "INGEST_TOL",
    "SCHEMA_VERSION",
    "IngestConfig",
    "dump_report",
    "ingest",
    "load_model",
    "read_table",
    "to_jsonable",
]

SCHEMA_VERSION = "esag-report/1"
INGEST_TOL = 1e-6


@dataclass(frozen=True)
class IngestConfig:
    """Where responses and covariates live in a CSV file."""

    path: str
    responses: tuple
    covariates: tuple = ()
    compositional: bool = False

    def to_dict(self) -> dict:
        return {
            "input": self.path,
            "responses": list(self.responses),
            "covariates": list(self.covariates),
            "compositional": self.compositional,
        }


def read_table(path, columns: Sequence[str]) -> np.ndarray:
    """Numeric block of ``columns`` from a headed CSV file.

    Raises
    ------
    IngestionError
        On a missing column or a missing / non-numeric cell; ``row`` is the
        one-based data row.
    OSError
        If the file cannot be read.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("file is empty") from None
        idx = []
        for c in columns:
            if c not in header:
                raise IngestionError(f"column {c!r} not found in header")
            idx.append(header.index(c))
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not s.strip() for s in rec):
                continue
            vals = []
            for j, c in zip(idx, columns):
                cell = rec[j].strip() if j < len(rec) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"column {c!r} has missing or non-numeric value {cell!r}", i) from None
                if not math.isfinite(v):
                    raise IngestionError(f"column {c!r} has missing value {cell!r}", i)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise IngestionError("no data rows")
    return np.array(rows, dtype=float).reshape(len(rows), len(columns))


def _to_sphere(Y: np.ndarray, compositional: bool) -> np.ndarray:
    if compositional:
        for i, row in enumerate(Y, start=1):
            if np.any(row < 0):
                raise IngestionError("composition has a negative part", i)
            s = row.sum()
            if abs(s - 1.0) > INGEST_TOL:
                raise IngestionError(f"composition sums to {s:.9g}, not 1", i)
        Y = np.sqrt(Y)
    else:
        norms = np.linalg.norm(Y, axis=1)
        for i, nrm in enumerate(norms, start=1):
            if abs(nrm - 1.0) > INGEST_TOL:
                raise IngestionError(f"response has norm {nrm:.9g}, not 1", i)
    return Y / np.linalg.norm(Y, axis=1, keepdims=True)


def ingest(config: IngestConfig) -> Dataset:
    """Read a CSV into a :class:`~esag.regress.Dataset`.

    Compositional rows must be nonnegative and sum to 1 within
    ``INGEST_TOL``; they are mapped to the sphere by an elementwise square
    root. Other rows must have unit norm within ``INGEST_TOL`` and are
    renormalized. Covariates are standardized to ``[1, 2]``.

    >>> import tempfile, os
    >>> fd, p = tempfile.mkstemp(suffix=".csv"); os.close(fd)
    >>> _ = open(p, "w").write("a,b,c,d\\n0.25,0.25,0.25,0.25\\n0.1,0.2,0.3,0.4\\n")
    >>> ingest(IngestConfig(p, ("a", "b", "c", "d"), compositional=True)).responses[0]
    array([0.5, 0.5, 0.5, 0.5])
    >>> os.remove(p)
    """
    Y = _to_sphere(read_table(config.path, config.responses), config.compositional)
    if not config.covariates:
        return Dataset(Y)
    raw = read_table(config.path, config.covariates)
    X, record = standardize_covariates(raw)
    return Dataset(Y, X, record)


def to_jsonable(obj):
    """Recursively convert numpy containers and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_report(report: dict, path=None) -> str:
    """Serialize ``report`` as sorted, indented JSON; write it if ``path``."""
    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_model(path) -> tuple[RegressionCoefficients, StandardizationRecord | None]:
    """Coefficients and covariate map stored by a ``fit`` report."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    model = obj["result"]["model"]
    rec = model.get("standardization")
    return (
        RegressionCoefficients.from_dict(model["coefficients"]),
        StandardizationRecord.from_dict(rec) if rec else None,
    )
