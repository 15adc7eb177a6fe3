"""CSV ingestion, synthetic data generation and report serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .likelihood import LatentPath, ObservationSeries
from .model import ModelParams, _lambda

COLUMNS = ("year", "firms", "defaults", "avg_recovery")
SCHEMA_VERSION = 1


def _parse_int(text, name, line):
    try:
        return int(text)
    except ValueError:
        raise DataValidationError(f"{name} must be an integer, got {text!r}", line=line) from None


def load_observations(source) -> ObservationSeries:
    """Read ``year,firms,defaults,avg_recovery`` rows.

    ``source`` may be a path, a text stream or a bytes stream.  Lines starting
    with ``#`` and blank lines are ignored; whitespace around fields is
    tolerated.  ``avg_recovery`` may be empty only when ``defaults`` is 0.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw

    header = None
    rows = []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([stripped]))]
        if header is None:
            if tuple(fields) != COLUMNS:
                raise DataValidationError(f"header must be {','.join(COLUMNS)}, got {stripped!r}", line=lineno)
            header = fields
            continue
        if len(fields) != 4:
            raise DataValidationError(f"expected 4 fields, got {len(fields)}", line=lineno)
        year = _parse_int(fields[0], "year", lineno)
        firms = _parse_int(fields[1], "firms", lineno)
        defaults = _parse_int(fields[2], "defaults", lineno)
        if firms < 1:
            raise DataValidationError("firms must be positive", line=lineno)
        if not 0 <= defaults <= firms:
            raise DataValidationError(f"defaults={defaults} outside [0, firms={firms}]", line=lineno)
        if fields[3] == "":
            if defaults > 0:
                raise DataValidationError("avg_recovery missing although defaults > 0", line=lineno)
            rec = math.nan
        else:
            try:
                rec = float(fields[3])
            except ValueError:
                raise DataValidationError(f"avg_recovery must be a decimal, got {fields[3]!r}", line=lineno) from None
            if not math.isfinite(rec):
                raise DataValidationError("avg_recovery must be finite", line=lineno)
        if year in seen:
            raise DataValidationError(f"duplicate year {year} (first on line {seen[year]})", line=lineno)
        if rows and year < rows[-1][0]:
            raise DataValidationError(f"year {year} out of order", line=lineno)
        seen[year] = lineno
        rows.append((year, firms, defaults, rec))
    if header is None:
        raise DataValidationError("empty input: no header row")
    if len(rows) < 2:
        raise DataValidationError(f"need at least 2 data rows, got {len(rows)}")
    cols = list(zip(*rows))
    return ObservationSeries(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3], dtype=float))


def format_observations(data: ObservationSeries) -> str:
    out = io.StringIO()
    out.write(",".join(COLUMNS) + "\n")
    for y, j, d, r in zip(data.years, data.firms, data.defaults, data.avg_recovery):
        rec = "" if d == 0 else repr(float(r))
        out.write(f"{int(y)},{int(j)},{int(d)},{rec}\n")
    return out.getvalue()


def write_observations(data: ObservationSeries, sink) -> None:
    text = format_observations(data)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


@dataclass(frozen=True)
class SyntheticTruth:
    params: ModelParams
    path: LatentPath
    series: ObservationSeries
    seed: int


def generate_synthetic(params: ModelParams, T: int, J, seed: int, start_year: int = 1) -> SyntheticTruth:
    """Simulate ``T`` years of data from the model.

    Average recoveries are drawn from their exact normal law given the
    factor and the default count rather than by averaging loan-level draws.
    ``J`` is a firm count shared by all years or one count per year.
    """
    rng = np.random.default_rng(seed)
    firms = np.broadcast_to(np.asarray(J, dtype=np.int64), (T,)).copy()
    x = rng.standard_normal(T)
    d = rng.binomial(firms, _lambda(params.default_threshold, params.rho, x))
    z = rng.standard_normal(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        rbar = params.mu + params.sigma1 * x + params.sigma2 * z / np.sqrt(d)
    rbar = np.where(d > 0, rbar, np.nan)
    years = np.arange(start_year, start_year + T)
    return SyntheticTruth(params=params, path=LatentPath(x), series=ObservationSeries(years, firms, d, rbar), seed=seed)


# -- JSON reports ------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def dumps_report(document: dict) -> str:
    """Serialise a report with stable key order and non-finite floats as null."""
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(_jsonable(document))
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_report(document: dict, sink, table: str | None = None, table_sink=None) -> None:
    """Write the JSON report to ``sink`` and optionally a text table to ``table_sink``."""
    text = dumps_report(document)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)
    if table is not None and table_sink is not None:
        if isinstance(table_sink, (str, Path)):
            Path(table_sink).write_text(table, encoding="utf-8")
        else:
            table_sink.write(table)
