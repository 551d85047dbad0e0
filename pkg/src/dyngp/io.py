"""CSV ingestion of designs/responses and serialization of prediction reports.

Design files hold one run per row (N x q).  Response files hold one run per
column (L x N) with an optional leading time-label column; ``transpose=True``
reads row-per-run exports (N x L), optionally with a leading run-label
column, instead.  Both accept an optional single header row.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "QueryReport",
    "PredictionReport",
    "load_dataset",
    "save_dataset",
    "load_matrix",
    "write_report",
    "read_report_csv",
    "format_float",
    "dump_json",
]

TIME_HEADERS = {"t", "time", "year", "date", "step", "period"}
RUN_HEADERS = {"run", "id", "run_id", "name", "country", "label"}


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def format_float(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True, eq=False)
class Dataset:
    design: np.ndarray           # (N, q)
    responses: np.ndarray        # (L, N)
    column_names: tuple[str, ...]
    time_labels: tuple[str, ...]

    def __post_init__(self):
        N, q = self.design.shape
        L, N2 = self.responses.shape
        if N != N2 or N == 0 or L == 0:
            raise DataError(f"design has {N} runs but responses have {N2} columns")
        if len(self.column_names) != q or len(self.time_labels) != L:
            raise DataError("label counts do not match the data dimensions")

    @property
    def n_runs(self) -> int:
        return self.design.shape[0]

    @property
    def n_times(self) -> int:
        return self.responses.shape[0]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh)]
    rows = [r for r in rows if any(r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    return rows


def _parse_block(rows: list[list[str]], path: Path, row_offset: int, col_offset: int) -> np.ndarray:
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + row_offset + 1} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {i + row_offset + 1}, "
                    f"column {j + col_offset + 1}") from None
            if not math.isfinite(val):
                raise DataError(f"{path}: non-finite value at row {i + row_offset + 1}, column {j + col_offset + 1}")
            out[i, j] = val
    return out


def _split_header(rows, header: bool | None):
    if header is None:
        header = not all(_is_number(c) for c in rows[0])
    return (rows[0], rows[1:]) if header else (None, rows)


def load_matrix(path, header: bool | None = None) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV; returns the matrix and the header row (if any)."""
    path = Path(path)
    head, body = _split_header(_read_rows(path), header)
    if not body:
        raise DataError(f"{path}: no data rows")
    return _parse_block(body, path, 1 if head else 0, 0), head


def load_dataset(design_path, response_path, header: bool | None = None, transpose: bool = False,
                 label_column: bool | None = None) -> Dataset:
    """Load a design file and a response file into a :class:`Dataset`.

    Parameters
    ----------
    design_path, response_path : path-like
        CSV files, comma separated, UTF-8.
    header : bool or None
        Whether both files start with a header row; None detects it (a first
        row with any non-numeric cell is a header).
    transpose : bool
        Response file is N x L (one run per row) instead of L x N.
    label_column : bool or None
        Whether the first response column holds labels rather than data:
        time labels in L x N files, run labels in N x L files.  None detects
        it from the first header cell (``t``, ``time``, ``year``, ... or
        ``run``, ``id``, ``country``, ...).
    """
    design_path, response_path = Path(design_path), Path(response_path)
    X, dhead = load_matrix(design_path, header)
    q = X.shape[1]
    column_names = tuple(dhead) if dhead else tuple(f"x{k + 1}" for k in range(q))

    rows = _read_rows(response_path)
    rhead, body = _split_header(rows, header)
    if not body:
        raise DataError(f"{response_path}: no data rows")
    row_offset = 1 if rhead else 0
    if label_column is None:
        known = RUN_HEADERS if transpose else TIME_HEADERS
        label_column = bool(rhead) and rhead[0].lower() in known
    if transpose:
        if label_column:
            body = [r[1:] for r in body]
            rhead = rhead[1:] if rhead else rhead
        Y = _parse_block(body, response_path, row_offset, 1 if label_column else 0).T
        labels = tuple(rhead) if rhead else tuple(str(i) for i in range(Y.shape[0]))
    else:
        if label_column:
            labels = tuple(r[0] for r in body)
            Y = _parse_block([r[1:] for r in body], response_path, row_offset, 1)
        else:
            Y = _parse_block(body, response_path, row_offset, 0)
            labels = tuple(str(i) for i in range(Y.shape[0]))

    if Y.shape[1] != X.shape[0]:
        raise DataError(
            f"dimension mismatch: {design_path} has {X.shape[0]} runs but {response_path} "
            f"has {Y.shape[1]} {'rows' if transpose else 'columns'} of runs")
    if len(labels) != Y.shape[0]:
        raise DataError(f"{response_path}: {len(labels)} time labels for {Y.shape[0]} time points")
    return Dataset(X, Y, column_names, labels)


def save_dataset(dataset: Dataset, design_path, response_path, transpose: bool = False):
    """Write a dataset in the layout :func:`load_dataset` reads back exactly."""
    with Path(design_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.column_names)
        for row in dataset.design:
            w.writerow([repr(float(v)) for v in row])
    with Path(response_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if transpose:
            # the run column keeps the header detectable when time labels are numeric
            w.writerow(["run", *dataset.time_labels])
            for j, col in enumerate(dataset.responses.T):
                w.writerow([f"run{j + 1}"] + [repr(float(v)) for v in col])
        else:
            w.writerow(["t"] + [f"run{j + 1}" for j in range(dataset.n_runs)])
            for label, row in zip(dataset.time_labels, dataset.responses):
                w.writerow([label] + [repr(float(v)) for v in row])


@dataclass
class QueryReport:
    query_id: int
    inputs: np.ndarray
    mean: np.ndarray | None
    variance: np.ndarray | None
    neighborhood: tuple[int, ...] | None = None
    metadata: dict = field(default_factory=dict)
    error: str | None = None

    def bounds(self, multiplier: float):
        half = multiplier * np.sqrt(self.variance)
        return self.mean - half, self.mean + half


@dataclass
class PredictionReport:
    queries: list[QueryReport]
    time_labels: tuple[str, ...]
    multiplier: float = 2.0
    metadata: dict = field(default_factory=dict)


def _time_value(label: str):
    try:
        val = float(label)
    except ValueError:
        return label
    return int(val) if val.is_integer() and "." not in label and "e" not in label.lower() else val


def _json_value(obj):
    if isinstance(obj, dict):
        return {k: _json_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_value(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_value(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _encode(o, indent: int) -> str:
    pad = "  " * (indent + 1)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_encode(v, indent) for v in o) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in o) + "\n" + "  " * indent + "]"
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, float):
        # JSON has no NaN/inf; null keeps the file parseable
        return format_float(o) if math.isfinite(o) else "null"
    if isinstance(o, int):
        return str(o)
    return json.dumps(str(o))


def dump_json(obj, fh):
    """Write ``obj`` as indented JSON with every float at 17 significant digits."""
    fh.write(_encode(_json_value(obj), 0) + "\n")


def write_report(report: PredictionReport, path, format: str = "csv"):
    """Write a prediction report.

    CSV has one row per (query, time index) with columns
    ``query_id, t, mean, variance, lo, hi``; failed queries contribute no
    rows.  JSON holds the report metadata and one object per query.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    path = Path(path)
    m = report.multiplier
    try:
        fh = path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot write report ({exc.strerror})") from None
    with fh:
        if format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query_id", "t", "mean", "variance", "lo", "hi"])
            for qr in report.queries:
                if qr.error is not None:
                    continue
                lo, hi = qr.bounds(m)
                for t, mu, var, a, b in zip(report.time_labels, qr.mean, qr.variance, lo, hi):
                    w.writerow([qr.query_id, t, format_float(mu), format_float(var),
                                format_float(a), format_float(b)])
        else:
            queries = []
            for qr in report.queries:
                entry = {"query_id": qr.query_id, "inputs": qr.inputs}
                if qr.error is None:
                    lo, hi = qr.bounds(m)
                    entry.update(t=[_time_value(t) for t in report.time_labels], mean=qr.mean,
                                 variance=qr.variance, lo=lo, hi=hi)
                if qr.neighborhood is not None:
                    entry["neighborhood"] = list(qr.neighborhood)
                entry["metadata"] = qr.metadata
                entry["error"] = qr.error
                queries.append(entry)
            dump_json({"multiplier": m, "metadata": report.metadata, "queries": queries}, fh)


def read_report_csv(path) -> dict[int, dict[str, np.ndarray]]:
    """Parse a CSV report back into ``{query_id: {"t", "mean", "variance", "lo", "hi"}}``."""
    out: dict[int, dict[str, list]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            d = out.setdefault(int(row["query_id"]), {k: [] for k in ("t", "mean", "variance", "lo", "hi")})
            d["t"].append(row["t"])
            for k in ("mean", "variance", "lo", "hi"):
                d[k].append(float(row[k]))
    return {qid: {k: (v if k == "t" else np.array(v)) for k, v in d.items()} for qid, d in out.items()}
