"""Result tables, CSV I/O and deterministic random streams."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._errors import InvalidInputError, PLMMSEError

__all__ = [
    "ResultTable",
    "write_csv",
    "read_csv",
    "mean_and_se",
    "run_rng",
    "worker_count",
]

DIGITS = 12


def run_rng(seed, *keys):
    """Independent generator for the stream addressed by ``keys``.

    Streams are derived by counter-style spawn keys, so the generator for a
    given ``(seed, keys)`` never depends on how many other streams exist or
    on execution order.
    """
    keys = tuple(int(k) for k in keys)
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=keys)
    return np.random.default_rng(ss)


def worker_count():
    """Worker pool size from ``PLMMSE_THREADS`` (default 1)."""
    raw = os.environ.get("PLMMSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInputError(f"PLMMSE_THREADS must be an integer, got {raw!r}") from None


def mean_and_se(values, axis=0):
    """Sample mean and its standard error ``std(ddof=1) / sqrt(n)``."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    mean = v.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, v.std(axis=axis, ddof=1) / math.sqrt(n)


@dataclass
class ResultTable:
    """Rectangular table of reals with a metadata echo.

    Standard-error columns carry the ``_se`` suffix and directly follow the
    estimate they qualify. ``runs`` optionally keeps the per-run values
    behind a column, shaped ``(n_rows, n_runs)``.
    """

    columns: list[str]
    rows: np.ndarray = None
    metadata: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = [str(c) for c in self.columns]
        if len(set(self.columns)) != len(self.columns):
            raise InvalidInputError("duplicate column names")
        if self.rows is None:
            self.rows = np.empty((0, len(self.columns)))
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))
        for col in self.columns:
            if col.endswith("_se") and col[:-3] not in self.columns:
                raise InvalidInputError(f"standard-error column {col} has no estimate")

    def __len__(self):
        return self.rows.shape[0]

    def column(self, name):
        return self.rows[:, self.columns.index(name)]

    def row_dicts(self):
        return [dict(zip(self.columns, r)) for r in self.rows]

    def to_csv_string(self, digits=DIGITS):
        """CSV text with ``digits`` significant digits per value."""
        fmt = f"{{:.{int(digits)}g}}"
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {_format_meta(value)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([fmt.format(v) for v in r])
        return buf.getvalue()

    def runs_table(self):
        """Long-format table ``(row, column_index, run, value)`` of stored runs."""
        out = []
        for name, arr in self.runs.items():
            ci = self.columns.index(name)
            arr = np.asarray(arr, dtype=float)
            for i in range(arr.shape[0]):
                for j in range(arr.shape[1]):
                    out.append((i, ci, j, arr[i, j]))
        return ResultTable(
            ["row", "column", "run", "value"],
            np.array(out).reshape(-1, 4),
            metadata={"columns": ",".join(self.runs)},
        )


def _format_meta(value):
    if isinstance(value, float):
        return f"{value:.{DIGITS}g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format_meta(v) for v in value)
    return str(value).replace("\n", " ")


def write_csv(table, path, digits=DIGITS):
    """Write ``table`` as UTF-8 CSV with ``#`` metadata lines and a header.

    Values carry ``digits`` significant digits (17 round-trips a double).
    """
    path = Path(path)
    try:
        path.write_text(table.to_csv_string(digits), encoding="utf-8")
    except OSError as exc:
        raise PLMMSEError(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    """Read a table written by :func:`write_csv`; metadata values stay strings."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PLMMSEError(f"cannot read {path}: {exc}") from exc
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
        elif line:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[float(v) for v in r] for r in reader]
    return ResultTable(columns, np.array(rows).reshape(-1, len(columns)), meta)
