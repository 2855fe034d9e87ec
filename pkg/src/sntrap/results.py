"""Tabular sweep results with a stable CSV rendering."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field


def format_value(v):
    """Shortest round-trip text for floats; everything else via ``str``."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


@dataclass
class SweepResult:
    """Rows of a sweep in grid order.

    ``errors[i]`` is an empty string for a clean row, otherwise a short
    diagnostic (for example a convergence failure); such rows still carry
    the best available numbers.
    """

    columns: tuple
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row, error=""):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} entries, expected {len(self.columns)}")
        self.rows.append(tuple(row))
        self.errors.append(error)

    @property
    def ok(self):
        return not any(self.errors)

    def column(self, name):
        idx = self.columns.index(name)
        return [r[idx] for r in self.rows]

    def to_csv(self, include_errors=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = list(self.columns) + (["error"] if include_errors else [])
        writer.writerow(header)
        for row, err in zip(self.rows, self.errors):
            cells = [format_value(v) for v in row]
            writer.writerow(cells + ([err] if include_errors else []))
        return buf.getvalue()

    def __len__(self):
        return len(self.rows)
