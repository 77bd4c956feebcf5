"""CSV reports with recomputable aggregates.

Layout: a schema header comment, meta comments, one CSV header row, the
per-point rows in input order, then aggregate comment lines. Floats are
written with repr, which round-trips exactly, so rerunning an aggregate
formula on the parsed rows reproduces the emitted value bit for bit. The
wall-time column is the only nondeterministic one; strip it before comparing
reports across runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SCHEMA_HEADER",
    "NONDETERMINISTIC_COLUMNS",
    "ComparisonReport",
    "ParsedReport",
    "format_value",
    "parse_value",
    "ratio_aggregate",
    "improvement_rate",
    "read_report",
    "strip_nondeterministic_columns",
]

SCHEMA_HEADER = "# relu-regions-attack v1"
NONDETERMINISTIC_COLUMNS = ("wall_time_s",)


def format_value(value) -> str:
    """Canonical cell text: repr for floats, true/false for bools, '' for None."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # np.float64 subclasses float but reprs as "np.float64(...)"; convert.
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def parse_value(text: str):
    """Inverse of format_value for scalar cells; leaves other text as is."""
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def ratio_aggregate(ratios) -> dict:
    """mean/min/max of a list of ratios, as plain floats."""
    arr = np.asarray(list(ratios), dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "min": None, "max": None}
    return {
        "mean": float(np.mean(arr)),
        "min": float(np.min(arr)),
        "max": float(np.max(arr)),
    }


def improvement_rate(ratios) -> float | None:
    """Percentage of ratios strictly above 1 (our result strictly smaller)."""
    arr = np.asarray(list(ratios), dtype=np.float64)
    if arr.size == 0:
        return None
    return float(100.0 * np.count_nonzero(arr > 1.0) / arr.size)


@dataclass
class ComparisonReport:
    """Report under construction: fixed columns, dict rows, aggregate lines."""

    command: str
    columns: list
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)

    def add_row(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise ValueError(f"unknown columns: {sorted(unknown)}")
        self.rows.append(values)

    def add_aggregate(self, **entries):
        self.aggregates.append(entries)

    def render(self) -> str:
        out = io.StringIO()
        out.write(SCHEMA_HEADER + "\n")
        out.write(f"# command: {self.command}\n")
        out.write(
            "# nondeterministic-columns: "
            + ",".join(NONDETERMINISTIC_COLUMNS)
            + "\n"
        )
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(row.get(col)) for col in self.columns])
        for agg in self.aggregates:
            parts = " ".join(f"{k}={format_value(v)}" for k, v in agg.items())
            out.write(f"# aggregate {parts}\n")
        return out.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.render())


@dataclass
class ParsedReport:
    """Round-tripped report: header meta, columns, rows, aggregate dicts."""

    command: str | None
    columns: list
    rows: list  # list of dicts with parsed scalar values
    aggregates: list  # list of dicts with parsed scalar values


def read_report(source) -> ParsedReport:
    """Parse a report produced by ComparisonReport.

    Accepts a file object, report text (anything containing a newline), or a
    path.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source) as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0] != SCHEMA_HEADER:
        raise ValueError(f"missing schema header {SCHEMA_HEADER!r}")
    command = None
    columns = None
    rows = []
    aggregates = []
    for line in lines:
        if line.startswith("# command:"):
            command = line.split(":", 1)[1].strip()
        elif line.startswith("# aggregate "):
            entries = {}
            for token in line[len("# aggregate ") :].split():
                key, _, raw = token.partition("=")
                entries[key] = parse_value(raw)
            aggregates.append(entries)
        elif line.startswith("#") or not line.strip():
            continue
        elif columns is None:
            columns = next(csv.reader([line]))
        else:
            values = next(csv.reader([line]))
            if len(values) != len(columns):
                raise ValueError(
                    f"row has {len(values)} cells, header has {len(columns)}"
                )
            rows.append(
                {col: parse_value(v) for col, v in zip(columns, values)}
            )
    if columns is None:
        raise ValueError("report has no column header")
    return ParsedReport(command, columns, rows, aggregates)


def strip_nondeterministic_columns(text: str) -> str:
    """Drop timing columns so two reports of the same run compare equal."""
    lines = text.splitlines()
    out = []
    columns = None
    drop = None
    for line in lines:
        if line.startswith("#") or not line.strip():
            out.append(line)
            continue
        cells = next(csv.reader([line]))
        if columns is None:
            columns = cells
            drop = [i for i, c in enumerate(columns) if c in NONDETERMINISTIC_COLUMNS]
        kept = [c for i, c in enumerate(cells) if i not in drop]
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(kept)
        out.append(buf.getvalue().rstrip("\n"))
    return "\n".join(out) + "\n"
