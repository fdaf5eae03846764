"""Canonical table representation, CSV/TSV parsing, serialization, and quality gating.

A cell is one of: ``None`` (the single missing marker), ``str`` text, a finite
``float``, a ``bool``, or a ``datetime.date``. Parsing never types numbers --
cells come out of :func:`parse_table` as text (or ``None``), and numeric
normalization happens later in the preprocessing stage.
"""

from __future__ import annotations

import csv
import io
import math
import datetime
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

Cell = Union[None, bool, float, str, datetime.date]
Grid = list[list[Cell]]

# Cell texts normalized to Null at parse time. Alphabetic markers are matched
# case-insensitively; dash markers exactly.
DEFAULT_MISSING_MARKERS = ("", "na", "n/a", "null", "-", "—")

MAX_TABLE_BYTES = 100 * 1024 * 1024


class TableError(Exception):
    """Base class for table-core failures."""


class DecodeError(TableError):
    """Input bytes are not valid UTF-8."""


class EmptyInput(TableError):
    """Input contains no rows (or no columns)."""


@dataclass(frozen=True)
class MergeRegion:
    """Inclusive rectangular merged-cell region (row0, col0) .. (row1, col1)."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self) -> None:
        if self.row0 > self.row1 or self.col0 > self.col1:
            raise ValueError(f"degenerate merge region {self}")
        if min(self.row0, self.col0) < 0:
            raise ValueError(f"negative merge coordinates {self}")

    def contains(self, row: int, col: int) -> bool:
        return self.row0 <= row <= self.row1 and self.col0 <= col <= self.col1

    def overlaps(self, other: "MergeRegion") -> bool:
        return not (
            self.row1 < other.row0
            or other.row1 < self.row0
            or self.col1 < other.col0
            or other.col1 < self.col0
        )

    def spans_rows(self, upper: int, lower: int) -> bool:
        """True when the region covers both row ``upper`` and row ``lower``."""
        return self.row0 <= upper and self.row1 >= lower


@dataclass
class RawTable:
    """Rectangular cell grid plus optional merged-cell regions."""

    cells: Grid
    merges: list[MergeRegion] = field(default_factory=list)
    source_name: str = ""

    def __post_init__(self) -> None:
        widths = {len(row) for row in self.cells}
        if len(widths) > 1:
            raise ValueError(f"ragged grid: row widths {sorted(widths)}")
        rows, cols = self.shape
        for i, m in enumerate(self.merges):
            if m.row1 >= rows or m.col1 >= cols:
                raise ValueError(f"merge region {m} out of bounds for {rows}x{cols}")
            for other in self.merges[i + 1 :]:
                if m.overlaps(other):
                    raise ValueError(f"overlapping merge regions {m} and {other}")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.cells), len(self.cells[0]) if self.cells else 0


@dataclass
class ProcessedTable:
    """One unique, non-empty header row over a cleaned body grid.

    ``units`` records per-column symbols ("$", "%", ...) stripped during
    numeric normalization; ``provenance`` lists the operators applied, in
    order.
    """

    header: list[str]
    body: Grid
    provenance: list[str] = field(default_factory=list)
    units: list[Optional[str]] = field(default_factory=list)
    source_name: str = ""

    def __post_init__(self) -> None:
        if not self.header:
            raise ValueError("header must have at least one column")
        if any(not isinstance(h, str) or not h.strip() for h in self.header):
            raise ValueError(f"empty header name in {self.header}")
        if len(set(self.header)) != len(self.header):
            raise ValueError(f"duplicate header names in {self.header}")
        if not self.body:
            raise ValueError("body must have at least one row")
        cols = len(self.header)
        for row in self.body:
            if len(row) != cols:
                raise ValueError(f"body row width {len(row)} != {cols} columns")
        if not self.units:
            self.units = [None] * cols
        elif len(self.units) != cols:
            raise ValueError("units length must match column count")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.body), len(self.header)

    def column(self, index: int) -> list[Cell]:
        return [row[index] for row in self.body]


@dataclass(frozen=True)
class Violation:
    rule_id: str
    message: str


@dataclass
class QualityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rule_ids(self) -> list[str]:
        return [v.rule_id for v in self.violations]


def normalize_missing(text: str, markers: Sequence[str] = DEFAULT_MISSING_MARKERS) -> Optional[str]:
    """Return None when ``text`` is a canonical missing marker, else the text."""
    stripped = text.strip()
    if stripped.casefold() in markers or stripped in markers:
        return None
    return text


def parse_table(
    data: bytes,
    fmt: str = "csv",
    *,
    source_name: str = "",
    missing_markers: Sequence[str] = DEFAULT_MISSING_MARKERS,
    merges: Iterable[MergeRegion] = (),
) -> RawTable:
    """Parse CSV/TSV bytes into a rectangular RawTable.

    Ragged rows are padded with Null to the widest row. Numeric-looking
    strings stay text. Raises DecodeError on non-UTF-8 input and EmptyInput
    when no cells survive parsing.
    """
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unsupported format {fmt!r}")
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"input is not UTF-8: {exc}") from exc
    delimiter = "," if fmt == "csv" else "\t"
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter)
    rows = [row for row in reader]
    width = max((len(r) for r in rows), default=0)
    if not rows or width == 0:
        raise EmptyInput("input contains no table cells")
    markers = tuple(m.casefold() for m in missing_markers)
    grid: Grid = []
    for row in rows:
        cells: list[Cell] = [normalize_missing(value, markers) for value in row]
        cells.extend([None] * (width - len(cells)))
        grid.append(cells)
    return RawTable(cells=grid, merges=list(merges), source_name=source_name)


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def cell_to_text(cell: Cell) -> str:
    """Canonical text form of a cell; Null renders as the empty string."""
    if cell is None:
        return ""
    if isinstance(cell, bool):
        return "true" if cell else "false"
    if isinstance(cell, float):
        if not math.isfinite(cell):
            raise ValueError(f"non-finite number {cell!r}")
        return _format_number(cell)
    if isinstance(cell, datetime.date):
        return cell.isoformat()
    return cell


def serialize_csv(table: ProcessedTable) -> bytes:
    """RFC-4180 CSV bytes ("\\n" line ends); Null becomes an empty field."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.body:
        writer.writerow([cell_to_text(c) for c in row])
    return buf.getvalue().encode("utf-8")


def _row_empty(row: Sequence[Cell]) -> bool:
    return all(c is None for c in row)


def check_collection_standards(table: RawTable, byte_size: int) -> QualityReport:
    """Evaluate the collection-quality rules; returns a report, never raises.

    Rules: non-empty first row and first column, size cap of 100 MB, at least
    one non-empty body row beyond the headers, and unambiguous header names
    for single-row-header tables.
    """
    violations: list[Violation] = []
    rows, cols = table.shape
    if rows == 0 or _row_empty(table.cells[0]):
        violations.append(Violation("first-row-nonempty", "first row is empty"))
    if cols == 0 or all(row[0] is None for row in table.cells):
        violations.append(Violation("first-column-nonempty", "first column is empty"))
    if byte_size > MAX_TABLE_BYTES:
        violations.append(
            Violation("max-size-100MB", f"table is {byte_size} bytes, cap is {MAX_TABLE_BYTES}")
        )
    if rows < 2 or all(_row_empty(row) for row in table.cells[1:]):
        violations.append(
            Violation("min-body-rows", "no non-empty row beyond the header row")
        )
    # Header-name rule applies to single-row-header tables only; at this stage
    # that means no merge region touches the first row.
    single_row_header = not any(m.row0 == 0 for m in table.merges)
    if single_row_header and rows > 0:
        names = [cell_to_text(c).strip() for c in table.cells[0]]
        if any(not n for n in names):
            violations.append(
                Violation("header-unambiguous", "empty header name in single-row header")
            )
        dupes = {n for n in names if n and names.count(n) > 1}
        if dupes:
            violations.append(
                Violation("header-unambiguous", f"duplicate header names {sorted(dupes)}")
            )
    return QualityReport(violations=violations)
