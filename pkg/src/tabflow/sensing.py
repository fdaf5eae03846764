"""Table sensing: compact schema/statistics metadata fed to the model.

Produces headers, inferred column types, per-column missing counts, dimensions,
and a bounded sample of body rows, plus a stable text rendering (format
``SENSE/1``) used verbatim in model context.
"""

from __future__ import annotations

import csv
import datetime
import enum
import io
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .preprocess import parse_numericish
from .table import Cell, ProcessedTable, cell_to_text


class ColumnType(enum.Enum):
    NUMERICAL = "Numerical"
    CATEGORICAL = "Categorical"
    TEXTUAL = "Textual"
    DATE = "Date"
    BOOLEAN = "Boolean"


class SampleStrategy(enum.Enum):
    HEAD = "head"
    HEAD_TAIL_RANDOM = "head_tail_random"


@dataclass
class SensePolicy:
    sample_cap: int = 5
    sample_strategy: SampleStrategy = SampleStrategy.HEAD_TAIL_RANDOM
    categorical_max_distinct: int = 20
    seed: int = 0
    include_stats: bool = False  # adds min/max/mean for numeric columns

    def __post_init__(self) -> None:
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")


@dataclass
class TableMetadata:
    name: str
    headers: list[str]
    types: list[ColumnType]
    missing: list[int]
    rows: int
    cols: int
    sample: list[list[Cell]]
    units: list[Optional[str]] = field(default_factory=list)
    stats: Optional[list[Optional[tuple[float, float, float]]]] = None

    def __post_init__(self) -> None:
        if not (len(self.headers) == len(self.types) == len(self.missing) == self.cols):
            raise ValueError("headers/types/missing must all have length == cols")
        if not self.units:
            self.units = [None] * self.cols


_BOOL_WORDS = {"true", "false", "yes", "no"}


def _parses_number(value: Cell) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, float):
        return True
    if isinstance(value, str):
        return parse_numericish(value) is not None
    return False


def _parses_date(value: Cell) -> bool:
    if isinstance(value, datetime.date):
        return True
    if not isinstance(value, str):
        return False
    text = value.strip()
    for parser in (datetime.date.fromisoformat, datetime.datetime.fromisoformat):
        try:
            parser(text)
            return True
        except ValueError:
            continue
    return False


def infer_column_type(
    values: Sequence[Cell], categorical_max_distinct: int = 20
) -> ColumnType:
    """Deterministic column typing over non-null values.

    90%+ numeric -> Numerical; 90%+ ISO dates -> Date; all true/false/yes/no
    -> Boolean; small distinct set -> Categorical; otherwise Textual.
    All-null columns are Textual.
    """
    non_null = [v for v in values if v is not None]
    if not non_null:
        return ColumnType.TEXTUAL
    n = len(non_null)
    if sum(1 for v in non_null if _parses_number(v)) / n >= 0.9:
        return ColumnType.NUMERICAL
    if sum(1 for v in non_null if _parses_date(v)) / n >= 0.9:
        return ColumnType.DATE
    if all(
        isinstance(v, bool)
        or (isinstance(v, str) and v.strip().casefold() in _BOOL_WORDS)
        for v in non_null
    ):
        return ColumnType.BOOLEAN
    if len({cell_to_text(v) for v in non_null}) <= categorical_max_distinct:
        return ColumnType.CATEGORICAL
    return ColumnType.TEXTUAL


def _sample_indices(n_rows: int, policy: SensePolicy) -> list[int]:
    cap = policy.sample_cap
    if n_rows <= cap:
        return list(range(n_rows))
    if policy.sample_strategy is SampleStrategy.HEAD:
        return list(range(cap))
    head = min(2, cap)
    tail = min(2, cap - head)
    middle_budget = cap - head - tail
    chosen = set(range(head)) | {n_rows - 1 - i for i in range(tail)}
    middle = [i for i in range(head, n_rows - tail) if i not in chosen]
    rng = random.Random(policy.seed)
    if middle_budget and middle:
        chosen.update(rng.sample(middle, min(middle_budget, len(middle))))
    return sorted(chosen)


def sense(table: ProcessedTable, policy: SensePolicy | None = None) -> TableMetadata:
    """Extract metadata: exact missing counts, inferred types, sampled rows."""
    policy = policy or SensePolicy()
    n_rows, n_cols = table.shape
    missing = [0] * n_cols
    for row in table.body:
        for j, cell in enumerate(row):
            if cell is None:
                missing[j] += 1
    types = [
        infer_column_type(table.column(j), policy.categorical_max_distinct)
        for j in range(n_cols)
    ]
    sample = [list(table.body[i]) for i in _sample_indices(n_rows, policy)]
    stats = None
    if policy.include_stats:
        stats = []
        for j in range(n_cols):
            if types[j] is not ColumnType.NUMERICAL:
                stats.append(None)
                continue
            values = []
            for cell in table.column(j):
                if isinstance(cell, float) and not isinstance(cell, bool):
                    values.append(cell)
                elif isinstance(cell, str):
                    parsed = parse_numericish(cell)
                    if parsed is not None:
                        values.append(parsed[0])
            if values:
                stats.append((min(values), max(values), sum(values) / len(values)))
            else:
                stats.append(None)
    return TableMetadata(
        name=table.source_name,
        headers=list(table.header),
        types=types,
        missing=missing,
        rows=n_rows,
        cols=n_cols,
        sample=sample,
        units=list(table.units),
        stats=stats,
    )


def render_metadata(meta: TableMetadata) -> str:
    """Stable line-oriented rendering of metadata (format SENSE/1).

    Byte-identical across runs for equal inputs.
    """
    lines = [
        "SENSE/1",
        f"name: {meta.name or 'table'}",
        f"dims: {meta.rows} rows x {meta.cols} cols",
        "columns:",
    ]
    for j, header in enumerate(meta.headers):
        unit = f", unit={meta.units[j]}" if meta.units[j] else ""
        extra = ""
        if meta.stats is not None and meta.stats[j] is not None:
            lo, hi, mean = meta.stats[j]
            extra = f", min={lo:g}, max={hi:g}, mean={mean:g}"
        lines.append(
            f"- {header} (type={meta.types[j].value}, missing={meta.missing[j]}{unit}{extra})"
        )
    lines.append("sample:")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(meta.headers)
    for row in meta.sample:
        writer.writerow([cell_to_text(c) for c in row])
    lines.append("```csv")
    lines.append(buf.getvalue().rstrip("\n"))
    lines.append("```")
    return "\n".join(lines) + "\n"


def metadata_to_dict(meta: TableMetadata) -> dict:
    return {
        "name": meta.name,
        "headers": list(meta.headers),
        "types": [t.value for t in meta.types],
        "missing": list(meta.missing),
        "rows": meta.rows,
        "cols": meta.cols,
        "sample": [[cell_to_text(c) for c in row] for row in meta.sample],
        "units": list(meta.units),
        "stats": [list(s) if s else None for s in meta.stats] if meta.stats else None,
    }


def metadata_from_dict(raw: dict) -> TableMetadata:
    stats_raw = raw.get("stats")
    return TableMetadata(
        name=raw.get("name", ""),
        headers=list(raw["headers"]),
        types=[ColumnType(t) for t in raw["types"]],
        missing=[int(m) for m in raw["missing"]],
        rows=int(raw["rows"]),
        cols=int(raw["cols"]),
        sample=[list(row) for row in raw.get("sample", [])],
        units=list(raw.get("units", [])),
        stats=[tuple(s) if s else None for s in stats_raw] if stats_raw else None,
    )
