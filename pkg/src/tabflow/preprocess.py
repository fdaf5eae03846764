"""Table preprocessing: header detection/standardization and body cleaning.

The pipeline splits a raw table into a header block and body, collapses
multi-row/merged headers into one unique name row, strips annotation rows and
formatting artifacts from the body, normalizes decorated numerics, and rejects
tables that are mostly missing.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .table import (
    Cell,
    Grid,
    MergeRegion,
    ProcessedTable,
    RawTable,
    TableError,
    cell_to_text,
)


class PreprocessError(TableError):
    rule_id = "preprocess"


class NoBodyRows(PreprocessError):
    """Header detection consumed every row, or cleaning removed them all."""

    rule_id = "no-body-rows"


class TooSparse(PreprocessError):
    """More than the allowed fraction of body cells are missing."""

    rule_id = "max-missing-70pct"

    def __init__(self, fraction: float, limit: float):
        super().__init__(f"missing fraction {fraction:.2%} exceeds {limit:.0%}")
        self.fraction = fraction
        self.limit = limit


# Unicode superscript/subscript characters mapped to their ASCII forms.
SUPERSUB_MAP = {
    "⁰": "0", "¹": "1", "²": "2", "³": "3", "⁴": "4",
    "⁵": "5", "⁶": "6", "⁷": "7", "⁸": "8", "⁹": "9",
    "⁺": "+", "⁻": "-", "⁽": "(", "⁾": ")", "ⁿ": "n", "ⁱ": "i",
    "₀": "0", "₁": "1", "₂": "2", "₃": "3", "₄": "4",
    "₅": "5", "₆": "6", "₇": "7", "₈": "8", "₉": "9",
    "₊": "+", "₋": "-", "₍": "(", "₎": ")",
}

DEFAULT_ANNOTATION_PREFIXES = ("note:", "*", "†", "source:", "footnote")
DEFAULT_CURRENCY_SYMBOLS = "$€£¥¢"

_URL_RE = re.compile(r"^https?://\S+$", re.IGNORECASE)
_STRICT_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_GROUPED_RE = re.compile(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$")


@dataclass
class PreprocessConfig:
    max_header_depth: int = 3
    annotation_prefixes: tuple[str, ...] = DEFAULT_ANNOTATION_PREFIXES
    currency_symbols: str = DEFAULT_CURRENCY_SYMBOLS
    max_missing_fraction: float = 0.70
    supersub_map: dict[str, str] = field(default_factory=lambda: dict(SUPERSUB_MAP))

    @classmethod
    def from_file(cls, path: str | Path) -> "PreprocessConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls()
        if "max_header_depth" in raw:
            cfg.max_header_depth = int(raw["max_header_depth"])
        if "annotation_prefixes" in raw:
            cfg.annotation_prefixes = tuple(raw["annotation_prefixes"])
        if "currency_symbols" in raw:
            cfg.currency_symbols = str(raw["currency_symbols"])
        if "max_missing_fraction" in raw:
            cfg.max_missing_fraction = float(raw["max_missing_fraction"])
        if "supersub_map" in raw:
            cfg.supersub_map = dict(raw["supersub_map"])
        return cfg


@dataclass(frozen=True)
class HeaderClass:
    """Detected header shape. Simple means one row and no merged header cells."""

    complex: bool
    header_rows: int
    merged: bool
    synthetic: bool = False


@dataclass
class SplitTable:
    header_block: Grid
    body_block: Grid
    split_row: int
    synthetic: bool = False


def parse_numericish(
    text: str, currency_symbols: str = DEFAULT_CURRENCY_SYMBOLS
) -> Optional[tuple[float, Optional[str]]]:
    """Parse a possibly decorated numeric string.

    Handles thousands grouping, one leading/trailing currency symbol, and a
    trailing percent sign. Returns (value, stripped_symbol) or None.
    """
    s = text.strip()
    if not s:
        return None
    unit: Optional[str] = None
    if s[0] in currency_symbols:
        unit, s = s[0], s[1:].strip()
    elif s[-1] in currency_symbols:
        unit, s = s[-1], s[:-1].strip()
    if s.endswith("%"):
        if unit is None:
            unit = "%"
        s = s[:-1].strip()
    if _GROUPED_RE.match(s):
        s = s.replace(",", "")
    if not _STRICT_FLOAT_RE.match(s):
        return None
    value = float(s)
    if not math.isfinite(value):
        return None
    return value, unit


def _is_numericish(cell: Cell, config: PreprocessConfig) -> bool:
    if isinstance(cell, (bool,)):
        return False
    if isinstance(cell, float):
        return True
    if isinstance(cell, str):
        return parse_numericish(cell, config.currency_symbols) is not None
    return False


def _header_candidate(row: Sequence[Cell], config: PreprocessConfig) -> bool:
    non_null = [c for c in row if c is not None and cell_to_text(c).strip()]
    if not non_null:
        return False
    return all(isinstance(c, str) and not _is_numericish(c, config) for c in non_null)


def classify_header(table: RawTable, config: PreprocessConfig | None = None) -> HeaderClass:
    """Detect header depth and merge involvement.

    A row extends the header block while all its non-null cells are
    non-numeric text and it is either the first row or tied to the row above
    by a merge region. Depth is capped at ``max_header_depth``. An all-numeric
    first row yields a synthetic single-row header.
    """
    config = config or PreprocessConfig()
    rows, _ = table.shape
    if rows < 1:
        raise ValueError("classify_header requires at least one row")
    depth = 0
    for r in range(min(config.max_header_depth, rows)):
        if not _header_candidate(table.cells[r], config):
            break
        if r > 0 and not any(m.spans_rows(r - 1, r) for m in table.merges):
            break
        depth = r + 1
    if depth == 0:
        return HeaderClass(complex=False, header_rows=1, merged=False, synthetic=True)
    merged = any(m.row0 < depth for m in table.merges)
    return HeaderClass(complex=depth > 1 or merged, header_rows=depth, merged=merged)


def split_header_body(table: RawTable, config: PreprocessConfig | None = None) -> SplitTable:
    """Split rows into header block and body at the detected header depth."""
    config = config or PreprocessConfig()
    cls = classify_header(table, config)
    rows, cols = table.shape
    if cls.synthetic:
        # No header row present: synthesize a blank one; all rows are body.
        return SplitTable(
            header_block=[[None] * cols],
            body_block=[list(row) for row in table.cells],
            split_row=1,
            synthetic=True,
        )
    depth = cls.header_rows
    body = [list(row) for row in table.cells[depth:]]
    if not body:
        raise NoBodyRows(f"header block of depth {depth} consumes all {rows} rows")
    return SplitTable(
        header_block=[list(row) for row in table.cells[:depth]],
        body_block=body,
        split_row=depth,
    )


def _fill_merges(grid: Grid, merges: Sequence[MergeRegion]) -> Grid:
    """Copy each merge region's anchor value into every covered cell."""
    filled = [list(row) for row in grid]
    rows = len(filled)
    cols = len(filled[0]) if filled else 0
    for m in merges:
        if m.row0 >= rows or m.col0 >= cols:
            continue
        anchor = filled[m.row0][m.col0]
        for r in range(m.row0, min(m.row1, rows - 1) + 1):
            for c in range(m.col0, min(m.col1, cols - 1) + 1):
                filled[r][c] = anchor
    return filled


def _dedupe(names: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for name in names:
        candidate = name
        suffix = 1
        while candidate in seen:
            suffix += 1
            candidate = f"{name}_{suffix}"
        seen.add(candidate)
        out.append(candidate)
    return out


def standardize_header(
    header_block: Grid, merges: Sequence[MergeRegion] = ()
) -> list[str]:
    """Collapse a multi-row header block into one row of unique names.

    Merged cells are duplicated across their span, each column's non-empty
    distinct values are joined top-to-bottom with underscores, blanks become
    ``col{index}``, and duplicates get numeric suffixes.
    """
    if not header_block:
        raise ValueError("header block must be non-empty")
    filled = _fill_merges(header_block, merges)
    cols = len(filled[0])
    names: list[str] = []
    for j in range(cols):
        parts: list[str] = []
        for row in filled:
            text = cell_to_text(row[j]).strip()
            if text and text not in parts:
                parts.append(text)
        names.append("_".join(parts) if parts else f"col{j}")
    return _dedupe(names)


def _is_annotation_row(row: Sequence[Cell], config: PreprocessConfig) -> bool:
    non_null = [(j, c) for j, c in enumerate(row) if c is not None]
    if len(non_null) != 1 or non_null[0][0] != 0:
        return False
    text = cell_to_text(non_null[0][1]).strip().casefold()
    return any(text.startswith(p.casefold()) for p in config.annotation_prefixes)


def _strip_url(text: str) -> str:
    from urllib.parse import urlparse

    parsed = urlparse(text.strip())
    segments = [s for s in parsed.path.split("/") if s]
    return segments[-1] if segments else parsed.netloc


def _clean_cell(cell: Cell, config: PreprocessConfig) -> Cell:
    if not isinstance(cell, str):
        return cell
    text = cell.translate(str.maketrans(config.supersub_map))
    stripped = text.strip()
    if _URL_RE.match(stripped):
        return _strip_url(stripped)
    if stripped.startswith("="):
        return stripped[1:]
    return text


def clean_body(body: Grid, config: PreprocessConfig | None = None) -> Grid:
    """Drop annotation-only rows and normalize cell formatting artifacts.

    Column count never changes; row count only decreases.
    """
    config = config or PreprocessConfig()
    kept = [row for row in body if not _is_annotation_row(row, config)]
    return [[_clean_cell(c, config) for c in row] for row in kept]


def resolve_missing(
    body: Grid, config: PreprocessConfig | None = None
) -> tuple[Grid, list[Optional[str]]]:
    """Normalize decorated numerics and reject overly sparse bodies.

    Text cells that parse as numbers (after stripping thousands separators and
    currency/percent symbols) become floats; stripped symbols are recorded as
    per-column units. Raises TooSparse when the Null fraction exceeds the
    configured limit (strict).
    """
    config = config or PreprocessConfig()
    total = sum(len(row) for row in body)
    cols = len(body[0]) if body else 0
    if total:
        nulls = sum(1 for row in body for c in row if c is None)
        fraction = nulls / total
        if fraction > config.max_missing_fraction:
            raise TooSparse(fraction, config.max_missing_fraction)
    units: list[Optional[str]] = [None] * cols
    out: Grid = []
    for row in body:
        new_row: list[Cell] = []
        for j, cell in enumerate(row):
            if isinstance(cell, str):
                parsed = parse_numericish(cell, config.currency_symbols)
                if parsed is not None:
                    value, unit = parsed
                    if unit and units[j] is None:
                        units[j] = unit
                    new_row.append(value)
                    continue
            new_row.append(cell)
        out.append(new_row)
    return out, units


def preprocess(table: RawTable, config: PreprocessConfig | None = None) -> ProcessedTable:
    """Full preprocessing: split, standardize header, clean body, resolve values.

    The header path and the body path are independent; provenance lists the
    operators in application order.
    """
    config = config or PreprocessConfig()
    split = split_header_body(table, config)
    if not split.synthetic and table.merges:
        # Split merged cells over the whole grid so anchors resolve in
        # original coordinates, then slice at the detected depth.
        filled = _fill_merges(table.cells, table.merges)
        header_block = [list(row) for row in filled[: split.split_row]]
        body = [list(row) for row in filled[split.split_row :]]
    else:
        header_block = split.header_block
        body = split.body_block
    header = standardize_header(header_block)
    cleaned = clean_body(body, config)
    if not cleaned:
        raise NoBodyRows("cleaning removed every body row")
    resolved, units = resolve_missing(cleaned, config)
    provenance = ["split_header_body", "standardize_header", "clean_body", "resolve_missing"]
    recorded = {header[j]: u for j, u in enumerate(units) if u}
    if recorded:
        provenance.append("units:" + ",".join(f"{k}={v}" for k, v in recorded.items()))
    return ProcessedTable(
        header=header,
        body=resolved,
        provenance=provenance,
        units=units,
        source_name=table.source_name,
    )


def load_merge_sidecar(path: str | Path) -> list[MergeRegion]:
    """Load a merge map sidecar: a JSON list of [row0, col0, row1, col1]."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MergeRegion(*[int(x) for x in entry]) for entry in raw]
