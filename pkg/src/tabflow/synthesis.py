"""QA and reasoning-trace synthesis over complex tables.

Covers complex-table gating, contextual table representations, instruction
enumeration against an explicit compatibility allow-list, LLM question
synthesis with a minimum-step gate and dual-path verification, self-verifying
rule-based QA templates, dual-discriminator LLM generation, sandbox-iterative
answer generation, and teacher-student trace distillation.
"""

from __future__ import annotations

import enum
import json
import math
import random
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .backend import BackendError
from .corpus_filter import CorpusSample
from .grpo import parse_unit_score
from .orchestrator import (
    Mode,
    SessionInput,
    TableRef,
    ToolRegistry,
    TraceStatus,
    run_session,
)
from .prompts import (
    CRITIC_PROMPT,
    DISCRIMINATOR_PROMPT,
    PromptProfiles,
    QUESTION_REVISE_PROMPT,
    QUESTION_SYNTH_PROMPT,
    SYNTH_ANSWER_SYSTEM,
)
from .sandbox import ExecRequest, SandboxExecutor
from .sensing import ColumnType, SensePolicy, TableMetadata, sense
from .table import (
    Cell,
    ProcessedTable,
    RawTable,
    cell_to_text,
    check_collection_standards,
    serialize_csv,
)


class SynthesisError(Exception):
    pass


class Ineligible(SynthesisError):
    """Table lacks the columns a template needs."""


class TooShallow(SynthesisError):
    """Reasoning chain stayed below the minimum step count after revisions."""


class Unresolved(SynthesisError):
    """Iterative answering exhausted its budget without a reliable answer."""


class NoMajority(SynthesisError):
    """Teacher vote tied and arbitration failed; flagged for human review."""


@dataclass
class VerificationFailed(SynthesisError):
    path: str
    reason: str

    def __str__(self) -> str:
        return f"{self.path} verification failed: {self.reason}"


# ---------------------------------------------------------------------------
# Complex-table gate


@dataclass
class ComplexTableCriteria:
    min_rows: int = 100
    min_cols: int = 10
    min_text_filterable_cols: int = 2
    min_numeric_nonzero_var_cols: int = 4
    max_missing_frac: float = 0.80
    max_cell_len: int = 200


@dataclass
class ComplexReport:
    passed: bool
    failures: list[str] = field(default_factory=list)


def _strict_float(cell: Cell) -> Optional[float]:
    if isinstance(cell, bool) or cell is None:
        return None
    if isinstance(cell, float):
        return cell
    if isinstance(cell, str):
        try:
            v = float(cell)
        except ValueError:
            return None
        return v if math.isfinite(v) else None
    return None


def _numeric_column_indices(table: ProcessedTable) -> list[int]:
    """Columns whose non-null cells are all strictly numeric (>=1 value)."""
    out = []
    for j in range(len(table.header)):
        values = [c for c in table.column(j) if c is not None]
        if values and all(_strict_float(c) is not None for c in values):
            out.append(j)
    return out


def is_complex_table(
    table: ProcessedTable, criteria: ComplexTableCriteria | None = None
) -> ComplexReport:
    """Evaluate the six complexity criteria; the report names every failure."""
    crit = criteria or ComplexTableCriteria()
    failures: list[str] = []
    rows, cols = table.shape
    if not all(re.search(r"[^\W\d_]", h) and not re.fullmatch(r"col\d+", h) for h in table.header):
        failures.append("column-names-meaningful")
    if not (rows > crit.min_rows and cols > crit.min_cols):
        failures.append("min-dims")
    numeric = set(_numeric_column_indices(table))
    text_filterable = 0
    for j in range(cols):
        if j in numeric:
            continue
        distinct = {cell_to_text(c) for c in table.column(j) if c is not None}
        if len(distinct) >= 2:
            text_filterable += 1
    if text_filterable < crit.min_text_filterable_cols:
        failures.append("text-filterable-cols")
    varying = 0
    for j in numeric:
        values = [_strict_float(c) for c in table.column(j) if c is not None]
        if len(values) >= 2:
            mean = sum(values) / len(values)
            if sum((v - mean) ** 2 for v in values) > 0:
                varying += 1
    if varying < crit.min_numeric_nonzero_var_cols:
        failures.append("numeric-nonzero-variance-cols")
    total = rows * cols
    missing = sum(1 for row in table.body for c in row if c is None)
    if total and missing / total > crit.max_missing_frac:
        failures.append("max-missing-frac")
    for row in table.body:
        for c in row:
            text = cell_to_text(c)
            if "\ufffd" in text or any(ord(ch) < 9 for ch in text) or len(text) > crit.max_cell_len:
                failures.append("noise")
                break
        else:
            continue
        break
    return ComplexReport(passed=not failures, failures=failures)


# ---------------------------------------------------------------------------
# Table context and instruction enumeration


@dataclass
class TableContext:
    structure: str
    semantics: list[str]
    indicators: list[str]
    column_types: dict[str, str] = field(default_factory=dict)


def build_context(
    table: ProcessedTable, meta: TableMetadata, backend=None
) -> TableContext:
    """Contextual representation: structural schema, per-column notes
    (backend-written or header-derived), and applicable metric indicators."""
    structure_lines = [f"{meta.rows} rows x {meta.cols} cols"]
    for j, h in enumerate(meta.headers):
        unit = f", unit={meta.units[j]}" if meta.units[j] else ""
        structure_lines.append(f"{h}: {meta.types[j].value}{unit}, missing={meta.missing[j]}")
    structure = "\n".join(structure_lines)
    semantics: list[str] = []
    if backend is not None:
        try:
            reply = backend.complete(
                [
                    {
                        "role": "user",
                        "content": (
                            "Write one short note per column describing its meaning "
                            "and relationships, one per line.\n" + structure
                        ),
                    }
                ]
            )
            semantics = [line.strip() for line in reply.splitlines() if line.strip()]
        except BackendError:
            semantics = []
    if not semantics:
        semantics = [
            f"column '{h}' holds {meta.types[j].value} values"
            for j, h in enumerate(meta.headers)
        ]
    indicators: list[str] = []
    if meta.rows >= 2:
        for j, h in enumerate(meta.headers):
            if meta.types[j] is ColumnType.NUMERICAL:
                indicators.extend(
                    [f"mean of {h}", f"ratio of {h}", f"growth rate of {h}"]
                )
    return TableContext(
        structure=structure,
        semantics=semantics,
        indicators=indicators,
        column_types={h: meta.types[j].value for j, h in enumerate(meta.headers)},
    )


Q_TYPES = ("Verification", "Application")
S_SOURCES = ("Raw", "Hypothetical")
O_TASKS = (
    "Retrieval",
    "Operations",
    "CorrelationAnalysis",
    "HypothesisTesting",
    "FactChecking",
    "ConditionalCalculation",
    "PivotTransformation",
)
Y_FORMATS = ("SingleValue", "ListFields", "YesNo")

_CHECKING_TASKS = {"FactChecking", "HypothesisTesting"}
_NUMERIC_TASKS = {
    "Operations",
    "CorrelationAnalysis",
    "HypothesisTesting",
    "ConditionalCalculation",
}


@dataclass(frozen=True)
class InstructionTuple:
    q_type: str
    s_source: str
    o_task: str
    y_format: str


def _tuple_allowed(q_type: str, s_source: str, o_task: str, y_format: str) -> bool:
    if q_type == "Verification" and o_task not in _CHECKING_TASKS:
        return False
    if q_type == "Application" and o_task in {"FactChecking"}:
        return False
    if y_format == "YesNo" and o_task not in _CHECKING_TASKS:
        return False
    if o_task == "FactChecking" and y_format != "YesNo":
        return False
    if s_source == "Hypothetical" and o_task == "Retrieval":
        return False
    if o_task == "PivotTransformation" and y_format != "ListFields":
        return False
    if o_task == "CorrelationAnalysis" and y_format != "SingleValue":
        return False
    if o_task in {"Retrieval", "Operations", "ConditionalCalculation"} and y_format == "YesNo":
        return False
    return True


def default_allowlist() -> frozenset[InstructionTuple]:
    """The explicit compatibility allow-list; ships as reviewable data."""
    return frozenset(
        InstructionTuple(q, s, o, y)
        for q in Q_TYPES
        for s in S_SOURCES
        for o in O_TASKS
        for y in Y_FORMATS
        if _tuple_allowed(q, s, o, y)
    )


def enumerate_instructions(
    ctx: TableContext, allowlist: frozenset[InstructionTuple] | None = None
) -> list[InstructionTuple]:
    """Cartesian product filtered by the allow-list plus context gates."""
    if not ctx.column_types:
        return []
    allowlist = allowlist if allowlist is not None else default_allowlist()
    numeric = [h for h, t in ctx.column_types.items() if t == ColumnType.NUMERICAL.value]
    non_numeric = [h for h, t in ctx.column_types.items() if t != ColumnType.NUMERICAL.value]
    out = []
    for q in Q_TYPES:
        for s in S_SOURCES:
            for o in O_TASKS:
                for y in Y_FORMATS:
                    tup = InstructionTuple(q, s, o, y)
                    if tup not in allowlist:
                        continue
                    if o in _NUMERIC_TASKS and not numeric:
                        continue
                    if o == "CorrelationAnalysis" and len(numeric) < 2:
                        continue
                    if o == "PivotTransformation" and (not numeric or not non_numeric):
                        continue
                    out.append(tup)
    return out


# ---------------------------------------------------------------------------
# LLM question synthesis with dual-path verification


class VerifyStatus(enum.Enum):
    PENDING = "pending"
    SEMANTIC_OK = "semantic_ok"
    EXEC_OK = "exec_ok"
    ADMITTED = "admitted"


@dataclass
class SynthQuestion:
    question: str
    chain: list[str]
    program: str = ""
    answer: str = ""
    verify_status: VerifyStatus = VerifyStatus.PENDING
    instruction: Optional[InstructionTuple] = None


def _context_text(ctx: TableContext) -> str:
    parts = ["Structure:", ctx.structure, "Semantics:"]
    parts.extend(f"- {s}" for s in ctx.semantics)
    if ctx.indicators:
        parts.append("Candidate indicators:")
        parts.extend(f"- {s}" for s in ctx.indicators)
    return "\n".join(parts)


def _extract_json(text: str) -> Optional[dict]:
    candidates = [text.strip()]
    fence = re.search(r"```(?:json)?\s*\n(.*?)```", text, re.DOTALL)
    if fence:
        candidates.insert(0, fence.group(1).strip())
    brace = re.search(r"\{.*\}", text, re.DOTALL)
    if brace:
        candidates.append(brace.group(0))
    for candidate in candidates:
        try:
            data = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict):
            return data
    return None


def synthesize_question(
    backend,
    ctx: TableContext,
    instruction: InstructionTuple,
    s_min: int = 3,
    max_revisions: int = 2,
) -> SynthQuestion:
    """Ask the backend for a question plus reasoning chain, requiring at
    least s_min steps; too-shallow chains trigger revision requests."""
    prompt = QUESTION_SYNTH_PROMPT.format(
        context=_context_text(ctx),
        q_type=instruction.q_type,
        s_source=instruction.s_source,
        o_task=instruction.o_task,
        y_format=instruction.y_format,
    )
    messages = [{"role": "user", "content": prompt}]
    last_len = 0
    for attempt in range(1 + max_revisions):
        reply = backend.complete(messages)
        data = _extract_json(reply)
        if data is None or "question" not in data or "steps" not in data:
            raise BackendError(f"unparseable synthesis reply: {reply[:200]!r}")
        steps = [str(s) for s in data["steps"]]
        last_len = len(steps)
        if last_len >= s_min:
            return SynthQuestion(
                question=str(data["question"]),
                chain=steps,
                program=str(data.get("program", "")),
                instruction=instruction,
            )
        messages.append({"role": "assistant", "content": reply})
        messages.append(
            {
                "role": "user",
                "content": QUESTION_REVISE_PROMPT.format(n_steps=last_len, s_min=s_min),
            }
        )
    raise TooShallow(f"chain stayed at {last_len} steps < {s_min} after {max_revisions} revisions")


def _table_to_tempfile(table: ProcessedTable, directory: Optional[Path] = None) -> Path:
    handle = tempfile.NamedTemporaryFile(
        mode="wb", suffix=".csv", delete=False, dir=directory
    )
    with handle:
        handle.write(serialize_csv(table))
    return Path(handle.name)


def verify_question(
    question: SynthQuestion,
    table: ProcessedTable,
    critic,
    sandbox: SandboxExecutor,
    ctx: Optional[TableContext] = None,
    s_min: int = 3,
) -> SynthQuestion:
    """Dual-path gate: semantic critique, then sandbox execution of the
    compiled program. Admitted only when both pass; the executed output
    becomes the stored answer."""
    if question.verify_status is not VerifyStatus.PENDING:
        raise ValueError(f"expected a pending question, got {question.verify_status}")
    if len(question.chain) < s_min:
        raise VerificationFailed("semantic", f"chain has {len(question.chain)} steps < {s_min}")
    context_text = _context_text(ctx) if ctx else "(context unavailable)"
    reply = critic.complete(
        [
            {
                "role": "user",
                "content": CRITIC_PROMPT.format(
                    context=context_text,
                    question=question.question,
                    steps="\n".join(f"{i+1}. {s}" for i, s in enumerate(question.chain)),
                ),
            }
        ]
    )
    if not reply.strip().casefold().startswith("pass"):
        raise VerificationFailed("semantic", reply.strip()[:200])
    question.verify_status = VerifyStatus.SEMANTIC_OK
    program = question.program
    if not program.strip():
        compile_reply = critic.complete(
            [
                {
                    "role": "user",
                    "content": (
                        "Compile these reasoning steps into a Python program that "
                        "reads the table CSV from the path in environment variable "
                        "TABLE_PATH_0 and prints the final answer:\n"
                        + "\n".join(question.chain)
                    ),
                }
            ]
        )
        match = re.search(r"```[\w+-]*\s*\n(.*?)```", compile_reply, re.DOTALL)
        program = match.group(1) if match else compile_reply
    csv_path = _table_to_tempfile(table)
    result = sandbox.execute(
        ExecRequest(code=program, tables={table.source_name or "table": csv_path})
    )
    if not result.ok or not result.stdout.strip():
        raise VerificationFailed("exec", result.stderr.strip()[:300] or "empty output")
    question.verify_status = VerifyStatus.ADMITTED
    question.program = program
    question.answer = result.stdout.strip()
    return question


# ---------------------------------------------------------------------------
# Rule-based QA generation (self-verifying templates)

RULE_SUBTASKS = (
    "Table Retrieval",
    "Table Query",
    "Table Selection",
    "Table Ranking",
    "Table Imputation",
    "Table Deletion",
    "Table Null Imputation",
    "Table Correlation Analysis",
    "Table Hypothesis Testing",
    "Table Distribution Testing",
)

_PRELUDE = (
    "import csv, os\n"
    'with open(os.environ["TABLE_PATH_0"], newline="", encoding="utf-8") as f:\n'
    "    rows = list(csv.reader(f))\n"
    "header, data = rows[0], rows[1:]\n"
)


def _load_question_templates() -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    root = resources.files("tabflow").joinpath("templates/rule_qa")
    for entry in root.iterdir():
        if entry.name.endswith(".json"):
            raw = json.loads(entry.read_text(encoding="utf-8"))
            out[raw["subtask"]] = list(raw["questions"])
    return out


_QUESTION_TEMPLATES = _load_question_templates()


def _key_column(table: ProcessedTable, exclude: set[int]) -> Optional[int]:
    numeric = set(_numeric_column_indices(table))
    for j in range(len(table.header)):
        if j in numeric or j in exclude:
            continue
        if any(c is not None for c in table.column(j)):
            return j
    return None


def _numeric_values(table: ProcessedTable, j: int) -> list[float]:
    return [
        v for v in (_strict_float(c) for c in table.column(j)) if v is not None
    ]


def _fmt_value(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


@dataclass
class RuleQA:
    subtask: str
    question: str
    answer: str
    program: str
    params: dict = field(default_factory=dict)


def _key_expr(key_idx: Optional[int]) -> tuple[str, str]:
    """(program expression for the key of row (i, r), display name)."""
    if key_idx is None:
        return '"row " + str(i + 1)', "row number"
    return f"r[{key_idx}]", ""


def rule_generate_qa(
    table: ProcessedTable, subtask: str, seed: int = 0, count: int = 1
) -> list[RuleQA]:
    """Generate self-verifying QA pairs for one rule subtask.

    Each pair's answer is computed by the same deterministic logic its
    emitted program encodes, so re-executing the program reproduces the
    answer exactly. Raises Ineligible when the table lacks the needed
    columns.
    """
    if subtask not in RULE_SUBTASKS:
        raise ValueError(f"unknown rule subtask {subtask!r}")
    rng = random.Random(seed)
    generator = _RULE_GENERATORS[subtask]
    out: list[RuleQA] = []
    seen: set[str] = set()
    for _ in range(count * 3):
        if len(out) >= count:
            break
        qa = generator(table, rng)
        if qa.question not in seen:
            seen.add(qa.question)
            out.append(qa)
    return out


def _phrase(subtask: str, rng: random.Random, **kwargs) -> str:
    template = rng.choice(_QUESTION_TEMPLATES[subtask])
    return template.format(**kwargs)


def _require_numeric(table: ProcessedTable, n: int = 1) -> list[int]:
    numeric = [
        j for j in _numeric_column_indices(table) if len(_numeric_values(table, j)) >= 2
    ]
    if len(numeric) < n:
        raise Ineligible(f"needs >= {n} numeric columns, found {len(numeric)}")
    return numeric


def _unique_key_rows(table: ProcessedTable, key_idx: int) -> list[int]:
    texts = [cell_to_text(c) for c in table.column(key_idx)]
    counts = Counter(texts)
    return [i for i, t in enumerate(texts) if t and counts[t] == 1]


def _gen_lookup(table: ProcessedTable, rng: random.Random, subtask: str) -> RuleQA:
    key_idx = _key_column(table, exclude=set())
    if key_idx is None:
        raise Ineligible("needs a non-numeric key column")
    rows = _unique_key_rows(table, key_idx)
    if not rows:
        raise Ineligible("key column has no unique values")
    candidates = [j for j in range(len(table.header)) if j != key_idx]
    if not candidates:
        raise Ineligible("needs a second column to look up")
    row = rng.choice(rows)
    col = rng.choice(candidates)
    key = cell_to_text(table.body[row][key_idx])
    answer = cell_to_text(table.body[row][col])
    program = _PRELUDE + (
        f"ki, ci = {key_idx}, {col}\n"
        f"for r in data:\n"
        f"    if r[ki] == {key!r}:\n"
        f"        print(r[ci])\n"
        f"        break\n"
    )
    question = _phrase(
        subtask, rng, col=table.header[col], key_col=table.header[key_idx], key=key
    )
    return RuleQA(
        subtask=subtask, question=question, answer=answer, program=program,
        params={"key_col": key_idx, "col": col, "key": key},
    )


def _gen_retrieval(table: ProcessedTable, rng: random.Random) -> RuleQA:
    return _gen_lookup(table, rng, "Table Retrieval")


def _gen_query(table: ProcessedTable, rng: random.Random) -> RuleQA:
    return _gen_lookup(table, rng, "Table Query")


def _gen_selection(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 2)
    a, b = rng.sample(numeric, 2)
    key_idx = _key_column(table, exclude={a, b})
    key_expr, _ = _key_expr(key_idx)
    va, vb = _numeric_values(table, a), _numeric_values(table, b)
    thr_a = sorted(va)[len(va) // 2]
    thr_b = sorted(vb)[len(vb) // 2]
    matches = []
    for i, r in enumerate(table.body):
        x, y = _strict_float(r[a]), _strict_float(r[b])
        if x is not None and y is not None and x > thr_a and y < thr_b:
            matches.append(cell_to_text(r[key_idx]) if key_idx is not None else f"row {i + 1}")
    answer = ", ".join(matches) if matches else "none"
    program = _PRELUDE + (
        f"ca, cb = {a}, {b}\n"
        "out = []\n"
        "for i, r in enumerate(data):\n"
        f'    if r[ca] != "" and r[cb] != "" and float(r[ca]) > {thr_a!r} and float(r[cb]) < {thr_b!r}:\n'
        f"        out.append({key_expr})\n"
        'print(", ".join(out) if out else "none")\n'
    )
    question = _phrase(
        "Table Selection",
        rng,
        key_col=table.header[key_idx] if key_idx is not None else "row number",
        col_a=table.header[a],
        thr_a=_fmt_value(thr_a),
        col_b=table.header[b],
        thr_b=_fmt_value(thr_b),
    )
    return RuleQA(
        "Table Selection", question, answer, program,
        params={"col_a": a, "col_b": b, "thr_a": thr_a, "thr_b": thr_b, "key_col": key_idx},
    )


def _gen_ranking(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 1)
    col = rng.choice(numeric)
    key_idx = _key_column(table, exclude={col})
    key_expr, _ = _key_expr(key_idx)
    best_val, best_key = None, ""
    for i, r in enumerate(table.body):
        v = _strict_float(r[col])
        if v is None:
            continue
        if best_val is None or v > best_val:
            best_val = v
            best_key = cell_to_text(r[key_idx]) if key_idx is not None else f"row {i + 1}"
    program = _PRELUDE + (
        f"ci = {col}\n"
        "best = None\n"
        "for i, r in enumerate(data):\n"
        '    if r[ci] == "":\n'
        "        continue\n"
        "    v = float(r[ci])\n"
        "    if best is None or v > best[0]:\n"
        f"        best = (v, {key_expr})\n"
        "print(best[1])\n"
    )
    question = _phrase(
        "Table Ranking",
        rng,
        key_col=table.header[key_idx] if key_idx is not None else "row number",
        col=table.header[col],
    )
    return RuleQA(
        "Table Ranking", question, best_key, program,
        params={"col": col, "key_col": key_idx},
    )


def _gen_imputation(table: ProcessedTable, rng: random.Random) -> RuleQA:
    key_idx = _key_column(table, exclude=set())
    if key_idx is None:
        raise Ineligible("needs a non-numeric key column")
    target_candidates = [
        j
        for j in range(len(table.header))
        if j != key_idx and j not in set(_numeric_column_indices(table))
        and any(c is not None for c in table.column(j))
    ]
    if not target_candidates:
        raise Ineligible("needs a second categorical column")
    col = rng.choice(target_candidates)
    rows = [i for i, r in enumerate(table.body) if r[key_idx] is not None]
    row = rng.choice(rows)
    key = cell_to_text(table.body[row][key_idx])
    values = [cell_to_text(c) for c in table.column(col) if c is not None]
    counts = Counter(values)
    top = max(counts.values())
    answer = sorted(v for v in counts if counts[v] == top)[0]
    program = _PRELUDE + (
        "from collections import Counter\n"
        f"ci = {col}\n"
        'vals = [r[ci] for r in data if r[ci] != ""]\n'
        "c = Counter(vals)\n"
        "top = max(c.values())\n"
        "print(sorted(v for v in c if c[v] == top)[0])\n"
    )
    question = _phrase(
        "Table Imputation",
        rng,
        col=table.header[col],
        key_col=table.header[key_idx],
        key=key,
    )
    return RuleQA(
        "Table Imputation", question, answer, program,
        params={"col": col, "key_col": key_idx, "key": key},
    )


def _gen_deletion(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 1)
    col = rng.choice(numeric)
    values = _numeric_values(table, col)
    thr = sorted(values)[len(values) // 2]
    kept = 0
    for r in table.body:
        v = _strict_float(r[col]) if r[col] is not None else None
        if v is None or v >= thr:
            kept += 1
    program = _PRELUDE + (
        f"ci = {col}\n"
        f'kept = [r for r in data if r[ci] == "" or float(r[ci]) >= {thr!r}]\n'
        "print(len(kept))\n"
    )
    question = _phrase(
        "Table Deletion", rng, col=table.header[col], thr=_fmt_value(thr)
    )
    return RuleQA(
        "Table Deletion", question, str(kept), program,
        params={"col": col, "thr": thr},
    )


def _gen_null_imputation(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 1)
    col = rng.choice(numeric)
    values = _numeric_values(table, col)
    mean = sum(values) / len(values)
    answer = f"{mean:.2f}"
    program = _PRELUDE + (
        f"ci = {col}\n"
        'vals = [float(r[ci]) for r in data if r[ci] != ""]\n'
        "m = sum(vals) / len(vals)\n"
        "print(f\"{m:.2f}\")\n"
    )
    question = _phrase("Table Null Imputation", rng, col=table.header[col])
    return RuleQA(
        "Table Null Imputation", question, answer, program, params={"col": col}
    )


def _gen_correlation(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 2)
    a, b = rng.sample(numeric, 2)
    pairs = []
    for r in table.body:
        x, y = _strict_float(r[a]), _strict_float(r[b])
        if x is not None and y is not None:
            pairs.append((x, y))
    if len(pairs) < 3:
        raise Ineligible("needs >= 3 complete numeric pairs")
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    n = len(pairs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in pairs)
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0 or vy == 0:
        raise Ineligible("zero variance column")
    answer = f"{cov / (vx * vy) ** 0.5:.3f}"
    program = _PRELUDE + (
        f"ca, cb = {a}, {b}\n"
        'pairs = [(float(r[ca]), float(r[cb])) for r in data if r[ca] != "" and r[cb] != ""]\n'
        "xs = [p[0] for p in pairs]\n"
        "ys = [p[1] for p in pairs]\n"
        "n = len(pairs)\n"
        "mx = sum(xs) / n\n"
        "my = sum(ys) / n\n"
        "cov = sum((x - mx) * (y - my) for x, y in pairs)\n"
        "vx = sum((x - mx) ** 2 for x in xs)\n"
        "vy = sum((y - my) ** 2 for y in ys)\n"
        "print(f\"{cov / (vx * vy) ** 0.5:.3f}\")\n"
    )
    question = _phrase(
        "Table Correlation Analysis", rng, col_a=table.header[a], col_b=table.header[b]
    )
    return RuleQA(
        "Table Correlation Analysis", question, answer, program,
        params={"col_a": a, "col_b": b},
    )


def _gen_hypothesis(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 1)
    candidates = []
    for j in numeric:
        values = _numeric_values(table, j)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        if var > 0:
            candidates.append(j)
    if not candidates:
        raise Ineligible("needs a numeric column with non-zero variance")
    col = rng.choice(candidates)
    values = _numeric_values(table, col)
    n = len(values)
    mean = sum(values) / n
    mu = float(int(round(mean))) + 1.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    t_stat = (mean - mu) / ((var ** 0.5) / (n ** 0.5))
    answer = f"{t_stat:.3f}"
    program = _PRELUDE + (
        f"ci = {col}\n"
        'vals = [float(r[ci]) for r in data if r[ci] != ""]\n'
        "n = len(vals)\n"
        "m = sum(vals) / n\n"
        "var = sum((v - m) ** 2 for v in vals) / (n - 1)\n"
        f"t = (m - {mu!r}) / ((var ** 0.5) / (n ** 0.5))\n"
        "print(f\"{t:.3f}\")\n"
    )
    question = _phrase(
        "Table Hypothesis Testing", rng, col=table.header[col], mu=_fmt_value(mu)
    )
    return RuleQA(
        "Table Hypothesis Testing", question, answer, program,
        params={"col": col, "mu": mu},
    )


def _gen_distribution(table: ProcessedTable, rng: random.Random) -> RuleQA:
    numeric = _require_numeric(table, 1)
    col = rng.choice(numeric)
    values = _numeric_values(table, col)
    ordered = sorted(values)
    n = len(ordered)
    median = ordered[n // 2] if n % 2 else (ordered[n // 2 - 1] + ordered[n // 2]) / 2
    mean = sum(values) / n
    answer = "yes" if mean > median else "no"
    program = _PRELUDE + (
        f"ci = {col}\n"
        'vals = [float(r[ci]) for r in data if r[ci] != ""]\n'
        "s = sorted(vals)\n"
        "n = len(s)\n"
        "median = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2\n"
        "mean = sum(vals) / n\n"
        'print("yes" if mean > median else "no")\n'
    )
    question = _phrase("Table Distribution Testing", rng, col=table.header[col])
    return RuleQA(
        "Table Distribution Testing", question, answer, program, params={"col": col}
    )


_RULE_GENERATORS = {
    "Table Retrieval": _gen_retrieval,
    "Table Query": _gen_query,
    "Table Selection": _gen_selection,
    "Table Ranking": _gen_ranking,
    "Table Imputation": _gen_imputation,
    "Table Deletion": _gen_deletion,
    "Table Null Imputation": _gen_null_imputation,
    "Table Correlation Analysis": _gen_correlation,
    "Table Hypothesis Testing": _gen_hypothesis,
    "Table Distribution Testing": _gen_distribution,
}


# ---------------------------------------------------------------------------
# LLM-based QA generation with dual discriminators

LLM_SUBTASKS = (
    "Table General Operations",
    "Table Domain-specific Operations",
    "Table Plausibility Verification",
    "Table Summary",
)

_VERDICT_RE = re.compile(r"\b(imperfect|perfect)\b", re.IGNORECASE)


def _rated_perfect(discriminator, question: str, answer: str) -> bool:
    reply = discriminator.complete(
        [
            {
                "role": "user",
                "content": DISCRIMINATOR_PROMPT.format(question=question, answer=answer),
            }
        ]
    )
    match = _VERDICT_RE.search(reply)
    return bool(match) and match.group(1).casefold() == "perfect"


def llm_generate_qa(
    backend,
    discriminators: Sequence,
    table: Optional[ProcessedTable],
    subtask: str,
) -> list[CorpusSample]:
    """LLM QA generation in two modes: from an existing table, or table+QA
    generated together. Samples survive only when both discriminators rate
    them perfect; generated tables failing collection standards are dropped
    before discrimination."""
    if subtask not in LLM_SUBTASKS:
        raise ValueError(f"subtask {subtask!r} is not LLM-generated")
    if len(discriminators) != 2:
        raise ValueError("exactly 2 discriminators required")
    if table is not None:
        meta = sense(table, SensePolicy(seed=0))
        from .sensing import render_metadata

        prompt = (
            f"Generate question/answer pairs for the sub-task '{subtask}' about "
            "this table. Reply as JSON: {\"pairs\": [{\"question\": str, "
            "\"answer\": str}]}.\n" + render_metadata(meta)
        )
    else:
        prompt = (
            f"Invent a small realistic table and question/answer pairs for the "
            f"sub-task '{subtask}'. Reply as JSON: {{\"table\": {{\"header\": "
            f"[...], \"rows\": [[...]]}}, \"pairs\": [{{\"question\": str, "
            f"\"answer\": str}}]}}."
        )
    reply = backend.complete([{"role": "user", "content": prompt}])
    data = _extract_json(reply)
    if data is None or "pairs" not in data:
        raise BackendError(f"unparseable generation reply: {reply[:200]!r}")
    if table is None:
        spec_table = data.get("table") or {}
        header = [str(h) for h in spec_table.get("header", [])]
        rows = [[str(c) for c in row] for row in spec_table.get("rows", [])]
        if not header or not rows:
            return []
        grid = [header] + [row + [""] * (len(header) - len(row)) for row in rows]
        grid = [row[: len(header)] for row in grid]
        cells = [[c if c != "" else None for c in row] for row in grid]
        candidate = RawTable(cells=cells, source_name="generated")
        byte_size = len(_approx_csv_bytes(cells))
        if not check_collection_standards(candidate, byte_size).passed:
            return []
    samples: list[CorpusSample] = []
    for i, pair in enumerate(data["pairs"]):
        question = str(pair.get("question", "")).strip()
        answer = str(pair.get("answer", "")).strip()
        if not question or not answer:
            continue
        if all(_rated_perfect(d, question, answer) for d in discriminators):
            samples.append(
                CorpusSample(
                    id=f"llm-{subtask.lower().replace(' ', '-')}-{i}",
                    question=question,
                    answer=answer,
                    category=_subtask_category(subtask),
                    subtask=subtask,
                    meta={"source": "llm_generated"},
                )
            )
    return samples


def _approx_csv_bytes(cells: list[list]) -> bytes:
    return "\n".join(
        ",".join(str(c) if c is not None else "" for c in row) for row in cells
    ).encode()


def _subtask_category(subtask: str) -> str:
    from .corpus_filter import CATEGORY_SUBTASKS

    for category, subtasks in CATEGORY_SUBTASKS.items():
        if subtask in subtasks:
            return category
    return ""


# ---------------------------------------------------------------------------
# Sandbox-iterative answers and teacher-student distillation


class InteractionMode(enum.Enum):
    DIALOGUE = "dialogue"
    REACT = "react"


@dataclass
class ICoTRecord:
    """Interleaved thought/result pairs; the terminal pair's result is empty."""

    steps: list[tuple[str, str]]
    interaction_mode: InteractionMode = InteractionMode.DIALOGUE

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("an interleaved record needs at least one step")


def _synth_profiles() -> PromptProfiles:
    profiles = PromptProfiles()
    profiles.register("synth_answer", SYNTH_ANSWER_SYSTEM)
    return profiles


def iterative_answer(
    backend,
    sandbox: SandboxExecutor,
    question: str,
    table: ProcessedTable,
    interaction_mode: InteractionMode = InteractionMode.DIALOGUE,
    max_steps: int = 8,
    n_fail: int = 3,
) -> tuple[str, ICoTRecord]:
    """Run an ICoT session against the table; execution errors are fed back
    for self-repair until the budget runs out."""
    csv_path = _table_to_tempfile(table)
    meta = sense(table, SensePolicy(seed=0))
    session = SessionInput(
        query=question,
        tables=[TableRef(name=table.source_name or "table", metadata=meta, csv_path=csv_path)],
        mode=Mode.ICOT,
        max_steps=max_steps,
        prompt_profile="synth_answer",
        n_fail=n_fail,
    )
    trace = run_session(
        session, backend, ToolRegistry(sandbox=sandbox), profiles=_synth_profiles()
    )
    if trace.status is not TraceStatus.COMPLETED or trace.final is None:
        raise Unresolved(f"session ended with status {trace.status.value}")
    steps = [
        (
            step.model_output,
            step.tool_result.feedback_text() if step.tool_result is not None else "",
        )
        for step in trace.steps
    ]
    return trace.final.text, ICoTRecord(steps=steps, interaction_mode=interaction_mode)


def _normalize_answer(text: str) -> tuple[str, Optional[float]]:
    cleaned = text.strip().strip(".").casefold()
    try:
        return ("num", float(cleaned.replace(",", "").rstrip("%")))
    except ValueError:
        return (cleaned, None)


def _cluster_answers(answers: Sequence[str], rel_tol: float = 1e-6) -> list[list[int]]:
    clusters: list[tuple[tuple[str, Optional[float]], list[int]]] = []
    for i, answer in enumerate(answers):
        key = _normalize_answer(answer)
        placed = False
        for existing_key, members in clusters:
            if key[1] is not None and existing_key[1] is not None:
                if math.isclose(key[1], existing_key[1], rel_tol=rel_tol, abs_tol=1e-12):
                    members.append(i)
                    placed = True
                    break
            elif key == existing_key:
                members.append(i)
                placed = True
                break
        if not placed:
            clusters.append((key, [i]))
    return [members for _, members in clusters]


@dataclass
class DatasetRecord:
    question: str
    reference_answer: str
    best_trace: ICoTRecord
    candidate_answers: list[str]
    trace_scores: list[float]


def distill_select(
    teacher,
    student,
    question: str,
    table: ProcessedTable,
    judge,
    sandbox: SandboxExecutor,
    n_candidates: int = 5,
    n_traces: int = 5,
) -> DatasetRecord:
    """Teacher majority vote (judge arbitration on ties) fixes the reference
    answer; the best of the student's interleaved traces (highest judge
    consistency with the reference) is retained."""
    meta = sense(table, SensePolicy(seed=0))
    from .sensing import render_metadata

    ask = (
        "Answer the question about this table concisely.\n"
        + render_metadata(meta)
        + f"\nQuestion: {question}"
    )
    candidates = [
        teacher.complete([{"role": "user", "content": ask}]).strip()
        for _ in range(n_candidates)
    ]
    clusters = _cluster_answers(candidates)
    sizes = sorted({len(c) for c in clusters}, reverse=True)
    top = sizes[0]
    winners = [c for c in clusters if len(c) == top]
    if len(winners) == 1:
        reference = candidates[winners[0][0]]
    else:
        tied = [candidates[c[0]] for c in winners]
        listing = "\n".join(f"{i + 1}. {t}" for i, t in enumerate(tied))
        reply = judge.complete(
            [
                {
                    "role": "user",
                    "content": (
                        "These candidate answers tied in a vote. Reply with the "
                        f"number of the most reliable one.\nQuestion: {question}\n{listing}"
                    ),
                }
            ]
        )
        match = re.search(r"\d+", reply)
        if match is None or not 1 <= int(match.group(0)) <= len(tied):
            raise NoMajority(f"tie unresolved among {tied}")
        reference = tied[int(match.group(0)) - 1]
    guided = (
        f"{question}\n(Reference answer for guidance: {reference}. "
        "Work out the full reasoning yourself.)"
    )
    traces: list[ICoTRecord] = []
    scores: list[float] = []
    for _ in range(n_traces):
        try:
            answer, record = iterative_answer(student, sandbox, guided, table)
        except (Unresolved, BackendError):
            continue
        reply = judge.complete(
            [
                {
                    "role": "user",
                    "content": (
                        "Score the consistency of this answer with the reference "
                        "on a 0-1 scale. Reply with a single number.\n"
                        f"Reference: {reference}\nAnswer: {answer}"
                    ),
                }
            ]
        )
        score = parse_unit_score(reply)
        traces.append(record)
        scores.append(score if score is not None else 0.0)
    if not traces:
        raise Unresolved("no student trace completed")
    best = max(range(len(scores)), key=lambda i: scores[i])
    return DatasetRecord(
        question=question,
        reference_answer=reference,
        best_trace=traces[best],
        candidate_answers=candidates,
        trace_scores=scores,
    )


# ---------------------------------------------------------------------------
# Thin trace-augmentation wrappers (experimental)


def augment_tcot(backend, condenser, sample: CorpusSample) -> CorpusSample:
    """Attach a condensed textual reasoning trace to a QA sample."""
    raw = backend.complete(
        [
            {
                "role": "user",
                "content": f"Solve step by step:\n{sample.question}\n(The answer is {sample.answer}.)",
            }
        ]
    )
    condensed = condenser.complete(
        [
            {
                "role": "user",
                "content": "Condense this reasoning into a concise, coherent rationale:\n" + raw,
            }
        ]
    )
    sample.reasoning = condensed.strip()
    sample.meta["augmentation"] = "tcot"
    return sample


def augment_pot(
    backend, sandbox: SandboxExecutor, sample: CorpusSample, tables: Optional[dict] = None
) -> CorpusSample:
    """Attach a program-of-thought trace: generated code plus its verified
    sandbox output."""
    reply = backend.complete(
        [
            {
                "role": "user",
                "content": (
                    "Write a Python program (in a fenced block) that computes the "
                    f"answer to:\n{sample.question}"
                ),
            }
        ]
    )
    match = re.search(r"```[\w+-]*\s*\n(.*?)```", reply, re.DOTALL)
    if match is None:
        raise BackendError("no program in augmentation reply")
    code = match.group(1)
    result = sandbox.execute(ExecRequest(code=code, tables=dict(tables or {})))
    if not result.ok:
        raise Unresolved(f"augmentation program failed: {result.stderr[:200]}")
    sample.reasoning = f"```python\n{code}\n```\nExecution output: {result.stdout.strip()}"
    sample.meta["augmentation"] = "pot"
    return sample


# ---------------------------------------------------------------------------
# Output schemas


def synth_question_to_dict(q: SynthQuestion) -> dict:
    """SYNTH/1 record."""
    return {
        "schema": "SYNTH/1",
        "question": q.question,
        "chain": list(q.chain),
        "program": q.program,
        "answer": q.answer,
        "verify_status": q.verify_status.value,
        "instruction": (
            {
                "q_type": q.instruction.q_type,
                "s_source": q.instruction.s_source,
                "o_task": q.instruction.o_task,
                "y_format": q.instruction.y_format,
            }
            if q.instruction
            else None
        ),
    }


def icot_record_to_dict(record: ICoTRecord) -> dict:
    """ICOT/1 record."""
    return {
        "schema": "ICOT/1",
        "interaction_mode": record.interaction_mode.value,
        "steps": [{"thought": s, "result": r} for s, r in record.steps],
    }


def icot_record_to_messages(record: ICoTRecord) -> list[dict[str, str]]:
    """Dialogue-mode rendering: tool outputs as separate tool-role messages."""
    messages: list[dict[str, str]] = []
    for thought, result in record.steps:
        messages.append({"role": "assistant", "content": thought})
        if result:
            messages.append({"role": "tool", "content": result})
    return messages


def icot_record_to_text(record: ICoTRecord) -> str:
    """Continuous-chain rendering: thoughts and observations concatenated."""
    parts = []
    for thought, result in record.steps:
        parts.append(thought)
        if result:
            parts.append(f"Observation:\n{result}")
    return "\n".join(parts)


def dump_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
