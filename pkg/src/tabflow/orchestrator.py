"""Iterative tool-integrated reasoning loop over tables.

Runs TCoT (single text-only pass), PoT (one code round plus one decode
round), and ICoT (alternating thought/tool rounds) sessions against a model
backend, dispatching fenced code blocks to the sandbox and chart tool calls
to the SVG renderer, and decoding the final answer from the trace.
"""

from __future__ import annotations

import enum
import json
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

from . import charttool
from .backend import BackendError, ModelBackend
from .charttool import ChartCall, SchemaError
from .prompts import (
    ANALYSIS_GUIDE,
    FINAL_ANSWER_MARKER,
    ICOT_INSTRUCTIONS,
    POT_INSTRUCTIONS,
    PromptProfiles,
    TCOT_INSTRUCTIONS,
)
from .sandbox import ExecRequest, ExecStatus, SandboxExecutor, ToolResult
from .sensing import TableMetadata, render_metadata


class OrchestratorError(Exception):
    pass


class MalformedToolCall(OrchestratorError):
    """JSON tool call present but schema-invalid; fed back to the model."""


class NoFinalAnswer(OrchestratorError):
    pass


class Mode(enum.Enum):
    TCOT = "tcot"
    POT = "pot"
    ICOT = "icot"


class TraceStatus(enum.Enum):
    COMPLETED = "completed"
    MAX_STEPS_EXCEEDED = "max_steps_exceeded"
    TOOL_FAILURE = "tool_failure"
    BACKEND_FAILURE = "backend_failure"


class AnswerKind(enum.Enum):
    VALUE = "value"
    LIST = "list"
    YESNO = "yesno"
    CHART = "chart"
    REPORT = "report"


@dataclass(frozen=True)
class CodeBlock:
    code: str


@dataclass(frozen=True)
class ChartAction:
    call: ChartCall


@dataclass(frozen=True)
class FinalAnswer:
    text: str


@dataclass(frozen=True)
class ThoughtOnly:
    pass


Action = Union[CodeBlock, ChartAction, FinalAnswer, ThoughtOnly]


@dataclass
class TableRef:
    name: str
    metadata: TableMetadata
    csv_path: Path


@dataclass
class SessionInput:
    query: str
    tables: list[TableRef]
    mode: Mode = Mode.ICOT
    max_steps: int = 8
    prompt_profile: str = "default"
    n_fail: int = 3
    artifact_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.tables:
            raise ValueError("at least one table is required")


@dataclass
class Step:
    index: int
    model_output: str
    action: Action
    tool_result: Optional[ToolResult] = None


@dataclass
class Answer:
    text: str
    kind: AnswerKind = AnswerKind.VALUE
    asset: Optional[str] = None


@dataclass
class ReasoningTrace:
    input: SessionInput
    steps: list[Step] = field(default_factory=list)
    final: Optional[Answer] = None
    status: TraceStatus = TraceStatus.MAX_STEPS_EXCEEDED


MODE_INSTRUCTIONS = {
    Mode.TCOT: TCOT_INSTRUCTIONS,
    Mode.POT: POT_INSTRUCTIONS,
    Mode.ICOT: ICOT_INSTRUCTIONS,
}


def build_context(
    session: SessionInput, profiles: PromptProfiles | None = None
) -> str:
    """Assemble the session context: system text, analysis guide, rendered
    table metadata (in input order), the query, and mode instructions."""
    profiles = profiles or PromptProfiles()
    parts = [profiles.get(session.prompt_profile), "", ANALYSIS_GUIDE]
    for ref in session.tables:
        parts.append(f"## Table: {ref.name}")
        parts.append(render_metadata(ref.metadata))
    parts.append(f"Question: {session.query}")
    parts.append("")
    parts.append(MODE_INSTRUCTIONS[session.mode])
    return "\n".join(parts)


_FENCE_RE = re.compile(r"```[\w+-]*[ \t]*\n(.*?)```", re.DOTALL)
_FINAL_RE = re.compile(rf"^[ \t]*{re.escape(FINAL_ANSWER_MARKER)}[ \t]*(.*)$", re.MULTILINE)


def _try_tool_json(text: str) -> Optional[dict]:
    stripped = text.strip()
    if not (stripped.startswith("{") and stripped.endswith("}")):
        return None
    try:
        data = json.loads(stripped)
    except json.JSONDecodeError:
        return None
    return data if isinstance(data, dict) else None


def _chart_action(data: dict) -> Action:
    tool = data.get("tool")
    if tool != "chart_tool":
        raise MalformedToolCall(f"unknown tool {tool!r}; available tools: chart_tool")
    try:
        return ChartAction(call=charttool.validate_call(data))
    except SchemaError as exc:
        raise MalformedToolCall(f"invalid chart_tool call: {exc}") from exc


def parse_model_output(text: str, mode: Mode) -> Action:
    """Classify a model reply into an action.

    Handles both tool-interaction surfaces: structured whole-message JSON
    tool calls (dialogue style) and inline fenced blocks (continuous-chain
    style). Raises MalformedToolCall when a JSON tool call is present but
    schema-invalid.
    """
    fence = _FENCE_RE.search(text)
    if fence is not None:
        content = fence.group(1)
        inline = _try_tool_json(content)
        if inline is not None and "tool" in inline:
            return _chart_action(inline)
        return CodeBlock(code=content.strip("\n"))
    data = _try_tool_json(text)
    if data is not None and "tool" in data:
        return _chart_action(data)
    final = _FINAL_RE.search(text)
    if final is not None:
        payload = text[final.start(1):].strip()
        return FinalAnswer(text=payload)
    return ThoughtOnly()


@dataclass
class ToolRegistry:
    """Shared, stateless tool dispatch; per-session state stays in the session."""

    sandbox: SandboxExecutor
    time_limit: float = 10.0
    memory_limit_mb: int = 512
    output_limit_kb: int = 64

    def run_code(
        self, code: str, tables: dict[str, Path], workdir: Optional[Path] = None
    ) -> ToolResult:
        return self.sandbox.execute(
            ExecRequest(
                code=code,
                tables=tables,
                time_limit=self.time_limit,
                memory_limit_mb=self.memory_limit_mb,
                output_limit_kb=self.output_limit_kb,
                workdir=workdir,
            )
        )

    def run_chart(
        self, call: ChartCall, artifact_dir: Path, index: int
    ) -> ToolResult:
        started = time.monotonic()
        try:
            asset = charttool.render(call)
        except charttool.RenderError as exc:
            return ToolResult(
                status=ExecStatus.RUNTIME_ERROR,
                stderr=f"chart render failed: {exc}",
                duration=time.monotonic() - started,
            )
        name = f"chart_{index:03d}.svg"
        artifact_dir.mkdir(parents=True, exist_ok=True)
        (artifact_dir / name).write_text(asset.svg, encoding="utf-8")
        return ToolResult(
            status=ExecStatus.OK,
            stdout=f"chart rendered to {name} ({asset.width}x{asset.height}, digest {asset.data_digest[:12]})",
            duration=time.monotonic() - started,
            artifacts=[name],
        )


def build_messages(
    context: str, steps: list[Step], budget: Optional[int] = None
) -> list[dict[str, str]]:
    """Stateless message list: context, then each prior output and tool result
    once, in order. Over budget, the oldest tool outputs are elided first."""
    messages = [{"role": "system", "content": context}]
    for step in steps:
        messages.append({"role": "assistant", "content": step.model_output})
        if step.tool_result is not None:
            messages.append(
                {"role": "user", "content": "Tool result:\n" + step.tool_result.feedback_text()}
            )
    if budget is not None:
        tool_indices = [
            i for i, m in enumerate(messages)
            if i > 0 and m["role"] == "user" and m["content"].startswith("Tool result:")
        ]
        for i in tool_indices:
            if sum(len(m["content"]) for m in messages) <= budget:
                break
            messages[i] = {"role": "user", "content": "Tool result:\n[elided]"}
    return messages


def _answer_from(steps: list[Step], payload: str) -> Answer:
    asset = None
    for step in reversed(steps):
        if step.tool_result is not None and step.tool_result.ok:
            if isinstance(step.action, ChartAction) and step.tool_result.artifacts:
                asset = step.tool_result.artifacts[0]
            break
    text = payload.strip().strip("`").strip()
    if asset is not None:
        kind = AnswerKind.CHART
    elif text.casefold().rstrip(".") in ("yes", "no"):
        kind = AnswerKind.YESNO
    elif "\n" in text or ", " in text:
        kind = AnswerKind.LIST
    elif len(text) > 200:
        kind = AnswerKind.REPORT
    else:
        kind = AnswerKind.VALUE
    return Answer(text=text, kind=kind, asset=asset)


def run_session(
    session: SessionInput,
    backend: ModelBackend,
    tools: ToolRegistry,
    profiles: PromptProfiles | None = None,
    on_step: Optional[Callable[[Step], None]] = None,
) -> ReasoningTrace:
    """Drive the reasoning loop; always returns a trace with terminal status.

    TCoT makes exactly one backend call with no tool dispatch; PoT one code
    round then one decode round; ICoT up to max_steps rounds, stopping on a
    final answer, the step cap, or n_fail consecutive tool failures.
    """
    context = build_context(session, profiles)
    trace = ReasoningTrace(input=session)
    tables = {ref.name: Path(ref.csv_path) for ref in session.tables}
    artifact_dir = session.artifact_dir or Path(tempfile.mkdtemp(prefix="session-"))
    budget = getattr(backend, "context_budget", None)
    limit = {Mode.TCOT: 1, Mode.POT: 2}.get(session.mode, session.max_steps)
    consecutive_failures = 0
    chart_index = 0
    for k in range(1, limit + 1):
        messages = build_messages(context, trace.steps, budget)
        try:
            output = backend.complete(messages)
        except BackendError:
            trace.status = TraceStatus.BACKEND_FAILURE
            return trace
        parse_error: Optional[str] = None
        try:
            action: Action = parse_model_output(output, session.mode)
        except MalformedToolCall as exc:
            action = ThoughtOnly()
            parse_error = str(exc)
        step = Step(index=k, model_output=output, action=action)
        if isinstance(action, FinalAnswer):
            trace.final = _answer_from(trace.steps, action.text)
            trace.status = TraceStatus.COMPLETED
            trace.steps.append(step)
            if on_step:
                on_step(step)
            return trace
        if session.mode is not Mode.TCOT:
            if parse_error is not None:
                step.tool_result = ToolResult(
                    status=ExecStatus.RUNTIME_ERROR, stderr=parse_error, duration=0.0
                )
                consecutive_failures += 1
            elif isinstance(action, CodeBlock):
                step.tool_result = tools.run_code(action.code, tables, workdir=artifact_dir)
                consecutive_failures = 0 if step.tool_result.ok else consecutive_failures + 1
            elif isinstance(action, ChartAction):
                chart_index += 1
                step.tool_result = tools.run_chart(action.call, artifact_dir, chart_index)
                consecutive_failures = 0 if step.tool_result.ok else consecutive_failures + 1
        trace.steps.append(step)
        if on_step:
            on_step(step)
        if consecutive_failures >= session.n_fail:
            trace.status = TraceStatus.TOOL_FAILURE
            return trace
    trace.status = TraceStatus.MAX_STEPS_EXCEEDED
    return trace


def decode_answer(trace: ReasoningTrace) -> Answer:
    """Extract the final answer from a completed trace."""
    if trace.status is not TraceStatus.COMPLETED:
        raise NoFinalAnswer(f"trace status is {trace.status.value}")
    for step in reversed(trace.steps):
        if isinstance(step.action, FinalAnswer):
            return _answer_from(
                [s for s in trace.steps if s.index < step.index], step.action.text
            )
    raise NoFinalAnswer("completed trace has no final-answer step")


def _action_to_dict(action: Action) -> dict:
    if isinstance(action, CodeBlock):
        return {"kind": "code", "code": action.code}
    if isinstance(action, ChartAction):
        return {"kind": "chart", "call": charttool.call_to_dict(action.call)}
    if isinstance(action, FinalAnswer):
        return {"kind": "final", "text": action.text}
    return {"kind": "thought"}


def step_to_dict(step: Step, include_timing: bool = False) -> dict:
    entry: dict = {
        "index": step.index,
        "model_output": step.model_output,
        "action": _action_to_dict(step.action),
    }
    if step.tool_result is not None:
        result = {
            "status": step.tool_result.status.value,
            "stdout": step.tool_result.stdout,
            "stderr": step.tool_result.stderr,
            "artifacts": list(step.tool_result.artifacts),
        }
        if include_timing:
            result["duration"] = step.tool_result.duration
        entry["tool_result"] = result
    return entry


def trace_to_dict(trace: ReasoningTrace, include_timing: bool = False) -> dict:
    """Canonical JSON form of a trace.

    Wall-clock durations and scratch directories are volatile and excluded by
    default so replays of the same scripted session byte-compare equal.
    """
    steps = [step_to_dict(step, include_timing) for step in trace.steps]
    return {
        "input": session_input_to_dict(trace.input),
        "status": trace.status.value,
        "final": (
            {"text": trace.final.text, "kind": trace.final.kind.value, "asset": trace.final.asset}
            if trace.final
            else None
        ),
        "steps": steps,
    }


def session_input_to_dict(session: SessionInput) -> dict:
    from .sensing import metadata_to_dict

    return {
        "query": session.query,
        "mode": session.mode.value,
        "max_steps": session.max_steps,
        "prompt_profile": session.prompt_profile,
        "n_fail": session.n_fail,
        "tables": [
            {
                "name": ref.name,
                "csv_path": str(ref.csv_path),
                "metadata": metadata_to_dict(ref.metadata),
            }
            for ref in session.tables
        ],
    }


def session_input_from_dict(raw: dict) -> SessionInput:
    from .sensing import metadata_from_dict

    return SessionInput(
        query=raw["query"],
        tables=[
            TableRef(
                name=t["name"],
                metadata=metadata_from_dict(t["metadata"]),
                csv_path=Path(t["csv_path"]),
            )
            for t in raw["tables"]
        ],
        mode=Mode(raw.get("mode", "icot")),
        max_steps=int(raw.get("max_steps", 8)),
        prompt_profile=raw.get("prompt_profile", "default"),
        n_fail=int(raw.get("n_fail", 3)),
    )
