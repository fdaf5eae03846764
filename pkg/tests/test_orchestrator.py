import json

import pytest

from tabflow.backend import ScriptedBackend
from tabflow.orchestrator import (
    AnswerKind,
    ChartAction,
    CodeBlock,
    FinalAnswer,
    MalformedToolCall,
    Mode,
    NoFinalAnswer,
    SessionInput,
    TableRef,
    ThoughtOnly,
    ToolRegistry,
    TraceStatus,
    build_context,
    build_messages,
    decode_answer,
    parse_model_output,
    run_session,
    session_input_from_dict,
    session_input_to_dict,
    trace_to_dict,
)
from tabflow.sensing import SensePolicy, sense
from tabflow.table import ProcessedTable, serialize_csv


@pytest.fixture
def sales_session(tmp_path):
    table = ProcessedTable(
        header=["region", "revenue"],
        body=[["north", 100.0], ["south", 200.0], ["west", 300.0]],
        source_name="sales",
    )
    csv_path = tmp_path / "sales.csv"
    csv_path.write_bytes(serialize_csv(table))
    meta = sense(table, SensePolicy(seed=0))
    def make(mode=Mode.ICOT, max_steps=8, **kwargs):
        return SessionInput(
            query="What is the total revenue?",
            tables=[TableRef(name="sales", metadata=meta, csv_path=csv_path)],
            mode=mode,
            max_steps=max_steps,
            artifact_dir=tmp_path / "assets",
            **kwargs,
        )
    return make


@pytest.fixture
def tools(executor):
    return ToolRegistry(sandbox=executor)


SUM_CODE = (
    "Let me add the revenue column.\n"
    "```python\n"
    "import csv, os\n"
    'with open(os.environ["TABLE_PATH_0"], newline="") as f:\n'
    "    rows = list(csv.reader(f))[1:]\n"
    "print(int(sum(float(r[1]) for r in rows)))\n"
    "```\n"
)


class TestParseModelOutput:
    def test_fenced_code(self):
        action = parse_model_output("```\nprint(1)\n```", Mode.ICOT)
        assert action == CodeBlock(code="print(1)")

    def test_fenced_code_with_language(self):
        action = parse_model_output("词 before\n```python\nx = 1\n```\nafter", Mode.ICOT)
        assert isinstance(action, CodeBlock) and action.code == "x = 1"

    def test_chart_tool_json(self):
        raw = json.dumps(
            {"tool": "chart_tool", "type": "bar", "series": [{"x": ["a"], "y": [1]}]}
        )
        action = parse_model_output(raw, Mode.ICOT)
        assert isinstance(action, ChartAction)
        assert action.call.chart_type == "bar"

    def test_chart_tool_inside_fence(self):
        raw = "```json\n" + json.dumps(
            {"tool": "chart_tool", "type": "pie", "series": [{"x": ["a"], "y": [1]}]}
        ) + "\n```"
        action = parse_model_output(raw, Mode.ICOT)
        assert isinstance(action, ChartAction)

    def test_final_answer_line(self):
        action = parse_model_output("reasoning...\nFinal Answer: -5.60%", Mode.ICOT)
        assert action == FinalAnswer(text="-5.60%")

    def test_thought_only(self):
        assert isinstance(parse_model_output("just musing", Mode.ICOT), ThoughtOnly)

    def test_invalid_chart_schema_is_malformed(self):
        raw = json.dumps({"tool": "chart_tool", "type": "donut", "series": []})
        with pytest.raises(MalformedToolCall):
            parse_model_output(raw, Mode.ICOT)

    def test_unknown_tool_is_malformed(self):
        raw = json.dumps({"tool": "sql_tool", "query": "select 1"})
        with pytest.raises(MalformedToolCall):
            parse_model_output(raw, Mode.ICOT)

    def test_plain_json_without_tool_key_is_thought(self):
        assert isinstance(parse_model_output('{"a": 1}', Mode.ICOT), ThoughtOnly)


class TestBuildContext:
    def test_contains_guide_stages(self, sales_session):
        context = build_context(sales_session())
        assert "Understanding stage" in context
        assert "Solution stage" in context

    def test_tcot_has_no_tool_protocol(self, sales_session):
        context = build_context(sales_session(mode=Mode.TCOT))
        assert "TABLE_PATH" not in context
        assert "fenced code block" not in context
        assert "chart_tool" not in context

    def test_metadata_blocks_in_input_order(self, sales_session, tmp_path):
        base = sales_session()
        other = ProcessedTable(header=["x"], body=[["1"]], source_name="other")
        other_path = tmp_path / "other.csv"
        other_path.write_bytes(serialize_csv(other))
        session = SessionInput(
            query="q",
            tables=base.tables
            + [TableRef("other", sense(other, SensePolicy(seed=0)), other_path)],
            mode=Mode.ICOT,
        )
        context = build_context(session)
        assert context.index("## Table: sales") < context.index("## Table: other")

    def test_query_present(self, sales_session):
        assert "What is the total revenue?" in build_context(sales_session())


class TestRunSession:
    def test_code_then_final(self, sales_session, tools):
        backend = ScriptedBackend([SUM_CODE, "Final Answer: 600"])
        trace = run_session(sales_session(), backend, tools)
        assert trace.status is TraceStatus.COMPLETED
        assert len(trace.steps) == 2
        assert trace.steps[0].tool_result.stdout.strip() == "600"
        assert trace.final.text == "600"

    def test_thoughts_only_hits_step_cap(self, sales_session, tools):
        backend = ScriptedBackend(["hmm", "let me think", "still thinking"])
        trace = run_session(sales_session(max_steps=3), backend, tools)
        assert trace.status is TraceStatus.MAX_STEPS_EXCEEDED
        assert len(trace.steps) == 3

    def test_tcot_single_call_no_tools(self, sales_session, tools):
        backend = ScriptedBackend(["Final Answer: yes"])
        trace = run_session(sales_session(mode=Mode.TCOT), backend, tools)
        assert trace.status is TraceStatus.COMPLETED
        assert len(trace.steps) == 1
        assert trace.final.kind is AnswerKind.YESNO

    def test_tcot_ignores_code_blocks(self, sales_session, tools):
        backend = ScriptedBackend(["```python\nprint(1)\n```"])
        trace = run_session(sales_session(mode=Mode.TCOT), backend, tools)
        assert trace.steps[0].tool_result is None
        assert trace.status is TraceStatus.MAX_STEPS_EXCEEDED

    def test_pot_two_rounds(self, sales_session, tools):
        backend = ScriptedBackend([SUM_CODE, "Final Answer: 600"])
        trace = run_session(sales_session(mode=Mode.POT), backend, tools)
        assert trace.status is TraceStatus.COMPLETED
        assert len(trace.steps) == 2
        assert len(backend.calls) == 2

    def test_consecutive_tool_failures_stop_session(self, sales_session, tools):
        bad = "```python\nraise RuntimeError('x')\n```"
        backend = ScriptedBackend([bad, bad, bad, bad, bad])
        trace = run_session(sales_session(), backend, tools)
        assert trace.status is TraceStatus.TOOL_FAILURE
        assert len(trace.steps) == 3

    def test_failure_counter_resets_on_success(self, sales_session, tools):
        bad = "```python\nraise RuntimeError('x')\n```"
        good = "```python\nprint('ok')\n```"
        backend = ScriptedBackend([bad, bad, good, bad, bad, "Final Answer: done"])
        trace = run_session(sales_session(max_steps=10), backend, tools)
        assert trace.status is TraceStatus.COMPLETED

    def test_backend_failure_status(self, sales_session, tools):
        trace = run_session(sales_session(), ScriptedBackend([]), tools)
        assert trace.status is TraceStatus.BACKEND_FAILURE

    def test_malformed_tool_call_fed_back(self, sales_session, tools):
        raw = json.dumps({"tool": "chart_tool", "type": "donut", "series": []})
        backend = ScriptedBackend([raw, "Final Answer: fine"])
        trace = run_session(sales_session(), backend, tools)
        assert trace.status is TraceStatus.COMPLETED
        first = trace.steps[0]
        assert first.tool_result is not None
        assert "chart_tool" in first.tool_result.stderr
        feedback = backend.calls[1][-1]["content"]
        assert "invalid chart_tool call" in feedback

    def test_chart_call_renders_asset(self, sales_session, tools, tmp_path):
        chart = json.dumps(
            {
                "tool": "chart_tool",
                "type": "bar",
                "title": "Revenue",
                "series": [{"x": ["n", "s", "w"], "y": [100, 200, 300]}],
            }
        )
        backend = ScriptedBackend([chart, "Final Answer: see chart"])
        session = sales_session()
        trace = run_session(session, backend, tools)
        assert trace.status is TraceStatus.COMPLETED
        assert trace.steps[0].tool_result.artifacts == ["chart_001.svg"]
        assert (session.artifact_dir / "chart_001.svg").exists()
        assert trace.final.kind is AnswerKind.CHART
        assert trace.final.asset == "chart_001.svg"

    def test_history_monotone_in_messages(self, sales_session, tools):
        backend = ScriptedBackend([SUM_CODE, "thinking more", "Final Answer: 600"])
        trace = run_session(sales_session(), backend, tools)
        last_messages = backend.calls[-1]
        joined = json.dumps(last_messages)
        assert joined.count("Let me add the revenue column") == 1
        assert joined.count("thinking more") == 1
        outputs = [m["content"] for m in last_messages if m["role"] == "assistant"]
        assert outputs == [step.model_output for step in trace.steps[:-1]]

    def test_tool_results_have_durations(self, sales_session, tools):
        backend = ScriptedBackend([SUM_CODE, "Final Answer: 600"])
        trace = run_session(sales_session(), backend, tools)
        assert trace.steps[0].tool_result.duration > 0

    def test_on_step_callback_order(self, sales_session, tools):
        seen = []
        backend = ScriptedBackend([SUM_CODE, "Final Answer: 600"])
        run_session(sales_session(), backend, tools, on_step=lambda s: seen.append(s.index))
        assert seen == [1, 2]


class _StubTools:
    """Instant tool dispatch for loop-invariant property tests."""

    def __init__(self, fail_code=False):
        from tabflow.sandbox import ExecStatus, ToolResult

        self._ok = ToolResult(status=ExecStatus.OK, stdout="ok", duration=0.001)
        self._err = ToolResult(status=ExecStatus.RUNTIME_ERROR, stderr="bad", duration=0.001)
        self.fail_code = fail_code

    def run_code(self, code, tables, workdir=None):
        return self._err if self.fail_code else self._ok

    def run_chart(self, call, artifact_dir, index):
        return self._ok


class TestLoopProperties:
    CHART = json.dumps(
        {"tool": "chart_tool", "type": "bar", "series": [{"x": ["a"], "y": [1]}]}
    )
    OUTPUTS = {
        "thought": "just thinking",
        "code": "```python\nprint('x')\n```",
        "chart": CHART,
        "malformed": json.dumps({"tool": "chart_tool", "type": "donut", "series": []}),
        "final": "Final Answer: done",
    }

    @pytest.mark.parametrize("seed", range(30))
    def test_invariants_over_random_scripts(self, sales_session, seed):
        import random as random_mod

        rng = random_mod.Random(seed)
        script = [
            self.OUTPUTS[rng.choice(list(self.OUTPUTS))] for _ in range(rng.randrange(1, 10))
        ]
        max_steps = rng.randrange(1, 8)
        session = sales_session(max_steps=max_steps)
        trace = run_session(session, ScriptedBackend(script), _StubTools())
        assert len(trace.steps) <= max_steps
        assert [s.index for s in trace.steps] == list(range(1, len(trace.steps) + 1))
        assert (trace.final is not None) == (trace.status is TraceStatus.COMPLETED)
        if trace.status is TraceStatus.COMPLETED:
            assert isinstance(trace.steps[-1].action, FinalAnswer)
            assert trace.steps[-1].tool_result is None

    def test_all_failures_stop_at_n_fail(self, sales_session):
        script = ["```python\nboom\n```"] * 10
        session = sales_session(max_steps=10)
        trace = run_session(session, ScriptedBackend(script), _StubTools(fail_code=True))
        assert trace.status is TraceStatus.TOOL_FAILURE
        assert len(trace.steps) == session.n_fail


class TestBudgetTruncation:
    def test_oldest_tool_output_elided_first(self, sales_session, tools):
        from tabflow.orchestrator import Step
        from tabflow.sandbox import ExecStatus, ToolResult

        steps = [
            Step(
                index=i,
                model_output=f"thought {i}",
                action=CodeBlock(code="x"),
                tool_result=ToolResult(status=ExecStatus.OK, stdout="Z" * 400),
            )
            for i in (1, 2)
        ]
        messages = build_messages("context", steps, budget=700)
        tool_messages = [m for m in messages if m["content"].startswith("Tool result:")]
        assert tool_messages[0]["content"] == "Tool result:\n[elided]"
        assert "Z" in tool_messages[1]["content"]
        assert messages[0]["content"] == "context"


class TestDecodeAnswer:
    def test_value_extraction(self, sales_session, tools):
        backend = ScriptedBackend(["Final Answer: 12 months"])
        trace = run_session(sales_session(mode=Mode.TCOT), backend, tools)
        answer = decode_answer(trace)
        assert answer.text == "12 months"
        assert answer.kind is AnswerKind.VALUE

    def test_incomplete_trace_raises(self, sales_session, tools):
        trace = run_session(sales_session(max_steps=1), ScriptedBackend(["hm"]), tools)
        with pytest.raises(NoFinalAnswer):
            decode_answer(trace)


class TestTraceSerialization:
    def test_replay_byte_identical(self, sales_session, tools):
        script = [SUM_CODE, "Final Answer: 600"]
        t1 = run_session(sales_session(), ScriptedBackend(list(script)), tools)
        t2 = run_session(sales_session(), ScriptedBackend(list(script)), tools)
        j1 = json.dumps(trace_to_dict(t1), sort_keys=True)
        j2 = json.dumps(trace_to_dict(t2), sort_keys=True)
        assert j1 == j2

    def test_timing_included_on_request(self, sales_session, tools):
        trace = run_session(
            sales_session(), ScriptedBackend([SUM_CODE, "Final Answer: 600"]), tools
        )
        with_timing = trace_to_dict(trace, include_timing=True)
        without = trace_to_dict(trace)
        assert "duration" in with_timing["steps"][0]["tool_result"]
        assert "duration" not in without["steps"][0]["tool_result"]

    def test_session_input_round_trip(self, sales_session):
        session = sales_session()
        back = session_input_from_dict(session_input_to_dict(session))
        assert back.query == session.query
        assert back.mode is session.mode
        assert back.tables[0].name == "sales"
