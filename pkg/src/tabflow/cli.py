"""Command-line interface for the table reasoning engine.

Exit codes: 0 ok, 2 validation error, 3 backend error, 4 tool error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .backend import BackendError, ScriptedBackend
from .config import ConfigError, EngineConfig
from .corpus_filter import (
    FilterConfig,
    dump_corpus_jsonl,
    filter_dataset,
    load_corpus_jsonl,
)
from .grpo import GrpoConfig, group_advantages, grpo_objective, rollout_from_dict
from .orchestrator import (
    Mode,
    SessionInput,
    TableRef,
    TraceStatus,
    decode_answer,
    run_session,
    trace_to_dict,
)
from .preprocess import PreprocessError, TooSparse, load_merge_sidecar, preprocess
from .sandbox import SetupError
from .sensing import SensePolicy, metadata_to_dict, render_metadata, sense
from .synthesis import (
    Ineligible,
    RULE_SUBTASKS,
    is_complex_table,
    rule_generate_qa,
)
from .table import DecodeError, EmptyInput, check_collection_standards, parse_table, serialize_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_TOOL = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_table(path: Path, merges: Optional[Path] = None):
    data = path.read_bytes()
    fmt = "tsv" if path.suffix.lower() in (".tsv", ".tab") else "csv"
    merge_regions = load_merge_sidecar(merges) if merges else ()
    try:
        return parse_table(data, fmt, source_name=path.stem, merges=merge_regions), len(data)
    except (DecodeError, EmptyInput) as exc:
        _fail(EXIT_VALIDATION, str(exc))


@click.group()
def main() -> None:
    """Tool-integrated table reasoning engine."""


@main.command("preprocess")
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("--merges", type=click.Path(exists=True, path_type=Path), help="Merge sidecar JSON.")
@click.option("--out", type=click.Path(path_type=Path), help="Output CSV path (default: stdout).")
def preprocess_cmd(input_path: Path, merges: Optional[Path], out: Optional[Path]) -> None:
    """Clean a raw table; emits the processed CSV plus a provenance JSON."""
    raw, byte_size = _load_table(input_path, merges)
    report = check_collection_standards(raw, byte_size)
    if not report.passed:
        _fail(EXIT_VALIDATION, "collection standards violated: " + ", ".join(report.rule_ids()))
    try:
        processed = preprocess(raw)
    except TooSparse as exc:
        _fail(EXIT_VALIDATION, f"{exc.rule_id}: {exc}")
    except PreprocessError as exc:
        _fail(EXIT_VALIDATION, f"{exc.rule_id}: {exc}")
    csv_bytes = serialize_csv(processed)
    provenance = {
        "provenance": processed.provenance,
        "units": processed.units,
        "header": processed.header,
    }
    if out:
        out.write_bytes(csv_bytes)
        out.with_suffix(".provenance.json").write_text(
            json.dumps(provenance, indent=2), encoding="utf-8"
        )
        click.echo(f"wrote {out}")
    else:
        click.echo(csv_bytes.decode("utf-8"), nl=False)
        click.echo(json.dumps(provenance), err=True)


@main.command("sense")
@click.argument("csv_path", type=click.Path(exists=True, path_type=Path))
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of SENSE/1 text.")
@click.option("--seed", default=0, show_default=True)
@click.option("--stats", is_flag=True, help="Include min/max/mean for numeric columns.")
@click.option("--out", type=click.Path(path_type=Path),
              help="Write <out>.txt (SENSE/1) and <out>.json instead of printing.")
def sense_cmd(csv_path: Path, as_json: bool, seed: int, stats: bool, out: Optional[Path]) -> None:
    """Print table metadata (SENSE/1 text or JSON)."""
    raw, _ = _load_table(csv_path)
    try:
        processed = preprocess(raw)
    except PreprocessError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    meta = sense(processed, SensePolicy(seed=seed, include_stats=stats))
    if out is not None:
        out.with_suffix(".txt").write_text(render_metadata(meta), encoding="utf-8")
        out.with_suffix(".json").write_text(
            json.dumps(metadata_to_dict(meta), indent=2, ensure_ascii=False),
            encoding="utf-8",
        )
        click.echo(f"wrote {out.with_suffix('.txt')} and {out.with_suffix('.json')}")
    elif as_json:
        click.echo(json.dumps(metadata_to_dict(meta), indent=2, ensure_ascii=False))
    else:
        click.echo(render_metadata(meta), nl=False)


@main.command("ask")
@click.argument("csv_paths", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("-q", "--question", required=True)
@click.option("--mode", type=click.Choice(["tcot", "pot", "icot"]), default="icot", show_default=True)
@click.option("--max-steps", default=8, show_default=True)
@click.option("--backend-script", type=click.Path(exists=True, path_type=Path),
              help="Scripted mock backend (JSON with a responses list).")
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("session-out"),
              show_default=True, help="Where the trace JSON and SVG assets land.")
def ask_cmd(
    csv_paths: tuple[Path, ...],
    question: str,
    mode: str,
    max_steps: int,
    backend_script: Optional[Path],
    out_dir: Path,
) -> None:
    """Run a reasoning session over one or more tables and print the answer."""
    config = EngineConfig.from_env(backend_script=backend_script)
    refs = []
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in csv_paths:
        raw, _ = _load_table(path)
        try:
            processed = preprocess(raw)
        except PreprocessError as exc:
            _fail(EXIT_VALIDATION, f"{path}: {exc}")
        meta = sense(processed, SensePolicy(seed=0))
        csv_out = out_dir / f"{path.stem}.processed.csv"
        csv_out.write_bytes(serialize_csv(processed))
        refs.append(TableRef(name=path.stem, metadata=meta, csv_path=csv_out))
    try:
        backend = config.make_backend()
    except ConfigError as exc:
        _fail(EXIT_BACKEND, str(exc))
    try:
        tools = config.make_tools()
    except SetupError as exc:
        _fail(EXIT_TOOL, str(exc))
    session = SessionInput(
        query=question,
        tables=refs,
        mode=Mode(mode),
        max_steps=max_steps,
        artifact_dir=out_dir / "assets",
    )
    trace = run_session(session, backend, tools, profiles=config.make_profiles())
    (out_dir / "trace.json").write_text(
        json.dumps(trace_to_dict(trace, include_timing=True), indent=2, ensure_ascii=False),
        encoding="utf-8",
    )
    if trace.status is TraceStatus.BACKEND_FAILURE:
        _fail(EXIT_BACKEND, "backend failure (see trace.json)")
    if trace.status is TraceStatus.TOOL_FAILURE:
        _fail(EXIT_TOOL, "tool failure (see trace.json)")
    if trace.status is not TraceStatus.COMPLETED:
        _fail(EXIT_TOOL, f"session ended with {trace.status.value}")
    answer = decode_answer(trace)
    click.echo(f"Final Answer: {answer.text}")


@main.command("filter")
@click.argument("jsonl_path", type=click.Path(exists=True, path_type=Path))
@click.option("--judge-script", type=click.Path(exists=True, path_type=Path),
              help="Scripted judge backend; omit to skip the score filter.")
@click.option("--out", type=click.Path(path_type=Path), help="Retained-samples JSONL output.")
@click.option("--report", "report_path", type=click.Path(path_type=Path), help="Filter report JSON output.")
@click.option("--tau-tok", default=5, show_default=True)
@click.option("--tau-char", default=25, show_default=True)
@click.option("--ngram-n", default=10, show_default=True)
@click.option("--tau-dup", default=20, show_default=True)
@click.option("--tau-low", default=0.5, show_default=True)
@click.option("--tau-score", default=8.5, show_default=True)
def filter_cmd(
    jsonl_path: Path,
    judge_script: Optional[Path],
    out: Optional[Path],
    report_path: Optional[Path],
    tau_tok: int,
    tau_char: int,
    ngram_n: int,
    tau_dup: int,
    tau_low: float,
    tau_score: float,
) -> None:
    """Run the corpus quality filters over a CORPUS/1 JSONL file."""
    try:
        samples = load_corpus_jsonl(jsonl_path)
    except (ValueError, KeyError) as exc:
        _fail(EXIT_VALIDATION, f"bad corpus file: {exc}")
    judge = ScriptedBackend.from_file(judge_script) if judge_script else None
    config = FilterConfig(
        tau_tok=tau_tok, tau_char=tau_char, ngram_n=ngram_n,
        tau_dup=tau_dup, tau_low=tau_low, tau_score=tau_score,
    )
    try:
        retained, report = filter_dataset(samples, config, judge)
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    click.echo(json.dumps(report.counts, indent=2))
    if out:
        dump_corpus_jsonl(retained, out)
        click.echo(f"retained {len(retained)} samples -> {out}")
    if report_path:
        report_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")


@main.group("synth")
def synth_group() -> None:
    """Dataset synthesis commands."""


@synth_group.command("rule")
@click.argument("csv_path", type=click.Path(exists=True, path_type=Path))
@click.option("--subtask", type=click.Choice(RULE_SUBTASKS), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-n", "--count", default=1, show_default=True)
def synth_rule_cmd(csv_path: Path, subtask: str, seed: int, count: int) -> None:
    """Generate self-verifying QA pairs from rule templates."""
    raw, _ = _load_table(csv_path)
    try:
        processed = preprocess(raw)
        pairs = rule_generate_qa(processed, subtask, seed=seed, count=count)
    except Ineligible as exc:
        _fail(EXIT_VALIDATION, f"ineligible table: {exc}")
    except PreprocessError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    for qa in pairs:
        click.echo(json.dumps(
            {"subtask": qa.subtask, "question": qa.question, "answer": qa.answer,
             "program": qa.program},
            ensure_ascii=False,
        ))


@synth_group.command("complex")
@click.argument("csv_path", type=click.Path(exists=True, path_type=Path))
def synth_complex_cmd(csv_path: Path) -> None:
    """Check a table against the complex-table criteria."""
    raw, _ = _load_table(csv_path)
    try:
        processed = preprocess(raw)
    except PreprocessError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    report = is_complex_table(processed)
    click.echo(json.dumps({"complex": report.passed, "failures": report.failures}))
    if not report.passed:
        sys.exit(EXIT_OK)


@synth_group.command("llm")
@click.argument("csv_path", required=False, type=click.Path(exists=True, path_type=Path))
@click.option("--subtask", required=True)
@click.option("--backend-script", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--discriminator-script", "discriminator_scripts", multiple=True, required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Pass twice: one script per discriminator.")
def synth_llm_cmd(csv_path, subtask, backend_script, discriminator_scripts) -> None:
    """LLM-generated QA with dual-discriminator gating (mockable backends)."""
    from .corpus_filter import sample_to_dict
    from .synthesis import llm_generate_qa

    if len(discriminator_scripts) != 2:
        _fail(EXIT_VALIDATION, "exactly two --discriminator-script options required")
    processed = None
    if csv_path:
        raw, _ = _load_table(csv_path)
        try:
            processed = preprocess(raw)
        except PreprocessError as exc:
            _fail(EXIT_VALIDATION, str(exc))
    try:
        samples = llm_generate_qa(
            ScriptedBackend.from_file(backend_script),
            [ScriptedBackend.from_file(p) for p in discriminator_scripts],
            processed,
            subtask,
        )
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    for sample in samples:
        click.echo(json.dumps(sample_to_dict(sample), ensure_ascii=False))


@main.group("grpo")
def grpo_group() -> None:
    """Policy-optimization math."""


@grpo_group.command("eval")
@click.argument("rollouts_path", type=click.Path(exists=True, path_type=Path))
@click.option("--eps-low", default=0.2, show_default=True)
@click.option("--eps-high", default=0.2, show_default=True)
def grpo_eval_cmd(rollouts_path: Path, eps_low: float, eps_high: float) -> None:
    """Evaluate the clipped objective on rollouts from a JSON file."""
    try:
        raw = json.loads(rollouts_path.read_text(encoding="utf-8"))
        entries = raw["rollouts"] if isinstance(raw, dict) and "rollouts" in raw else [raw]
        cfg = GrpoConfig(eps_low=eps_low, eps_high=eps_high)
        results = []
        for entry in entries:
            rollout = rollout_from_dict(entry)
            advantages = group_advantages(rollout.rewards, cfg.std_epsilon)
            results.append(
                {
                    "objective": grpo_objective(rollout, advantages, cfg),
                    "advantages": [float(a) for a in advantages],
                }
            )
    except (KeyError, ValueError, TypeError) as exc:
        _fail(EXIT_VALIDATION, f"bad rollouts file: {exc}")
    click.echo(json.dumps({"results": results}, indent=2))


@main.command("serve")
@click.option("--port", default=8040, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(path_type=Path))
def serve_cmd(port: int, host: str, data_dir: Optional[Path]) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    config = EngineConfig.from_env(data_dir=data_dir)
    try:
        app = create_app(config)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
