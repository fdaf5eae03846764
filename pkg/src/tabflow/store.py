"""File-backed persistence: content-addressed tables and session records.

Tables live under ``<data_dir>/tables/<id>/`` (raw upload, processed CSV,
sensed metadata); sessions under ``<data_dir>/sessions/<id>/`` (record JSON
plus rendered assets). No database; records are plain JSON.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backend import ScriptedBackend
from .orchestrator import (
    ReasoningTrace,
    ToolRegistry,
    run_session,
    session_input_from_dict,
    trace_to_dict,
)
from .preprocess import PreprocessError, preprocess
from .prompts import PromptProfiles
from .sensing import SensePolicy, TableMetadata, metadata_from_dict, metadata_to_dict, sense
from .table import (
    MAX_TABLE_BYTES,
    QualityReport,
    parse_table,
    serialize_csv,
)


class StoreError(Exception):
    pass


class UnknownId(StoreError):
    pass


class TableRejected(StoreError):
    """Upload failed validation; carries the quality report or parse error."""

    def __init__(self, message: str, report: Optional[QualityReport] = None):
        super().__init__(message)
        self.report = report


@dataclass
class TableRecord:
    id: str
    name: str
    raw_path: Path
    processed_path: Path
    metadata: TableMetadata


class TableStore:
    def __init__(self, root: Path):
        self.root = Path(root) / "tables"
        self.root.mkdir(parents=True, exist_ok=True)

    def add(self, data: bytes, name: str, fmt: str = "csv") -> TableRecord:
        """Parse, gate, preprocess, and sense an uploaded table.

        The id is content-addressed (sha-256 of the upload), so re-uploading
        identical bytes lands on the same record.
        """
        if len(data) > MAX_TABLE_BYTES:
            raise TableRejected(f"upload is {len(data)} bytes, cap is {MAX_TABLE_BYTES}")
        from .table import DecodeError, EmptyInput, check_collection_standards

        try:
            raw = parse_table(data, fmt, source_name=name)
        except (DecodeError, EmptyInput) as exc:
            raise TableRejected(str(exc)) from exc
        report = check_collection_standards(raw, byte_size=len(data))
        if not report.passed:
            raise TableRejected(
                "collection standards violated: " + ", ".join(report.rule_ids()),
                report=report,
            )
        try:
            processed = preprocess(raw)
        except PreprocessError as exc:
            raise TableRejected(f"preprocess rejected table: {exc}") from exc
        metadata = sense(processed, SensePolicy(seed=0))
        table_id = hashlib.sha256(data).hexdigest()[:16]
        directory = self.root / table_id
        directory.mkdir(parents=True, exist_ok=True)
        raw_path = directory / "raw.csv"
        processed_path = directory / "processed.csv"
        raw_path.write_bytes(data)
        processed_path.write_bytes(serialize_csv(processed))
        (directory / "metadata.json").write_text(
            json.dumps(
                {
                    "name": name,
                    "metadata": metadata_to_dict(metadata),
                    "provenance": processed.provenance,
                },
                indent=2,
            ),
            encoding="utf-8",
        )
        return TableRecord(
            id=table_id,
            name=name,
            raw_path=raw_path,
            processed_path=processed_path,
            metadata=metadata,
        )

    def get(self, table_id: str) -> TableRecord:
        directory = self.root / table_id
        meta_path = directory / "metadata.json"
        if not meta_path.exists():
            raise UnknownId(f"unknown table id {table_id!r}")
        raw = json.loads(meta_path.read_text(encoding="utf-8"))
        return TableRecord(
            id=table_id,
            name=raw["name"],
            raw_path=directory / "raw.csv",
            processed_path=directory / "processed.csv",
            metadata=metadata_from_dict(raw["metadata"]),
        )


@dataclass
class SessionRecord:
    id: str
    created_at: str
    input: dict
    trace: dict
    artifacts: list[str] = field(default_factory=list)
    backend_script: Optional[dict] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at,
            "input": self.input,
            "trace": self.trace,
            "artifacts": self.artifacts,
            "backend_script": self.backend_script,
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionRecord":
        return cls(
            id=raw["id"],
            created_at=raw["created_at"],
            input=raw["input"],
            trace=raw["trace"],
            artifacts=list(raw.get("artifacts", [])),
            backend_script=raw.get("backend_script"),
            timings=raw.get("timings", {}),
        )


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root) / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)

    def new_id(self) -> str:
        return uuid.uuid4().hex[:16]

    def assets_dir(self, session_id: str) -> Path:
        directory = self.root / session_id / "assets"
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def record_from_trace(
        self,
        session_id: str,
        trace: ReasoningTrace,
        backend_script: Optional[dict] = None,
    ) -> SessionRecord:
        artifacts = []
        timings = {}
        for step in trace.steps:
            if step.tool_result is not None:
                timings[str(step.index)] = step.tool_result.duration
                # Chart assets land directly in the session assets dir; code
                # executions write inside their per-exec scratch subdirectory.
                prefix = f"sessions/{session_id}/assets"
                workdir = step.tool_result.workdir
                if workdir is not None:
                    prefix = f"{prefix}/{Path(workdir).name}"
                for name in step.tool_result.artifacts:
                    artifacts.append(f"{prefix}/{name}")
        return SessionRecord(
            id=session_id,
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            input=trace_to_dict(trace)["input"],
            trace=trace_to_dict(trace),
            artifacts=artifacts,
            backend_script=backend_script,
            timings=timings,
        )

    def save(self, record: SessionRecord) -> Path:
        directory = self.root / record.id
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "record.json"
        path.write_text(
            json.dumps(record.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )
        return path

    def get(self, session_id: str) -> SessionRecord:
        path = self.root / session_id / "record.json"
        if not path.exists():
            raise UnknownId(f"unknown session id {session_id!r}")
        return SessionRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def replay(
        self,
        record: SessionRecord,
        tools: ToolRegistry,
        profiles: Optional[PromptProfiles] = None,
    ) -> dict:
        """Re-run a persisted mock-backed session; returns the canonical trace
        dict, which must equal the stored one byte-for-byte when serialized."""
        if not record.backend_script:
            raise StoreError("session has no recorded backend script to replay")
        session = session_input_from_dict(record.input)
        session.artifact_dir = self.assets_dir(record.id + "-replay")
        backend = ScriptedBackend(responses=list(record.backend_script["responses"]))
        trace = run_session(session, backend, tools, profiles=profiles)
        return trace_to_dict(trace)
