"""Isolated execution of model-generated analysis code.

Each request runs in a fresh working directory through a configured
interpreter command, with tables exposed via TABLE_PATH_{i}/TABLE_NAMES
environment variables, wall-clock and memory limits, captured/truncated
output, and best-effort network blocking for the default Python runtime.
"""

from __future__ import annotations

import enum
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional


class SandboxError(Exception):
    pass


class SetupError(SandboxError):
    """Interpreter missing or not runnable."""


class ExecStatus(enum.Enum):
    OK = "ok"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    OUTPUT_TRUNCATED = "output_truncated"


@dataclass
class ExecRequest:
    code: str
    tables: Mapping[str, Path] = field(default_factory=dict)
    time_limit: float = 10.0
    memory_limit_mb: int = 512
    output_limit_kb: int = 64
    workdir: Optional[Path] = None

    def __post_init__(self) -> None:
        if not self.code:
            raise ValueError("code must be non-empty")
        if min(self.time_limit, self.memory_limit_mb, self.output_limit_kb) <= 0:
            raise ValueError("limits must be positive")


@dataclass
class ToolResult:
    status: ExecStatus
    stdout: str = ""
    stderr: str = ""
    duration: float = 0.0
    artifacts: list[str] = field(default_factory=list)
    workdir: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.status in (ExecStatus.OK, ExecStatus.OUTPUT_TRUNCATED)

    def feedback_text(self) -> str:
        """Rendering of the result sent back to the model."""
        lines = [f"status: {self.status.value}"]
        if self.stdout:
            lines.append("stdout:\n" + self.stdout.rstrip("\n"))
        if self.stderr:
            lines.append("stderr:\n" + self.stderr.rstrip("\n"))
        if self.artifacts:
            lines.append("artifacts: " + ", ".join(self.artifacts))
        return "\n".join(lines)


@dataclass
class HealthReport:
    ok: bool
    command: tuple[str, ...]
    version: str
    time_limit: float
    memory_limit_mb: int
    output_limit_kb: int
    network_blocked: bool
    message: str = ""


# Prepended to scripts when network blocking is on and the runtime is the
# bundled Python interpreter. One physical line, so user-code line numbers in
# tracebacks shift by exactly one.
_NO_NETWORK_PRELUDE = (
    'exec("import socket as _s\\n'
    "def _deny(*a, **k): raise OSError('network access is disabled in the sandbox')\\n"
    '_s.socket = _deny; _s.create_connection = _deny; _s.getaddrinfo = _deny\\n'
    'del _s, _deny")\n'
)

_TRUNCATION_MARKER = "\n...[truncated]"


def _truncate(text: str, limit_bytes: int) -> tuple[str, bool]:
    """Bound text to limit_bytes, marker included."""
    encoded = text.encode("utf-8", errors="replace")
    if len(encoded) <= limit_bytes:
        return text, False
    keep = max(limit_bytes - len(_TRUNCATION_MARKER.encode()), 0)
    clipped = encoded[:keep].decode("utf-8", errors="ignore")
    return clipped + _TRUNCATION_MARKER, True


@dataclass
class SandboxConfig:
    command: tuple[str, ...] = (sys.executable, "{script}")
    workdir_base: Optional[Path] = None
    grace: float = 0.5
    max_concurrent: int = max(os.cpu_count() or 1, 1)
    no_network: bool = True
    defaults: ExecRequest = None  # type: ignore[assignment]

    @classmethod
    def from_command_string(cls, command: str, **kwargs) -> "SandboxConfig":
        parts = tuple(command.split())
        if "{script}" not in parts:
            parts = parts + ("{script}",)
        return cls(command=parts, **kwargs)


class SandboxExecutor:
    """Thread-safe executor; a semaphore caps concurrent executions."""

    def __init__(self, config: SandboxConfig | None = None):
        self.config = config or SandboxConfig()
        self._semaphore = threading.BoundedSemaphore(self.config.max_concurrent)

    def execute(self, request: ExecRequest) -> ToolResult:
        """Run code in a fresh working directory and capture the outcome.

        Timeout sends SIGTERM to the process group, waits the grace period,
        then SIGKILLs. Files created under the working directory are reported
        as artifacts; the script itself is excluded.
        """
        with self._semaphore:
            return self._execute(request)

    def _execute(self, request: ExecRequest) -> ToolResult:
        for name, path in request.tables.items():
            if not Path(path).exists():
                raise SetupError(f"table file for {name!r} missing: {path}")
        base = request.workdir or self.config.workdir_base
        if base is not None:
            Path(base).mkdir(parents=True, exist_ok=True)
        workdir = Path(tempfile.mkdtemp(prefix="exec-", dir=base))
        script = workdir / "_analysis.py"
        prelude = ""
        if self.config.no_network and "python" in Path(self.config.command[0]).name:
            prelude = _NO_NETWORK_PRELUDE
        script.write_text(prelude + request.code, encoding="utf-8")
        argv = [
            part.replace("{script}", str(script)) for part in self.config.command
        ]
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "LANG": os.environ.get("LANG", "C.UTF-8"),
            "HOME": str(workdir),
            "TMPDIR": str(workdir),
            "PYTHONDONTWRITEBYTECODE": "1",
            "TABLE_NAMES": ",".join(request.tables),
        }
        for i, (name, path) in enumerate(request.tables.items()):
            env[f"TABLE_PATH_{i}"] = str(Path(path).resolve())
        limit_bytes = request.memory_limit_mb * 1024 * 1024

        def _limits() -> None:
            os.setsid()
            try:
                import resource

                resource.setrlimit(resource.RLIMIT_AS, (limit_bytes, limit_bytes))
                resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
            except Exception:
                pass

        started = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv,
                cwd=workdir,
                env=env,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                preexec_fn=_limits,
            )
        except FileNotFoundError as exc:
            shutil.rmtree(workdir, ignore_errors=True)
            raise SetupError(f"interpreter not found: {argv[0]}") from exc
        timed_out = False
        try:
            stdout, stderr = proc.communicate(timeout=request.time_limit)
        except subprocess.TimeoutExpired:
            timed_out = True
            self._kill_tree(proc)
            stdout, stderr = proc.communicate()
        duration = time.monotonic() - started
        out_limit = request.output_limit_kb * 1024
        stdout, out_cut = _truncate(stdout or "", out_limit)
        stderr, err_cut = _truncate(stderr or "", out_limit)
        artifacts = sorted(
            str(p.relative_to(workdir))
            for p in workdir.rglob("*")
            if p.is_file() and p != script
        )
        if timed_out:
            status = ExecStatus.TIMEOUT
        elif proc.returncode != 0:
            status = ExecStatus.RUNTIME_ERROR
        elif out_cut or err_cut:
            status = ExecStatus.OUTPUT_TRUNCATED
        else:
            status = ExecStatus.OK
        return ToolResult(
            status=status,
            stdout=stdout,
            stderr=stderr,
            duration=duration,
            artifacts=artifacts,
            workdir=workdir,
        )

    def _kill_tree(self, proc: subprocess.Popen) -> None:
        try:
            pgid = os.getpgid(proc.pid)
        except ProcessLookupError:
            return
        try:
            os.killpg(pgid, signal.SIGTERM)
        except ProcessLookupError:
            return
        deadline = time.monotonic() + self.config.grace
        while time.monotonic() < deadline:
            if proc.poll() is not None:
                return
            time.sleep(0.01)
        try:
            os.killpg(pgid, signal.SIGKILL)
        except ProcessLookupError:
            pass

    def health_check(self) -> HealthReport:
        """Run a no-op program and echo the effective configuration."""
        interpreter = self.config.command[0]
        if shutil.which(interpreter) is None and not Path(interpreter).exists():
            raise SetupError(f"interpreter not found: {interpreter}")
        version = ""
        try:
            probe = subprocess.run(
                [interpreter, "--version"], capture_output=True, text=True, timeout=10
            )
            version = (probe.stdout or probe.stderr).strip()
        except Exception:
            pass
        defaults = ExecRequest(code="pass")
        result = self.execute(ExecRequest(code="print('ok')", time_limit=10.0))
        ok = result.ok and result.stdout.strip() == "ok"
        return HealthReport(
            ok=ok,
            command=self.config.command,
            version=version,
            time_limit=defaults.time_limit,
            memory_limit_mb=defaults.memory_limit_mb,
            output_limit_kb=defaults.output_limit_kb,
            network_blocked=self.config.no_network,
            message="" if ok else result.feedback_text(),
        )
