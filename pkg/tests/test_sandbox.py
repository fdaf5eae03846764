import os
import threading
import time
from pathlib import Path

import pytest

from tabflow.sandbox import (
    ExecRequest,
    ExecStatus,
    SandboxConfig,
    SandboxExecutor,
    SetupError,
)


def snapshot(root: Path) -> dict:
    out = {}
    for path in root.rglob("*"):
        if path.is_file():
            stat = path.stat()
            out[str(path)] = (stat.st_size, stat.st_mtime_ns)
    return out


@pytest.fixture
def table_csv(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("a,b\n1,2\n3,4\n5,6\n", encoding="utf-8")
    return path


class TestExecute:
    def test_echo(self, executor):
        result = executor.execute(ExecRequest(code="print(42)"))
        assert result.status is ExecStatus.OK
        assert result.stdout == "42\n"

    def test_busy_loop_timeout_within_grace(self, executor):
        started = time.monotonic()
        result = executor.execute(ExecRequest(code="while True: pass", time_limit=2.0))
        wall = time.monotonic() - started
        assert result.status is ExecStatus.TIMEOUT
        assert 2.0 <= result.duration <= 2.5
        assert wall <= 3.5

    def test_env_var_table_handoff_row_count(self, executor, table_csv):
        code = (
            "import csv, os\n"
            'with open(os.environ["TABLE_PATH_0"], newline="") as f:\n'
            "    rows = list(csv.reader(f))\n"
            "print(len(rows) - 1)\n"
        )
        result = executor.execute(ExecRequest(code=code, tables={"rows": table_csv}))
        assert result.status is ExecStatus.OK
        assert result.stdout.strip() == "3"

    def test_table_names_env(self, executor, table_csv):
        code = 'import os; print(os.environ["TABLE_NAMES"])'
        result = executor.execute(ExecRequest(code=code, tables={"rows": table_csv}))
        assert result.stdout.strip() == "rows"

    def test_runtime_error_carries_stderr(self, executor):
        result = executor.execute(ExecRequest(code="raise ValueError('boom')"))
        assert result.status is ExecStatus.RUNTIME_ERROR
        assert "boom" in result.stderr

    def test_output_truncated(self, executor):
        result = executor.execute(
            ExecRequest(code="print('x' * 200000)", output_limit_kb=1)
        )
        assert result.status is ExecStatus.OUTPUT_TRUNCATED
        assert result.stdout.endswith("...[truncated]")
        assert len(result.stdout.encode()) <= 1024

    def test_artifacts_collected(self, executor):
        result = executor.execute(
            ExecRequest(code="open('out.txt', 'w').write('hi')\nprint('done')")
        )
        assert result.artifacts == ["out.txt"]

    def test_network_blocked(self, executor):
        code = "import socket\nsocket.create_connection(('93.184.216.34', 80), timeout=2)"
        result = executor.execute(ExecRequest(code=code))
        assert result.status is ExecStatus.RUNTIME_ERROR
        assert "network access is disabled" in result.stderr

    def test_deterministic_program_identical_stdout(self, executor):
        code = "print(sum(i * i for i in range(1000)))"
        first = executor.execute(ExecRequest(code=code))
        second = executor.execute(ExecRequest(code=code))
        assert first.stdout == second.stdout

    def test_missing_table_file_is_setup_error(self, executor):
        with pytest.raises(SetupError):
            executor.execute(ExecRequest(code="pass", tables={"x": Path("/no/such.csv")}))

    def test_empty_code_rejected(self):
        with pytest.raises(ValueError):
            ExecRequest(code="")


class TestConfinement:
    def test_writes_stay_inside_workdir(self, tmp_path, executor):
        monitored = tmp_path / "monitored"
        decoy = monitored / "decoys"
        decoy.mkdir(parents=True)
        (decoy / "precious.txt").write_text("untouched")
        work_base = monitored / "work"
        work_base.mkdir()
        before = snapshot(monitored)
        programs = [
            "open('relative.txt', 'w').write('x')",
            "import tempfile\nwith tempfile.NamedTemporaryFile(delete=False) as f:\n    f.write(b'y')",
            "import os\nopen(os.path.expanduser('~/home_file.txt'), 'w').write('z')",
            "import os\nos.makedirs('sub/dir')\nopen('sub/dir/deep.txt', 'w').write('w')",
        ]
        workdirs = []
        for code in programs:
            result = executor.execute(ExecRequest(code=code, workdir=work_base))
            assert result.status is ExecStatus.OK, result.stderr
            workdirs.append(result.workdir)
        after = snapshot(monitored)
        for path, meta in after.items():
            if path in before:
                assert before[path] == meta, f"{path} was modified"
            else:
                assert any(str(wd) in path for wd in workdirs), f"{path} escaped workdir"
        assert before["%s" % (decoy / "precious.txt")] == after[str(decoy / "precious.txt")]

    def test_two_executions_never_share_workdir(self, executor, tmp_path):
        results = []
        lock = threading.Lock()

        def run():
            result = executor.execute(
                ExecRequest(code="import os; print(os.getcwd())", workdir=tmp_path)
            )
            with lock:
                results.append(result)

        threads = [threading.Thread(target=run) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        cwds = [r.stdout.strip() for r in results]
        assert len(set(cwds)) == len(cwds)
        assert {r.workdir is not None for r in results} == {True}


class TestHealthCheck:
    def test_configured_runtime_ok(self, executor):
        report = executor.health_check()
        assert report.ok
        assert "Python" in report.version
        assert report.network_blocked

    def test_bogus_interpreter_is_setup_error(self):
        bad = SandboxExecutor(SandboxConfig(command=("/no/such/interp", "{script}")))
        with pytest.raises(SetupError):
            bad.health_check()

    def test_limit_echo_matches_defaults(self, executor):
        report = executor.health_check()
        defaults = ExecRequest(code="pass")
        assert report.time_limit == defaults.time_limit
        assert report.memory_limit_mb == defaults.memory_limit_mb
        assert report.output_limit_kb == defaults.output_limit_kb
