"""Cross-module flows that single-module tests don't cover."""

import json
import threading
import time

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from tabflow.charttool import render, validate_call
from tabflow.cli import main as cli_main
from tabflow.config import EngineConfig
from tabflow.preprocess import preprocess
from tabflow.sensing import SensePolicy, render_metadata, sense
from tabflow.service import create_app
from tabflow.table import parse_table, serialize_csv


class TestUnicodePipeline:
    CSV = "城市,收入,备注\n北京,\"¥1,214\",稳定 📈\n上海,¥980,—\n".encode("utf-8")

    def test_parse_preprocess_sense_serialize(self):
        table = preprocess(parse_table(self.CSV, source_name="营收"))
        assert table.header == ["城市", "收入", "备注"]
        assert table.body[0][1] == 1214.0
        assert table.units[1] == "¥"
        assert table.body[1][2] is None  # em-dash missing marker
        meta = sense(table, SensePolicy(seed=0))
        rendered = render_metadata(meta)
        assert "城市" in rendered and "unit=¥" in rendered
        round_tripped = parse_table(serialize_csv(table))
        assert round_tripped.cells[0] == table.header

    def test_chart_escapes_unicode_and_markup(self):
        call = validate_call(
            {
                "type": "bar",
                "title": "收入 <b>&</b> 增长",
                "series": [{"x": ["北京", "上海"], "y": [1, 2]}],
            }
        )
        asset = render(call)
        assert "收入 &lt;b&gt;&amp;&lt;/b&gt; 增长" in asset.svg
        import xml.etree.ElementTree as ET

        ET.fromstring(asset.svg)


class TestConcurrentSessions:
    def test_parallel_sessions_all_complete(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(
            json.dumps(
                {"responses": ["```python\nprint('ok')\n```", "Final Answer: ok"]}
            )
        )
        config = EngineConfig(
            backend_script=script, data_dir=tmp_path / "data", max_sessions=8
        )
        with TestClient(create_app(config)) as client:
            upload = client.post(
                "/v1/tables",
                files={"file": ("t.csv", b"a,b\n1,2\n3,4\n", "text/csv")},
            )
            table_id = upload.json()["table_id"]
            session_ids = [
                client.post(
                    "/v1/sessions",
                    json={"table_ids": [table_id], "question": f"q{i}"},
                ).json()["session_id"]
                for i in range(3)
            ]
            deadline = time.monotonic() + 30
            done = {}
            while time.monotonic() < deadline and len(done) < len(session_ids):
                for sid in session_ids:
                    if sid in done:
                        continue
                    body = client.get(f"/v1/sessions/{sid}").json()
                    if body.get("status") != "running":
                        done[sid] = body
                time.sleep(0.05)
            assert len(done) == 3
            for body in done.values():
                assert body["trace"]["status"] == "completed"
                assert body["trace"]["final"]["text"] == "ok"


class TestMultiTableCli:
    def test_ask_with_two_tables(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("k,v\nx,1\ny,2\n")
        b.write_text("k,w\nx,10\ny,20\n")
        code = (
            "Joining both tables.\n```python\n"
            "import csv, os\n"
            "total = 0.0\n"
            "for var in ('TABLE_PATH_0', 'TABLE_PATH_1'):\n"
            "    with open(os.environ[var], newline='') as f:\n"
            "        rows = list(csv.reader(f))[1:]\n"
            "    total += sum(float(r[1]) for r in rows)\n"
            "print(int(total))\n```"
        )
        script = tmp_path / "script.json"
        script.write_text(json.dumps({"responses": [code, "Final Answer: 33"]}))
        result = CliRunner().invoke(
            cli_main,
            [
                "ask", str(a), str(b), "-q", "grand total?",
                "--backend-script", str(script),
                "--out-dir", str(tmp_path / "out"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "Final Answer: 33" in result.output
        trace = json.loads((tmp_path / "out" / "trace.json").read_text())
        assert trace["steps"][0]["tool_result"]["stdout"].strip() == "33"
        assert len(trace["input"]["tables"]) == 2
