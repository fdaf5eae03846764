"""End-to-end demo: preprocess a noisy table, then run a scripted ICoT session.

Runs fully offline with a scripted backend; swap in a real endpoint by
exporting ENGINE_BACKEND_URL and dropping --mock (see README).
"""

import json
import tempfile
from pathlib import Path

from tabflow.backend import ScriptedBackend
from tabflow.orchestrator import (
    Mode,
    SessionInput,
    TableRef,
    ToolRegistry,
    run_session,
    trace_to_dict,
)
from tabflow.preprocess import preprocess
from tabflow.sandbox import SandboxExecutor
from tabflow.sensing import SensePolicy, render_metadata, sense
from tabflow.table import parse_table, serialize_csv

RAW_CSV = b"""quarter,revenue,margin
Q1,"$1,200",12%
Q2,"$1,350",14%
Q3,"$990",9%
note: unaudited figures,,
Q4,"$1,480",15%
"""

SCRIPT = [
    "I'll total the revenue column.\n"
    "```python\n"
    "import csv, os\n"
    'with open(os.environ["TABLE_PATH_0"], newline="") as f:\n'
    "    rows = list(csv.reader(f))[1:]\n"
    "print(int(sum(float(r[1]) for r in rows)))\n"
    "```",
    "Final Answer: 5020",
]


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="demo-"))
    raw = parse_table(RAW_CSV, source_name="quarters")
    table = preprocess(raw)
    print("# processed table")
    print(serialize_csv(table).decode(), end="")
    print("# units:", table.units, "\n")

    meta = sense(table, SensePolicy(seed=0))
    print("# sensed metadata")
    print(render_metadata(meta))

    csv_path = workdir / "quarters.csv"
    csv_path.write_bytes(serialize_csv(table))
    session = SessionInput(
        query="What is the total revenue across all four quarters?",
        tables=[TableRef(name="quarters", metadata=meta, csv_path=csv_path)],
        mode=Mode.ICOT,
        max_steps=4,
        artifact_dir=workdir / "assets",
    )
    trace = run_session(
        session, ScriptedBackend(list(SCRIPT)), ToolRegistry(sandbox=SandboxExecutor())
    )
    print("# trace")
    print(json.dumps(trace_to_dict(trace, include_timing=True), indent=2))
    print("\nstatus:", trace.status.value)
    print("answer:", trace.final.text if trace.final else None)


if __name__ == "__main__":
    main()
