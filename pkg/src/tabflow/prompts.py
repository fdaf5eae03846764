"""Prompt templates and profiles for the reasoning loop."""

from __future__ import annotations

from pathlib import Path

DEFAULT_SYSTEM = (
    "You are a careful data analysis assistant. You answer questions about "
    "tables precisely, ground every claim in the table content, and verify "
    "intermediate results before committing to an answer."
)

# Analysis guide injected into every session context.
ANALYSIS_GUIDE = """A good data analysis process may include:

### Understanding stage

1. Understand the table structure, such as the column name may have two rows, the last row is the summary, the last column is the summary, the last row is the dirty data, etc.

2. Understand the problem, such as when the problem is more abstract and vague, should be analyzed into a specific problems.

3. Understand the column meaning related to the problem, such as whether the column name represents the actual value or the ratio.

4. Identify special values in the table, such as columns and rows may have null values, special symbols, commas, etc.

### Solution stage

1. Sort out the solution ideas, such as how to clean the data and how to write the solution code.

2. Calculate the result by hand to judge whether the idea is correct, such as the proportion should not exceed 100%, otherwise the table understanding or problem understanding may be not in place.

3. Summarize the processing process and precautions, which is convenient for reference when writing code later.
"""

FINAL_ANSWER_MARKER = "Final Answer:"

TCOT_INSTRUCTIONS = (
    "Reason about the question step by step in plain text only. Do not use "
    "any tools. When you are confident, end your reply with a line starting "
    f"with '{FINAL_ANSWER_MARKER}' followed by the answer."
)

POT_INSTRUCTIONS = (
    "Solve the question by writing one Python program inside a fenced code "
    "block. The program runs in a sandbox where each table is available as a "
    "CSV file whose path is in the environment variable TABLE_PATH_{i} "
    "(TABLE_NAMES lists the logical names). Print the result. After you see "
    "the execution output, reply with a line starting with "
    f"'{FINAL_ANSWER_MARKER}' followed by the answer."
)

ICOT_INSTRUCTIONS = (
    "Work iteratively: alternate short thoughts with actions. To run code, "
    "emit a fenced code block; it executes in a sandbox where each table is "
    "a CSV file at the path in environment variable TABLE_PATH_{i} "
    "(TABLE_NAMES lists the logical names) and the execution output comes "
    "back to you. To draw a chart, emit a JSON object with "
    '"tool": "chart_tool", "type" (bar|line|pie|scatter), "title", '
    '"x_label", "y_label", and "series" (list of {name, x, y}). When done, '
    f"reply with a line starting with '{FINAL_ANSWER_MARKER}' followed by "
    "the answer."
)

# System text for sandbox-iterative answer generation sessions.
SYNTH_ANSWER_SYSTEM = (
    "You act as a data analysis assistant. First extract the core metadata "
    "of the target table (headers, data types, sample records), then solve "
    "the user question by generating Python code, executing it, and "
    "iterating on any errors until the result is reliable."
)

CRITIC_PROMPT = (
    "Review the following synthesized table question for clarity, logical "
    "consistency, and contextual alignment with the table context. Reply "
    "with 'PASS' or 'FAIL: <reason>'.\n\n"
    "Table context:\n{context}\n\nQuestion: {question}\nReasoning steps:\n{steps}\n"
)

QUESTION_SYNTH_PROMPT = (
    "You generate challenging multi-step table analysis questions.\n"
    "Table context:\n{context}\n\n"
    "Instruction: intent={q_type}, grounding={s_source}, objective={o_task}, "
    "answer format={y_format}.\n"
    "Propose one question plus the reasoning chain that solves it. Reply as "
    'JSON: {{"question": "...", "steps": ["...", "..."], "program": "..."}} '
    "where program is Python code that prints the answer when run with the "
    "table CSV path in environment variable TABLE_PATH_0."
)

QUESTION_REVISE_PROMPT = (
    "The reasoning chain has only {n_steps} steps; at least {s_min} are "
    "required. You are required to revise and elaborate the question and "
    "reasoning logic so the chain has at least {s_min} concrete steps. "
    "Reply in the same JSON format."
)

DISCRIMINATOR_PROMPT = (
    "Rate this generated QA sample on accuracy, relevance and coverage. "
    "Reply with exactly one word: 'perfect' if flawless on all three, "
    "otherwise 'imperfect'.\n\nQuestion: {question}\nAnswer: {answer}\n"
)


class PromptProfiles:
    """Named system-prompt profiles; extra profiles load from a directory of
    ``<name>.txt`` files."""

    def __init__(self, directory: str | Path | None = None):
        self._profiles: dict[str, str] = {"default": DEFAULT_SYSTEM}
        if directory is not None:
            directory = Path(directory)
            if directory.is_dir():
                for path in sorted(directory.glob("*.txt")):
                    self._profiles[path.stem] = path.read_text(encoding="utf-8").strip()

    def get(self, name: str) -> str:
        try:
            return self._profiles[name]
        except KeyError:
            raise KeyError(f"unknown prompt profile {name!r}") from None

    def register(self, name: str, text: str) -> None:
        self._profiles[name] = text
