"""Regenerates the rendered-template goldens from the raw template files.

Independent of the Rust renderer: splits each template on its `{}` / `{ }`
markers with a regex and interleaves the slot values.
"""
import json
import pathlib
import re

HERE = pathlib.Path(__file__).resolve().parent
TEMPLATES = HERE.parents[1] / "templates"
OUT = HERE / "rendered"

PAIRS = (
    "Question 1:\nfkrrvhg\nStrategy 1:\nStep 1: Find the shift.\nStep 2: Shift back.\n\n"
    "Question 2:\nqrfwxuq\nStrategy 2:\nStep 1: Try ROT-3 first."
)
QUESTIONS = "Question 1:\nfkrrvhg\n\nQuestion 2:\nqrfwxuq"
INSTRUCTION = "**Task Content**: Decode the word.\n**Operational Steps**:\n1. Shift each letter back."

CASES = {
    "strategy_design": ["Shift Cipher", "a single word", "fkrrvhg"],
    "induct_baseline": ["Shift Cipher", "a single lowercase word", QUESTIONS],
    "strategy_induction": ["Shift Cipher", "a single lowercase word", PAIRS],
    "inference_zcot": ["Shift Cipher", "a single lowercase word", "fkrrvhg"],
    "inference_scot": ["Shift Cipher", "a single lowercase word", "fkrrvhg"],
    "inference_induced": [INSTRUCTION, "a single lowercase word", "fkrrvhg"],
}

MARKER = re.compile(r"\{ ?\}")

for name, values in CASES.items():
    text = (TEMPLATES / f"{name}.txt").read_text(encoding="utf-8")
    parts = MARKER.split(text)
    assert len(parts) == len(values) + 1, name
    out = parts[0]
    for value, rest in zip(values, parts[1:]):
        out += value + rest
    (OUT / f"{name}.txt").write_text(out, encoding="utf-8")

(OUT / "cases.json").write_text(json.dumps(CASES, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
