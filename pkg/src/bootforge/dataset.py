"""Corpus ingestion, example-test extraction, ground-truth normalization and
the dataset-integrity audits.

Two corpus shapes are understood:

* MBPP: a JSONL file, one record per task with
  ``{"task_id": int, "text": str, "code": str, "test_list": [str, ...],
  "split": "train|validation|test|fewshot"}``. The split field may be
  omitted, in which case the canonical id ranges are used
  (1-10 fewshot, 11-510 test, 511-600 validation, 601-974 train).
* APPS: either a directory with ``train/`` and ``test/`` subdirectories of
  per-task folders (``question.txt``, ``solutions.json``,
  ``input_output.json``, optional ``metadata.json``) or a consolidated JSONL
  with the same fields.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .asserts import called_function_name
from .tasks import (
    APPS,
    MBPP,
    IngestError,
    IntegrityError,
    IOMode,
    Task,
    TaskSet,
    TestCase,
    TestSuite,
)

MBPP_SPLIT_COUNTS = {"train": 374, "validation": 90, "test": 500, "fewshot": 10}
MBPP_TOTAL = 974


def _canonical_mbpp_split(task_id: int) -> str:
    if 1 <= task_id <= 10:
        return "fewshot"
    if 11 <= task_id <= 510:
        return "test"
    if 511 <= task_id <= 600:
        return "validation"
    return "train"


def load_mbpp(path: str | Path) -> TaskSet:
    """Load an MBPP-shaped JSONL file into a TaskSet.

    A full 974-record corpus must partition 374/90/500/10; smaller fixture
    files are accepted as-is.
    """
    path = Path(path)
    tasks = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: malformed JSON record: {exc}") from exc
            try:
                task_id = int(record["task_id"])
                text = record["text"]
                code = record["code"]
                test_list = record["test_list"]
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: missing or invalid field: {exc}") from exc
            split = record.get("split") or _canonical_mbpp_split(task_id)
            asserts = tuple(TestCase.assertion(t) for t in test_list)
            normalized, warned = reindent(code)
            tasks.append(Task(
                id=str(task_id),
                source=MBPP,
                split=split,
                description=text,
                io_mode=IOMode.call_based(called_function_name(asserts[0].source_text) if asserts else None),
                example_tests=TestSuite(asserts[:1]),
                hidden_tests=TestSuite(asserts),
                ground_truth=(normalized,),
                indent_warning=warned,
            ))
    if not tasks:
        raise IngestError(f"{path}: no records")
    taskset = TaskSet(tasks=tuple(tasks), source=MBPP)
    if len(tasks) == MBPP_TOTAL:
        counts = taskset.counts()
        if counts != MBPP_SPLIT_COUNTS:
            raise IntegrityError(
                f"MBPP split counts {counts} do not match expected {MBPP_SPLIT_COUNTS}")
    return taskset


# ---------------------------------------------------------------------------
# APPS


def _coerce_text(value) -> str:
    return value if isinstance(value, str) else repr(value)


def _build_apps_suite(io_obj: dict) -> tuple[TestSuite, IOMode]:
    inputs = io_obj.get("inputs", [])
    outputs = io_obj.get("outputs", [])
    if len(inputs) != len(outputs):
        raise ValueError(f"inputs/outputs length mismatch ({len(inputs)}/{len(outputs)})")
    if "fn_name" in io_obj and io_obj["fn_name"]:
        mode = IOMode.call_based(io_obj["fn_name"])
        cases = tuple(TestCase.call(repr(i), repr(o)) for i, o in zip(inputs, outputs))
    else:
        mode = IOMode.standard_input()
        cases = tuple(TestCase.io_pair(_coerce_text(i), _coerce_text(o))
                      for i, o in zip(inputs, outputs))
    return TestSuite(cases), mode


def _apps_records_from_dir(root: Path):
    for split_name, split in (("train", "train"), ("test", "test")):
        split_dir = root / split_name
        if not split_dir.is_dir():
            continue
        for task_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            record = {"id": task_dir.name, "split": split}
            question = task_dir / "question.txt"
            if question.exists():
                record["question"] = question.read_text(encoding="utf-8")
            solutions = task_dir / "solutions.json"
            if solutions.exists():
                record["solutions"] = json.loads(solutions.read_text(encoding="utf-8"))
            io_file = task_dir / "input_output.json"
            if io_file.exists():
                record["input_output"] = json.loads(io_file.read_text(encoding="utf-8"))
            meta = task_dir / "metadata.json"
            if meta.exists():
                record["difficulty"] = json.loads(meta.read_text(encoding="utf-8")).get("difficulty")
            yield record


def _apps_records_from_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: malformed JSON record: {exc}") from exc


def load_apps(path: str | Path, validation_size: int = 598, seed: int = 0,
              strip_train_examples: bool = True,
              test_requires_examples: bool = False) -> TaskSet:
    """Load an APPS-shaped corpus.

    ``validation_size`` tasks are carved out of the train split with the given
    seed. Only the first ground-truth solution is kept per task. Tasks whose
    input/output specification cannot be parsed are quarantined, not fatal.
    """
    path = Path(path)
    records = _apps_records_from_dir(path) if path.is_dir() else _apps_records_from_jsonl(path)

    tasks: list[Task] = []
    quarantined: list[tuple[str, str]] = []
    for record in records:
        task_id = str(record.get("id", len(tasks)))
        split = record.get("split", "train")
        question = record.get("question")
        if question is None:
            quarantined.append((task_id, "missing question"))
            continue
        solutions = record.get("solutions") or []
        if isinstance(solutions, str):
            try:
                solutions = json.loads(solutions)
            except json.JSONDecodeError:
                solutions = []
        if split == "train" and not solutions:
            raise IntegrityError(f"APPS train task {task_id} has no solutions")
        io_obj = record.get("input_output") or {}
        if isinstance(io_obj, str):
            try:
                io_obj = json.loads(io_obj)
            except json.JSONDecodeError:
                quarantined.append((task_id, "unparseable input_output"))
                continue
        try:
            hidden, mode = _build_apps_suite(io_obj)
        except (ValueError, TypeError) as exc:
            quarantined.append((task_id, f"unparseable io mode: {exc}"))
            continue
        ground_truth = ()
        warned = False
        if solutions:
            normalized, warned = reindent(str(solutions[0]))
            ground_truth = (normalized,)
        task = Task(
            id=task_id,
            source=APPS,
            split=split,
            description=question,
            io_mode=mode,
            example_tests=extract_example_tests(question),
            hidden_tests=hidden,
            ground_truth=ground_truth,
            difficulty=record.get("difficulty"),
            indent_warning=warned,
        )
        tasks.append(task)

    train = [t for t in tasks if t.split == "train"]
    rest = [t for t in tasks if t.split != "train"]
    if validation_size > len(train):
        raise IntegrityError(
            f"validation_size {validation_size} exceeds train size {len(train)}")
    rng = random.Random(seed)
    validation_ids = set(rng.sample(sorted(t.id for t in train), validation_size))

    out: list[Task] = []
    for t in tasks:
        if t.split == "train" and t.id in validation_ids:
            t = dataclasses.replace(t, split="validation")
        if strip_train_examples and t.split in ("train", "validation"):
            t = strip_example_tests(t)
        out.append(t)
    if test_requires_examples:
        out = [t for t in out if t.split != "test" or t.example_tests]
    return TaskSet(tasks=tuple(out), source=APPS, quarantined=tuple(quarantined))


# ---------------------------------------------------------------------------
# Example-test extraction

_EXAMPLE_HEADER = re.compile(r"^\s*Example\s*\d*\s*:?\s*$")
_INPUT_MARKER = re.compile(r"^(\s*)Input\s*:")
_OUTPUT_MARKER = re.compile(r"^(\s*)Output\s*:")


def _scan_example_blocks(description: str):
    """Yield ``(start_line, end_line, input_text, output_text)`` for each
    Input/Output block, in document order. Line ranges are inclusive and
    include a directly preceding ``Example N:`` header.
    """
    lines = description.split("\n")
    i = 0
    n = len(lines)
    while i < n:
        m = _INPUT_MARKER.match(lines[i])
        if not m:
            i += 1
            continue
        start = i
        j = i - 1
        while j >= 0 and not lines[j].strip():
            j -= 1
        if j >= 0 and _EXAMPLE_HEADER.match(lines[j]):
            start = j
        input_parts = [lines[i][m.end():]]
        i += 1
        while i < n and not _OUTPUT_MARKER.match(lines[i]) and lines[i].strip():
            input_parts.append(lines[i])
            i += 1
        if i >= n or not _OUTPUT_MARKER.match(lines[i]):
            continue  # Input without Output: not an example block
        om = _OUTPUT_MARKER.match(lines[i])
        output_parts = [lines[i][om.end():]]
        i += 1
        while i < n and lines[i].strip() and not _INPUT_MARKER.match(lines[i]) \
                and not _EXAMPLE_HEADER.match(lines[i]):
            output_parts.append(lines[i])
            i += 1
        end = i - 1
        input_text = "\n".join(input_parts) + "\n"
        output_text = "\n".join(output_parts) + "\n"
        yield start, end, input_text, output_text


def extract_example_tests(description: str) -> TestSuite:
    """Parse ``Input:``/``Output:`` blocks out of an APPS problem statement."""
    cases = tuple(TestCase.io_pair(inp, out)
                  for _, _, inp, out in _scan_example_blocks(description))
    return TestSuite(cases)


def strip_example_tests(task: Task) -> Task:
    """Remove example-test blocks from the prompt-facing description.

    Idempotent; the pre-strip description is kept on the task.
    """
    spans = [(s, e) for s, e, _, _ in _scan_example_blocks(task.description)]
    if not spans:
        if task.source == APPS and not task.examples_stripped:
            return task.with_description(task.description, stripped=True)
        return task
    lines = task.description.split("\n")
    drop = set()
    for s, e in spans:
        drop.update(range(s, e + 1))
        # also drop an orphaned Example header directly above the block
        j = s - 1
        while j >= 0 and not lines[j].strip():
            j -= 1
        if j >= 0 and _EXAMPLE_HEADER.match(lines[j]):
            drop.add(j)
    kept = [line for idx, line in enumerate(lines) if idx not in drop]
    # collapse runs of blank lines the removal left behind
    out_lines: list[str] = []
    for line in kept:
        if not line.strip() and out_lines and not out_lines[-1].strip():
            continue
        out_lines.append(line)
    return task.with_description("\n".join(out_lines), stripped=True)


# ---------------------------------------------------------------------------
# Ground-truth normalization

_TABSIZE = 4


def reindent(code: str) -> tuple[str, bool]:
    """Canonicalize leading whitespace to tab-based indentation levels.

    Returns the rewritten code and a flag that is true when the original
    indentation was ambiguous (a dedent to a depth never seen before).
    """
    out: list[str] = []
    widths = [0]
    warned = False
    for line in code.split("\n"):
        stripped = line.lstrip(" \t")
        if not stripped:
            out.append("")
            continue
        prefix = line[: len(line) - len(stripped)]
        width = len(prefix.expandtabs(_TABSIZE))
        if width > widths[-1]:
            widths.append(width)
        else:
            while widths and widths[-1] > width:
                widths.pop()
            if not widths or widths[-1] != width:
                warned = True
                widths = widths or [0]
                if widths[-1] != width:
                    widths.append(width)
        depth = len(widths) - 1
        out.append("\t" * depth + stripped)
    return "\n".join(out), warned


def normalize_ground_truth(code: str) -> str:
    return reindent(code)[0]


# ---------------------------------------------------------------------------
# Audits

@dataclass(frozen=True)
class OverlapReport:
    total_with_examples: int
    exact_match_count: int
    matched_task_ids: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps({
            "total_with_examples": self.total_with_examples,
            "exact_match_count": self.exact_match_count,
            "matched_task_ids": list(self.matched_task_ids),
        }, indent=2)


@dataclass(frozen=True)
class GroundTruthAudit:
    example_pass_rate: float
    hidden_pass_rate: float
    per_task_failures: tuple[tuple[str, str], ...]

    def to_json(self) -> str:
        return json.dumps({
            "example_pass_rate": self.example_pass_rate,
            "hidden_pass_rate": self.hidden_pass_rate,
            "per_task_failures": [list(f) for f in self.per_task_failures],
        }, indent=2)


def _normalized_suite_bytes(suite: TestSuite) -> str:
    cases = []
    for c in suite:
        if c.kind == "io_pair":
            cases.append(TestCase.io_pair(c.input_text.strip(), c.expected_output_text.strip()))
        else:
            cases.append(c)
    return TestSuite(tuple(cases)).serialized()


def audit_overlap(taskset: TaskSet, splits: tuple[str, ...] = ("train", "validation"),
                  normalize_whitespace: bool = False) -> OverlapReport:
    """Count tasks whose example suite byte-equals their hidden suite."""
    matched = []
    total = 0
    for task in taskset:
        if task.split not in splits or not task.example_tests:
            continue
        total += 1
        if normalize_whitespace:
            same = (_normalized_suite_bytes(task.example_tests)
                    == _normalized_suite_bytes(task.hidden_tests))
        else:
            same = task.example_tests.serialized() == task.hidden_tests.serialized()
        if same:
            matched.append(task.id)
    return OverlapReport(total_with_examples=total,
                         exact_match_count=len(matched),
                         matched_task_ids=tuple(matched))


def audit_ground_truth(taskset: TaskSet, executor,
                       splits: tuple[str, ...] = ("train", "validation")) -> GroundTruthAudit:
    """Run solution #1 of each task against its example and hidden suites.

    ``executor`` is a :class:`bootforge.executor.SandboxExecutor`. Timeouts and
    crashes count as failures; the audit itself never aborts.
    """
    example_results: list[bool] = []
    hidden_results: list[bool] = []
    failures: list[tuple[str, str]] = []
    audited = [t for t in taskset if t.split in splits and t.ground_truth]
    example_tasks = [t for t in audited if t.example_tests]
    hidden_tasks = [t for t in audited if t.hidden_tests]

    outcomes = executor.run_batch(
        [(t, t.ground_truth[0]) for t in example_tasks], suite_attr="example_tests")
    for task, outcome in zip(example_tasks, outcomes):
        example_results.append(outcome.passed)
    outcomes = executor.run_batch(
        [(t, t.ground_truth[0]) for t in hidden_tasks], suite_attr="hidden_tests")
    for task, outcome in zip(hidden_tasks, outcomes):
        hidden_results.append(outcome.passed)
        if not outcome.passed:
            failures.append((task.id, outcome.error or "OutputMismatchError"))

    def rate(results: list[bool]) -> float:
        return (sum(results) / len(results)) if results else math.nan

    return GroundTruthAudit(example_pass_rate=rate(example_results),
                            hidden_pass_rate=rate(hidden_results),
                            per_task_failures=tuple(failures))
