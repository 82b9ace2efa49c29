"""Unified task model shared by the MBPP- and APPS-shaped corpora.

Everything here is an immutable value object; loaders in :mod:`bootforge.dataset`
produce them and the rest of the pipeline only reads them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

MBPP = "MBPP"
APPS = "APPS"

SPLITS = ("train", "validation", "test", "fewshot")
DIFFICULTIES = ("introductory", "interview", "competition")


class IngestError(Exception):
    """A corpus file could not be parsed into tasks."""


class IntegrityError(Exception):
    """The corpus parsed but violates a structural expectation."""


@dataclass(frozen=True)
class TestCase:
    """One test: an assertion, a stdin/stdout pair, or a function call."""

    kind: str  # "assertion" | "io_pair" | "call"
    source_text: str = ""          # assertion only
    input_text: str = ""           # io_pair only, stored byte-exactly
    expected_output_text: str = "" # io_pair only, stored byte-exactly
    args_text: str = ""            # call only, repr of the argument list
    expected_value_text: str = ""  # call only, repr of the expected value

    def __post_init__(self):
        if self.kind == "assertion" and not self.source_text.startswith("assert"):
            raise ValueError(f"assertion does not start with 'assert': {self.source_text!r}")

    @staticmethod
    def assertion(source_text: str) -> "TestCase":
        return TestCase(kind="assertion", source_text=source_text)

    @staticmethod
    def io_pair(input_text: str, expected_output_text: str) -> "TestCase":
        return TestCase(kind="io_pair", input_text=input_text,
                        expected_output_text=expected_output_text)

    @staticmethod
    def call(args_text: str, expected_value_text: str) -> "TestCase":
        return TestCase(kind="call", args_text=args_text,
                        expected_value_text=expected_value_text)


@dataclass(frozen=True)
class TestSuite:
    cases: tuple[TestCase, ...] = ()

    def __len__(self) -> int:
        return len(self.cases)

    def __bool__(self) -> bool:
        return bool(self.cases)

    def __iter__(self):
        return iter(self.cases)

    def serialized(self) -> str:
        """Canonical byte representation used for exact-overlap comparison."""
        if all(c.kind == "io_pair" for c in self.cases):
            payload = {
                "inputs": [c.input_text for c in self.cases],
                "outputs": [c.expected_output_text for c in self.cases],
            }
        elif all(c.kind == "call" for c in self.cases):
            payload = {
                "inputs": [c.args_text for c in self.cases],
                "outputs": [c.expected_value_text for c in self.cases],
            }
        else:
            payload = {"asserts": [c.source_text for c in self.cases]}
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class IOMode:
    kind: str  # "call_based" | "standard_input"
    fn_name: str | None = None

    @staticmethod
    def call_based(fn_name: str | None = None) -> "IOMode":
        return IOMode(kind="call_based", fn_name=fn_name)

    @staticmethod
    def standard_input() -> "IOMode":
        return IOMode(kind="standard_input")


@dataclass(frozen=True)
class Task:
    id: str
    source: str  # MBPP | APPS
    split: str
    description: str
    io_mode: IOMode
    example_tests: TestSuite = field(default_factory=TestSuite)
    hidden_tests: TestSuite = field(default_factory=TestSuite)
    ground_truth: tuple[str, ...] = ()
    difficulty: str | None = None
    examples_stripped: bool = False
    original_description: str | None = None
    indent_warning: bool = False

    @property
    def first_assertion(self) -> str:
        """The single prompt-visible MBPP assertion."""
        for case in self.hidden_tests:
            if case.kind == "assertion":
                return case.source_text
        raise ValueError(f"task {self.id} has no assertion tests")

    def with_description(self, description: str, *, stripped: bool = False) -> "Task":
        original = self.original_description
        if stripped and original is None:
            original = self.description
        return replace(self, description=description,
                       examples_stripped=self.examples_stripped or stripped,
                       original_description=original)


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[Task, ...]
    source: str
    quarantined: tuple[tuple[str, str], ...] = ()  # (task id, reason)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def split(self, name: str) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.split == name)

    def counts(self) -> dict[str, int]:
        return {name: len(self.split(name)) for name in SPLITS}

    def by_id(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)
