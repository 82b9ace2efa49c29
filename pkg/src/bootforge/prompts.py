"""Byte-exact prompt assembly, feedback rendering and completion parsing.

The few-shot blocks live as golden files under ``bootforge/goldens/`` and are
never re-wrapped or re-indented; prompt assembly only concatenates. The exact
feedback template bytes are documented in ``docs/feedback-templates.md``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

from .asserts import AssertionParseError, derive_call_expression  # noqa: F401
from .executor import ExecutionOutcome
from .tasks import MBPP, Task

PLAIN = "plain"
SIMPLE_FEEDBACK = "simple_feedback"
FULL_FEEDBACK = "full_feedback"
OBJECTIVES = (PLAIN, SIMPLE_FEEDBACK, FULL_FEEDBACK)

_GOLDEN_FILES = {PLAIN: "plain.txt", SIMPLE_FEEDBACK: "simple.txt", FULL_FEEDBACK: "full.txt"}

ANSWER_CUE = "[ANSWER]\n"
DONE_SENTINEL = "[DONE]"

DEFAULT_PROMPT_BUDGET = 600
DEFAULT_GENERATION_BUDGET = 512


class PromptBudgetError(Exception):
    """The non-removable part of a prompt alone exceeds the token budget."""


def load_golden(objective: str) -> str:
    """The few-shot block for an MBPP objective, byte-for-byte."""
    name = _GOLDEN_FILES[objective]
    return resources.files("bootforge").joinpath("goldens", name).read_text(encoding="utf-8")


class WhitespaceTokenCounter:
    """Tokenizer stand-in: whitespace-delimited units times 1.3, rounded up.

    Real runs can substitute a counter backed by the generator service's
    /count_tokens endpoint; anything with a ``count(text) -> int`` works.
    """

    ratio = 1.3

    def count(self, text: str) -> int:
        units = len(text.split())
        return math.ceil(units * self.ratio)


DEFAULT_COUNTER = WhitespaceTokenCounter()


@dataclass(frozen=True)
class PromptText:
    text: str
    token_count: int
    truncated: bool = False
    truncation_side: str = "none"  # left | right | none
    flags: tuple[str, ...] = ()


def _unit_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in re.finditer(r"\S+", text)]


def _truncate(removable: str, protected: str, budget, counter, side: str) -> tuple[str, bool]:
    """Drop whole whitespace units from one side of ``removable`` until
    ``removable + protected`` (left) / ``protected-prefix semantics`` fits.

    For side="left" the kept text is ``removable[i:] + protected``; for
    side="right" it is ``removable[:j] + protected`` with units dropped off
    the right end of ``removable``. ``protected`` is never touched.
    """
    if side == "left":
        def kept(cut: int) -> str:
            return removable[cut:] + protected
    else:
        def kept(cut: int) -> str:
            return removable[:cut] + protected

    full = kept(0 if side == "left" else len(removable))
    if budget is None or budget == math.inf or counter.count(full) <= budget:
        return full, False
    if counter.count(protected) > budget:
        raise PromptBudgetError(
            f"budget {budget} is smaller than the non-removable prompt part "
            f"({counter.count(protected)} tokens)")

    spans = _unit_spans(removable)
    if side == "left":
        cuts = [s for s, _ in spans] + [len(removable)]
        lo, hi = 0, len(cuts) - 1  # find smallest index that fits
        while lo < hi:
            mid = (lo + hi) // 2
            if counter.count(kept(cuts[mid])) <= budget:
                hi = mid
            else:
                lo = mid + 1
        return kept(cuts[lo]), True
    cuts = [0] + [e for _, e in spans]
    lo, hi = 0, len(cuts) - 1  # find largest index that fits
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.count(kept(cuts[mid])) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return kept(cuts[lo]), True


def _mbpp_task_block(task: Task) -> str:
    return (f"{task.description}\n\nYour code should pass these tests:\n"
            f"{task.first_assertion}\n\n{ANSWER_CUE}")


def _apps_statement(task: Task) -> tuple[str, str]:
    directive = ("Use Call-Based Format" if task.io_mode.kind == "call_based"
                 else "Use Standard Input Format")
    body = f"Question:\n{task.description}"
    tail = f"\n\n{directive}\n\n{ANSWER_CUE}"
    return body, tail


def build_first_prompt(task: Task, objective: str, budget=DEFAULT_PROMPT_BUDGET,
                       counter=DEFAULT_COUNTER) -> PromptText:
    """Assemble the first-pass prompt.

    MBPP: objective-specific few-shot block plus the task block, truncating
    the few-shot side from the LEFT. APPS: no few-shot block, statement plus
    format directive, truncating the statement from the RIGHT.
    """
    if task.source == MBPP:
        block = _mbpp_task_block(task)
        text, truncated = _truncate(load_golden(objective), block, budget, counter, "left")
        side = "left" if truncated else "none"
    else:
        body, tail = _apps_statement(task)
        text, truncated = _truncate(body, tail, budget, counter, "right")
        side = "right" if truncated else "none"
    return PromptText(text=text, token_count=counter.count(text),
                      truncated=truncated, truncation_side=side)


def answer_block(code: str) -> str:
    return f"{code}\n{DONE_SENTINEL}"


def build_repair_prompt(first_prompt: PromptText | str, previous_code: str,
                        feedback: "FeedbackMessage", budget=DEFAULT_PROMPT_BUDGET,
                        counter=DEFAULT_COUNTER) -> PromptText:
    """Append the previous answer and its feedback, then re-cue an answer.

    Repair prompts truncate LEFT for both datasets; the trailing answer cue
    is never removed.
    """
    if feedback.kind == "correct":
        raise ValueError("repair prompt requested for a passing outcome")
    base = first_prompt.text if isinstance(first_prompt, PromptText) else first_prompt
    flags = ()
    if not previous_code.strip():
        flags = ("empty_previous_code",)
    removable = f"{base}{answer_block(previous_code)}\n\n{feedback.text}\n\n"
    text, truncated = _truncate(removable, ANSWER_CUE, budget, counter, "left")
    return PromptText(text=text, token_count=counter.count(text),
                      truncated=truncated,
                      truncation_side="left" if truncated else "none",
                      flags=flags)


# ---------------------------------------------------------------------------
# Feedback rendering

@dataclass(frozen=True)
class FeedbackMessage:
    text: str
    kind: str  # simple | assertion_mismatch | error_report | output_mismatch
               # | hidden_only_failure | correct
    flags: tuple[str, ...] = ()


FEEDBACK_CORRECT = "Feedback: The code above is correct."
FEEDBACK_SIMPLE = "Feedback: The code above is wrong. Please fix it."
FEEDBACK_APPS_MISMATCH = "Feedback: OutputMismatchError: The code does not pass the test. Please fix it."

_MBPP_MISMATCH = ('Feedback: With the above function, {call} == {produced}. '
                  'The assertion is "{assertion}". So the code does not pass the assertion. '
                  'Please fix it.')
_MBPP_HIDDEN_ONLY = ('Feedback: With the above function, {call} == {produced}. '
                     'The assertion is "{assertion}". So the code passes the assertion. '
                     'However, the code above is wrong. Please fix it.')
_MBPP_ERROR = ('Feedback: With the above function, {call} returns the following error:\n'
               '"""\n{kind}: {message}\n"""\n'
               'So the code does not pass the assertion. Please fix it.')
_APPS_ERROR = ('Feedback: With the above code, we get the following error:\n'
               '"""\n{kind}: {message}\n"""\n'
               'So the code does not pass the test. Please fix it.')

_MISMATCH_KINDS = (None, "OutputMismatchError", "AssertionFailure")


def _error_slots(outcome: ExecutionOutcome) -> tuple[str, str]:
    if outcome.error == "Timeout":
        return "TimeoutError", "the function was terminated due to timeout"
    return outcome.error or "RuntimeError", outcome.error_message


def render_feedback(task: Task, outcome: ExecutionOutcome, objective: str) -> FeedbackMessage:
    """Choose and fill the feedback template for one execution outcome."""
    if outcome.passed:
        return FeedbackMessage(text=FEEDBACK_CORRECT, kind="correct")
    if objective != FULL_FEEDBACK:
        return FeedbackMessage(text=FEEDBACK_SIMPLE, kind="simple")

    if task.source != MBPP:
        if outcome.error in _MISMATCH_KINDS:
            return FeedbackMessage(text=FEEDBACK_APPS_MISMATCH, kind="output_mismatch")
        kind, message = _error_slots(outcome)
        return FeedbackMessage(text=_APPS_ERROR.format(kind=kind, message=message),
                               kind="error_report")

    assertion = task.first_assertion
    try:
        call, expected = derive_call_expression(assertion)
    except AssertionParseError:
        return FeedbackMessage(text=FEEDBACK_SIMPLE, kind="simple",
                               flags=("unparseable_assertion",))

    if outcome.visible_passed and not outcome.passed:
        produced = outcome.produced_output if outcome.produced_output is not None else expected
        return FeedbackMessage(
            text=_MBPP_HIDDEN_ONLY.format(call=call, produced=produced, assertion=assertion),
            kind="hidden_only_failure")
    if outcome.error not in _MISMATCH_KINDS:
        kind, message = _error_slots(outcome)
        return FeedbackMessage(text=_MBPP_ERROR.format(call=call, kind=kind, message=message),
                               kind="error_report")
    if outcome.produced_output is None:
        return FeedbackMessage(text=FEEDBACK_SIMPLE, kind="simple",
                               flags=("missing_produced_output",))
    return FeedbackMessage(
        text=_MBPP_MISMATCH.format(call=call, produced=outcome.produced_output,
                                   assertion=assertion),
        kind="assertion_mismatch")


# ---------------------------------------------------------------------------
# Completion parsing

@dataclass(frozen=True)
class ParsedCompletion:
    code: str
    complete: bool  # whether the sentinel was present


def parse_completion(raw: str) -> ParsedCompletion:
    """Code before the first ``[DONE]``; the whole completion (flagged) if
    the sentinel never appears."""
    idx = raw.find(DONE_SENTINEL)
    if idx == -1:
        code, complete = raw, False
    else:
        code, complete = raw[:idx], True
    if code.startswith("\n"):
        code = code[1:]
    if code.endswith("\n"):
        code = code[:-1]
    return ParsedCompletion(code=code, complete=complete)
