"""Splitting assert statements into a call expression and an expected value.

The feedback messages quote the call and the value it should produce, so the
split has to respect string literals and bracket nesting ("a==b" inside a
string argument must not be treated as the comparator).
"""

from __future__ import annotations

import re

_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")", "]", "}"}


class AssertionParseError(Exception):
    """The assert statement could not be split into call and expected value."""


def _strip_assert(text: str) -> str:
    body = text.strip()
    if not re.match(r"assert\b", body):
        raise AssertionParseError(f"not an assert statement: {text!r}")
    return body[len("assert"):].strip()


def split_top_level_eq(expr: str) -> tuple[str, str] | None:
    """Split ``expr`` on the first top-level ``==``; None when there is none."""
    depth = 0
    quote: str | None = None
    i = 0
    n = len(expr)
    while i < n:
        ch = expr[i]
        if quote is not None:
            if ch == "\\":
                i += 2
                continue
            if expr.startswith(quote, i):
                i += len(quote)
                quote = None
                continue
            i += 1
            continue
        if ch in ("'", '"'):
            for q in (ch * 3, ch):
                if expr.startswith(q, i):
                    quote = q
                    i += len(q)
                    break
            continue
        if ch in _OPENERS:
            depth += 1
        elif ch in _CLOSERS:
            depth -= 1
        elif depth == 0 and expr.startswith("==", i):
            prev = expr[i - 1] if i else ""
            nxt = expr[i + 2] if i + 2 < n else ""
            if prev not in "!<>=" and nxt != "=":
                return expr[:i].strip(), expr[i + 2:].strip()
            i += 2
            continue
        i += 1
    return None


def derive_call_expression(first_assert: str) -> tuple[str, str]:
    """Return ``(call_expr, expected_text)`` for a single assert statement.

    Comparator-free asserts (``assert flag()``) report "True" as the
    expected value.
    """
    body = _strip_assert(first_assert)
    if not body:
        raise AssertionParseError(f"empty assert body: {first_assert!r}")
    parts = split_top_level_eq(body)
    if parts is None:
        return body, "True"
    call_expr, expected = parts
    if not call_expr or not expected:
        raise AssertionParseError(f"degenerate comparison in: {first_assert!r}")
    return call_expr, expected


def called_function_name(first_assert: str) -> str | None:
    """Best-effort name of the function invoked by the visible assertion."""
    try:
        call_expr, _ = derive_call_expression(first_assert)
    except AssertionParseError:
        return None
    m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(", call_expr)
    return m.group(1) if m else None
