"""Sandboxed execution of candidate programs against test suites.

Every candidate runs in its own subject-interpreter process with a wall-clock
timeout, an address-space limit, a temp-dir working directory and a socket
guard. This is a research judge, not a multi-tenant one: process isolation
plus resource limits is the security boundary.
"""

from __future__ import annotations

import ast
import json
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .asserts import AssertionParseError, derive_call_expression
from .tasks import MBPP, IOMode, Task, TestSuite

# Error kinds are plain strings: the interpreter's exception class name, plus
# the harness-level "Timeout" and "OutputMismatchError". Unknown class names
# pass through unchanged (the OtherRuntime case).
KNOWN_ERROR_KINDS = frozenset({
    "SyntaxError", "IndentationError", "TypeError", "IndexError", "NameError",
    "RecursionError", "ModuleNotFoundError", "Timeout", "OutputMismatchError",
    "AssertionFailure",
})

DEFAULT_PREAMBLE_IMPORTS = (
    "math", "re", "itertools", "collections", "heapq", "bisect",
    "functools", "sys", "string",
)


def classify_error(exception_class: str, context: str = "runtime") -> str:
    """Map an exception class name plus harness context to an error kind."""
    if context == "timeout":
        return "Timeout"
    if context == "mismatch":
        return "OutputMismatchError"
    return exception_class


@dataclass(frozen=True)
class SandboxPolicy:
    per_run_timeout: float = 10.0
    memory_limit: int = 1_000_000_000
    preamble_imports: tuple[str, ...] = DEFAULT_PREAMBLE_IMPORTS
    compare_mode: str = "lenient"  # or "strict"
    subject_interpreter: str = sys.executable


@dataclass(frozen=True)
class ExecutionOutcome:
    passed: bool
    visible_passed: bool | None = None
    error: str | None = None
    error_message: str = ""
    produced_output: str | None = None
    expected_output: str | None = None
    per_test: tuple[tuple[int, str], ...] = ()
    wall_time: float = 0.0
    infrastructure: bool = False
    interpreter_version: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "visible_passed": self.visible_passed,
            "error": self.error,
            "error_message": self.error_message,
            "produced_output": self.produced_output,
            "expected_output": self.expected_output,
            "per_test": [list(t) for t in self.per_test],
            "wall_time": self.wall_time,
            "infrastructure": self.infrastructure,
            "interpreter_version": self.interpreter_version,
        }


_GUARD = """\
import socket as _socket
def _no_network(*args, **kwargs):
    raise OSError("network access is disabled in the sandbox")
_socket.socket = _no_network
_socket.create_connection = _no_network
"""

_MBPP_RUNNER = _GUARD + """
import json, sys

def main():
    with open(sys.argv[1]) as fh:
        payload = json.load(fh)
    result = {"definition_error": None, "tests": [], "produced": None}
    ns = {}
    try:
        exec(compile(payload["code"], "<candidate>", "exec"), ns)
    except BaseException as exc:
        result["definition_error"] = [type(exc).__name__, str(exc)]
    if result["definition_error"] is None:
        for src in payload["asserts"]:
            try:
                exec(compile(src, "<test>", "exec"), ns)
                result["tests"].append(["pass", "", ""])
            except AssertionError as exc:
                result["tests"].append(["fail", "AssertionError", str(exc)])
            except BaseException as exc:
                result["tests"].append(["error", type(exc).__name__, str(exc)])
        probe = payload.get("probe_expr")
        if probe:
            try:
                value = eval(compile(probe, "<probe>", "eval"), ns)
                result["produced"] = repr(value)
            except BaseException:
                pass
    with open(sys.argv[2], "w") as fh:
        json.dump(result, fh)

main()
"""

_CALL_RUNNER = _GUARD + """
import ast, json, sys

def _norm(value):
    if isinstance(value, tuple):
        return [_norm(v) for v in value]
    if isinstance(value, list):
        return [_norm(v) for v in value]
    return value

def main():
    with open(sys.argv[1]) as fh:
        payload = json.load(fh)
    result = {"definition_error": None, "tests": []}
    ns = {}
    try:
        exec(compile(payload["code"], "<candidate>", "exec"), ns)
    except BaseException as exc:
        result["definition_error"] = [type(exc).__name__, str(exc)]
    fn = None
    if result["definition_error"] is None:
        fn = ns.get(payload["fn_name"])
        if fn is None and "Solution" in ns:
            try:
                fn = getattr(ns["Solution"](), payload["fn_name"], None)
            except BaseException as exc:
                result["definition_error"] = [type(exc).__name__, str(exc)]
        if fn is None and result["definition_error"] is None:
            result["definition_error"] = [
                "NameError", "name %r is not defined" % payload["fn_name"]]
    if result["definition_error"] is None:
        for args_text, expected_text in payload["cases"]:
            try:
                args = ast.literal_eval(args_text)
                expected = ast.literal_eval(expected_text)
                value = fn(*args)
                if value == expected or _norm(value) == _norm(expected):
                    result["tests"].append(["pass", "", "", None])
                else:
                    result["tests"].append(["fail", "", "", repr(value)])
            except BaseException as exc:
                result["tests"].append(["error", type(exc).__name__, str(exc), None])
    with open(sys.argv[2], "w") as fh:
        json.dump(result, fh)

main()
"""


def _limit_resources(memory_limit: int):
    def apply():
        try:
            import resource
            resource.setrlimit(resource.RLIMIT_AS, (memory_limit, memory_limit))
        except (ImportError, ValueError, OSError):
            pass
    return apply


def _run_subprocess(argv, policy: SandboxPolicy, cwd: str, stdin_text: str | None = None,
                    timeout: float | None = None):
    return subprocess.run(
        argv,
        input=stdin_text,
        capture_output=True,
        text=True,
        cwd=cwd,
        timeout=timeout if timeout is not None else policy.per_run_timeout,
        preexec_fn=_limit_resources(policy.memory_limit),
        env={"PATH": os.environ.get("PATH", "")},
    )


def _runner_outcome(runner_source: str, payload: dict, policy: SandboxPolicy):
    """Run a runner script in the subject interpreter; return (result, wall, error).

    ``error`` is "timeout", "crash" or None; crash means no result file was
    produced (the candidate killed the interpreter).
    """
    with tempfile.TemporaryDirectory(prefix="bootforge_") as tmp:
        runner = os.path.join(tmp, "runner.py")
        payload_file = os.path.join(tmp, "payload.json")
        result_file = os.path.join(tmp, "result.json")
        with open(runner, "w") as fh:
            fh.write(runner_source)
        with open(payload_file, "w") as fh:
            json.dump(payload, fh)
        start = time.monotonic()
        try:
            _run_subprocess([policy.subject_interpreter, runner, payload_file, result_file],
                            policy, cwd=tmp)
        except subprocess.TimeoutExpired:
            return None, time.monotonic() - start, "timeout"
        wall = time.monotonic() - start
        if not os.path.exists(result_file):
            return None, wall, "crash"
        with open(result_file) as fh:
            return json.load(fh), wall, None


def run_mbpp(code: str, suite: TestSuite, policy: SandboxPolicy) -> ExecutionOutcome:
    """Execute an MBPP candidate against its assertion suite.

    The first assertion is the prompt-visible one; its call expression is
    re-evaluated to capture the produced value for feedback rendering.
    """
    asserts = [c.source_text for c in suite if c.kind == "assertion"]
    if not asserts:
        raise ValueError("MBPP suite has no assertions")
    probe_expr = expected_text = None
    try:
        probe_expr, expected_text = derive_call_expression(asserts[0])
    except AssertionParseError:
        pass
    payload = {"code": code, "asserts": asserts, "probe_expr": probe_expr}
    result, wall, harness_error = _runner_outcome(_MBPP_RUNNER, payload, policy)

    version = interpreter_version(policy)
    if harness_error == "timeout":
        return ExecutionOutcome(passed=False, visible_passed=False, error="Timeout",
                                error_message="execution exceeded the time limit",
                                expected_output=expected_text, wall_time=wall,
                                interpreter_version=version)
    if harness_error == "crash":
        return ExecutionOutcome(passed=False, visible_passed=False, error="ProcessExit",
                                error_message="the interpreter exited before reporting results",
                                expected_output=expected_text, wall_time=wall,
                                interpreter_version=version)

    if result["definition_error"]:
        name, message = result["definition_error"]
        return ExecutionOutcome(passed=False, visible_passed=False,
                                error=classify_error(name), error_message=message,
                                expected_output=expected_text, wall_time=wall,
                                interpreter_version=version)

    statuses = [t[0] for t in result["tests"]]
    per_test = tuple((i, s) for i, s in enumerate(statuses))
    passed = all(s == "pass" for s in statuses)
    visible_passed = statuses[0] == "pass" if statuses else False
    produced = result.get("produced")

    error = None
    message = ""
    if not passed:
        first_bad = next(i for i, s in enumerate(statuses) if s != "pass")
        status, name, msg = result["tests"][first_bad]
        if status == "error":
            error, message = classify_error(name), msg
        else:
            error, message = classify_error("", "mismatch"), "produced output does not match"
    return ExecutionOutcome(passed=passed, visible_passed=visible_passed,
                            error=error, error_message=message,
                            produced_output=produced, expected_output=expected_text,
                            per_test=per_test, wall_time=wall,
                            interpreter_version=version)


def _compare_stdout(produced: str, expected: str, mode: str) -> bool:
    if mode == "strict":
        return produced == expected
    def canon(text: str) -> list[str]:
        lines = [line.rstrip() for line in text.split("\n")]
        while lines and not lines[-1]:
            lines.pop()
        return lines
    return canon(produced) == canon(expected)


def run_apps(code: str, suite: TestSuite, io_mode: IOMode,
             policy: SandboxPolicy) -> ExecutionOutcome:
    """Execute an APPS candidate: stdin/stdout judging or call-based judging."""
    if not suite:
        raise ValueError("APPS suite is empty")
    preamble = "".join(f"import {m}\n" for m in policy.preamble_imports)
    version = interpreter_version(policy)

    if io_mode.kind == "call_based":
        payload = {
            "code": preamble + code,
            "fn_name": io_mode.fn_name or "",
            "cases": [[c.args_text, c.expected_value_text] for c in suite],
        }
        result, wall, harness_error = _runner_outcome(_CALL_RUNNER, payload, policy)
        if harness_error == "timeout":
            return ExecutionOutcome(passed=False, error="Timeout",
                                    error_message="execution exceeded the time limit",
                                    wall_time=wall, interpreter_version=version)
        if harness_error == "crash":
            return ExecutionOutcome(passed=False, error="ProcessExit",
                                    error_message="the interpreter exited before reporting results",
                                    wall_time=wall, interpreter_version=version)
        if result["definition_error"]:
            name, message = result["definition_error"]
            return ExecutionOutcome(passed=False, error=classify_error(name),
                                    error_message=message, wall_time=wall,
                                    interpreter_version=version)
        statuses = [t[0] for t in result["tests"]]
        per_test = tuple((i, s) for i, s in enumerate(statuses))
        passed = all(s == "pass" for s in statuses)
        error = None
        message = ""
        produced = expected = None
        if not passed:
            first_bad = next(i for i, s in enumerate(statuses) if s != "pass")
            status, name, msg, value_repr = result["tests"][first_bad]
            if status == "error":
                error, message = classify_error(name), msg
            else:
                error = classify_error("", "mismatch")
                produced = value_repr
                expected = suite.cases[first_bad].expected_value_text
        return ExecutionOutcome(passed=passed, error=error, error_message=message,
                                produced_output=produced, expected_output=expected,
                                per_test=per_test, wall_time=wall,
                                interpreter_version=version)

    # standard_input: one fresh process per io_pair case
    start = time.monotonic()
    per_test: list[tuple[int, str]] = []
    error = None
    message = ""
    produced = expected = None
    with tempfile.TemporaryDirectory(prefix="bootforge_") as tmp:
        program = os.path.join(tmp, "program.py")
        with open(program, "w") as fh:
            fh.write(_GUARD + preamble + code)
        for index, case in enumerate(suite):
            try:
                proc = _run_subprocess([policy.subject_interpreter, program], policy,
                                       cwd=tmp, stdin_text=case.input_text)
            except subprocess.TimeoutExpired:
                per_test.append((index, "error"))
                if error is None:
                    error, message = "Timeout", "execution exceeded the time limit"
                continue
            if proc.returncode != 0:
                per_test.append((index, "error"))
                if error is None:
                    error, message = _classify_stderr(proc.stderr)
                continue
            if _compare_stdout(proc.stdout, case.expected_output_text, policy.compare_mode):
                per_test.append((index, "pass"))
            else:
                per_test.append((index, "fail"))
                if error is None:
                    error = classify_error("", "mismatch")
                    message = "produced output does not match"
                    produced = proc.stdout
                    expected = case.expected_output_text
    wall = time.monotonic() - start
    passed = all(s == "pass" for _, s in per_test)
    return ExecutionOutcome(passed=passed, error=None if passed else error,
                            error_message="" if passed else message,
                            produced_output=produced, expected_output=expected,
                            per_test=tuple(per_test), wall_time=wall,
                            interpreter_version=version)


def _classify_stderr(stderr: str) -> tuple[str, str]:
    """Pull the exception class and message off a traceback's last line."""
    for line in reversed(stderr.strip().split("\n")):
        line = line.strip()
        if not line or line.startswith(("File ", "Traceback", "^")):
            continue
        name, sep, message = line.partition(":")
        if sep and name.replace(".", "").isidentifier():
            return classify_error(name.split(".")[-1]), message.strip()
        break
    return "ProcessExit", stderr.strip()[-200:]


_version_cache: dict[str, str] = {}


def interpreter_version(policy: SandboxPolicy) -> str:
    path = policy.subject_interpreter
    if path not in _version_cache:
        try:
            proc = subprocess.run([path, "--version"], capture_output=True, text=True,
                                  timeout=30)
            _version_cache[path] = (proc.stdout or proc.stderr).strip()
        except OSError:
            _version_cache[path] = "unknown"
    return _version_cache[path]


def run_task(task: Task, code: str, policy: SandboxPolicy,
             suite: TestSuite | None = None) -> ExecutionOutcome:
    """Judge ``code`` for ``task`` on its hidden tests (or an explicit suite)."""
    suite = suite if suite is not None else task.hidden_tests
    if task.source == MBPP:
        return run_mbpp(code, suite, policy)
    return run_apps(code, suite, task.io_mode, policy)


def run_batch(candidates: list[tuple[Task, str]], policy: SandboxPolicy,
              parallelism: int = 1, suite_attr: str = "hidden_tests") -> list[ExecutionOutcome]:
    """Judge candidates concurrently; outcomes come back in input order.

    Infrastructure failures abort only their own slot.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(item: tuple[Task, str]) -> ExecutionOutcome:
        task, code = item
        try:
            return run_task(task, code, policy, suite=getattr(task, suite_attr))
        except Exception as exc:  # spawn failures, bad suites
            return ExecutionOutcome(passed=False, error="Infrastructure",
                                    error_message=str(exc), infrastructure=True)

    if not candidates:
        return []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, candidates))


@dataclass
class SandboxExecutor:
    """Policy plus worker pool, bundled for callers that judge many candidates."""

    policy: SandboxPolicy = field(default_factory=SandboxPolicy)
    parallelism: int = 1

    def run(self, task: Task, code: str, suite: TestSuite | None = None) -> ExecutionOutcome:
        return run_task(task, code, self.policy, suite=suite)

    def run_batch(self, candidates: list[tuple[Task, str]],
                  suite_attr: str = "hidden_tests") -> list[ExecutionOutcome]:
        return run_batch(candidates, self.policy, self.parallelism, suite_attr=suite_attr)


def write_outcome_manifest(path, rows: list[dict]) -> None:
    """Serialize outcome rows (outcome dict + task id + attempt index) as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
