import json

import pytest

from bootforge.dataset import normalize_ground_truth
from bootforge.executor import SandboxPolicy
from bootforge.tasks import APPS, MBPP, IOMode, Task, TestCase, TestSuite


@pytest.fixture
def policy():
    return SandboxPolicy(per_run_timeout=4.0)


def mbpp_task(task_id, fn_name, body="return a + b", asserts=None, split="train",
              description=None):
    """Hand-built MBPP-shaped task; ``body`` is the ground-truth function body."""
    asserts = asserts or [f"assert {fn_name}(1, 2) == 3", f"assert {fn_name}(0, 0) == 0"]
    code = f"def {fn_name}(a, b):\n    {body}"
    return Task(
        id=str(task_id), source=MBPP, split=split,
        description=description or f"Write a function {fn_name} that adds two numbers.",
        io_mode=IOMode.call_based(fn_name),
        example_tests=TestSuite((TestCase.assertion(asserts[0]),)),
        hidden_tests=TestSuite(tuple(TestCase.assertion(a) for a in asserts)),
        ground_truth=(normalize_ground_truth(code),),
    )


def stdin_task(task_id, io_pairs, split="train", description="Echo the input.",
               ground_truth="print(input())", example_pairs=None):
    """APPS-shaped stdin/stdout task."""
    return Task(
        id=str(task_id), source=APPS, split=split, description=description,
        io_mode=IOMode.standard_input(),
        example_tests=TestSuite(tuple(TestCase.io_pair(i, o)
                                      for i, o in (example_pairs or []))),
        hidden_tests=TestSuite(tuple(TestCase.io_pair(i, o) for i, o in io_pairs)),
        ground_truth=(normalize_ground_truth(ground_truth),),
    )


def partition_fixture():
    """12 MBPP-style tasks plus a mock script that sorts them deterministically:

    A (4 tasks): first attempt passes          -> kept
    B (4 tasks): first fails, repair passes    -> repaired
    C (4 tasks): first and repair both fail    -> corrected
    """
    a_ids = [f"{i}" for i in range(601, 605)]
    b_ids = [f"{i}" for i in range(605, 609)]
    c_ids = [f"{i}" for i in range(609, 613)]
    tasks = []
    rules = []
    for tid in a_ids + b_ids + c_ids:
        fn = f"fn{tid}"
        tasks.append(mbpp_task(tid, fn))
        good = f"def {fn}(a, b):\n    return a + b"
        bad = f"def {fn}(a, b):\n    return a - b"
        if tid in a_ids:
            rules.append({"match": fn, "first": good})
        elif tid in b_ids:
            rules.append({"match": fn, "first": bad, "repair": good})
        else:
            rules.append({"match": fn, "first": bad, "repair": bad})
    script = {"default": "", "rules": rules}
    return tasks, script, a_ids, b_ids, c_ids


def write_mbpp_jsonl(path, ids, fn_prefix="add", broken=()):
    """Write a loader-consumable MBPP JSONL fixture; canonical split by id."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in ids:
            fn = f"{fn_prefix}{i}"
            op = "-" if i in broken else "+"
            fh.write(json.dumps({
                "task_id": i,
                "text": f"Write a function {fn} that adds two numbers.",
                "code": f"def {fn}(a, b):\n    return a {op} b",
                "test_list": [f"assert {fn}(1, 2) == 3",
                              f"assert {fn}(0, 5) == 5",
                              f"assert {fn}(-1, 1) == 0"],
            }) + "\n")
    return path
