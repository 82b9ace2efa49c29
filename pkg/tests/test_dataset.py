import json

import pytest

from bootforge import dataset
from bootforge.executor import SandboxExecutor, SandboxPolicy
from bootforge.tasks import IngestError, IntegrityError, TaskSet, TestCase, TestSuite

from conftest import stdin_task, write_mbpp_jsonl


# ---------------------------------------------------------------------------
# MBPP loader

def test_load_mbpp_fixture(tmp_path):
    path = write_mbpp_jsonl(tmp_path / "mbpp.jsonl", [5, 100, 550, 700])
    ts = dataset.load_mbpp(path)
    assert ts.counts() == {"train": 1, "validation": 1, "test": 1, "fewshot": 1}
    assert ts.by_id("5").split == "fewshot"
    assert ts.by_id("100").split == "test"
    assert ts.by_id("550").split == "validation"
    assert ts.by_id("700").split == "train"


def test_mbpp_only_first_assert_is_visible(tmp_path):
    path = write_mbpp_jsonl(tmp_path / "mbpp.jsonl", [700])
    task = dataset.load_mbpp(path).by_id("700")
    assert len(task.hidden_tests) == 3
    assert len(task.example_tests) == 1
    assert task.first_assertion == task.example_tests.cases[0].source_text


def test_mbpp_ground_truth_is_normalized(tmp_path):
    path = tmp_path / "mbpp.jsonl"
    path.write_text(json.dumps({
        "task_id": 700, "text": "t",
        "code": "def f(a):\n        return a",
        "test_list": ["assert f(1) == 1"],
    }) + "\n", encoding="utf-8")
    task = dataset.load_mbpp(path).by_id("700")
    assert task.ground_truth[0] == "def f(a):\n\treturn a"


def test_mbpp_explicit_split_field_wins(tmp_path):
    path = tmp_path / "mbpp.jsonl"
    path.write_text(json.dumps({
        "task_id": 700, "text": "t", "code": "def f(a):\n    return a",
        "test_list": ["assert f(1) == 1"], "split": "test",
    }) + "\n", encoding="utf-8")
    assert dataset.load_mbpp(path).by_id("700").split == "test"


def test_mbpp_malformed_record_raises(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json}\n", encoding="utf-8")
    with pytest.raises(IngestError):
        dataset.load_mbpp(path)
    path.write_text(json.dumps({"task_id": 1, "text": "t"}) + "\n", encoding="utf-8")
    with pytest.raises(IngestError):
        dataset.load_mbpp(path)
    path.write_text("", encoding="utf-8")
    with pytest.raises(IngestError):
        dataset.load_mbpp(path)


def test_mbpp_full_corpus_must_partition_canonically(tmp_path):
    # 974 records but with a split field that breaks the canonical counts
    path = tmp_path / "mbpp.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(1, 975):
            fh.write(json.dumps({
                "task_id": i, "text": "t", "code": "def f(a):\n    return a",
                "test_list": ["assert f(1) == 1"],
                "split": "train" if i == 1 else None,
            }) + "\n")
    with pytest.raises(IntegrityError):
        dataset.load_mbpp(path)


# ---------------------------------------------------------------------------
# APPS loader

def write_apps_dir(root, train_specs, test_specs=()):
    """specs: list of (task_id, question, solutions, input_output)."""
    for split, specs in (("train", train_specs), ("test", test_specs)):
        for task_id, question, solutions, io_obj in specs:
            d = root / split / str(task_id)
            d.mkdir(parents=True)
            (d / "question.txt").write_text(question, encoding="utf-8")
            if solutions is not None:
                (d / "solutions.json").write_text(json.dumps(solutions), encoding="utf-8")
            if io_obj is not None:
                (d / "input_output.json").write_text(json.dumps(io_obj), encoding="utf-8")
    return root


QUESTION_WITH_EXAMPLE = """Given a number, print it doubled.

Example 1:

Input: 3
Output: 6

Constraints: small inputs only.
"""


def test_load_apps_dir(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0001", QUESTION_WITH_EXAMPLE, ["n = int(input())\nprint(2 * n)"],
         {"inputs": ["3\n", "5\n"], "outputs": ["6\n", "10\n"]}),
    ], test_specs=[
        ("2001", QUESTION_WITH_EXAMPLE, ["n = int(input())\nprint(2 * n)"],
         {"inputs": ["4\n"], "outputs": ["8\n"]}),
    ])
    ts = dataset.load_apps(tmp_path, validation_size=0)
    assert ts.source == "APPS"
    train = ts.by_id("0001")
    assert train.io_mode.kind == "standard_input"
    assert len(train.hidden_tests) == 2
    # examples are extracted from the statement, then stripped from it
    assert train.examples_stripped
    assert "Input:" not in train.description
    assert "Input:" in train.original_description
    assert len(train.example_tests) == 1
    assert train.example_tests.cases[0].input_text == " 3\n"
    # test-split statements keep their examples
    assert "Input:" in ts.by_id("2001").description


def test_apps_call_based_mode(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0002", "Implement solve(x) returning x + 1.",
         ["def solve(x):\n    return x + 1"],
         {"fn_name": "solve", "inputs": [[1], [2]], "outputs": [2, 3]}),
    ])
    task = dataset.load_apps(tmp_path, validation_size=0).by_id("0002")
    assert task.io_mode.kind == "call_based"
    assert task.io_mode.fn_name == "solve"
    case = task.hidden_tests.cases[0]
    assert case.kind == "call"
    assert case.args_text == "[1]"
    assert case.expected_value_text == "2"


def test_apps_train_without_solutions_is_fatal(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0003", "q", None, {"inputs": ["1\n"], "outputs": ["1\n"]}),
    ])
    with pytest.raises(IntegrityError):
        dataset.load_apps(tmp_path, validation_size=0)


def test_apps_unparseable_io_is_quarantined(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0004", "q", ["print(1)"], {"inputs": ["1\n"], "outputs": []}),
        ("0005", "q", ["print(1)"], {"inputs": ["1\n"], "outputs": ["1\n"]}),
    ])
    ts = dataset.load_apps(tmp_path, validation_size=0)
    assert [q[0] for q in ts.quarantined] == ["0004"]
    assert len(ts.tasks) == 1


def test_apps_validation_carveout_is_seeded(tmp_path):
    specs = [(f"{i:04d}", "q", ["print(1)"],
              {"inputs": ["1\n"], "outputs": ["1\n"]}) for i in range(10)]
    write_apps_dir(tmp_path, train_specs=specs)
    a = dataset.load_apps(tmp_path, validation_size=4, seed=7)
    b = dataset.load_apps(tmp_path, validation_size=4, seed=7)
    c = dataset.load_apps(tmp_path, validation_size=4, seed=8)
    ids = lambda ts: sorted(t.id for t in ts.split("validation"))
    assert ids(a) == ids(b)
    assert len(ids(a)) == 4
    assert ids(a) != ids(c)


def test_apps_validation_size_bounds(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0001", "q", ["print(1)"], {"inputs": ["1\n"], "outputs": ["1\n"]}),
    ])
    with pytest.raises(IntegrityError):
        dataset.load_apps(tmp_path, validation_size=5)


def test_apps_jsonl_shape(tmp_path):
    path = tmp_path / "apps.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "id": "7", "split": "train", "question": QUESTION_WITH_EXAMPLE,
            "solutions": ["n = int(input())\nprint(2 * n)"],
            "input_output": {"inputs": ["3\n"], "outputs": ["6\n"]},
        }) + "\n")
    ts = dataset.load_apps(path, validation_size=0)
    assert len(ts.tasks) == 1
    assert ts.by_id("7").examples_stripped


def test_apps_first_solution_only(tmp_path):
    write_apps_dir(tmp_path, train_specs=[
        ("0009", "q", ["print(1)", "print(2)"],
         {"inputs": [""], "outputs": ["1\n"]}),
    ])
    task = dataset.load_apps(tmp_path, validation_size=0).by_id("0009")
    assert task.ground_truth == ("print(1)",)


# ---------------------------------------------------------------------------
# Example extraction / stripping

def test_extract_example_tests_multi_line():
    desc = ("Sum the numbers.\n\nExample:\n\nInput: 2\n1 2\nOutput: 3\n\n"
            "Input: 1\n5\nOutput: 5\n\nNotes follow.")
    suite = dataset.extract_example_tests(desc)
    assert len(suite) == 2
    assert suite.cases[0].input_text == " 2\n1 2\n"
    assert suite.cases[0].expected_output_text == " 3\n"


def test_input_without_output_is_not_an_example():
    suite = dataset.extract_example_tests("Input: something\n\nNo output here.")
    assert len(suite) == 0


def test_strip_is_idempotent_and_keeps_original():
    task = stdin_task("1", [("1\n", "1\n")],
                      description=QUESTION_WITH_EXAMPLE)
    once = dataset.strip_example_tests(task)
    twice = dataset.strip_example_tests(once)
    assert once.description == twice.description
    assert "Input:" not in once.description
    assert "Example 1:" not in once.description
    assert "Constraints: small inputs only." in once.description
    assert once.original_description == QUESTION_WITH_EXAMPLE
    assert "\n\n\n" not in once.description


# ---------------------------------------------------------------------------
# reindent

def test_reindent_spaces_to_tabs():
    code = "def f(x):\n    if x:\n        return 1\n    return 0"
    out, warned = dataset.reindent(code)
    assert out == "def f(x):\n\tif x:\n\t\treturn 1\n\treturn 0"
    assert not warned


def test_reindent_mixed_widths():
    code = "def f(x):\n  if x:\n      return 1\n  return 0"
    out, warned = dataset.reindent(code)
    assert out == "def f(x):\n\tif x:\n\t\treturn 1\n\treturn 0"
    assert not warned


def test_reindent_ambiguous_dedent_warns():
    code = "def f(x):\n        if x:\n                return 1\n    return 0"
    out, warned = dataset.reindent(code)
    assert warned


def test_reindent_blank_lines_become_empty():
    out, _ = dataset.reindent("def f():\n    \n    return 1")
    assert out == "def f():\n\n\treturn 1"


def test_reindent_output_is_executable():
    code = "def f(x):\n    if x > 0:\n        return x\n    else:\n        return -x"
    out, _ = dataset.reindent(code)
    ns = {}
    exec(out, ns)
    assert ns["f"](-3) == 3


# ---------------------------------------------------------------------------
# Audits

def overlap_fixture():
    same = TestSuite((TestCase.io_pair("1\n", "2\n"),))
    different = TestSuite((TestCase.io_pair("9\n", "9\n"),))
    t1 = stdin_task("a", [("1\n", "2\n")], example_pairs=[("1\n", "2\n")])
    t2 = stdin_task("b", [("9\n", "9\n"), ("3\n", "3\n")],
                    example_pairs=[("9\n", "9\n")])
    t3 = stdin_task("c", [("5\n", "5\n")])  # no examples: excluded from denominator
    t4 = stdin_task("d", [("1\n", "2\n")], example_pairs=[("1\n", "2\n")], split="test")
    return TaskSet(tasks=(t1, t2, t3, t4), source="APPS")


def test_audit_overlap_counts_exact_suite_matches():
    report = dataset.audit_overlap(overlap_fixture())
    assert report.total_with_examples == 2
    assert report.exact_match_count == 1
    assert report.matched_task_ids == ("a",)


def test_audit_overlap_whitespace_normalization():
    t = stdin_task("a", [("1", "2")], example_pairs=[("1\n", "2\n")])
    ts = TaskSet(tasks=(t,), source="APPS")
    strict = dataset.audit_overlap(ts)
    loose = dataset.audit_overlap(ts, normalize_whitespace=True)
    assert strict.exact_match_count == 0
    assert loose.exact_match_count == 1


def test_audit_ground_truth(policy):
    good = stdin_task("g", [("3\n", "6\n")], example_pairs=[("3\n", "6\n")],
                      ground_truth="n = int(input())\nprint(2 * n)")
    bad = stdin_task("b", [("3\n", "6\n")], example_pairs=[("3\n", "6\n")],
                     ground_truth="n = int(input())\nprint(3 * n)")
    ts = TaskSet(tasks=(good, bad), source="APPS")
    executor = SandboxExecutor(policy=policy, parallelism=2)
    audit = dataset.audit_ground_truth(ts, executor)
    assert audit.example_pass_rate == pytest.approx(0.5)
    assert audit.hidden_pass_rate == pytest.approx(0.5)
    assert audit.per_task_failures == (("b", "OutputMismatchError"),)
