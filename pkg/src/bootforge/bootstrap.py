"""The bootstrapping-with-repair training loop and gated inference evaluation.

One round walks every training task: greedy-generate, verify on hidden tests,
and sort the result into one of three fine-tuning buckets:

* kept      — the first attempt passed; train on it as-is.
* repaired  — the first attempt failed, the model's single repair passed;
              train on (repair prompt -> repaired code).
* corrected — both attempts failed (or the objective forbids repair); train
              on the same input with the normalized ground truth as target.

Each round fine-tunes FROM THE ORIGINAL base model on only that round's
examples; the training hook owns the actual fine-tune and hands back the next
generator.
"""

from __future__ import annotations

import json
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .executor import SandboxPolicy, interpreter_version, run_task
from .generator import Decoding, GeneratorRequest, HttpGeneratorClient, ScriptedMockGenerator
from .metrics import SampleResult, SampleSet, dataset_pass_at_k, edit_pass_at_k
from .prompts import (DEFAULT_COUNTER, DEFAULT_GENERATION_BUDGET, DEFAULT_PROMPT_BUDGET,
                      PLAIN, build_first_prompt, build_repair_prompt, parse_completion,
                      render_feedback)
from .tasks import MBPP, Task

KEPT = "kept"
REPAIRED = "repaired"
CORRECTED = "corrected"

MANIFEST_VERSION = 1


class BootstrapError(Exception):
    """The loop cannot continue (training hook failed, bad configuration)."""


@dataclass(frozen=True)
class FinetuneExample:
    """One fine-tuning pair. ``target_text`` is bare code; the end-of-answer
    sentinel is a serving-side convention, recorded in the manifest header."""

    input_text: str
    target_text: str
    provenance: str  # kept | repaired | corrected
    task_id: str
    round_index: int

    def to_dict(self) -> dict:
        return {"input_text": self.input_text, "target_text": self.target_text,
                "provenance": self.provenance, "task_id": self.task_id,
                "round_index": self.round_index}


@dataclass(frozen=True)
class RoundResult:
    round_index: int
    examples: tuple[FinetuneExample, ...]

    def bucket(self, provenance: str) -> tuple[FinetuneExample, ...]:
        return tuple(e for e in self.examples if e.provenance == provenance)

    def counts(self) -> dict[str, int]:
        return {p: len(self.bucket(p)) for p in (KEPT, REPAIRED, CORRECTED)}


@dataclass(frozen=True)
class ValidationSnapshot:
    pass_at_1: float
    edit_pass_at_1: float | None  # None for the plain objective

    def to_dict(self) -> dict:
        return {"pass_at_1": self.pass_at_1, "edit_pass_at_1": self.edit_pass_at_1}


@dataclass(frozen=True)
class BootstrapRound:
    """Persisted record of one round (round 0 is the untuned baseline)."""

    round_index: int
    counts: dict[str, int]
    validation: ValidationSnapshot
    manifest_path: str | None = None
    model_tag: str = ""

    def to_dict(self) -> dict:
        return {"round_index": self.round_index, "counts": self.counts,
                "validation": self.validation.to_dict(),
                "manifest_path": self.manifest_path, "model_tag": self.model_tag}


@dataclass(frozen=True)
class LoopSettings:
    objective: str
    rounds: int = 9
    prompt_budget: int = DEFAULT_PROMPT_BUDGET
    generation_budget: int = DEFAULT_GENERATION_BUDGET
    seed: int = 0
    base_model_tag: str = "base"
    counter: object = DEFAULT_COUNTER
    policy: SandboxPolicy = field(default_factory=SandboxPolicy)


def _first_code(generator, prompt_text: str, decoding: Decoding,
                settings: LoopSettings) -> list[str]:
    completions = generator.generate(GeneratorRequest(
        prompt=prompt_text, decoding=decoding,
        max_new_tokens=settings.generation_budget))
    return [parse_completion(c).code for c in completions]


def run_round(tasks: list[Task], generator, round_index: int,
              settings: LoopSettings) -> RoundResult:
    """Greedy pass over the training tasks; verification is on hidden tests."""
    examples: list[FinetuneExample] = []
    for task in tasks:
        prompt = build_first_prompt(task, settings.objective,
                                    settings.prompt_budget, settings.counter)
        code = _first_code(generator, prompt.text, Decoding.greedy(), settings)[0]
        outcome = run_task(task, code, settings.policy)
        if outcome.passed:
            examples.append(FinetuneExample(prompt.text, code, KEPT, task.id, round_index))
            continue
        if settings.objective == PLAIN:
            examples.append(FinetuneExample(prompt.text, task.ground_truth[0],
                                            CORRECTED, task.id, round_index))
            continue
        feedback = render_feedback(task, outcome, settings.objective)
        repair_prompt = build_repair_prompt(prompt, code, feedback,
                                            settings.prompt_budget, settings.counter)
        repair_code = _first_code(generator, repair_prompt.text, Decoding.greedy(),
                                  settings)[0]
        repair_outcome = run_task(task, repair_code, settings.policy)
        if repair_outcome.passed:
            examples.append(FinetuneExample(repair_prompt.text, repair_code,
                                            REPAIRED, task.id, round_index))
        else:
            if not task.ground_truth:
                raise BootstrapError(f"task {task.id} has no ground truth to correct with")
            examples.append(FinetuneExample(repair_prompt.text, task.ground_truth[0],
                                            CORRECTED, task.id, round_index))
    return RoundResult(round_index=round_index, examples=tuple(examples))


# ---------------------------------------------------------------------------
# Manifests

def write_manifest(path: str | Path, result: RoundResult, settings: LoopSettings) -> str:
    """Write the round's fine-tuning set as JSONL, header line first.

    The write is atomic (temp file + rename) and byte-deterministic: two runs
    with identical inputs produce identical files.
    """
    path = Path(path)
    header = {
        "manifest_version": MANIFEST_VERSION,
        "round_index": result.round_index,
        "objective": settings.objective,
        "seed": settings.seed,
        "prompt_budget": settings.prompt_budget,
        "generation_budget": settings.generation_budget,
        "interpreter_version": interpreter_version(settings.policy),
        "counts": result.counts(),
        "target_convention": "bare code; append the end-of-answer sentinel at serving time",
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in result.examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")
    os.replace(tmp, path)
    return str(path)


def read_manifest(path: str | Path) -> tuple[dict, list[FinetuneExample]]:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        raise BootstrapError(f"empty manifest: {path}")
    header, rows = lines[0], lines[1:]
    examples = [FinetuneExample(**row) for row in rows]
    return header, examples


# ---------------------------------------------------------------------------
# Gated inference evaluation

def _example_gate(task: Task) -> bool:
    """Does the task expose anything a repair round could be gated on?"""
    if task.source == MBPP:
        return bool(task.hidden_tests.cases)
    return bool(task.example_tests.cases)


def evaluate_inference(tasks: list[Task], generator, settings: LoopSettings,
                       decoding: Decoding | None = None,
                       repair: bool = False) -> SampleSet:
    """Generate + judge every task; hidden tests decide the verdicts.

    With ``repair`` on, a sample earns its single repair attempt only when it
    fails the task's EXAMPLE tests (the visible first assert on MBPP). A
    sample that passes the examples but fails hidden tests is final: no
    repair, counted as a failure.
    """
    decoding = decoding or Decoding.greedy()
    samples: dict[str, tuple[SampleResult, ...]] = {}
    skipped: list[str] = []
    for task in tasks:
        if repair and not _example_gate(task):
            skipped.append(task.id)
            continue
        prompt = build_first_prompt(task, settings.objective,
                                    settings.prompt_budget, settings.counter)
        codes = _first_code(generator, prompt.text, decoding, settings)
        results = []
        for code in codes:
            hidden = run_task(task, code, settings.policy)
            if not repair:
                results.append(SampleResult(first_verdict=hidden.passed,
                                            error_kind=hidden.error))
                continue
            if task.source == MBPP:
                gate_passed = bool(hidden.visible_passed)
                gate_outcome = hidden
            else:
                gate_outcome = run_task(task, code, settings.policy,
                                        suite=task.example_tests)
                gate_passed = gate_outcome.passed
            if gate_passed:
                results.append(SampleResult(first_verdict=hidden.passed,
                                            error_kind=hidden.error))
                continue
            feedback = render_feedback(task, gate_outcome, settings.objective)
            repair_prompt = build_repair_prompt(prompt, code, feedback,
                                                settings.prompt_budget, settings.counter)
            repair_code = _first_code(generator, repair_prompt.text,
                                      Decoding.greedy(), settings)[0]
            repair_hidden = run_task(task, repair_code, settings.policy)
            results.append(SampleResult(first_verdict=hidden.passed,
                                        repair_attempted=True,
                                        repair_verdict=repair_hidden.passed,
                                        error_kind=gate_outcome.error))
        samples[task.id] = tuple(results)
    return SampleSet(samples=samples, n=decoding.num_samples,
                     metadata={"decoding": decoding.kind, "repair": repair,
                               "objective": settings.objective},
                     skipped=tuple(skipped))


def _validate(tasks: list[Task], generator, settings: LoopSettings) -> ValidationSnapshot:
    plain_set = evaluate_inference(tasks, generator, settings, Decoding.greedy(),
                                   repair=False)
    pass1 = dataset_pass_at_k(plain_set, 1, "sampled")
    edit1 = None
    if settings.objective != PLAIN:
        repair_set = evaluate_inference(tasks, generator, settings, Decoding.greedy(),
                                        repair=True)
        if repair_set.samples:
            edit1 = edit_pass_at_k(repair_set, 1, "sampled")
    return ValidationSnapshot(pass_at_1=pass1, edit_pass_at_1=edit1)


# ---------------------------------------------------------------------------
# Training hooks

def mock_training_hook(mock: ScriptedMockGenerator):
    """Hook for scripted runs: "training" just advances the mock's round."""
    def hook(manifest_path: str, base_model_tag: str):
        del manifest_path, base_model_tag
        mock.advance_round()
        return mock
    return hook


def command_training_hook(command: str, timeout: float = 3600.0):
    """Hook that shells out: ``command <manifest> <base_tag>`` must print the
    generator endpoint URL on stdout once training finishes.

    The hook process may keep running to serve the endpoint, so stdout is
    streamed until an ``http(s)://`` line appears rather than waiting for
    exit; a watchdog kills the process if no endpoint shows up in time.
    Spawned servers are left running for the rest of the bootstrap run.
    """
    import threading

    def hook(manifest_path: str, base_model_tag: str):
        proc = subprocess.Popen([*command.split(), manifest_path, base_model_tag],
                                stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                text=True)
        watchdog = threading.Timer(timeout, proc.kill)
        watchdog.start()
        endpoint = None
        try:
            for line in proc.stdout:
                line = line.strip()
                if line.startswith(("http://", "https://")):
                    endpoint = line
                    break
        finally:
            watchdog.cancel()
        if endpoint is None:
            proc.wait()
            stderr = proc.stderr.read() if proc.stderr else ""
            raise BootstrapError(
                f"training hook exited {proc.returncode} without printing an "
                f"endpoint: {stderr.strip()[:500]}")
        return HttpGeneratorClient(endpoint)
    return hook


# ---------------------------------------------------------------------------
# The loop

def _load_round_record(path: Path) -> BootstrapRound:
    raw = json.loads(path.read_text(encoding="utf-8"))
    raw["validation"] = ValidationSnapshot(**raw["validation"])
    return BootstrapRound(**raw)


def run_bootstrap(train_tasks: list[Task], validation_tasks: list[Task],
                  generator, settings: LoopSettings, out_dir: str | Path,
                  training_hook=None, resume: bool = False) -> list[BootstrapRound]:
    """Round 0 validates the untuned model; rounds 1..N each build a manifest,
    hand it to the training hook, and validate the generator it returns.

    Round records and manifests are persisted as they complete, so a hook
    failure mid-run leaves every finished round on disk (and raises). With
    ``resume`` on, committed rounds are loaded back and their manifests are
    replayed through the training hook to restore the generator before the
    loop continues from the first uncommitted round.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[BootstrapRound] = []
    start_round = 1
    if resume:
        for path in sorted(out_dir.glob("round_*.json")):
            records.append(_load_round_record(path))
        if records:
            start_round = records[-1].round_index + 1
            if training_hook is not None:
                for record in records:
                    if record.manifest_path:
                        generator = training_hook(record.manifest_path,
                                                  settings.base_model_tag)

    def persist(record: BootstrapRound) -> None:
        records.append(record)
        path = out_dir / f"round_{record.round_index:04d}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        os.replace(tmp, path)

    if not records:
        persist(BootstrapRound(
            round_index=0, counts={KEPT: 0, REPAIRED: 0, CORRECTED: 0},
            validation=_validate(validation_tasks, generator, settings),
            model_tag=settings.base_model_tag))

    for round_index in range(start_round, settings.rounds + 1):
        result = run_round(train_tasks, generator, round_index, settings)
        manifest_path = write_manifest(
            out_dir / f"manifest_round_{round_index:04d}.jsonl", result, settings)
        if training_hook is not None:
            try:
                generator = training_hook(manifest_path, settings.base_model_tag)
            except BootstrapError:
                raise
            except Exception as exc:
                raise BootstrapError(f"training hook failed in round {round_index}: {exc}") from exc
        persist(BootstrapRound(
            round_index=round_index, counts=result.counts(),
            validation=_validate(validation_tasks, generator, settings),
            manifest_path=manifest_path,
            model_tag=f"{settings.base_model_tag}+round{round_index}"))
    return records


def select_best_round(records: list[BootstrapRound]) -> BootstrapRound:
    """Best trained round by validation pass@1; ties broken by edit pass@1,
    then by the lowest round index. Round 0 (the untuned baseline) never wins
    unless it is the only record."""
    candidates = [r for r in records if r.round_index > 0] or list(records)
    if not candidates:
        raise BootstrapError("no rounds to select from")

    def key(r: BootstrapRound):
        edit = r.validation.edit_pass_at_1
        return (r.validation.pass_at_1, edit if edit is not None else float("-inf"),
                -r.round_index)

    return max(candidates, key=key)
