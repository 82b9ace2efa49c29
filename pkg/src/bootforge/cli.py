"""Command-line surface: ingest, audit, bootstrap, eval, report.

Exit status is 0 unless an integrity or infrastructure error occurred;
candidate programs failing their tests is a normal, successful outcome.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import bootstrap as bs
from . import dataset, metrics
from .config import ConfigError, RunConfig, load_config, persist_config
from .executor import SandboxExecutor
from .generator import HttpGeneratorClient, ScriptedMockGenerator, parse_decoding
from .tasks import IngestError, IntegrityError, Task, TaskSet, TestCase, TestSuite, IOMode


def _fail(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return click.exceptions.Exit(1)


def _build_config(config_path, **overrides) -> RunConfig:
    try:
        return load_config(config_path, overrides)
    except ConfigError as exc:
        raise _fail(str(exc))


def _load_taskset(cfg: RunConfig) -> TaskSet:
    if cfg.dataset_path is None:
        raise _fail("--dataset-path (or dataset_path in the config file) is required")
    try:
        if cfg.dataset == "mbpp":
            return dataset.load_mbpp(cfg.dataset_path)
        return dataset.load_apps(cfg.dataset_path, validation_size=cfg.validation_size,
                                 seed=cfg.seed)
    except (IngestError, IntegrityError, OSError) as exc:
        raise _fail(str(exc))


def _make_generator(cfg: RunConfig):
    if cfg.generator is None:
        raise _fail("--generator is required (mock:<script> or http:<url>)")
    if cfg.generator.startswith("mock:"):
        script = cfg.generator[len("mock:"):]
        try:
            return ScriptedMockGenerator.from_file(script)
        except (OSError, json.JSONDecodeError) as exc:
            raise _fail(f"cannot load mock script {script}: {exc}")
    # http:<url>; accept both "http://host:port" and "http:host:port"
    url = cfg.generator
    if url.startswith("http:") and not url.startswith("http://"):
        url = "http://" + url[len("http:"):]
    return HttpGeneratorClient(url)


def _settings(cfg: RunConfig) -> bs.LoopSettings:
    return bs.LoopSettings(
        objective=cfg.objective, rounds=cfg.rounds,
        prompt_budget=cfg.prompt_budget, generation_budget=cfg.generation_budget,
        seed=cfg.seed, base_model_tag=cfg.base_model_tag,
        policy=cfg.sandbox_policy())


_SHARED = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="TOML config file; flags override it."),
    click.option("--dataset", type=click.Choice(["mbpp", "apps"]), default=None),
    click.option("--dataset-path", "dataset_path", type=click.Path(), default=None),
    click.option("--objective", type=click.Choice(["plain", "simple", "full"]),
                 default=None),
    click.option("--decoding", default=None,
                 help="greedy | beam:<width> | temperature:<t>:<n>"),
    click.option("--rounds", type=int, default=None),
    click.option("--generator", default=None, help="mock:<script> | http:<url>"),
    click.option("--out", "out_dir", type=click.Path(), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--strict-output-compare", "strict_output_compare",
                 is_flag=True, flag_value=True, default=None),
    click.option("--parallelism", type=int, default=None),
]


def shared_options(fn):
    for opt in reversed(_SHARED):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Bootstrapped program synthesis with repair: data, sandbox, loop, metrics."""


@main.command("ingest")
@shared_options
def cmd_ingest(config_path, **overrides):
    """Load a corpus, write the normalized task store and an ingest report."""
    cfg = _build_config(config_path, **overrides)
    taskset = _load_taskset(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist_config(cfg, out)
    store = out / "tasks.jsonl"
    with open(store, "w", encoding="utf-8") as fh:
        for task in taskset.tasks:
            fh.write(json.dumps(_task_to_dict(task), sort_keys=True) + "\n")
    report = {
        "source": taskset.source,
        "counts": taskset.counts(),
        "quarantined": [list(q) for q in taskset.quarantined],
    }
    (out / "ingest_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(taskset.tasks)} tasks to {store} "
               f"({len(taskset.quarantined)} quarantined)")


def _task_to_dict(task: Task) -> dict:
    return {
        "id": task.id, "source": task.source, "split": task.split,
        "description": task.description,
        "io_mode": {"kind": task.io_mode.kind, "fn_name": task.io_mode.fn_name},
        "example_tests": [_case_to_dict(c) for c in task.example_tests.cases],
        "hidden_tests": [_case_to_dict(c) for c in task.hidden_tests.cases],
        "ground_truth": list(task.ground_truth),
        "difficulty": task.difficulty,
        "examples_stripped": task.examples_stripped,
        "indent_warning": task.indent_warning,
    }


def _case_to_dict(case: TestCase) -> dict:
    return dataclasses.asdict(case)


def load_task_store(path: str | Path) -> list[Task]:
    """Read tasks back from an ingest-produced store."""
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            raw = json.loads(line)
            tasks.append(Task(
                id=raw["id"], source=raw["source"], split=raw["split"],
                description=raw["description"],
                io_mode=IOMode(kind=raw["io_mode"]["kind"],
                               fn_name=raw["io_mode"]["fn_name"]),
                example_tests=TestSuite(cases=tuple(
                    TestCase(**c) for c in raw["example_tests"])),
                hidden_tests=TestSuite(cases=tuple(
                    TestCase(**c) for c in raw["hidden_tests"])),
                ground_truth=tuple(raw["ground_truth"]),
                difficulty=raw["difficulty"],
                examples_stripped=raw["examples_stripped"],
                indent_warning=raw["indent_warning"],
            ))
    return tasks


@main.command("audit")
@shared_options
def cmd_audit(config_path, **overrides):
    """Run the example/hidden overlap and ground-truth audits."""
    cfg = _build_config(config_path, **overrides)
    taskset = _load_taskset(cfg)
    overlap = dataset.audit_overlap(taskset)
    click.echo(overlap.to_json())
    executor = SandboxExecutor(policy=cfg.sandbox_policy(), parallelism=cfg.parallelism)
    audit = dataset.audit_ground_truth(taskset, executor)
    click.echo(audit.to_json())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist_config(cfg, out)
    (out / "overlap_report.json").write_text(overlap.to_json() + "\n", encoding="utf-8")
    (out / "ground_truth_audit.json").write_text(audit.to_json() + "\n", encoding="utf-8")


@main.command("bootstrap")
@shared_options
@click.option("--training-hook", "training_hook_cmd", default=None,
              help="Command invoked as '<cmd> <manifest> <base-tag>'; prints the "
                   "next generator endpoint on its last stdout line. Defaults to "
                   "the mock's round-advance hook for mock generators.")
@click.option("--resume", is_flag=True, default=False,
              help="Continue from the last committed round in --out.")
def cmd_bootstrap(config_path, training_hook_cmd, resume, **overrides):
    """Run the bootstrapping loop: N rounds of generate, verify, fine-tune."""
    cfg = _build_config(config_path, **overrides)
    taskset = _load_taskset(cfg)
    generator = _make_generator(cfg)
    if training_hook_cmd:
        hook = bs.command_training_hook(training_hook_cmd)
    elif isinstance(generator, ScriptedMockGenerator):
        hook = bs.mock_training_hook(generator)
    else:
        hook = None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist_config(cfg, out)
    try:
        records = bs.run_bootstrap(
            train_tasks=list(taskset.split("train")),
            validation_tasks=list(taskset.split("validation")),
            generator=generator, settings=_settings(cfg), out_dir=out,
            training_hook=hook, resume=resume)
    except bs.BootstrapError as exc:
        raise _fail(str(exc))
    best = bs.select_best_round(records)
    click.echo(f"completed {len(records)} round records; "
               f"best round {best.round_index} "
               f"(validation pass@1 {best.validation.pass_at_1:.4f})")


@main.command("eval")
@shared_options
@click.option("--repair/--no-repair", default=False,
              help="Gate one repair attempt on example-test failures.")
@click.option("--split", default="test", type=click.Choice(["train", "validation", "test"]))
@click.option("--ks", default="1", help="Comma-separated k values, e.g. 1,2,10")
def cmd_eval(config_path, repair, split, ks, **overrides):
    """Generate and judge one split; emit a pass@k report."""
    cfg = _build_config(config_path, **overrides)
    taskset = _load_taskset(cfg)
    generator = _make_generator(cfg)
    try:
        decoding = parse_decoding(cfg.decoding)
        k_values = tuple(int(k) for k in ks.split(","))
    except ValueError as exc:
        raise _fail(str(exc))
    sample_set = bs.evaluate_inference(list(taskset.split(split)), generator,
                                       _settings(cfg), decoding, repair=repair)
    if not sample_set.samples:
        raise _fail(f"no evaluable tasks in split {split!r} "
                    f"({len(sample_set.skipped)} skipped)")
    try:
        report = metrics.build_report(sample_set, ks=k_values)
    except metrics.MetricDomainError as exc:
        raise _fail(str(exc))
    click.echo(report.to_table())
    if sample_set.skipped:
        click.echo(f"skipped {len(sample_set.skipped)} tasks without example tests")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist_config(cfg, out)
    (out / "pass_at_k.json").write_text(report.to_json() + "\n", encoding="utf-8")
    transitions = metrics.repair_transitions(sample_set)
    if transitions.transitions:
        (out / "repair_transitions.json").write_text(
            transitions.to_sankey_json() + "\n", encoding="utf-8")


@main.command("report")
@click.argument("run_files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def cmd_report(run_files, out_path):
    """Aggregate several eval outputs into mean / std / 95% CI rows."""
    runs = []
    for path in run_files:
        with open(path, encoding="utf-8") as fh:
            runs.append(json.load(fh))
    grids = {tuple(r["ks"]) for r in runs}
    if len(grids) != 1:
        raise _fail(f"mismatched k grids across runs: {sorted(grids)}")
    rows = []
    for family in ("estimated", "sampled", "edit_estimated", "edit_sampled"):
        keys = sorted({k for r in runs for k in r[family]}, key=int)
        for k in keys:
            values = [r[family][k] for r in runs if k in r[family]]
            if len(values) != len(runs):
                continue
            agg = metrics.aggregate_runs(values)
            rows.append((family, k, agg))
    header = f"{'metric':<22}{'mean':>10}{'std':>10}{'ci95':>10}  m"
    click.echo(header)
    click.echo("-" * len(header))
    payload = []
    for family, k, agg in rows:
        std = f"{agg.std:.4f}" if agg.std is not None else "-"
        ci = f"{agg.ci_half_width:.4f}" if agg.ci_half_width is not None else "-"
        click.echo(f"{family + '@' + k:<22}{agg.mean:>10.4f}{std:>10}{ci:>10}  {agg.m}")
        payload.append({"metric": f"{family}@{k}", "mean": agg.mean, "std": agg.std,
                        "ci95_half_width": agg.ci_half_width, "m": agg.m})
    if out_path:
        Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
