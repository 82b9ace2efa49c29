"""Run configuration: TOML file + CLI overrides, echoed into every output dir.

Reproducibility policy: the fully resolved config (defaults included) is
written next to the artifacts it produced, and all randomness flows through
named seeds recorded there.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from .executor import SandboxPolicy
from .prompts import (DEFAULT_GENERATION_BUDGET, DEFAULT_PROMPT_BUDGET, FULL_FEEDBACK,
                      OBJECTIVES, PLAIN, SIMPLE_FEEDBACK)

INTERPRETER_ENV = "BOOTFORGE_SUBJECT_INTERPRETER"

# short CLI spellings for the training objectives
OBJECTIVE_ALIASES = {"plain": PLAIN, "simple": SIMPLE_FEEDBACK, "full": FULL_FEEDBACK}


class ConfigError(Exception):
    """The configuration is invalid or incomplete."""


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "mbpp"           # mbpp | apps
    dataset_path: str | None = None
    objective: str = FULL_FEEDBACK
    decoding: str = "greedy"        # greedy | beam:<w> | temperature:<t>:<n>
    prompt_budget: int = DEFAULT_PROMPT_BUDGET
    generation_budget: int = DEFAULT_GENERATION_BUDGET
    rounds: int = 9
    seed: int = 0
    generator: str | None = None    # mock:<script> | http:<url>
    out_dir: str = "out"
    sandbox_timeout: float = 10.0
    strict_output_compare: bool = False
    parallelism: int = 1
    validation_size: int = 598      # APPS validation carve-out
    base_model_tag: str = "base"
    subject_interpreter: str | None = None  # default: env var, else this python

    def validated(self) -> "RunConfig":
        if self.dataset not in ("mbpp", "apps"):
            raise ConfigError(f"unknown dataset: {self.dataset!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective: {self.objective!r}")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.prompt_budget < 1 or self.generation_budget < 1:
            raise ConfigError("token budgets must be positive")
        if self.generator is not None and not self.generator.startswith(("mock:", "http:")):
            raise ConfigError(
                f"generator must be mock:<script> or http:<url>, got {self.generator!r}")
        return self

    def resolved_interpreter(self) -> str:
        return (self.subject_interpreter
                or os.environ.get(INTERPRETER_ENV)
                or sys.executable)

    def sandbox_policy(self) -> SandboxPolicy:
        return SandboxPolicy(
            per_run_timeout=self.sandbox_timeout,
            compare_mode="strict" if self.strict_output_compare else "lenient",
            subject_interpreter=self.resolved_interpreter(),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional TOML file plus explicit overrides
    (CLI flags win over the file, the file wins over defaults)."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data.update(tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid config file {path}: {exc}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "objective" in data:
        data["objective"] = OBJECTIVE_ALIASES.get(data["objective"], data["objective"])
    return RunConfig(**data).validated()


def persist_config(config: RunConfig, out_dir: str | Path) -> Path:
    """Echo the fully resolved config next to the run's artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.json"
    echo = dict(config.to_dict(), resolved_interpreter=config.resolved_interpreter())
    path.write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
