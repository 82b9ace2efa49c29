import json

import pytest

from bootforge.config import (INTERPRETER_ENV, ConfigError, RunConfig, load_config,
                              persist_config)
from bootforge.prompts import FULL_FEEDBACK, PLAIN


def test_defaults():
    cfg = load_config()
    assert cfg.prompt_budget == 600
    assert cfg.generation_budget == 512
    assert cfg.rounds == 9
    assert cfg.sandbox_timeout == 10.0
    assert cfg.objective == FULL_FEEDBACK


def test_toml_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('objective = "plain"\nrounds = 3\nseed = 42\n', encoding="utf-8")
    cfg = load_config(path)
    assert cfg.objective == PLAIN
    assert cfg.rounds == 3
    # CLI overrides beat the file
    cfg = load_config(path, {"rounds": 5, "seed": None})
    assert cfg.rounds == 5
    assert cfg.seed == 42  # None override is ignored


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("no_such_option = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_or_invalid_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("objective = [unterminated\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)


@pytest.mark.parametrize("overrides", [
    {"dataset": "humaneval"},
    {"objective": "verbose"},
    {"rounds": -1},
    {"prompt_budget": 0},
    {"generator": "carrier-pigeon:coop"},
])
def test_validation_failures(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_interpreter_env_override(monkeypatch):
    monkeypatch.setenv(INTERPRETER_ENV, "/opt/py/bin/python3")
    cfg = load_config()
    assert cfg.resolved_interpreter() == "/opt/py/bin/python3"
    assert cfg.sandbox_policy().subject_interpreter == "/opt/py/bin/python3"
    # explicit field wins over the environment
    cfg = load_config(None, {"subject_interpreter": "/usr/bin/python3"})
    assert cfg.resolved_interpreter() == "/usr/bin/python3"


def test_strict_compare_flows_into_policy():
    cfg = load_config(None, {"strict_output_compare": True})
    assert cfg.sandbox_policy().compare_mode == "strict"
    assert load_config().sandbox_policy().compare_mode == "lenient"


def test_persist_config_echoes_everything(tmp_path):
    cfg = RunConfig(seed=7)
    path = persist_config(cfg, tmp_path)
    echo = json.loads(path.read_text(encoding="utf-8"))
    assert echo["seed"] == 7
    assert echo["rounds"] == 9
    assert "resolved_interpreter" in echo
