"""Generator abstraction: the language model behind a small protocol.

The pipeline never talks to a model directly. It issues
:class:`GeneratorRequest` objects to anything implementing ``generate``;
the scripted mock makes the whole pipeline testable offline and the HTTP
client targets the wire protocol served by a real model adapter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import requests

from .prompts import DEFAULT_COUNTER, DEFAULT_GENERATION_BUDGET


@dataclass(frozen=True)
class Decoding:
    kind: str  # greedy | beam | temperature
    width: int | None = None
    t: float | None = None
    n: int | None = None

    @staticmethod
    def greedy() -> "Decoding":
        return Decoding(kind="greedy")

    @staticmethod
    def beam(width: int = 2) -> "Decoding":
        return Decoding(kind="beam", width=width)

    @staticmethod
    def temperature(t: float = 0.8, n: int = 10) -> "Decoding":
        return Decoding(kind="temperature", t=t, n=n)

    @property
    def num_samples(self) -> int:
        if self.kind == "greedy":
            return 1
        if self.kind == "beam":
            return self.width or 1
        return self.n or 1

    def to_wire(self) -> dict:
        payload: dict = {"kind": self.kind}
        if self.width is not None:
            payload["width"] = self.width
        if self.t is not None:
            payload["t"] = self.t
        if self.n is not None:
            payload["n"] = self.n
        return payload


def parse_decoding(spec: str) -> Decoding:
    """Parse CLI decoding specs: ``greedy``, ``beam:2``, ``temperature:0.8:10``."""
    parts = spec.split(":")
    if parts[0] == "greedy":
        return Decoding.greedy()
    if parts[0] == "beam":
        return Decoding.beam(int(parts[1]) if len(parts) > 1 else 2)
    if parts[0] == "temperature":
        t = float(parts[1]) if len(parts) > 1 else 0.8
        n = int(parts[2]) if len(parts) > 2 else 10
        return Decoding.temperature(t, n)
    raise ValueError(f"unknown decoding spec: {spec!r}")


@dataclass(frozen=True)
class GeneratorRequest:
    prompt: str
    decoding: Decoding
    max_new_tokens: int = DEFAULT_GENERATION_BUDGET


class GeneratorError(Exception):
    """The generator could not produce completions."""


class ScriptedMockGenerator:
    """Deterministic mock driven by a completion table.

    Script shape (JSON)::

        {
          "default": "<completion used when no rule matches>",
          "rules": [
            {"match": "<substring of the prompt, e.g. the task description>",
             "first":  {"*": "<code>", "2": "<code from round 2 on>"},
             "repair": {"*": "<code>"}}
          ]
        }

    ``first``/``repair`` values may also be a bare string (any round) or a
    list of strings (one per sample, last repeated). A prompt is a repair
    prompt iff it contains a ``Feedback:`` line. The current round advances
    when the mock's training hook fires.
    """

    def __init__(self, script: dict, round_index: int = 0):
        self.script = script
        self.round_index = round_index

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMockGenerator":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def advance_round(self) -> None:
        self.round_index += 1

    def _lookup(self, prompt: str) -> str | list:
        # few-shot blocks contain feedback lines of their own, so only the
        # live task segment (after the last task delimiter) decides whether
        # this is a repair prompt
        segment = prompt.rsplit("### Task Start ###", 1)[-1]
        attempt = "repair" if "Feedback:" in segment else "first"
        for rule in self.script.get("rules", []):
            if rule["match"] in prompt:
                table = rule.get(attempt)
                if table is None:
                    break
                if isinstance(table, (str, list)):
                    return table
                return table.get(str(self.round_index), table.get("*", ""))
        return self.script.get("default", "")

    def generate(self, request: GeneratorRequest) -> list[str]:
        entry = self._lookup(request.prompt)
        n = request.decoding.num_samples
        if isinstance(entry, str):
            return [entry] * n
        if not entry:
            return [""] * n
        padded = list(entry) + [entry[-1]] * max(0, n - len(entry))
        return padded[:n]

    def count_tokens(self, text: str) -> int:
        return DEFAULT_COUNTER.count(text)


class HttpGeneratorClient:
    """Client for the generator wire protocol (POST /generate, /count_tokens)."""

    def __init__(self, base_url: str, timeout: float = 600.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def generate(self, request: GeneratorRequest) -> list[str]:
        payload = {
            "prompt": request.prompt,
            "decoding": request.decoding.to_wire(),
            "max_new_tokens": request.max_new_tokens,
        }
        try:
            resp = requests.post(f"{self.base_url}/generate", json=payload,
                                 timeout=self.timeout)
            resp.raise_for_status()
            return list(resp.json()["completions"])
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise GeneratorError(f"generate call failed: {exc}") from exc

    def count_tokens(self, text: str) -> int:
        try:
            resp = requests.post(f"{self.base_url}/count_tokens", json={"text": text},
                                 timeout=self.timeout)
            resp.raise_for_status()
            return int(resp.json()["count"])
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise GeneratorError(f"count_tokens call failed: {exc}") from exc
