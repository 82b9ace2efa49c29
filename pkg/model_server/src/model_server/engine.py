"""Model + tokenizer bundle and the decoding strategies the protocol exposes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch
from transformers import AutoTokenizer, T5Config, T5ForConditionalGeneration

logger = logging.getLogger("model_server")

# the thesis-scale default; desk-scale runs use the tiny random tag instead
DEFAULT_MODEL_TAG = "Salesforce/codet5-large-ntp-py"
TINY_RANDOM_TAG = "tiny-random"

MIN_GENERATION_BUDGET = 512  # the advertised ceiling must cover this


class ByteTokenizer:
    """Byte-level tokenizer: id = byte + 2, with pad=0 and eos=1.

    Self-contained so the tiny random model needs no downloaded vocabulary.
    """

    pad_token_id = 0
    eos_token_id = 1
    vocab_size = 258

    def encode(self, text: str) -> list[int]:
        return [b + 2 for b in text.encode("utf-8")]

    def decode(self, ids) -> str:
        data = bytes(i - 2 for i in ids if i >= 2)
        return data.decode("utf-8", errors="replace")

    def count(self, text: str) -> int:
        return len(self.encode(text))


def build_tiny_model(seed: int = 0) -> T5ForConditionalGeneration:
    """A deliberately small, randomly initialized seq2seq model.

    Weights are seeded so a given tag always denotes the same parameters;
    that makes greedy decoding reproducible across server restarts.
    """
    torch.manual_seed(seed)
    config = T5Config(
        vocab_size=ByteTokenizer.vocab_size,
        d_model=64, d_kv=16, d_ff=128,
        num_layers=2, num_decoder_layers=2, num_heads=4,
        pad_token_id=ByteTokenizer.pad_token_id,
        eos_token_id=ByteTokenizer.eos_token_id,
        decoder_start_token_id=ByteTokenizer.pad_token_id,
    )
    model = T5ForConditionalGeneration(config)
    model.eval()
    return model


@dataclass
class Engine:
    """One loaded model ready to serve generate/count_tokens requests."""

    model: object
    tokenizer: object
    model_tag: str
    max_input_tokens: int = 1024
    max_new_tokens_ceiling: int = MIN_GENERATION_BUDGET

    def __post_init__(self):
        if self.max_new_tokens_ceiling < MIN_GENERATION_BUDGET:
            raise ValueError(
                f"advertised max_new_tokens must be >= {MIN_GENERATION_BUDGET}")

    @classmethod
    def load(cls, model_tag: str = TINY_RANDOM_TAG, seed: int = 0) -> "Engine":
        if model_tag == TINY_RANDOM_TAG:
            return cls(model=build_tiny_model(seed), tokenizer=ByteTokenizer(),
                       model_tag=model_tag)
        model = T5ForConditionalGeneration.from_pretrained(model_tag)
        model.eval()
        tokenizer = AutoTokenizer.from_pretrained(model_tag)
        return cls(model=model, tokenizer=tokenizer, model_tag=model_tag)

    def _encode(self, prompt: str) -> torch.Tensor:
        ids = self.tokenizer.encode(prompt)[-self.max_input_tokens:]
        if not ids:
            ids = [self.tokenizer.eos_token_id]
        return torch.tensor([ids], dtype=torch.long)

    def count_tokens(self, text: str) -> int:
        if hasattr(self.tokenizer, "count"):
            return self.tokenizer.count(text)
        return len(self.tokenizer.encode(text, add_special_tokens=False))

    @torch.no_grad()
    def generate(self, prompt: str, kind: str, width: int | None, t: float | None,
                 n: int | None, max_new_tokens: int) -> list[str]:
        max_new_tokens = min(max_new_tokens, self.max_new_tokens_ceiling)
        input_ids = self._encode(prompt)
        kwargs = dict(max_new_tokens=max_new_tokens,
                      min_new_tokens=min(4, max_new_tokens),
                      pad_token_id=self.tokenizer.pad_token_id,
                      eos_token_id=self.tokenizer.eos_token_id)
        if kind == "greedy":
            out = self.model.generate(input_ids, do_sample=False, num_beams=1, **kwargs)
        elif kind == "beam":
            beams = max(2, width or 2)
            out = self.model.generate(input_ids, do_sample=False, num_beams=beams,
                                      num_return_sequences=beams, **kwargs)
        elif kind == "temperature":
            out = self.model.generate(input_ids, do_sample=True,
                                      temperature=t or 0.8,
                                      num_return_sequences=n or 1, **kwargs)
        else:
            raise ValueError(f"unknown decoding kind: {kind!r}")
        completions = []
        for row in out:
            ids = [i.item() for i in row
                   if i.item() not in (self.tokenizer.pad_token_id,
                                       self.tokenizer.eos_token_id)]
            completions.append(self.tokenizer.decode(ids))
        return completions
