"""Per-round fine-tuning: always from the base model, never from a checkpoint.

Hyperparameters follow the reference recipe: AdamW at 5e-5, polynomial decay
with warmup ratio 0.5, effective batch 24 (batch 6 x grad accumulation 4),
early stopping on validation loss with patience 6. ``max_epochs`` caps the
loop for smoke runs (env ``MODEL_SERVER_MAX_EPOCHS``).
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from .engine import Engine

logger = logging.getLogger("model_server")

LEARNING_RATE = 5e-5
BATCH_SIZE = 6
GRAD_ACCUM = 4
WARMUP_RATIO = 0.5
PATIENCE = 6
DEFAULT_MAX_EPOCHS = 9
MAX_SEQ_LEN = 256  # byte-level inputs; keep smoke runs fast


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class ManifestData:
    header: dict
    pairs: tuple[tuple[str, str], ...]  # (input_text, target_text)


def load_manifest(path: str | Path) -> ManifestData:
    path = Path(path)
    if not path.exists():
        raise TrainingError(f"manifest not found: {path}")
    lines = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
             if line.strip()]
    if not lines:
        raise TrainingError(f"empty manifest: {path}")
    header, rows = lines[0], lines[1:]
    if not rows:
        raise TrainingError(f"manifest has a header but no examples: {path}")
    pairs = tuple((r["input_text"], r["target_text"]) for r in rows)
    return ManifestData(header=header, pairs=pairs)


def _batchify(pairs, tokenizer, batch_size):
    batches = []
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i:i + batch_size]
        enc = [tokenizer.encode(x)[:MAX_SEQ_LEN] for x, _ in chunk]
        dec = [tokenizer.encode(y)[:MAX_SEQ_LEN] + [tokenizer.eos_token_id]
               for _, y in chunk]
        max_e = max(len(e) for e in enc)
        max_d = max(len(d) for d in dec)
        pad = tokenizer.pad_token_id
        input_ids = torch.tensor([e + [pad] * (max_e - len(e)) for e in enc])
        attention = (input_ids != pad).long()
        labels = torch.tensor([d + [-100] * (max_d - len(d)) for d in dec])
        batches.append((input_ids, attention, labels))
    return batches


def fine_tune(manifest_path: str | Path, base_model_tag: str,
              max_epochs: int | None = None, seed: int = 0,
              validation_fraction: float = 0.1) -> Engine:
    """Fine-tune a FRESH copy of ``base_model_tag`` on one round's manifest.

    The base tag is logged so provenance is auditable: this function never
    receives or loads a previously fine-tuned checkpoint.
    """
    if max_epochs is None:
        max_epochs = int(os.environ.get("MODEL_SERVER_MAX_EPOCHS", DEFAULT_MAX_EPOCHS))
    data = load_manifest(manifest_path)
    engine = Engine.load(base_model_tag, seed=seed)
    logger.info("fine-tuning from base_model_tag=%s on %d examples (round %s)",
                base_model_tag, len(data.pairs), data.header.get("round_index"))

    torch.manual_seed(seed)
    n_val = max(1, int(len(data.pairs) * validation_fraction)) if len(data.pairs) > 1 else 0
    val_pairs = data.pairs[:n_val]
    train_pairs = data.pairs[n_val:] or data.pairs

    model = engine.model
    tokenizer = engine.tokenizer
    train_batches = _batchify(train_pairs, tokenizer, BATCH_SIZE)
    val_batches = _batchify(val_pairs, tokenizer, BATCH_SIZE) if val_pairs else []

    steps_per_epoch = max(1, math.ceil(len(train_batches) / GRAD_ACCUM))
    total_steps = max(1, steps_per_epoch * max_epochs)
    warmup_steps = int(total_steps * WARMUP_RATIO)
    optimizer = AdamW(model.parameters(), lr=LEARNING_RATE)

    def schedule(step):
        if warmup_steps and step < warmup_steps:
            return step / warmup_steps
        remaining = max(1, total_steps - warmup_steps)
        return max(0.0, (total_steps - step) / remaining)

    scheduler = LambdaLR(optimizer, schedule)
    logger.info("resolved schedule: polynomial decay, %d total steps, %d warmup",
                total_steps, warmup_steps)

    def validation_loss():
        if not val_batches:
            return None
        model.eval()
        with torch.no_grad():
            losses = [model(input_ids=i, attention_mask=a, labels=l).loss.item()
                      for i, a, l in val_batches]
        return sum(losses) / len(losses)

    best_loss = math.inf
    bad_epochs = 0
    best_state = None
    for epoch in range(max_epochs):
        model.train()
        optimizer.zero_grad()
        for step, (input_ids, attention, labels) in enumerate(train_batches):
            loss = model(input_ids=input_ids, attention_mask=attention,
                         labels=labels).loss / GRAD_ACCUM
            loss.backward()
            if (step + 1) % GRAD_ACCUM == 0 or step + 1 == len(train_batches):
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()
        val = validation_loss()
        logger.info("epoch %d validation loss %s", epoch, val)
        if val is None:
            continue
        if val < best_loss - 1e-6:
            best_loss = val
            bad_epochs = 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            bad_epochs += 1
            if bad_epochs >= PATIENCE:
                logger.info("early stopping after %d stale epochs", bad_epochs)
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return engine
