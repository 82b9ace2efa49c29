"""Reference implementation of the generator wire protocol.

Wraps a seq2seq language model behind POST /generate and /count_tokens, and
provides the training hook that fine-tunes a fresh copy of the base model on
one round's manifest and serves the result.
"""

__version__ = "0.1.0"
