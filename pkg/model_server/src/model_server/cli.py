"""CLI entry points: a blocking server and the per-round training hook.

Hook contract: ``model-server-hook <manifest_path> <base_model_tag>``
fine-tunes from the base model, serves the result, and prints the endpoint
URL on the last stdout line. On failure it exits nonzero without printing
an endpoint.
"""

from __future__ import annotations

import argparse
import logging
import sys
import threading

from .engine import TINY_RANDOM_TAG, Engine
from .server import BackgroundServer, ServerConfig, serve
from .training import TrainingError, fine_tune

logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                    format="%(name)s %(levelname)s %(message)s")


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve the generator wire protocol.")
    parser.add_argument("--model-tag", default=TINY_RANDOM_TAG)
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    serve(ServerConfig(model_tag=args.model_tag, port=args.port, seed=args.seed))
    return 0


def hook_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Fine-tune from the base model on a round manifest, then serve.")
    parser.add_argument("manifest_path")
    parser.add_argument("base_model_tag")
    args = parser.parse_args(argv)
    try:
        engine = fine_tune(args.manifest_path, args.base_model_tag)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    server = BackgroundServer(engine)
    endpoint = server.start()
    print(endpoint, flush=True)  # contract: endpoint on the last stdout line
    threading.Event().wait()  # serve until killed
    return 0


if __name__ == "__main__":
    sys.exit(hook_main())
