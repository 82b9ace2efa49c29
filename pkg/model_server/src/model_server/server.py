"""FastAPI app speaking the generator wire protocol.

POST /generate     {"prompt", "decoding": {"kind", "width"?, "t"?, "n"?},
                    "max_new_tokens"}            -> {"completions": [...]}
POST /count_tokens {"text"}                      -> {"count": int}

Malformed requests return 400 with a schema message.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .engine import Engine, TINY_RANDOM_TAG

logger = logging.getLogger("model_server")


@dataclass(frozen=True)
class ServerConfig:
    model_tag: str = TINY_RANDOM_TAG
    device: str = "cpu"
    max_batch: int = 8
    port: int = 8000
    seed: int = 0


class DecodingSpec(BaseModel):
    kind: str = Field(pattern="^(greedy|beam|temperature)$")
    width: int | None = Field(default=None, ge=1)
    t: float | None = Field(default=None, gt=0)
    n: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_kind_fields(self):
        if self.kind == "beam" and self.width is None:
            raise ValueError("beam decoding requires width")
        if self.kind == "temperature" and self.n is None:
            raise ValueError("temperature decoding requires n")
        return self


class GenerateRequest(BaseModel):
    prompt: str
    decoding: DecodingSpec
    max_new_tokens: int = Field(ge=1)


class CountTokensRequest(BaseModel):
    text: str


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="generator wire protocol")
    lock = threading.Lock()  # generation mutates RNG state; serialize it

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        detail = [{"loc": list(e.get("loc", ())), "msg": str(e.get("msg", ""))}
                  for e in exc.errors()]
        return JSONResponse(status_code=400,
                            content={"error": "request does not match schema",
                                     "detail": detail})

    @app.post("/generate")
    def generate(req: GenerateRequest):
        with lock:
            completions = engine.generate(
                req.prompt, req.decoding.kind, req.decoding.width,
                req.decoding.t, req.decoding.n, req.max_new_tokens)
        return {"completions": completions}

    @app.post("/count_tokens")
    def count_tokens(req: CountTokensRequest):
        return {"count": engine.count_tokens(req.text)}

    return app


def serve(config: ServerConfig, engine: Engine | None = None) -> None:
    """Blocking server entry point."""
    engine = engine or Engine.load(config.model_tag, seed=config.seed)
    logger.info("serving model_tag=%s on port %d", engine.model_tag, config.port)
    uvicorn.run(create_app(engine), host="127.0.0.1", port=config.port,
                log_level="warning")


class BackgroundServer:
    """Server on a free port in a daemon thread; used by the training hook."""

    def __init__(self, engine: Engine, port: int = 0):
        self._config = uvicorn.Config(create_app(engine), host="127.0.0.1",
                                      port=port, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self) -> str:
        self._thread.start()
        while not self._server.started:
            if not self._thread.is_alive():
                raise RuntimeError("server thread exited before startup")
        host, port = self._server.servers[0].sockets[0].getsockname()[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)
