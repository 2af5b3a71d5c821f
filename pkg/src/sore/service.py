"""HTTP batch-cleaning service.

Run with ``sore serve`` or ``uvicorn sore.service:app``. Configuration comes
from the environment:

    SORE_BIND            host:port for ``sore serve`` (default 127.0.0.1:8080)
    SORE_INDEX_PATH      serialized outlier index; built from the builtin groups if unset
    SORE_EMBED_ENDPOINT  overrides the remote embedding endpoint
    SORE_LOG_PATH        JSONL decision log (disabled if unset)
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Callable

import numpy as np
from fastapi import Body, FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from sore.core import CleanConfig, Cleaner
from sore.errors import EmptyDocument, ProviderUnavailable, SoreError
from sore.groups import OutlierGroup
from sore.models import (
    MAX_HTML_BYTES, BatchItemError, CleanRequest, CleanResponse, build_response,
    decision_log_lines,
)

logger = logging.getLogger(__name__)

DEFAULT_BIND = "127.0.0.1:8080"
HEALTH_PROBE_TTL_S = 10.0


class DecisionLog:
    """Append-only JSONL sink; one writer at a time, flushed per document."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8") if self.path else None

    def write(self, lines: list[str]) -> None:
        if self._fh is None or not lines:
            return
        with self._lock:
            self._fh.write("\n".join(lines) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            with self._lock:
                self._fh.close()
                self._fh = None


class ServiceStats:
    BINS = 10

    def __init__(self, window: int = 10_000):
        self._lock = threading.Lock()
        self.docs_processed = 0
        self.errors = 0
        self.fallback_count = 0
        self.removal_hist = [0] * self.BINS
        self._latencies: deque[float] = deque(maxlen=window)

    def record(self, removed_fraction: float, fallback: bool, elapsed_ms: float) -> None:
        with self._lock:
            self.docs_processed += 1
            self.fallback_count += int(fallback)
            self.removal_hist[min(int(removed_fraction * self.BINS), self.BINS - 1)] += 1
            self._latencies.append(elapsed_ms)

    def record_error(self) -> None:
        with self._lock:
            self.errors += 1

    def snapshot(self) -> dict:
        with self._lock:
            lat = np.array(self._latencies) if self._latencies else None
            return {
                "docs_processed": self.docs_processed,
                "errors": self.errors,
                "fallback_count": self.fallback_count,
                "removal_rate_histogram": {
                    f"{i / self.BINS:.1f}-{(i + 1) / self.BINS:.1f}": n
                    for i, n in enumerate(self.removal_hist)
                },
                "latency_ms": {
                    "p50": float(np.percentile(lat, 50)) if lat is not None else None,
                    "p99": float(np.percentile(lat, 99)) if lat is not None else None,
                },
            }


class ServiceState:
    def __init__(self, build_cleaner: Callable[[], Cleaner], log: DecisionLog,
                 max_concurrency: int = 8):
        self._build = build_cleaner
        self.cleaner: Cleaner | None = None
        self.load_error: str | None = None
        self.ready = threading.Event()
        self.log = log
        self.stats = ServiceStats()
        self.slots = threading.BoundedSemaphore(max_concurrency)
        self._probe_at = 0.0
        self._probe_ok = False

    def load(self) -> None:
        try:
            self.cleaner = self._build()
        except Exception as exc:  # surfaced through /healthz
            logger.exception("failed to load cleaner")
            self.load_error = f"{type(exc).__name__}: {exc}"
        finally:
            self.ready.set()

    def embedder_ok(self) -> bool:
        if self.cleaner is None:
            return False
        if self.cleaner.config.embedder.provider == "hashing":
            return True
        now = time.monotonic()
        if now - self._probe_at > HEALTH_PROBE_TTL_S:
            try:
                self.cleaner.provider.embed_batch(["health check"])
                self._probe_ok = True
            except SoreError:
                self._probe_ok = False
            self._probe_at = now
        return self._probe_ok

    def clean_one(self, req: CleanRequest) -> CleanResponse:
        if self.cleaner is None:
            raise ProviderUnavailable("service is still loading")
        if not req.html.strip():
            raise EmptyDocument("html is empty")
        config = self.cleaner.config
        if req.config_overrides is not None:
            config = req.config_overrides.apply(config)
        with self.slots:
            try:
                result = self.cleaner.clean(req.html, config)
            except SoreError:
                self.stats.record_error()
                raise
        self.log.write(decision_log_lines(result, req.doc_id))
        self.stats.record(result.stats.removed_char_fraction, result.fallback_applied,
                          result.stats.elapsed_ms)
        return build_response(result, req.doc_id)


def _error_status(exc: Exception) -> int:
    if isinstance(exc, EmptyDocument):
        return 422
    if isinstance(exc, ProviderUnavailable):
        return 503
    return 500


def create_app(config: CleanConfig | None = None, groups: list[OutlierGroup] | None = None,
               index_path: str | Path | None = None, log_path: str | Path | None = None,
               provider=None, build_cleaner: Callable[[], Cleaner] | None = None,
               background_load: bool = True, max_concurrency: int = 8) -> FastAPI:
    """Build the FastAPI app.

    The outlier index loads on a background thread at startup; ``/healthz``
    answers 503 until it is ready. ``build_cleaner`` replaces the default
    loader (used by tests to control load timing).
    """
    config = config or CleanConfig()
    index_path = index_path or os.environ.get("SORE_INDEX_PATH")
    log_path = log_path or os.environ.get("SORE_LOG_PATH")

    def default_build() -> Cleaner:
        index_bytes = Path(index_path).read_bytes() if index_path else None
        return Cleaner(config, groups, index_bytes, provider)

    state = ServiceState(build_cleaner or default_build, DecisionLog(log_path), max_concurrency)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if background_load:
            threading.Thread(target=state.load, name="sore-index-loader", daemon=True).start()
        else:
            state.load()
        yield
        state.log.close()

    app = FastAPI(title="sore", version="0.1.0", lifespan=lifespan)
    app.state.sore = state

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "BadRequest", "detail": jsonable_encoder(exc.errors())})

    @app.exception_handler(SoreError)
    async def _sore_error(request: Request, exc: SoreError):
        return JSONResponse(status_code=_error_status(exc),
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.middleware("http")
    async def _size_cap(request: Request, call_next):
        length = request.headers.get("content-length")
        # batch bodies may carry several documents
        cap = MAX_HTML_BYTES * (64 if request.url.path.endswith("/batch") else 2)
        if length is not None and length.isdigit() and int(length) > cap:
            return JSONResponse(status_code=413, content={"error": "PayloadTooLarge",
                                                          "detail": f"body exceeds {cap} bytes"})
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        if not state.ready.is_set():
            return JSONResponse(status_code=503, content={"status": "loading"})
        if state.cleaner is None:
            return JSONResponse(status_code=503, content={"status": "error", "detail": state.load_error})
        if not state.embedder_ok():
            return JSONResponse(status_code=503, content={"status": "embedder unavailable"})
        return {"status": "ok", "index_points": len(state.cleaner.phrases),
                "embedder": state.cleaner.config.embedder.provider}

    @app.get("/stats")
    def stats():
        return state.stats.snapshot()

    @app.post("/v1/clean", response_model=CleanResponse)
    def clean(req: CleanRequest):
        return state.clean_one(req)

    def clean_item(raw) -> dict:
        doc_id = raw.get("doc_id") if isinstance(raw, dict) else None
        try:
            req = CleanRequest.model_validate(raw)
            return state.clean_one(req).model_dump(mode="json")
        except ValidationError as exc:
            return BatchItemError(doc_id=doc_id, error="BadRequest", detail=str(exc)).model_dump()
        except SoreError as exc:
            return BatchItemError(doc_id=doc_id, error=type(exc).__name__, detail=str(exc)).model_dump()

    @app.post("/v1/clean/batch")
    def clean_batch(items: list = Body(...)):
        if not items:
            return []
        with ThreadPoolExecutor(max_workers=min(max_concurrency, len(items))) as pool:
            return list(pool.map(clean_item, items))  # map keeps input order

    return app


def __getattr__(name):
    # ``uvicorn sore.service:app`` builds the app from the environment on first access
    if name == "app":
        return create_app()
    raise AttributeError(name)
