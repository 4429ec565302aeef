"""Synchronous query service: POST /ask runs the pipeline for one question.

Kept on the standard library's threaded HTTP server; the workload is one
slow JSON call per request, so a web framework buys nothing here. Each
request runs the pipeline in a worker with a hard timeout.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import PipelineConfig
from .embedding import EmbeddingStore
from .errors import KgragError
from .index import KnowledgeIndex
from .pipeline import Runtime, answer_question

logger = logging.getLogger(__name__)


class QueryService:
    def __init__(
        self,
        index: KnowledgeIndex,
        store: EmbeddingStore,
        cfg: PipelineConfig,
        runtime: Runtime,
    ):
        self.index = index
        self.store = store
        self.cfg = cfg
        self.runtime = runtime
        self._pool = ThreadPoolExecutor(max_workers=8)

    def ask(self, question: str) -> dict:
        record = answer_question(
            self.index, self.store, self.cfg, question, runtime=self.runtime
        )
        return {
            "answer": record.final_answer,
            "scores": record.final_scores.as_dict(),
            "iterations": len(record.traces),
        }

    def ask_with_timeout(self, question: str) -> dict:
        future = self._pool.submit(self.ask, question)
        return future.result(timeout=self.cfg.service.timeout_seconds)


class _Handler(BaseHTTPRequestHandler):
    service: QueryService  # injected by make_server

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/ask":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            question = payload["question"]
            if not isinstance(question, str) or not question.strip():
                raise ValueError("question must be a non-empty string")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            self._send(400, {"error": f"bad request: {exc}"})
            return
        try:
            self._send(200, self.service.ask_with_timeout(question))
        except FutureTimeout:
            self._send(504, {"error": "request timed out"})
        except KgragError as exc:
            logger.error("ask failed: %s", exc)
            self._send(500, {"error": str(exc)})

    def log_message(self, fmt, *args):
        logger.info("%s - %s", self.address_string(), fmt % args)


def make_server(service: QueryService, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
