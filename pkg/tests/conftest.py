from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from tracelink import corpus as corpus_mod
from tracelink import prompting

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = FIXTURES / "golden"


@pytest.fixture(scope="session")
def corpus():
    return corpus_mod.load_corpus(FIXTURES / "corpus.json")


@pytest.fixture(scope="session")
def examples():
    data = json.loads((FIXTURES / "examples.json").read_text(encoding="utf-8"))
    return [
        prompting.FewShotExample(
            requirement_text=e["requirement_text"],
            codes=frozenset(e["codes"]),
            rationale=e["rationale"],
        )
        for e in data
    ]


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        with self.server.lock:
            self.server.requests.append(
                {"path": self.path, "body": body, "headers": dict(self.headers)}
            )
            count = len(self.server.requests)
        status, payload = self.server.respond(body, count)
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@contextmanager
def stub_server(respond):
    """Local HTTP stub; ``respond(body, request_count) -> (status, payload)``."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.respond = respond
    server.requests = []
    server.lock = threading.Lock()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}/v1", server.requests
    finally:
        server.shutdown()
        thread.join()


@pytest.fixture()
def api_key(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "test-key")
    return "test-key"
