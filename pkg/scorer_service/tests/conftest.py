"""Shared fixtures: entailment fixtures on disk and live servers over HTTP.

Servers run a real uvicorn instance in a daemon thread on a free port, so the
conformance tests exercise the same wire path production clients use.  The
whole directory skips cleanly when the service package is not installed; the
client package's own suite never depends on anything here.
"""

from __future__ import annotations

import contextlib
import json
import socket
import threading
import time

import pytest

pytest.importorskip("scorer_service")
pytest.importorskip("semsteer")
requests = pytest.importorskip("requests")
uvicorn = pytest.importorskip("uvicorn")

from scorer_service import ServiceConfig, create_app

# Rows the mock backend answers verbatim.  Marker-bearing texts are keyed
# exactly as clients send them: a lookup hit proves untouched pass-through,
# and (premise, hypothesis) orientation is part of the key.
FIXTURES = [
    {"premise": "a b", "hypothesis": "a b", "probs": [0.9, 0.08, 0.02]},
    {"premise": "the cat sat [TRUNC]", "hypothesis": "a cat rested here", "probs": [0.81, 0.13, 0.06]},
    {"premise": "color [MASK] sky", "hypothesis": "blue sky", "probs": [0.72, 0.2, 0.08]},
    {"premise": "x1", "hypothesis": "y1", "probs": [0.5, 0.3, 0.2]},
    {"premise": "x2", "hypothesis": "y2", "probs": [0.1, 0.6, 0.3]},
    {"premise": "x3", "hypothesis": "y3", "probs": [0.2, 0.2, 0.6]},
    {"premise": "x4", "hypothesis": "y4", "probs": [0.25, 0.5, 0.25]},
    {"premise": "x5", "hypothesis": "y5", "probs": [0.4, 0.4, 0.2]},
]


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="session")
def fixtures_file(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("fixtures") / "entailment.json"
    path.write_text(json.dumps(FIXTURES), encoding="utf-8")
    return str(path)


@contextlib.contextmanager
def serve(config: ServiceConfig):
    """Run the app under uvicorn until the block exits; yield its base URL."""
    server = uvicorn.Server(
        uvicorn.Config(
            create_app(config), host=config.host, port=config.port, log_level="warning"
        )
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://{config.host}:{config.port}"
    deadline = time.monotonic() + 15.0
    try:
        while True:
            try:
                if requests.get(f"{base}/v1/health", timeout=1.0).status_code == 200:
                    break
            except requests.RequestException:
                pass
            if time.monotonic() > deadline:
                raise RuntimeError("service did not become ready in time")
            time.sleep(0.05)
        yield base
    finally:
        server.should_exit = True
        thread.join(timeout=5.0)


@pytest.fixture(scope="session")
def plain_server(fixtures_file):
    """Mock-mode server without authentication; small batch cap for 413 tests."""
    config = ServiceConfig(fixtures=fixtures_file, max_batch=16, port=free_port())
    with serve(config) as base:
        yield base


@pytest.fixture(scope="session")
def auth_server(fixtures_file):
    """Mock-mode server that requires a shared bearer token."""
    config = ServiceConfig(fixtures=fixtures_file, port=free_port(), token="sesame")
    with serve(config) as base:
        yield base
