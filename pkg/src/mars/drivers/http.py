"""OpenAI-compatible chat-completion client, plus a replay server for recorded fixtures.

Recorded fixtures are JSON Lines, one request/response pair per line::

    {"request": {"contains": "==== Task ===="}, "response": {"status": 200, "content": "..."}}

``response`` either carries ``content`` (wrapped into a chat-completion
envelope on replay) or a raw ``body`` object. ``request.contains`` is an
optional substring the prompt must include; a mismatch is answered with 409.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Iterable

import httpx

from ..errors import DriverProtocolError, DriverUnavailable

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


@dataclass
class EndpointConfig:
    base_url: str = "http://127.0.0.1:8000/v1"
    model: str = "gemini-2.5-pro"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 600.0
    max_attempts: int = 5
    backoff_base: float = 2.0
    backoff_max: float = 60.0
    requests_per_minute: float | None = None
    decoding: dict = field(default_factory=lambda: {"temperature": 0.7})

    @property
    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


class TokenBucket:
    """Blocking rate limiter shared by every tree of a run."""

    def __init__(self, per_minute: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, per_minute / 60.0)
        self.tokens = self.capacity
        self._clock, self._sleep = clock, sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self._sleep(wait)


class ChatClient:
    def __init__(
        self,
        endpoint: EndpointConfig,
        recorder: Callable[[dict], None] | None = None,
        limiter: TokenBucket | None = None,
        record_to: str | Path | None = None,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.recorder = recorder
        self.limiter = limiter
        self.record_to = Path(record_to) if record_to else None
        self._sleep = sleep
        self._http = httpx.Client(timeout=endpoint.timeout, transport=transport)
        self._record_lock = threading.Lock()
        self.calls = 0

    def close(self):
        self._http.close()

    def complete(self, prompt: str, purpose: str = "", **decoding: Any) -> str:
        return call_model(self, prompt, {**self.endpoint.decoding, **decoding}, purpose=purpose)


def _backoff(endpoint: EndpointConfig, attempt: int) -> float:
    return min(endpoint.backoff_max, endpoint.backoff_base * 2 ** (attempt - 1))


def call_model(client: ChatClient, prompt: str, decoding: dict | None = None, purpose: str = "") -> str:
    ep = client.endpoint
    body = {"model": ep.model, "messages": [{"role": "user", "content": prompt}], **(decoding or {})}
    headers = {"Content-Type": "application/json"}
    if ep.api_key:
        headers["Authorization"] = f"Bearer {ep.api_key}"
    url = ep.base_url.rstrip("/") + "/chat/completions"

    last_error = ""
    for attempt in range(1, ep.max_attempts + 1):
        if client.limiter is not None:
            client.limiter.acquire()
        started = time.monotonic()
        try:
            resp = client._http.post(url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            last_error = f"{type(exc).__name__}: {exc}"
        else:
            if resp.status_code == 200:
                content = _content(resp)
                client.calls += 1
                _record(client, purpose, body, resp.status_code, content, attempt, time.monotonic() - started)
                if client.record_to is not None:
                    with client._record_lock, open(client.record_to, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps({"request": {"purpose": purpose, "messages": body["messages"]},
                                             "response": {"status": 200, "content": content}}) + "\n")
                return content
            last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
            if resp.status_code not in RETRYABLE_STATUS:
                _record(client, purpose, body, resp.status_code, None, attempt, time.monotonic() - started)
                raise DriverUnavailable(f"non-retryable response from {url}: {last_error}")
        log.warning("model call attempt %d/%d failed: %s", attempt, ep.max_attempts, last_error)
        if attempt < ep.max_attempts:
            client._sleep(_backoff(ep, attempt))
    _record(client, purpose, body, None, None, ep.max_attempts, None, error=last_error)
    raise DriverUnavailable(f"{url} unavailable after {ep.max_attempts} attempts: {last_error}")


def _content(resp: httpx.Response) -> str:
    try:
        doc = resp.json()
        content = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise DriverProtocolError(f"malformed chat-completion envelope: {exc!r}") from exc
    if not isinstance(content, str):
        raise DriverProtocolError("message content is not a string")
    return content


def _record(client, purpose, body, status, content, attempts, seconds, error=None):
    if client.recorder is None:
        return
    # Credentials live only in headers, which are never recorded.
    client.recorder({
        "purpose": purpose,
        "model": body["model"],
        "prompt_chars": len(body["messages"][0]["content"]),
        "request": body,
        "status": status,
        "response": content,
        "attempts": attempts,
        "seconds": seconds,
        "error": error,
    })


def chat_envelope(content: str, model: str = "fixture") -> dict:
    return {
        "id": "fixture",
        "object": "chat.completion",
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    }


def load_fixture(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


class FixtureServer:
    """Serve recorded responses in order over HTTP on localhost."""

    def __init__(self, pairs: Iterable[dict]):
        self.pairs = list(pairs)
        self.requests: list[dict] = []
        self._cursor = 0
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureServer":
        return cls(load_fixture(path))

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    @property
    def remaining(self) -> int:
        return len(self.pairs) - self._cursor

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()

    def _next(self, request: dict) -> tuple[int, bytes]:
        with self._lock:
            self.requests.append(request)
            if self._cursor >= len(self.pairs):
                return 500, b'{"error": "fixture exhausted"}'
            pair = self.pairs[self._cursor]
            want = pair.get("request", {}).get("contains")
            prompt = "".join(m.get("content", "") for m in request.get("messages", []))
            if want and want not in prompt:
                return 409, json.dumps({"error": f"fixture {self._cursor} expected prompt containing {want!r}"}).encode()
            self._cursor += 1
        resp = pair["response"]
        status = resp.get("status", 200)
        if "content" in resp:
            payload = chat_envelope(resp["content"], request.get("model", "fixture"))
        else:
            payload = resp.get("body", {})
        raw = payload if isinstance(payload, str) else json.dumps(payload)
        return status, raw.encode("utf-8")

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    request = json.loads(self.rfile.read(length) or b"{}")
                except ValueError:
                    request = {}
                status, raw = server._next(request)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        return Handler
