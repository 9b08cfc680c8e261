"""Chat-completion and embedding access.

Three implementations share one duck-typed surface:

* ``HttpProvider`` speaks the OpenAI-compatible REST shapes
  (``POST <endpoint>/chat/completions`` and ``POST <endpoint>/embeddings``)
  with a bearer token taken from the ``LT_API_KEY`` environment variable.
* ``ScriptedChatProvider`` replays canned responses from a script file so
  every agent control path can be exercised offline and deterministically.
* ``HashingEmbedder`` is a dependency-free deterministic embedder
  (token-hash bag of words projected to a fixed dimension, L2-normalized).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import requests

API_KEY_ENV = "LT_API_KEY"
ROLE_TAGS = ("initial", "grounding", "refinement", "describe")
FINISH_REASONS = ("complete", "truncated", "error")


class ProviderError(Exception):
    pass


class Timeout(ProviderError):
    pass


class HttpError(ProviderError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}" + (f": {detail}" if detail else ""))
        self.status = status


class ProviderExhausted(ProviderError):
    pass


class MalformedScript(ProviderError):
    pass


class EmptyInput(ProviderError):
    pass


@dataclass
class ChatRequest:
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass
class ChatResponse:
    text: str
    model_id: str
    finish_reason: str

    def __post_init__(self) -> None:
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"finish_reason must be one of {FINISH_REASONS}")
        if self.finish_reason == "complete" and not self.text:
            raise ValueError("complete response must carry text")


@dataclass
class EmbeddingVector:
    values: list[float]
    model_id: str

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding values must be finite")


class HttpProvider:
    """OpenAI-compatible chat + embeddings over HTTP.

    Retries once on timeout, never on HTTP error statuses.
    """

    def __init__(
        self,
        endpoint: str,
        chat_model_id: str = "",
        embed_model_id: str = "",
        request_timeout: float = 60.0,
        expected_dimension: int | None = None,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.chat_model_id = chat_model_id
        self.embed_model_id = embed_model_id
        self.request_timeout = request_timeout
        self._dimension = expected_dimension
        self._session = session or requests.Session()

    @property
    def dimension(self) -> int | None:
        """Embedding dimension; locked to the first response when not preset."""
        return self._dimension

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, path: str, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
        url = f"{self.endpoint}{path}"
        last_timeout: Exception | None = None
        for _ in range(2):  # one retry on timeout only
            try:
                resp = self._session.post(url, json=payload, headers=self._headers(), timeout=timeout)
            except requests.exceptions.Timeout as exc:
                last_timeout = exc
                continue
            except requests.exceptions.RequestException as exc:
                raise ProviderError(f"request to {url} failed: {exc}") from exc
            if resp.status_code != 200:
                raise HttpError(resp.status_code, resp.text[:200])
            try:
                return resp.json()
            except ValueError as exc:
                raise ProviderError(f"non-JSON response from {url}") from exc
        raise Timeout(f"request to {url} timed out twice") from last_timeout

    def chat(self, req: ChatRequest, role: str = "default") -> ChatResponse:
        payload = {
            "model": self.chat_model_id,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        data = self._post("/chat/completions", payload, req.timeout)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
            stop = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion response: {data!r:.200}") from exc
        if stop == "length":
            finish = "truncated"
        elif stop == "stop" and text:
            finish = "complete"
        else:
            finish = "error" if not text else "complete"
        return ChatResponse(text=text, model_id=data.get("model", self.chat_model_id), finish_reason=finish)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyInput("cannot embed empty text")
        payload = {"model": self.embed_model_id, "input": text}
        data = self._post("/embeddings", payload, self.request_timeout)
        try:
            values = [float(v) for v in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embeddings response: {data!r:.200}") from exc
        if self._dimension is None:
            self._dimension = len(values)
        elif len(values) != self._dimension:
            raise ProviderError(
                f"embedding dimension changed: expected {self._dimension}, got {len(values)}"
            )
        return EmbeddingVector(values=values, model_id=data.get("model", self.embed_model_id))


class HashingEmbedder:
    """Deterministic offline embedder.

    Word tokens are hashed into ``dimension`` buckets (bag-of-words counts)
    and the resulting vector is L2-normalized. Counts are non-negative, so
    the vector is never zero; identical text always yields identical values.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.model_id = f"hash-{dimension}"

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyInput("cannot embed empty text")
        tokens = re.findall(r"[0-9A-Za-z_]+", text.lower())
        if not tokens:
            tokens = [text]
        values = [0.0] * self.dimension
        for token in tokens:
            digest = hashlib.sha1(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:8], "big") % self.dimension
            values[bucket] += 1.0
        norm = math.sqrt(sum(v * v for v in values))
        return EmbeddingVector(values=[v / norm for v in values], model_id=self.model_id)


@dataclass
class _Queues:
    """Replay queues keyed by (scope, role); scope None = shared."""

    mode: str  # "flat" | "roles" | "samples"
    queues: dict[tuple[str | None, str | None], deque] = field(default_factory=dict)


class ScriptedChatProvider:
    """Deterministic replay of canned chat responses.

    The script document is either a JSON array (one shared queue), an
    object mapping role tags to arrays (per-role queues), or an object
    mapping sample ids to role-tagged objects (per-sample queues, used to
    keep concurrent batch runs deterministic). Role tags must come from
    ``ROLE_TAGS``.
    """

    def __init__(self, script: Any):
        self._state = _parse_script(script)
        self._lock = threading.Lock()
        self._scope: str | None = None
        self.consumed: dict[tuple[str | None, str], int] = {}

    def scoped(self, sample_id: str) -> "ScriptedChatProvider":
        """View of this provider that consumes the given sample's queues."""
        if self._state.mode != "samples":
            return self
        view = ScriptedChatProvider.__new__(ScriptedChatProvider)
        view._state = self._state
        view._lock = self._lock
        view._scope = sample_id
        view.consumed = self.consumed
        return view

    def chat(self, req: ChatRequest, role: str = "default") -> ChatResponse:
        with self._lock:
            queue = self._queue_for(role)
            if queue is None or not queue:
                raise ProviderExhausted(
                    f"no scripted response left for role {role!r}"
                    + (f" of sample {self._scope!r}" if self._scope else "")
                )
            text = queue.popleft()
            key = (self._scope, role)
            self.consumed[key] = self.consumed.get(key, 0) + 1
        finish = "complete" if text else "error"
        return ChatResponse(text=text, model_id="scripted", finish_reason=finish)

    def consumed_for(self, role: str, sample_id: str | None = None) -> int:
        return self.consumed.get((sample_id, role), 0)

    @property
    def total_consumed(self) -> int:
        return sum(self.consumed.values())

    def _queue_for(self, role: str) -> deque | None:
        state = self._state
        if state.mode == "flat":
            return state.queues.get((None, None))
        if state.mode == "roles":
            return state.queues.get((None, role))
        return state.queues.get((self._scope, role))


def _parse_script(script: Any) -> _Queues:
    if isinstance(script, list):
        if not all(isinstance(item, str) for item in script):
            raise MalformedScript("flat script must be a list of strings")
        return _Queues(mode="flat", queues={(None, None): deque(script)})
    if not isinstance(script, dict):
        raise MalformedScript("script must be a JSON array or object")
    if not script:
        return _Queues(mode="flat", queues={(None, None): deque()})
    kinds = {type(v) for v in script.values()}
    if kinds == {list}:
        queues = {}
        for role, responses in script.items():
            if role not in ROLE_TAGS:
                raise MalformedScript(f"unknown role tag {role!r}")
            if not all(isinstance(item, str) for item in responses):
                raise MalformedScript(f"responses for role {role!r} must be strings")
            queues[(None, role)] = deque(responses)
        return _Queues(mode="roles", queues=queues)
    if kinds == {dict}:
        queues = {}
        for sample_id, roles in script.items():
            for role, responses in roles.items():
                if role not in ROLE_TAGS:
                    raise MalformedScript(f"unknown role tag {role!r} for sample {sample_id!r}")
                if not isinstance(responses, list) or not all(isinstance(it, str) for it in responses):
                    raise MalformedScript(
                        f"responses for {sample_id!r}/{role!r} must be a list of strings"
                    )
                queues[(sample_id, role)] = deque(responses)
        return _Queues(mode="samples", queues=queues)
    raise MalformedScript("script values must be all lists (roles) or all objects (samples)")


def load_scripted_provider(script_path: str | Path) -> ScriptedChatProvider:
    path = Path(script_path)
    if not path.is_file():
        raise MalformedScript(f"script file not found: {path}")
    try:
        script = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedScript(f"{path}: not valid JSON: {exc}") from exc
    return ScriptedChatProvider(script)
