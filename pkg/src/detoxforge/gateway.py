"""Uniform client layer over the external neural services.

Endpoint kinds and wire formats:

* chat       POST {base_url}/chat/completions with an OpenAI-compatible body;
             the answer text is choices[0].message.content.
* classifier POST {base_url} with {"text": ..., "text_pair": ...?} and gets
             back {"label": ..., "score": ...} (score in [0, 1]).
* embedder   POST {base_url} with {"text": ...} -> {"vector": [...]}.
* translator POST {base_url} with {"text", "source_lang", "target_lang"}
             -> {"text": ...}.

Every successful response is cached on disk, one JSON file per entry named
``<sha256 hex>.json``; the key hashes (endpoint id, operation, request
payload). Replay mode answers exclusively from that directory and performs
no network I/O: an unseen key raises ReplayMiss. API keys come from the
environment variable named in the endpoint spec (default
``DETOXFORGE_API_KEY_<ENDPOINT_ID>``) and are never written to disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import httpx

from .errors import (
    BadInputError,
    ConfigError,
    GatewayError,
    RateLimitedError,
    RemoteError,
    ReplayMissError,
    TimeoutError_,
)


class EndpointKind(str, Enum):
    CHAT = "chat"
    CLASSIFIER = "classifier"
    EMBEDDER = "embedder"
    TRANSLATOR = "translator"


@dataclass(frozen=True)
class EndpointSpec:
    id: str
    kind: EndpointKind
    base_url: str
    auth_env: Optional[str] = None      # env var holding the API key
    timeout: float = 30.0
    max_retries: int = 2
    rate_limit: float = 0.0             # requests/second; 0 = unlimited
    model: Optional[str] = None         # chat: model name sent on the wire
    threshold: float = 0.5              # classifier: positive iff score > threshold
    positive_label: str = "toxic"
    negative_label: str = "nontoxic"
    dimension: Optional[int] = None     # embedder: declared vector length
    lang_map: dict = field(default_factory=dict)  # translator: BCP-47 -> service code

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError(f"endpoint {self.id}: timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigError(f"endpoint {self.id}: max_retries must be >= 0")

    def auth_var(self) -> str:
        return self.auth_env or f"DETOXFORGE_API_KEY_{self.id.upper()}"

    @classmethod
    def from_json(cls, d: dict) -> "EndpointSpec":
        d = dict(d)
        d["kind"] = EndpointKind(d["kind"])
        return cls(**d)


def load_endpoint_registry(path) -> dict[str, EndpointSpec]:
    """Endpoint config file: {"endpoints": [EndpointSpec, ...]}."""
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read endpoint config {path}: {e}") from e
    registry: dict[str, EndpointSpec] = {}
    for entry in doc.get("endpoints", []):
        spec = EndpointSpec.from_json(entry)
        if spec.id in registry:
            raise ConfigError(f"duplicate endpoint id {spec.id!r} in {path}")
        registry[spec.id] = spec
    return registry


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str
    usage: dict
    cached: bool = False
    attempts: int = 1


@dataclass(frozen=True)
class ClassVerdict:
    label: str
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise GatewayError(f"classifier score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class EmbeddingVec:
    values: tuple
    model_id: str

    def __post_init__(self):
        if len(self.values) == 0:
            raise GatewayError("embedding vector must be non-empty")
        if any(v != v or v in (float("inf"), float("-inf")) for v in self.values):
            raise GatewayError("embedding vector has non-finite entries")

    def __len__(self):
        return len(self.values)


class TokenBucket:
    """Admission control: over any 1s window, issued requests <= rate_limit.

    Capacity is one token, i.e. requests are spaced 1/rate apart with no
    burst allowance; a burst-capable bucket could exceed the cap inside a
    sliding window that straddles the burst and the refill.
    """

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = 1.0
        self.tokens = self.capacity
        self.updated = clock()
        self.clock = clock
        self.sleep = sleep
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                # Strict comparison keeps float drift on the late side (never
                # admits early); the floored sleep keeps sub-ulp waits from
                # stalling a simulated clock.
                if self.tokens >= 1.0:
                    self.tokens = max(0.0, self.tokens - 1.0)
                    return
                wait = max((1.0 - self.tokens) / self.rate, 1e-6)
            self.sleep(wait)


class DiskCache:
    """Content-addressed response store; writes are atomic (tmp + rename)."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(endpoint_id: str, operation: str, payload: dict) -> str:
        material = json.dumps(
            {"endpoint": endpoint_id, "operation": operation, "payload": payload},
            sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        path = self.path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    def put(self, key: str, request_summary: dict, response: dict) -> None:
        entry = {"key": key, "request": request_summary, "response": response}
        tmp = self.path(key).with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(entry, f, ensure_ascii=False, sort_keys=True)
        tmp.replace(self.path(key))


_RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class Gateway:
    """Shared client over all registered endpoints.

    ``replay=True`` answers only from the cache directory and never builds
    an HTTP client. ``transport`` is injectable for tests (httpx transport).
    """

    def __init__(self, registry: dict[str, EndpointSpec], cache_dir,
                 replay: bool = False, transport=None,
                 retry_base_delay: float = 0.25, sleep=time.sleep):
        self.registry = dict(registry)
        self.cache = DiskCache(cache_dir)
        self.replay = replay
        self.retry_base_delay = retry_base_delay
        self._sleep = sleep
        self._transport = transport
        self._client: Optional[httpx.Client] = None
        self._client_lock = threading.Lock()
        self._buckets = {eid: TokenBucket(spec.rate_limit)
                         for eid, spec in self.registry.items()}

    def endpoint(self, endpoint_id: str) -> EndpointSpec:
        try:
            return self.registry[endpoint_id]
        except KeyError:
            raise ConfigError(f"unknown endpoint id {endpoint_id!r}")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    # -- plumbing -------------------------------------------------------------

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(transport=self._transport)
            return self._client

    def _headers(self, spec: EndpointSpec) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(spec.auth_var(), "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, spec: EndpointSpec, operation: str, url: str, payload: dict) -> tuple[dict, int, bool]:
        """Returns (response JSON, attempts, cached). Caches successes."""
        key = self.cache.key(spec.id, operation, payload)
        hit = self.cache.get(key)
        if hit is not None:
            return hit["response"], 0, True
        if self.replay:
            raise ReplayMissError(
                f"replay mode has no fixture for {operation} on {spec.id} (key {key})",
                endpoint_id=spec.id)

        attempts = 0
        last_exc: Optional[Exception] = None
        last_status: Optional[int] = None
        while attempts <= spec.max_retries:
            attempts += 1
            self._buckets[spec.id].acquire()
            try:
                resp = self._http().post(url, json=payload, timeout=spec.timeout,
                                         headers=self._headers(spec))
            except httpx.TimeoutException as e:
                last_exc = e
                if attempts <= spec.max_retries:
                    self._sleep(self.retry_base_delay * attempts)
                continue
            except httpx.HTTPError as e:
                last_exc = e
                if attempts <= spec.max_retries:
                    self._sleep(self.retry_base_delay * attempts)
                continue
            if resp.status_code in _RETRYABLE_STATUSES:
                last_status = resp.status_code
                last_exc = None
                if attempts <= spec.max_retries:
                    self._sleep(self.retry_base_delay * attempts)
                continue
            if resp.status_code >= 400:
                raise RemoteError(
                    f"{spec.id}: HTTP {resp.status_code}",
                    status=resp.status_code, body_excerpt=resp.text[:200],
                    endpoint_id=spec.id)
            try:
                body = resp.json()
            except ValueError as e:
                raise RemoteError(f"{spec.id}: non-JSON response",
                                  body_excerpt=resp.text[:200],
                                  endpoint_id=spec.id) from e
            self.cache.put(key, {"operation": operation, "payload": payload}, body)
            return body, attempts, False

        if isinstance(last_exc, httpx.TimeoutException):
            raise TimeoutError_(f"{spec.id}: timed out after {attempts} attempts",
                                endpoint_id=spec.id)
        if last_status == 429:
            raise RateLimitedError(f"{spec.id}: rate limited after {attempts} attempts",
                                   endpoint_id=spec.id)
        raise RemoteError(
            f"{spec.id}: failed after {attempts} attempts"
            + (f" (last status {last_status})" if last_status else f" ({last_exc})"),
            status=last_status, endpoint_id=spec.id)

    # -- operations -------------------------------------------------------------

    def complete(self, endpoint_id: str, prompt, params: Optional[dict] = None) -> Completion:
        spec = self.endpoint(endpoint_id)
        if spec.kind is not EndpointKind.CHAT:
            raise ConfigError(f"endpoint {endpoint_id} is {spec.kind.value}, not chat")
        rendered = prompt if isinstance(prompt, str) else prompt.rendered
        if not rendered.strip():
            raise BadInputError("cannot complete an empty prompt")
        merged = {}
        if not isinstance(prompt, str) and getattr(prompt, "params_hint", None):
            merged.update(prompt.params_hint.to_json())
        if params:
            merged.update(params)
        payload = {
            "model": spec.model or spec.id,
            "messages": [{"role": "user", "content": rendered}],
            **merged,
        }
        url = spec.base_url.rstrip("/") + "/chat/completions"
        body, attempts, cached = self._request(spec, "complete", url, payload)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as e:
            raise RemoteError(f"{spec.id}: malformed chat completion body",
                              body_excerpt=json.dumps(body)[:200],
                              endpoint_id=spec.id) from e
        if not text and finish not in ("content_filter", "refusal"):
            raise RemoteError(f"{spec.id}: empty completion with finish_reason={finish}",
                              endpoint_id=spec.id)
        return Completion(text=text, finish_reason=finish,
                          usage=body.get("usage", {}), cached=cached,
                          attempts=attempts)

    def classify(self, endpoint_id: str, text: str, text_pair: Optional[str] = None) -> ClassVerdict:
        spec = self.endpoint(endpoint_id)
        if spec.kind is not EndpointKind.CLASSIFIER:
            raise ConfigError(f"endpoint {endpoint_id} is {spec.kind.value}, not classifier")
        if not text.strip() or (text_pair is not None and not text_pair.strip()):
            raise BadInputError("classification needs non-empty text")
        payload = {"text": text}
        if text_pair is not None:
            payload["text_pair"] = text_pair
        body, _, _ = self._request(spec, "classify", spec.base_url, payload)
        try:
            score = float(body["score"])
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteError(f"{spec.id}: classifier body missing numeric score",
                              body_excerpt=json.dumps(body)[:200],
                              endpoint_id=spec.id) from e
        # Strict-greater rule: a score exactly at the threshold is negative.
        label = spec.positive_label if score > spec.threshold else spec.negative_label
        return ClassVerdict(label=label, score=score)

    def embed(self, endpoint_id: str, text: str) -> EmbeddingVec:
        spec = self.endpoint(endpoint_id)
        if spec.kind is not EndpointKind.EMBEDDER:
            raise ConfigError(f"endpoint {endpoint_id} is {spec.kind.value}, not embedder")
        if not text.strip():
            raise BadInputError("embedding needs non-empty text")
        body, _, _ = self._request(spec, "embed", spec.base_url, {"text": text})
        try:
            values = tuple(float(v) for v in body["vector"])
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteError(f"{spec.id}: embedder body missing vector",
                              body_excerpt=json.dumps(body)[:200],
                              endpoint_id=spec.id) from e
        if spec.dimension is not None and len(values) != spec.dimension:
            raise RemoteError(
                f"{spec.id}: vector length {len(values)} != declared {spec.dimension}",
                endpoint_id=spec.id)
        return EmbeddingVec(values=values, model_id=spec.id)

    def translate(self, endpoint_id: str, text: str, src_lang: str, tgt_lang: str) -> str:
        spec = self.endpoint(endpoint_id)
        if spec.kind is not EndpointKind.TRANSLATOR:
            raise ConfigError(f"endpoint {endpoint_id} is {spec.kind.value}, not translator")
        if not text.strip():
            raise BadInputError("translation needs non-empty text")
        payload = {
            "text": text,
            "source_lang": spec.lang_map.get(src_lang, src_lang),
            "target_lang": spec.lang_map.get(tgt_lang, tgt_lang),
        }
        body, _, _ = self._request(spec, "translate", spec.base_url, payload)
        try:
            return body["text"]
        except (KeyError, TypeError) as e:
            raise RemoteError(f"{spec.id}: translator body missing text",
                              body_excerpt=json.dumps(body)[:200],
                              endpoint_id=spec.id) from e

    def probe(self, endpoint_id: str, timeout: float = 2.0) -> bool:
        """Cheap reachability check for /healthz; never raises."""
        if self.replay:
            return True
        spec = self.endpoint(endpoint_id)
        try:
            self._http().get(spec.base_url, timeout=timeout)
            return True
        except httpx.HTTPError:
            return False
