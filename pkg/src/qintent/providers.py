"""Live HTTP clients for the encoder, reasoning engine, and search tool.

Every client is drop-in compatible with its deterministic substitute
(HashEncoder, ScriptedEngine, FixtureSearchTool); the whole acceptance suite
runs on substitutes with no network. Contracts are provider-agnostic JSON
shapes so backbone swaps are configuration only. Credentials are referenced
by environment variable name and never serialized.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import (
    ConfigError,
    ProviderAuthError,
    ProviderQuotaError,
    ProviderTimeoutError,
    ProviderTransportError,
)
from .reasoner import EngineRequest, EngineReply, FinalAnswer, SearchSnippet, ToolRequest


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    identity: str
    timeout: float = 10.0
    retries: int = 2
    backoff_base: float = 0.1
    credential_env: str | None = None

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            secret = os.environ.get(self.credential_env)
            if not secret:
                raise ProviderAuthError(
                    f"credential environment variable {self.credential_env} is not set"
                )
            headers["Authorization"] = f"Bearer {secret}"
        return headers


def _post_json(config: ProviderConfig, payload: dict) -> dict:
    """POST with bounded retries and exponential backoff.

    Retries transient failures (5xx, timeouts, transport errors); auth and
    quota rejections fail immediately as their own error classes.
    """
    last_exc: Exception | None = None
    for attempt in range(config.retries + 1):
        if attempt > 0:
            time.sleep(config.backoff_base * (2 ** (attempt - 1)))
        try:
            response = httpx.post(
                config.endpoint,
                json=payload,
                headers=config._headers(),
                timeout=config.timeout,
            )
        except httpx.TimeoutException as exc:
            last_exc = ProviderTimeoutError(f"{config.endpoint}: {exc}")
            continue
        except httpx.HTTPError as exc:
            last_exc = ProviderTransportError(f"{config.endpoint}: {exc}")
            continue
        if response.status_code in (401, 403):
            raise ProviderAuthError(f"{config.endpoint}: HTTP {response.status_code}")
        if response.status_code == 429:
            raise ProviderQuotaError(f"{config.endpoint}: HTTP 429")
        if response.status_code >= 500:
            last_exc = ProviderTransportError(
                f"{config.endpoint}: HTTP {response.status_code}"
            )
            continue
        if response.status_code != 200:
            raise ProviderTransportError(
                f"{config.endpoint}: unexpected HTTP {response.status_code}"
            )
        try:
            return response.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProviderTransportError(f"{config.endpoint}: invalid JSON body: {exc}") from exc
    assert last_exc is not None
    raise last_exc


class LiveEncoder:
    """Embedding provider client: {"texts": [..]} -> {"vectors": [[..], ..]}."""

    def __init__(self, config: ProviderConfig, dimension: int):
        if dimension < 2:
            raise ConfigError("dimension must be >= 2")
        self.config = config
        self.dimension = dimension
        self.identity = config.identity

    def encode(self, text: str) -> np.ndarray:
        return self.encode_many([text])[0]

    def encode_many(self, texts: list[str]) -> list[np.ndarray]:
        body = _post_json(self.config, {"texts": texts})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderTransportError("encoder response missing matching 'vectors'")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise ProviderTransportError(
                    f"encoder returned dimension {arr.shape}, expected ({self.dimension},)"
                )
            out.append(arr)
        return out


class LiveSearchTool:
    """Web search client: {"q": text, "limit": n} -> {"results": [...]}."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.identity = config.identity

    def search(self, query_text: str, limit: int) -> list[SearchSnippet]:
        body = _post_json(self.config, {"q": query_text, "limit": limit})
        results = body.get("results", [])
        snippets = []
        for r in results[:limit]:
            if not r.get("snippet"):
                continue
            snippets.append(
                SearchSnippet(
                    source_url=r.get("url", ""),
                    title=r.get("title", ""),
                    snippet=r["snippet"],
                )
            )
        return snippets


WEB_SEARCH_TOOL_SCHEMA = {
    "name": "web_search",
    "description": "Search the public web for fresh context about the query.",
    "parameters": {
        "type": "object",
        "properties": {"query": {"type": "string"}},
        "required": ["query"],
    },
}


class LiveEngine:
    """Chat-completion style client for the reasoning backbone.

    Request: {"model", "prompt", "tools"?}; response either
    {"type": "tool_call", "name", "arguments"} or {"type": "final", "content"}.
    """

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.identity = config.identity

    def respond(self, request: EngineRequest) -> EngineReply:
        payload: dict = {"model": self.config.identity, "prompt": request.prompt}
        if request.tools_available:
            payload["tools"] = [WEB_SEARCH_TOOL_SCHEMA]
        body = _post_json(self.config, payload)
        kind = body.get("type")
        if kind == "tool_call":
            arguments = body.get("arguments", "")
            query_text = arguments
            if isinstance(arguments, str) and arguments.strip().startswith("{"):
                try:
                    query_text = json.loads(arguments).get("query", "")
                except json.JSONDecodeError:
                    query_text = arguments
            elif isinstance(arguments, dict):
                query_text = arguments.get("query", "")
            return ToolRequest(query_text=str(query_text))
        if kind == "final":
            return FinalAnswer(text=str(body.get("content", "")))
        raise ProviderTransportError(f"engine response has unknown type {kind!r}")


def live_engine(config: ProviderConfig) -> LiveEngine:
    return LiveEngine(config)


def live_encoder(config: ProviderConfig, dimension: int) -> LiveEncoder:
    return LiveEncoder(config, dimension)


def live_search(config: ProviderConfig) -> LiveSearchTool:
    return LiveSearchTool(config)
