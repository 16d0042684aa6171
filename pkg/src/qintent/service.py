"""Read-optimized lookup service over a populated cache.

All request handling reads one immutable snapshot reference; admin reloads
build a fresh snapshot and swap it atomically, so no request ever observes a
half-loaded whitelist or cache. Cached records store their resolution; when
the active whitelist version differs from a record's, the service re-resolves
from the cached intent tuple instead of re-running classification.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .cache import CacheRecord, load_cache_snapshot
from .catalog import Taxonomy, load_taxonomy, normalize_text
from .disambiguation import ConflictWhitelist, load_whitelist, resolve
from .errors import CacheError, ConfigError

MISS_POLICIES = ("default_vertical", "error_404")
RESPONSE_SCHEMA = "intent-response-v1"
HEALTH_SCHEMA = "healthz-v1"
ADMIN_SCHEMA = "admin-v1"
RULE_MISS_DEFAULT = "miss_default"


@dataclass(frozen=True)
class ServeConfig:
    cache_path: str
    whitelist_path: str
    taxonomy_path: str
    host: str = "127.0.0.1"
    port: int = 0
    miss_policy: str = "default_vertical"
    default_vertical: str = "restaurant"
    admin_token: str | None = None

    def __post_init__(self) -> None:
        if self.miss_policy not in MISS_POLICIES:
            raise ConfigError(f"miss_policy must be one of {MISS_POLICIES}")


@dataclass(frozen=True)
class _Snapshot:
    records: dict[str, CacheRecord]
    pipeline_version: str
    whitelist: ConflictWhitelist
    taxonomy: Taxonomy


def _load_snapshot(config: ServeConfig, whitelist_path: str | None = None) -> _Snapshot:
    taxonomy = load_taxonomy(config.taxonomy_path)
    whitelist = load_whitelist(whitelist_path or config.whitelist_path, taxonomy)
    header, records = load_cache_snapshot(config.cache_path)
    if config.miss_policy == "default_vertical" and config.default_vertical not in taxonomy:
        raise ConfigError(
            f"default_vertical {config.default_vertical!r} not in taxonomy"
        )
    return _Snapshot(
        records=records,
        pipeline_version=str(header.get("pipeline_version", "")),
        whitelist=whitelist,
        taxonomy=taxonomy,
    )


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128  # default backlog of 5 stalls concurrent connects


class IntentService:
    """In-process HTTP service; start() binds, stop() shuts down."""

    def __init__(self, config: ServeConfig):
        self.config = config
        self.snapshot = _load_snapshot(config)  # raises on corrupt inputs
        self._reload_lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.port = config.port

    # -- request-path logic, exercised directly by unit tests ----------------

    def lookup(self, raw_query: str) -> tuple[int, dict]:
        snap = self.snapshot
        key = normalize_text(raw_query)
        record = snap.records.get(key)
        if record is None:
            if self.config.miss_policy == "error_404":
                return 404, {
                    "schema": RESPONSE_SCHEMA,
                    "query_key": key,
                    "miss": True,
                    "error": "no cached intent for this query",
                }
            return 200, {
                "schema": RESPONSE_SCHEMA,
                "query_key": key,
                "miss": True,
                "final_vertical": self.config.default_vertical,
                "primary": self.config.default_vertical,
                "secondary": None,
                "rule_fired": RULE_MISS_DEFAULT,
                "pipeline_version": snap.pipeline_version,
                "whitelist_version": snap.whitelist.version,
            }
        resolved = record.resolved
        if resolved.whitelist_version != snap.whitelist.version:
            resolved = resolve(resolved.intents, snap.whitelist)
        return 200, {
            "schema": RESPONSE_SCHEMA,
            "query_key": key,
            "miss": False,
            "final_vertical": resolved.final,
            "primary": resolved.intents.primary,
            "secondary": resolved.intents.secondary,
            "rule_fired": resolved.rule_fired,
            "pipeline_version": record.pipeline_version,
            "whitelist_version": resolved.whitelist_version,
        }

    def healthz(self) -> dict:
        snap = self.snapshot
        return {
            "schema": HEALTH_SCHEMA,
            "records": len(snap.records),
            "pipeline_version": snap.pipeline_version,
            "whitelist_version": snap.whitelist.version,
        }

    def reload_whitelist(self, path: str | None = None) -> dict:
        with self._reload_lock:
            old = self.snapshot
            whitelist = load_whitelist(
                path or self.config.whitelist_path, old.taxonomy
            )
            self.snapshot = _Snapshot(
                records=old.records,
                pipeline_version=old.pipeline_version,
                whitelist=whitelist,
                taxonomy=old.taxonomy,
            )
        return {
            "schema": ADMIN_SCHEMA,
            "reloaded": "whitelist",
            "whitelist_version": whitelist.version,
            "pairs": len(whitelist.pairs),
        }

    def reload_cache(self, path: str | None = None) -> dict:
        with self._reload_lock:
            old = self.snapshot
            header, records = load_cache_snapshot(path or self.config.cache_path)
            self.snapshot = _Snapshot(
                records=records,
                pipeline_version=str(header.get("pipeline_version", "")),
                whitelist=old.whitelist,
                taxonomy=old.taxonomy,
            )
        return {
            "schema": ADMIN_SCHEMA,
            "reloaded": "cache",
            "records": len(records),
            "pipeline_version": self.snapshot.pipeline_version,
        }

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        handler = _make_handler(self)
        try:
            self._server = _Server((self.config.host, self.config.port), handler)
        except OSError as exc:
            raise ConfigError(f"cannot bind {self.config.host}:{self.config.port}: {exc}") from exc
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def wait(self) -> None:
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        self.start()
        self.wait()


def _make_handler(service: IntentService) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        wbufsize = -1  # buffer status+headers+body into one segment
        disable_nagle_algorithm = True  # a split write must not wait on an ACK

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: dict) -> None:
            payload = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def _admin_allowed(self) -> bool:
            token = service.config.admin_token
            if token is None:
                return True
            return self.headers.get("X-Admin-Token") == token

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                return {}

        def do_GET(self) -> None:
            url = urlparse(self.path)
            if url.path == "/intent":
                params = parse_qs(url.query)
                values = params.get("q")
                if not values:
                    self._send(400, {"schema": RESPONSE_SCHEMA, "error": "missing q parameter"})
                    return
                status, body = service.lookup(values[0])
                self._send(status, body)
            elif url.path == "/healthz":
                self._send(200, service.healthz())
            else:
                self._send(404, {"schema": RESPONSE_SCHEMA, "error": "unknown path"})

        def do_POST(self) -> None:
            url = urlparse(self.path)
            if url.path not in ("/admin/reload-whitelist", "/admin/reload-cache"):
                self._send(404, {"schema": ADMIN_SCHEMA, "error": "unknown path"})
                return
            if not self._admin_allowed():
                self._send(403, {"schema": ADMIN_SCHEMA, "error": "admin token required"})
                return
            body = self._read_body()
            path = body.get("path")
            try:
                if url.path == "/admin/reload-whitelist":
                    self._send(200, service.reload_whitelist(path))
                else:
                    self._send(200, service.reload_cache(path))
            except (ConfigError, CacheError) as exc:
                self._send(400, {"schema": ADMIN_SCHEMA, "error": str(exc)})

    return Handler


def serve(config: ServeConfig) -> IntentService:
    """Build and start a service; raises before binding if inputs are corrupt."""
    service = IntentService(config)
    service.start()
    return service
