"""Log-structured cache of resolved intents, keyed by normalized query.

On-disk layout: one JSON header line (magic, schema, pipeline_version,
store_version) followed by one JSON record line per completed classification.
Appending as results land means an interrupted batch keeps its progress; on
load a truncated final line is ignored and later records supersede earlier
ones for the same key. The canonical export is sorted by key and excludes the
volatile created_at stamp so equal classifications export byte-identically.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

from .catalog import normalize_text
from .disambiguation import ResolvedIntent
from .errors import CacheError
from .reasoner import IntentTuple

CACHE_MAGIC = "qintent-cache"
CACHE_SCHEMA = 1


@dataclass(frozen=True)
class CacheRecord:
    key: str
    resolved: ResolvedIntent
    evidence_digest: str
    pipeline_version: str
    created_at: float

    def to_json(self, include_created_at: bool = True) -> dict:
        doc = {
            "key": self.key,
            "resolved": self.resolved.to_json(),
            "evidence_digest": self.evidence_digest,
            "pipeline_version": self.pipeline_version,
        }
        if include_created_at:
            doc["created_at"] = self.created_at
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "CacheRecord":
        res = doc["resolved"]
        resolved = ResolvedIntent(
            final=res["final"],
            intents=IntentTuple(primary=res["primary"], secondary=res.get("secondary")),
            rule_fired=res["rule_fired"],
            whitelist_version=res["whitelist_version"],
        )
        return cls(
            key=doc["key"],
            resolved=resolved,
            evidence_digest=doc["evidence_digest"],
            pipeline_version=doc["pipeline_version"],
            created_at=float(doc.get("created_at", 0.0)),
        )


def _canonical_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class CacheStore:
    """Writable view of one cache file, bound to a single pipeline_version."""

    def __init__(self, path: str | Path, pipeline_version: str, store_version: str):
        self.path = Path(path)
        self.pipeline_version = pipeline_version
        self.store_version = store_version
        self._records: dict[str, CacheRecord] = {}
        self._lock = threading.Lock()
        self._fp: IO[str] | None = None
        self._open()

    def _open(self) -> None:
        resume = False
        if self.path.exists() and self.path.stat().st_size > 0:
            header, records = _read_cache_file(self.path)
            if header["pipeline_version"] == self.pipeline_version:
                self._records = records
                resume = True
        try:
            if resume:
                self._fp = open(self.path, "a", encoding="utf-8")
            else:
                self._fp = open(self.path, "w", encoding="utf-8")
                header = {
                    "magic": CACHE_MAGIC,
                    "schema": CACHE_SCHEMA,
                    "pipeline_version": self.pipeline_version,
                    "store_version": self.store_version,
                }
                self._fp.write(_canonical_line(header) + "\n")
                self._fp.flush()
        except OSError as exc:
            raise CacheError(f"cannot open cache {self.path}: {exc}") from exc

    def put(self, record: CacheRecord) -> None:
        if record.pipeline_version != self.pipeline_version:
            raise CacheError(
                f"record pipeline_version {record.pipeline_version!r} does not match"
                f" store {self.pipeline_version!r}"
            )
        with self._lock:
            if self._fp is None:
                raise CacheError("cache store is closed")
            try:
                self._fp.write(_canonical_line(record.to_json()) + "\n")
                self._fp.flush()
            except OSError as exc:
                raise CacheError(f"cache write failed: {exc}") from exc
            self._records[record.key] = record

    def get(self, raw: str) -> CacheRecord | None:
        """Lookup by the normalized form of ``raw``; None means a miss."""
        return self._records.get(normalize_text(raw))

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def keys(self) -> list[str]:
        return sorted(self._records)

    def records(self) -> Iterator[CacheRecord]:
        for key in self.keys():
            yield self._records[key]

    def export_jsonl(self) -> str:
        """Canonical export: records sorted by key, created_at omitted."""
        return "".join(
            _canonical_line(rec.to_json(include_created_at=False)) + "\n"
            for rec in self.records()
        )

    def close(self) -> None:
        with self._lock:
            if self._fp is not None:
                self._fp.close()
                self._fp = None

    def __enter__(self) -> "CacheStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _read_cache_file(path: Path) -> tuple[dict, dict[str, CacheRecord]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CacheError(f"cannot read cache {path}: {exc}") from exc
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise CacheError(f"{path} is empty or has no header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CacheError(f"{path} has a corrupt header: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("magic") != CACHE_MAGIC:
        raise CacheError(f"{path} is not a qintent cache file")
    if header.get("schema") != CACHE_SCHEMA:
        raise CacheError(f"{path} has unsupported schema {header.get('schema')!r}")
    complete = text.endswith("\n")
    records: dict[str, CacheRecord] = {}
    body = lines[1:]
    nonempty = [i for i, line in enumerate(body) if line.strip()]
    last_idx = nonempty[-1] if nonempty else -1
    for i in nonempty:
        try:
            rec = CacheRecord.from_json(json.loads(body[i]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            if i == last_idx and not complete:
                break  # truncated tail from an interrupted append
            raise CacheError(f"{path}: corrupt record on line {i + 2}: {exc}") from exc
        records[rec.key] = rec
    return header, records


def load_cache_snapshot(path: str | Path) -> tuple[dict, dict[str, CacheRecord]]:
    """Read-only load for the serving layer: (header, records by key)."""
    return _read_cache_file(Path(path))


def make_record(
    key: str,
    resolved: ResolvedIntent,
    evidence_digest: str,
    pipeline_version: str,
    created_at: float | None = None,
) -> CacheRecord:
    return CacheRecord(
        key=key,
        resolved=resolved,
        evidence_digest=evidence_digest,
        pipeline_version=pipeline_version,
        created_at=time.time() if created_at is None else created_at,
    )
