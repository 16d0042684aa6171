"""Catalog ingestion: vertical taxonomy, entity store, and text normalization.

The store is the grounding substrate for retrieval: every entity carries its
raw and normalized surfaces (name plus aliases), and iteration order is fixed
(sorted by entity_id) so the whole pipeline is reproducible.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CatalogError

ENTITY_KINDS = ("merchant", "brand", "product")
SEGMENTS = ("head", "torso", "tail", "unknown")

_KEPT_PUNCT = " '-&"


def _canon_pass(text: str) -> str:
    s = unicodedata.normalize("NFKC", text).lower()
    s = "".join(" " if ch.isspace() else ch for ch in s)
    s = "".join(ch for ch in s if ch.isalnum() or ch in _KEPT_PUNCT)
    return " ".join(s.split())


def normalize_text(raw: str) -> str:
    """Canonical form used for cache keys and matching.

    NFKC, lowercase, whitespace runs collapsed to single spaces, trimmed, and
    every character that is not alphanumeric, space, apostrophe, hyphen, or
    ampersand removed. Iterated to a fixpoint: removing characters can expose
    new compositions (e.g. Hangul jamo pairs), so one pass is not idempotent.
    """
    out = _canon_pass(raw)
    while True:
        again = _canon_pass(out)
        if again == out:
            return out
        out = again


@dataclass(frozen=True)
class Vertical:
    """One business category; ``id`` is the stable token used everywhere."""

    id: str
    display_name: str

    def __post_init__(self) -> None:
        if not self.id or self.id != self.id.lower():
            raise CatalogError(f"vertical id must be non-empty lowercase, got {self.id!r}")


@dataclass(frozen=True)
class Taxonomy:
    """The ordered label space of verticals."""

    verticals: tuple[Vertical, ...]
    _ids: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.verticals) < 2:
            raise CatalogError("taxonomy needs at least 2 verticals")
        ids = [v.id for v in self.verticals]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise CatalogError(f"duplicate vertical ids in taxonomy: {', '.join(dupes)}")
        object.__setattr__(self, "_ids", frozenset(ids))

    def __contains__(self, vertical_id: str) -> bool:
        return vertical_id in self._ids

    def ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.verticals)


@dataclass(frozen=True)
class CatalogEntity:
    """A named marketplace entity (merchant, brand, or product)."""

    entity_id: str
    name: str
    kind: str
    vertical: str
    aliases: tuple[str, ...] = ()
    normalized_name: str = field(init=False, compare=False)
    normalized_aliases: tuple[str, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "normalized_name", normalize_text(self.name))
        object.__setattr__(
            self, "normalized_aliases", tuple(normalize_text(a) for a in self.aliases)
        )

    def surfaces(self) -> tuple[str, ...]:
        """Normalized match surfaces: the name first, then aliases in input order."""
        return (self.normalized_name,) + self.normalized_aliases


class EntityStore:
    """Immutable catalog container; iterates entities sorted by entity_id."""

    def __init__(self, entities: Iterable[CatalogEntity], taxonomy: Taxonomy, version: str):
        self._entities = tuple(sorted(entities, key=lambda e: e.entity_id))
        self._by_id = {e.entity_id: e for e in self._entities}
        self.taxonomy = taxonomy
        self.version = version

    def __iter__(self) -> Iterator[CatalogEntity]:
        return iter(self._entities)

    def __len__(self) -> int:
        return len(self._entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._by_id

    def get(self, entity_id: str) -> CatalogEntity:
        return self._by_id[entity_id]


@dataclass(frozen=True)
class Query:
    """A user query with its canonical form and optional traffic segment."""

    raw: str
    normalized: str
    segment: str = "unknown"

    @classmethod
    def from_raw(cls, raw: str, segment: str = "unknown") -> "Query":
        if segment not in SEGMENTS:
            raise CatalogError(f"unknown segment {segment!r}")
        return cls(raw=raw, normalized=normalize_text(raw), segment=segment)


def load_taxonomy(source: str | Path | dict) -> Taxonomy:
    """Load a taxonomy from a JSON file path or an already-parsed document."""
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CatalogError(f"cannot read taxonomy {source}: {exc}") from exc
    else:
        doc = source
    entries = doc.get("verticals")
    if not isinstance(entries, list):
        raise CatalogError("taxonomy document must contain a 'verticals' array")
    verticals = []
    for entry in entries:
        try:
            verticals.append(Vertical(id=entry["id"], display_name=entry["display_name"]))
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed vertical entry {entry!r}") from exc
    return Taxonomy(tuple(verticals))


def _parse_record(line: str, lineno: int) -> CatalogEntity:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(rec, dict):
        raise CatalogError(f"line {lineno}: record must be an object")
    missing = [k for k in ("entity_id", "name", "kind", "vertical") if k not in rec]
    if missing:
        raise CatalogError(f"line {lineno}: missing fields {', '.join(missing)}")
    kind = rec["kind"]
    if kind not in ENTITY_KINDS:
        raise CatalogError(f"line {lineno}: unknown kind {kind!r}")
    aliases = rec.get("aliases", [])
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise CatalogError(f"line {lineno}: aliases must be an array of strings")
    entity = CatalogEntity(
        entity_id=str(rec["entity_id"]),
        name=str(rec["name"]),
        kind=kind,
        vertical=str(rec["vertical"]),
        aliases=tuple(aliases),
    )
    if not entity.normalized_name:
        raise CatalogError(f"line {lineno}: name {rec['name']!r} is empty after normalization")
    return entity


def _content_version(entities: list[CatalogEntity]) -> str:
    payload = json.dumps(
        [
            [e.entity_id, e.name, e.kind, e.vertical, list(e.aliases)]
            for e in sorted(entities, key=lambda e: e.entity_id)
        ],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def load_catalog(source: Iterable[str], taxonomy: Taxonomy, version: str | None = None) -> EntityStore:
    """Parse line-delimited JSON entity records into a validated EntityStore.

    All problems are collected before failing: malformed records are reported
    with their line numbers, duplicate entity_ids are listed, and records with
    verticals missing from the taxonomy are named.
    """
    entities: list[CatalogEntity] = []
    problems: list[str] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            entity = _parse_record(line, lineno)
        except CatalogError as exc:
            problems.append(str(exc))
            continue
        if entity.entity_id in seen:
            problems.append(
                f"line {lineno}: duplicate entity_id {entity.entity_id!r}"
                f" (first seen on line {seen[entity.entity_id]})"
            )
            continue
        seen[entity.entity_id] = lineno
        if entity.vertical not in taxonomy:
            problems.append(
                f"line {lineno}: entity {entity.entity_id!r} has unknown vertical"
                f" {entity.vertical!r}"
            )
            continue
        entities.append(entity)
    if problems:
        raise CatalogError("catalog load failed:\n" + "\n".join(f"  - {p}" for p in problems))
    return EntityStore(entities, taxonomy, version or _content_version(entities))


def load_catalog_file(path: str | Path, taxonomy: Taxonomy, version: str | None = None) -> EntityStore:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CatalogError(f"cannot read catalog {path}: {exc}") from exc
    return load_catalog(lines, taxonomy, version)
