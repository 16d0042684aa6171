"""Pairwise-override disambiguation of a dual-intent tuple.

The whitelist holds ordered (primary, secondary) pairs for which the
secondary intent wins. Resolution is total, deterministic, and records which
rule fired so policy changes stay auditable. The resolver slot is pluggable:
anything mapping a tuple to one of its own members can stand in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .catalog import Taxonomy
from .errors import ConfigError
from .reasoner import IntentTuple

RULE_NO_SECONDARY = "no_secondary"
RULE_OVERRIDE = "override"
RULE_PRIMARY_DEFAULT = "primary_default"


@dataclass(frozen=True)
class ConflictWhitelist:
    """Ordered conflict pairs; (a, b) inside does not imply (b, a)."""

    pairs: frozenset[tuple[str, str]]
    version: str

    @classmethod
    def empty(cls, version: str = "empty") -> "ConflictWhitelist":
        return cls(pairs=frozenset(), version=version)


@dataclass(frozen=True)
class ResolvedIntent:
    """The final vertical plus full provenance of how it was chosen."""

    final: str
    intents: IntentTuple
    rule_fired: str
    whitelist_version: str

    def to_json(self) -> dict:
        return {
            "final": self.final,
            "primary": self.intents.primary,
            "secondary": self.intents.secondary,
            "rule_fired": self.rule_fired,
            "whitelist_version": self.whitelist_version,
        }


Resolver = Callable[[IntentTuple, ConflictWhitelist], ResolvedIntent]


def load_whitelist(source: str | Path | dict, taxonomy: Taxonomy) -> ConflictWhitelist:
    """Load and validate a whitelist document: {"version": ..., "pairs": [...]}.

    Pairs with unknown verticals or equal components fail the load. Duplicate
    pairs collapse (set semantics).
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read whitelist {source}: {exc}") from exc
    else:
        doc = source
    version = doc.get("version")
    if not isinstance(version, str) or not version:
        raise ConfigError("whitelist document needs a non-empty string 'version'")
    pairs: set[tuple[str, str]] = set()
    for entry in doc.get("pairs", []):
        try:
            primary, secondary = entry["primary"], entry["secondary"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed whitelist pair {entry!r}") from exc
        if primary == secondary:
            raise ConfigError(f"self-pair ({primary!r}, {secondary!r}) is not allowed")
        for vid in (primary, secondary):
            if vid not in taxonomy:
                raise ConfigError(f"whitelist pair references unknown vertical {vid!r}")
        pairs.add((primary, secondary))
    return ConflictWhitelist(pairs=frozenset(pairs), version=version)


def resolve(intents: IntentTuple, whitelist: ConflictWhitelist) -> ResolvedIntent:
    """Pick the final vertical: the secondary when the ordered pair is
    whitelisted, the primary otherwise. Total over valid tuples."""
    if intents.secondary is None:
        return ResolvedIntent(intents.primary, intents, RULE_NO_SECONDARY, whitelist.version)
    if (intents.primary, intents.secondary) in whitelist.pairs:
        return ResolvedIntent(intents.secondary, intents, RULE_OVERRIDE, whitelist.version)
    return ResolvedIntent(intents.primary, intents, RULE_PRIMARY_DEFAULT, whitelist.version)
