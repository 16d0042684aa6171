"""Stage 2 refinement: weighted fuzzy re-ranking and threshold filtering.

Scores are normalized to [0, 1]. Inputs are assumed normalized (see
catalog.normalize_text); Levenshtein uses unit insert/delete/substitute
costs with no transposition.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import _kernels
from .catalog import EntityStore, Query
from .errors import ConfigError, IndexIntegrityError
from .retrieval import CandidateMatch, RetrievalConfig


def _sim(a: str, b: str) -> float:
    return _kernels.normalized_similarity(a, b)


def token_set_score(q: str, e: str) -> float:
    """Similarity over token-set decompositions, insensitive to reordering.

    With I the sorted shared tokens, A = I plus q-only tokens, B = I plus
    e-only tokens (space-joined), returns the best normalized Levenshtein
    similarity among (I, A), (I, B), (A, B).
    """
    tq, te = set(q.split()), set(e.split())
    inter = sorted(tq & te)
    s_i = " ".join(inter)
    s_a = " ".join(inter + sorted(tq - te))
    s_b = " ".join(inter + sorted(te - tq))
    return max(_sim(s_i, s_a), _sim(s_i, s_b), _sim(s_a, s_b))


def partial_ratio_score(q: str, e: str) -> float:
    """Best similarity of the shorter string against any contiguous
    same-length window of the longer one."""
    s, l = (q, e) if len(q) <= len(e) else (e, q)
    if not s:
        return 1.0 if not l else 0.0
    return _kernels.best_window_similarity(s, l)


def fuzzy_score(q: str, e: str, alpha: float) -> float:
    """Convex blend: alpha * token_set + (1 - alpha) * partial_ratio."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * token_set_score(q, e) + (1.0 - alpha) * partial_ratio_score(q, e)


@dataclass(frozen=True)
class FuzzyScoredMatch:
    """A retained candidate with both stage scores and entity provenance."""

    entity_id: str
    surface: str
    cosine: float
    fuzzy: float
    name: str
    kind: str
    vertical: str

    def to_json(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "surface": self.surface,
            "cosine": self.cosine,
            "fuzzy": self.fuzzy,
            "name": self.name,
            "kind": self.kind,
            "vertical": self.vertical,
        }


@dataclass(frozen=True)
class CatalogEvidence:
    """High-precision entity matches, sorted by fuzzy desc, cosine desc, id asc."""

    matches: tuple[FuzzyScoredMatch, ...] = ()

    def is_empty(self) -> bool:
        return not self.matches

    @classmethod
    def empty(cls) -> "CatalogEvidence":
        return cls(())

    def to_json(self) -> list[dict]:
        return [m.to_json() for m in self.matches]


def refine(
    candidates: list[CandidateMatch],
    q: Query,
    config: RetrievalConfig,
    store: EntityStore,
) -> CatalogEvidence:
    """Filter stage-1 candidates by the weighted fuzzy score threshold.

    Each entity is scored as the max fuzzy score over its name and aliases;
    entities below tau_fuzzy are dropped. An empty result is the cold-start
    signal for the reasoner.
    """
    scored: list[FuzzyScoredMatch] = []
    for cand in candidates:
        if cand.entity_id not in store:
            raise IndexIntegrityError(
                f"candidate {cand.entity_id!r} not found in store"
                " (index/store version mismatch)"
            )
        entity = store.get(cand.entity_id)
        best_score = -1.0
        best_surface = entity.normalized_name
        for surface in entity.surfaces():
            score = fuzzy_score(q.normalized, surface, config.alpha)
            if score > best_score:
                best_score = score
                best_surface = surface
        if best_score >= config.tau_fuzzy:
            scored.append(
                FuzzyScoredMatch(
                    entity_id=cand.entity_id,
                    surface=best_surface,
                    cosine=cand.cosine,
                    fuzzy=best_score,
                    name=entity.name,
                    kind=entity.kind,
                    vertical=entity.vertical,
                )
            )
    scored.sort(key=lambda m: (-m.fuzzy, -m.cosine, m.entity_id))
    return CatalogEvidence(tuple(scored))
