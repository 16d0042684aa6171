"""Stage 1 retrieval: encoder interface, index build, exact top-N cosine search.

Vectors are unit-normalized at build time so cosine reduces to a dot product.
The reference search is exact; approximate backends may stand in behind the
same contract if they pass a recall check against the exact ranking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .catalog import EntityStore, Query
from .errors import ConfigError, IndexIntegrityError

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class RetrievalConfig:
    """Stage 1/2 knobs: top-N, fuzzy blend weight, threshold, intent cap."""

    top_n: int = 50
    alpha: float = 0.6
    tau_fuzzy: float = 0.75
    max_intents: int = 2

    def __post_init__(self) -> None:
        if self.top_n < 1:
            raise ConfigError(f"top_n must be >= 1, got {self.top_n}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tau_fuzzy <= 1.0:
            raise ConfigError(f"tau_fuzzy must be in [0, 1], got {self.tau_fuzzy}")
        if self.max_intents != 2:
            raise ConfigError("max_intents is fixed at 2")


@runtime_checkable
class Encoder(Protocol):
    dimension: int
    identity: str

    def encode(self, text: str) -> np.ndarray: ...


class HashEncoder:
    """Deterministic test encoder: seeded character-trigram hashing.

    Texts map to L2-normalized bucket-count vectors; identical texts give
    bitwise-identical vectors and shared trigrams give positive cosine.
    Inputs with no trigram (fewer than 3 characters) map to the first basis
    vector so degenerate queries stay representable.
    """

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension < 2:
            raise ConfigError(f"encoder dimension must be >= 2, got {dimension}")
        self.dimension = dimension
        self.seed = seed
        self.identity = f"hash-ngram3-d{dimension}-s{seed}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        if len(text) < 3:
            vec[0] = 1.0
            return vec
        for i in range(len(text) - 2):
            digest = blake2b(text[i : i + 3].encode("utf-8"), key=self._key, digest_size=8)
            vec[int.from_bytes(digest.digest(), "little") % self.dimension] += 1.0
        return vec / np.linalg.norm(vec)


def hash_encoder(dimension: int, seed: int = 0) -> HashEncoder:
    return HashEncoder(dimension=dimension, seed=seed)


@dataclass(frozen=True)
class CandidateMatch:
    """One stage-1 hit: the entity's best surface by cosine."""

    entity_id: str
    surface: str
    cosine: float


class SemanticIndex:
    """Dense index over every (entity, surface) pair of a store."""

    def __init__(
        self,
        store_version: str,
        encoder_identity: str,
        dimension: int,
        entity_ids: tuple[str, ...],
        surfaces: tuple[str, ...],
        vectors: np.ndarray,
    ):
        if vectors.shape != (len(entity_ids), dimension):
            raise IndexIntegrityError("vector matrix shape does not match entries")
        self.store_version = store_version
        self.encoder_identity = encoder_identity
        self.dimension = dimension
        self.entity_ids = entity_ids
        self.surfaces = surfaces
        self.vectors = vectors
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.entity_ids)

    def entries(self):
        for i, eid in enumerate(self.entity_ids):
            yield eid, self.surfaces[i], self.vectors[i]


def build_index(store: EntityStore, encoder: Encoder) -> SemanticIndex:
    """Encode every normalized name and alias of every entity.

    Fails naming the offending surface if the encoder raises or returns a
    zero vector (which cannot be normalized).
    """
    if len(store) == 0:
        raise ConfigError("empty store")
    if encoder.dimension < 2:
        raise ConfigError("encoder dimension must be >= 2")
    entity_ids: list[str] = []
    surfaces: list[str] = []
    rows: list[np.ndarray] = []
    for entity in store:
        for surface in entity.surfaces():
            try:
                vec = np.asarray(encoder.encode(surface), dtype=np.float64)
            except Exception as exc:
                raise IndexIntegrityError(
                    f"encoder failed on surface {surface!r} of {entity.entity_id!r}: {exc}"
                ) from exc
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise IndexIntegrityError(
                    f"encoder returned a zero vector for surface {surface!r}"
                    f" of {entity.entity_id!r}"
                )
            entity_ids.append(entity.entity_id)
            surfaces.append(surface)
            rows.append(vec / norm)
    return SemanticIndex(
        store_version=store.version,
        encoder_identity=encoder.identity,
        dimension=encoder.dimension,
        entity_ids=tuple(entity_ids),
        surfaces=tuple(surfaces),
        vectors=np.vstack(rows),
    )


def semantic_topn(
    index: SemanticIndex, query: Query, encoder: Encoder, n: int
) -> list[CandidateMatch]:
    """Exact cosine top-N over distinct entities.

    Per entity only the best-scoring surface is kept; results are sorted by
    cosine descending with ties broken by entity_id ascending. Scores are
    row-wise ddot products: batched dgemv can differ by 1 ulp from a per-row
    scorer, which is enough to flip an entity_id tie-break.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if encoder.identity != index.encoder_identity:
        raise ConfigError(
            f"encoder {encoder.identity!r} does not match index {index.encoder_identity!r}"
        )
    if encoder.dimension != index.dimension:
        raise ConfigError(
            f"encoder dimension {encoder.dimension} does not match index {index.dimension}"
        )
    qvec = np.asarray(encoder.encode(query.normalized), dtype=np.float64)
    norm = float(np.linalg.norm(qvec))
    if norm == 0.0:
        qvec = np.zeros(index.dimension)
        qvec[0] = 1.0
    else:
        qvec = qvec / norm
    vectors = index.vectors
    best: dict[str, tuple[float, str]] = {}
    for i, eid in enumerate(index.entity_ids):
        score = min(1.0, max(-1.0, float(np.dot(vectors[i], qvec))))
        if eid not in best or score > best[eid][0]:
            best[eid] = (score, index.surfaces[i])
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
    return [
        CandidateMatch(entity_id=eid, surface=surface, cosine=score)
        for eid, (score, surface) in ranked[:n]
    ]


INDEX_MAGIC = "qintent-index"
INDEX_SCHEMA = 1


def save_index(index: SemanticIndex, path: str | Path) -> None:
    """Persist as an .npz with a JSON header and columnar string/float arrays."""
    header = json.dumps(
        {
            "magic": INDEX_MAGIC,
            "schema": INDEX_SCHEMA,
            "store_version": index.store_version,
            "encoder_identity": index.encoder_identity,
            "dimension": index.dimension,
        }
    )
    np.savez(
        path,
        header=np.array(header),
        entity_ids=np.array(index.entity_ids),
        surfaces=np.array(index.surfaces),
        vectors=index.vectors,
    )


def load_index(
    path: str | Path,
    store: EntityStore | None = None,
    encoder: Encoder | None = None,
) -> SemanticIndex:
    """Load a persisted index, verifying the header against the active stack."""
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            entity_ids = tuple(str(x) for x in data["entity_ids"])
            surfaces = tuple(str(x) for x in data["surfaces"])
            vectors = np.array(data["vectors"], dtype=np.float64)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise IndexIntegrityError(f"cannot load index {path}: {exc}") from exc
    if header.get("magic") != INDEX_MAGIC or header.get("schema") != INDEX_SCHEMA:
        raise IndexIntegrityError(f"{path} is not a qintent index file")
    index = SemanticIndex(
        store_version=header["store_version"],
        encoder_identity=header["encoder_identity"],
        dimension=int(header["dimension"]),
        entity_ids=entity_ids,
        surfaces=surfaces,
        vectors=vectors,
    )
    if store is not None and index.store_version != store.version:
        raise IndexIntegrityError(
            f"index built from store {index.store_version!r},"
            f" active store is {store.version!r}"
        )
    if store is not None:
        for eid in set(entity_ids):
            if eid not in store:
                raise IndexIntegrityError(f"index entity {eid!r} missing from store")
    if encoder is not None and (
        encoder.identity != index.encoder_identity or encoder.dimension != index.dimension
    ):
        raise ConfigError(
            f"active encoder {encoder.identity!r} (d={encoder.dimension}) does not match"
            f" index encoder {index.encoder_identity!r} (d={index.dimension})"
        )
    return index
