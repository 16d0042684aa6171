"""End-to-end orchestration: classify one query, or batch-populate the cache.

Flow per query: normalize, semantic top-N (when catalog grounding is on),
fuzzy refine, agentic reasoning under the effective tool budget, optional
secondary truncation, pairwise resolution. Batch runs deduplicate by
normalized key, classify each unique key once, and append cache records as
they complete so interrupted runs resume.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

from .cache import CacheStore, make_record
from .catalog import EntityStore, Query
from .disambiguation import ConflictWhitelist, ResolvedIntent, Resolver, resolve
from .errors import CacheError, ClassificationError, ConfigError
from .fuzzy import CatalogEvidence, refine
from .reasoner import (
    EvidenceBundle,
    ExternalEvidence,
    IntentTuple,
    PolicyContext,
    ReasoningEngine,
    SearchTool,
    ToolBudget,
    predict_intents,
)
from .retrieval import Encoder, RetrievalConfig, SemanticIndex, semantic_topn

AGENTIC_MODES = ("model_decides", "on_empty_catalog", "off")


@dataclass(frozen=True)
class AblationFlags:
    """Feature switches for the ablation arms; they compose independently."""

    catalog_grounding: bool = True
    agentic_search: bool = True
    dual_intent: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    retrieval: RetrievalConfig = RetrievalConfig()
    budget: ToolBudget = ToolBudget()
    agentic_mode: str = "on_empty_catalog"
    ablation_flags: AblationFlags = AblationFlags()
    default_vertical: str = "restaurant"

    def __post_init__(self) -> None:
        if self.agentic_mode not in AGENTIC_MODES:
            raise ConfigError(
                f"agentic_mode must be one of {AGENTIC_MODES}, got {self.agentic_mode!r}"
            )

    def to_json(self) -> dict:
        return {
            "retrieval": {
                "top_n": self.retrieval.top_n,
                "alpha": self.retrieval.alpha,
                "tau_fuzzy": self.retrieval.tau_fuzzy,
                "max_intents": self.retrieval.max_intents,
            },
            "budget": {
                "max_tool_calls": self.budget.max_tool_calls,
                "per_call_timeout": self.budget.per_call_timeout,
            },
            "agentic_mode": self.agentic_mode,
            "ablation_flags": {
                "catalog_grounding": self.ablation_flags.catalog_grounding,
                "agentic_search": self.ablation_flags.agentic_search,
                "dual_intent": self.ablation_flags.dual_intent,
            },
            "default_vertical": self.default_vertical,
        }


@dataclass(frozen=True)
class PipelineDeps:
    """Everything classify_query needs, built against one store version."""

    store: EntityStore
    index: SemanticIndex
    encoder: Encoder
    engine: ReasoningEngine
    tool: SearchTool
    whitelist: ConflictWhitelist
    policy: PolicyContext
    config: PipelineConfig
    resolver: Resolver = resolve

    def with_config(self, config: PipelineConfig) -> "PipelineDeps":
        return replace(self, config=config)


def pipeline_version(deps: PipelineDeps) -> str:
    """Content hash identifying a classification regime. Changing the config,
    whitelist, store, engine, or encoder invalidates cached records."""
    payload = json.dumps(
        {
            "config": deps.config.to_json(),
            "whitelist_version": deps.whitelist.version,
            "store_version": deps.store.version,
            "engine_identity": deps.engine.identity,
            "encoder_identity": deps.encoder.identity,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ClassificationResult:
    """ResolvedIntent plus the evidence trail behind it."""

    resolved: ResolvedIntent
    evidence: EvidenceBundle
    retrievals: int
    tool_calls: int


def _effective_budget(config: PipelineConfig, catalog_evidence: CatalogEvidence) -> ToolBudget:
    mode = config.agentic_mode if config.ablation_flags.agentic_search else "off"
    if mode == "off":
        return ToolBudget(max_tool_calls=0, per_call_timeout=config.budget.per_call_timeout)
    if mode == "on_empty_catalog" and not catalog_evidence.is_empty():
        return ToolBudget(max_tool_calls=0, per_call_timeout=config.budget.per_call_timeout)
    return config.budget


def classify_query(raw: str, deps: PipelineDeps) -> ClassificationResult:
    """Classify one raw query through the full pipeline.

    Reasoner failures propagate as ClassificationError; batch callers record
    them, single-call users see them directly.
    """
    config = deps.config
    q = Query.from_raw(raw)
    retrievals = 0
    if config.ablation_flags.catalog_grounding:
        candidates = semantic_topn(deps.index, q, deps.encoder, config.retrieval.top_n)
        retrievals = 1
        catalog_evidence = refine(candidates, q, config.retrieval, deps.store)
    else:
        catalog_evidence = CatalogEvidence.empty()
    budget = _effective_budget(config, catalog_evidence)
    intents, external = predict_intents(
        deps.engine,
        q,
        EvidenceBundle(catalog_evidence, ExternalEvidence()),
        deps.policy,
        deps.store.taxonomy,
        deps.tool,
        budget,
    )
    if not config.ablation_flags.dual_intent and intents.secondary is not None:
        intents = IntentTuple(primary=intents.primary, secondary=None)
    resolved = deps.resolver(intents, deps.whitelist)
    bundle = EvidenceBundle(catalog_evidence, external)
    return ClassificationResult(
        resolved=resolved,
        evidence=bundle,
        retrievals=retrievals,
        tool_calls=len(external.tool_queries),
    )


@dataclass
class BatchReport:
    total: int = 0
    succeeded: int = 0
    failed: int = 0
    tool_calls_issued: int = 0
    cache_written: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "tool_calls_issued": self.tool_calls_issued,
            "cache_written": self.cache_written,
            "failures": [{"key": k, "error": e} for k, e in self.failures],
        }


def batch_run(
    queries: Iterable[str],
    deps: PipelineDeps,
    cache: CacheStore,
    parallelism: int = 1,
    evidence_log: list[dict] | None = None,
) -> BatchReport:
    """Classify the unique normalized keys of a query stream into the cache.

    Keys already cached under the same pipeline_version are skipped (resume).
    Failed queries are recorded in the report and never cached. When
    ``evidence_log`` is given, every new record's evidence bundle is appended
    to it so digests can be recomputed.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    version = pipeline_version(deps)
    if cache.pipeline_version != version:
        raise CacheError(
            f"cache is bound to pipeline_version {cache.pipeline_version!r},"
            f" current deps give {version!r}"
        )
    unique: dict[str, str] = {}
    for raw in queries:
        q = Query.from_raw(raw)
        if not q.normalized:
            continue  # blank or junk-only input is not a classifiable query
        unique.setdefault(q.normalized, raw)
    report = BatchReport(total=len(unique))
    lock = threading.Lock()

    def work(item: tuple[str, str]) -> None:
        key, raw = item
        if key in cache:
            with lock:
                report.succeeded += 1
            return
        try:
            result = classify_query(raw, deps)
        except ClassificationError as exc:
            with lock:
                report.failed += 1
                report.failures.append((key, type(exc).__name__))
            return
        record = make_record(
            key=key,
            resolved=result.resolved,
            evidence_digest=result.evidence.digest(),
            pipeline_version=version,
        )
        cache.put(record)  # raises CacheError; progress so far stays on disk
        with lock:
            report.succeeded += 1
            report.cache_written += 1
            report.tool_calls_issued += result.tool_calls
            if evidence_log is not None:
                evidence_log.append({"key": key, "evidence": result.evidence.to_json()})

    items = sorted(unique.items())
    if parallelism == 1:
        for item in items:
            work(item)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for future in [pool.submit(work, item) for item in items]:
                future.result()
    report.failures.sort()
    return report


def cache_get(cache: CacheStore, raw: str):
    """Spec-level lookup alias: normalized-key get; None signals a miss."""
    return cache.get(raw)
