"""Grounded query intent classification for multi-category marketplaces.

Pipeline: staged catalog retrieval (semantic top-N, then weighted fuzzy
refinement), an agentic reasoning loop with an optional web-search tool,
dual-intent prediction, and pairwise-override disambiguation, deployed
batch-and-cache with a read-only lookup service.
"""

from .catalog import (
    CatalogEntity,
    EntityStore,
    Query,
    Taxonomy,
    Vertical,
    load_catalog,
    load_catalog_file,
    load_taxonomy,
    normalize_text,
)
from .disambiguation import (
    ConflictWhitelist,
    ResolvedIntent,
    load_whitelist,
    resolve,
)
from .errors import (
    CacheError,
    CatalogError,
    ClassificationError,
    ConfigError,
    IndexIntegrityError,
    ProviderError,
    QIntentError,
    ToolError,
)
from .fuzzy import (
    CatalogEvidence,
    FuzzyScoredMatch,
    fuzzy_score,
    partial_ratio_score,
    refine,
    token_set_score,
)
from .pipeline import (
    AblationFlags,
    BatchReport,
    ClassificationResult,
    PipelineConfig,
    PipelineDeps,
    batch_run,
    cache_get,
    classify_query,
    pipeline_version,
)
from .reasoner import (
    EvidenceBundle,
    ExternalEvidence,
    FixtureSearchTool,
    IntentTuple,
    PolicyContext,
    ScriptedEngine,
    ScriptedRules,
    SearchSnippet,
    ToolBudget,
    assemble_prompt,
    predict_intents,
    web_search,
)
from .retrieval import (
    CandidateMatch,
    HashEncoder,
    RetrievalConfig,
    SemanticIndex,
    build_index,
    load_index,
    save_index,
    semantic_topn,
)

__version__ = "0.1.0"
