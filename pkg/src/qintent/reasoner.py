"""Dual-intent reasoning: prompt assembly, the agentic search loop, and the
deterministic scripted engine used by every test path.

The loop is bounded and auditable: at most ``max_tool_calls`` searches per
query, one repair re-prompt on malformed output, then a ClassificationError.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Union

from .catalog import Query, Taxonomy
from .errors import ClassificationError, ConfigError, ToolError
from .fuzzy import CatalogEvidence

MAX_SNIPPETS = 5


@dataclass(frozen=True)
class SearchSnippet:
    source_url: str
    title: str
    snippet: str

    def __post_init__(self) -> None:
        if not self.snippet:
            raise ValueError("snippet text must be non-empty")

    def to_json(self) -> dict:
        return {"url": self.source_url, "title": self.title, "snippet": self.snippet}


@dataclass(frozen=True)
class ExternalEvidence:
    """Web-search results; empty iff the tool was never invoked."""

    tool_queries: tuple[str, ...] = ()
    snippets: tuple[SearchSnippet, ...] = ()

    def is_empty(self) -> bool:
        return not self.tool_queries

    def to_json(self) -> dict:
        return {
            "tool_queries": list(self.tool_queries),
            "snippets": [s.to_json() for s in self.snippets],
        }


@dataclass(frozen=True)
class EvidenceBundle:
    """Everything the reasoner sees: catalog matches plus external snippets."""

    catalog: CatalogEvidence
    external: ExternalEvidence

    @classmethod
    def empty(cls) -> "EvidenceBundle":
        return cls(CatalogEvidence.empty(), ExternalEvidence())

    def to_json(self) -> dict:
        return {"catalog": self.catalog.to_json(), "external": self.external.to_json()}

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class IntentTuple:
    """Ordered dual-intent prediction; secondary is optional."""

    primary: str
    secondary: str | None = None

    def validate(self, taxonomy: Taxonomy) -> None:
        if self.primary not in taxonomy:
            raise ValueError(f"primary {self.primary!r} not in taxonomy")
        if self.secondary is not None:
            if self.secondary not in taxonomy:
                raise ValueError(f"secondary {self.secondary!r} not in taxonomy")
            if self.secondary == self.primary:
                raise ValueError("secondary must differ from primary")

    def to_json(self) -> dict:
        return {"primary": self.primary, "secondary": self.secondary}


@dataclass(frozen=True)
class PolicyExample:
    query: str
    evidence_summary: str
    intents: IntentTuple


@dataclass(frozen=True)
class PolicyContext:
    """Strategic rules and few-shot exemplars injected into every prompt."""

    strategic_rules: tuple[str, ...] = ()
    example_bank: tuple[PolicyExample, ...] = ()

    @classmethod
    def empty(cls) -> "PolicyContext":
        return cls()


def load_policy(source: str | Path | dict, taxonomy: Taxonomy) -> PolicyContext:
    """Load policy context from a JSON file or parsed document; exemplar
    tuples are validated against the taxonomy."""
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read policy {source}: {exc}") from exc
    else:
        doc = source
    rules = tuple(str(r) for r in doc.get("strategic_rules", []))
    examples = []
    for entry in doc.get("example_bank", []):
        intents = IntentTuple(entry["primary"], entry.get("secondary"))
        try:
            intents.validate(taxonomy)
        except ValueError as exc:
            raise ConfigError(f"invalid example bank entry {entry!r}: {exc}") from exc
        examples.append(
            PolicyExample(
                query=entry["query"],
                evidence_summary=entry.get("evidence_summary", ""),
                intents=intents,
            )
        )
    return PolicyContext(strategic_rules=rules, example_bank=tuple(examples))


@dataclass(frozen=True)
class ToolBudget:
    """Caps the agentic loop; the engine is told when tools run out."""

    max_tool_calls: int = 2
    per_call_timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.max_tool_calls < 0:
            raise ConfigError("max_tool_calls must be >= 0")
        if self.per_call_timeout <= 0:
            raise ConfigError("per_call_timeout must be positive")


class SearchTool(Protocol):
    def search(self, query_text: str, limit: int) -> list[SearchSnippet]: ...


class FixtureSearchTool:
    """Resolves searches from a local JSON map keyed by exact query text."""

    def __init__(self, fixtures: dict[str, list[dict]]):
        self._fixtures = fixtures

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureSearchTool":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read search fixtures {path}: {exc}") from exc
        return cls(doc)

    def search(self, query_text: str, limit: int) -> list[SearchSnippet]:
        results = self._fixtures.get(query_text, [])
        return [
            SearchSnippet(
                source_url=r.get("url", ""),
                title=r.get("title", ""),
                snippet=r["snippet"],
            )
            for r in results[:limit]
            if r.get("snippet")
        ]


def web_search(tool: SearchTool, query_text: str, max_snippets: int = MAX_SNIPPETS) -> list[SearchSnippet]:
    """Run one search through the tool, capping the snippet count."""
    if not query_text:
        raise ValueError("query_text must be non-empty")
    return list(tool.search(query_text, max_snippets))[:max_snippets]


# ---------------------------------------------------------------------------
# Engine protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngineRequest:
    """What an engine sees per turn. Live engines consume ``prompt``; the
    scripted engine reads the structured fields."""

    prompt: str
    query: Query
    evidence: EvidenceBundle
    tools_available: bool


@dataclass(frozen=True)
class ToolRequest:
    query_text: str


@dataclass(frozen=True)
class FinalAnswer:
    text: str


EngineReply = Union[ToolRequest, FinalAnswer]


class ReasoningEngine(Protocol):
    identity: str

    def respond(self, request: EngineRequest) -> EngineReply: ...


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

OUTPUT_INSTRUCTION = (
    'Reply with exactly one JSON object: {"primary": "<vertical-id>", '
    '"secondary": "<vertical-id>"}. Set "secondary" to null when only one '
    "intent is plausible. Both ids must come from the category list and must differ."
)


def assemble_prompt(
    q: Query,
    evidence: EvidenceBundle,
    policy: PolicyContext,
    taxonomy: Taxonomy,
) -> str:
    """Render the grounded prompt. Pure function: identical inputs yield a
    byte-identical document. Empty sections are omitted."""
    lines: list[str] = [
        "You classify one marketplace search query into business categories.",
        "",
        "## Categories",
    ]
    for v in taxonomy.verticals:
        lines.append(f"- {v.id}: {v.display_name}")
    if policy.strategic_rules:
        lines.append("")
        lines.append("## Policy rules")
        for i, rule in enumerate(policy.strategic_rules, start=1):
            lines.append(f"{i}. {rule}")
    if policy.example_bank:
        lines.append("")
        lines.append("## Examples")
        for ex in policy.example_bank:
            secondary = ex.intents.secondary if ex.intents.secondary else "null"
            lines.append(
                f"- query: {ex.query} | evidence: {ex.evidence_summary}"
                f" | primary: {ex.intents.primary} | secondary: {secondary}"
            )
    if not evidence.catalog.is_empty():
        lines.append("")
        lines.append("## Catalog matches")
        for m in evidence.catalog.matches:
            lines.append(
                f"- {m.name} | kind={m.kind} | vertical={m.vertical} | fuzzy={m.fuzzy:.3f}"
            )
    if not evidence.external.is_empty():
        lines.append("")
        lines.append("## Web results")
        for tq in evidence.external.tool_queries:
            lines.append(f"- searched: {tq!r}")
        for s in evidence.external.snippets:
            lines.append(f"- [{s.title}]({s.source_url}) {s.snippet}")
    lines.append("")
    lines.append("## Query")
    lines.append(q.normalized)
    lines.append("")
    lines.append("## Output format")
    lines.append(OUTPUT_INSTRUCTION)
    return "\n".join(lines)


def _compose(prompt: str, notes: list[str]) -> str:
    if not notes:
        return prompt
    return prompt + "\n\n## Notes\n" + "\n".join(f"- {n}" for n in notes)


def _parse_final(text: str, taxonomy: Taxonomy) -> IntentTuple:
    try:
        doc = json.loads(text.strip())
    except json.JSONDecodeError as exc:
        raise ValueError(f"output is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or "primary" not in doc:
        raise ValueError('output must be an object with a "primary" key')
    primary = doc["primary"]
    secondary = doc.get("secondary")
    if not isinstance(primary, str):
        raise ValueError('"primary" must be a string')
    if secondary is not None and not isinstance(secondary, str):
        raise ValueError('"secondary" must be a string or null')
    intents = IntentTuple(primary=primary, secondary=secondary)
    intents.validate(taxonomy)
    return intents


TOOLS_UNAVAILABLE_NOTE = "The search tool is unavailable or exhausted. Answer now."


def predict_intents(
    engine: ReasoningEngine,
    q: Query,
    evidence: EvidenceBundle,
    policy: PolicyContext,
    taxonomy: Taxonomy,
    tool: SearchTool,
    budget: ToolBudget,
) -> tuple[IntentTuple, ExternalEvidence]:
    """Run the agentic loop until the engine emits a valid intent tuple.

    Tool requests are executed and folded into the external evidence, after
    which the prompt is re-assembled. Tool failures append a note and the
    loop continues. One repair re-prompt is granted for malformed output;
    a second failure (or a tool request after exhaustion) raises
    ClassificationError.
    """
    if not evidence.external.is_empty():
        raise ValueError("evidence.external must start empty")
    external = evidence.external
    notes: list[str] = []
    repair_used = False
    calls = 0
    while True:
        tools_available = calls < budget.max_tool_calls
        turn_notes = list(notes)
        if not tools_available:
            turn_notes.append(TOOLS_UNAVAILABLE_NOTE)
        bundle = EvidenceBundle(evidence.catalog, external)
        prompt = _compose(assemble_prompt(q, bundle, policy, taxonomy), turn_notes)
        reply = engine.respond(
            EngineRequest(
                prompt=prompt, query=q, evidence=bundle, tools_available=tools_available
            )
        )
        if isinstance(reply, ToolRequest):
            if not tools_available:
                raise ClassificationError(
                    f"engine requested a tool after the budget of"
                    f" {budget.max_tool_calls} call(s) was exhausted"
                )
            calls += 1
            query_text = reply.query_text
            if not query_text:
                notes.append("search skipped: empty tool query")
                external = ExternalEvidence(external.tool_queries + ("",), external.snippets)
                continue
            try:
                snippets = web_search(tool, query_text)
            except ToolError as exc:
                notes.append(f"search failed for {query_text!r}: {exc}")
                external = ExternalEvidence(
                    external.tool_queries + (query_text,), external.snippets
                )
                continue
            external = ExternalEvidence(
                external.tool_queries + (query_text,),
                external.snippets + tuple(snippets),
            )
            continue
        try:
            intents = _parse_final(reply.text, taxonomy)
        except ValueError as exc:
            if not repair_used:
                repair_used = True
                notes.append(f"previous reply was rejected ({exc}). {OUTPUT_INSTRUCTION}")
                continue
            raise ClassificationError(f"engine output unparseable after repair: {exc}") from exc
        return intents, external


# ---------------------------------------------------------------------------
# Scripted engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeywordRule:
    """Maps a snippet keyword to an intent; first matching rule wins."""

    keyword: str
    primary: str
    secondary: str | None = None


@dataclass(frozen=True)
class ScriptedRules:
    keyword_rules: tuple[KeywordRule, ...] = ()
    default_vertical: str = "restaurant"
    secondary_margin: float = 0.1


def load_scripted_rules(source: str | Path | dict) -> ScriptedRules:
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read rules {source}: {exc}") from exc
    else:
        doc = source
    rules = tuple(
        KeywordRule(keyword=r["keyword"], primary=r["primary"], secondary=r.get("secondary"))
        for r in doc.get("keyword_rules", [])
    )
    return ScriptedRules(
        keyword_rules=rules,
        default_vertical=doc.get("default_vertical", "restaurant"),
        secondary_margin=float(doc.get("secondary_margin", 0.1)),
    )


class ScriptedEngine:
    """Deterministic stand-in for a live reasoning model.

    Behavior, in order: (1) catalog evidence present: primary is the top
    match's vertical, secondary the best different-vertical match within the
    margin; (2) no evidence at all and tools available: request a search for
    the normalized query; (3) external evidence present: first keyword rule
    matching any snippet wins; (4) otherwise the configured default vertical.
    """

    def __init__(self, rules: ScriptedRules):
        self.rules = rules
        fingerprint = hashlib.sha256(
            json.dumps(
                {
                    "default": rules.default_vertical,
                    "margin": rules.secondary_margin,
                    "rules": [
                        [r.keyword, r.primary, r.secondary] for r in rules.keyword_rules
                    ],
                },
                sort_keys=True,
            ).encode("utf-8")
        ).hexdigest()[:8]
        self.identity = f"scripted-{fingerprint}"

    def _final(self, primary: str, secondary: str | None) -> FinalAnswer:
        return FinalAnswer(json.dumps({"primary": primary, "secondary": secondary}))

    def respond(self, request: EngineRequest) -> EngineReply:
        matches = request.evidence.catalog.matches
        if matches:
            top = matches[0]
            secondary = None
            for m in matches[1:]:
                if m.vertical != top.vertical and top.fuzzy - m.fuzzy <= self.rules.secondary_margin:
                    secondary = m.vertical
                    break
            return self._final(top.vertical, secondary)
        external = request.evidence.external
        if external.is_empty() and request.tools_available:
            return ToolRequest(request.query.normalized)
        if not external.is_empty():
            text = " ".join(f"{s.title} {s.snippet}" for s in external.snippets).lower()
            for rule in self.rules.keyword_rules:
                if rule.keyword.lower() in text:
                    return self._final(rule.primary, rule.secondary)
        return self._final(self.rules.default_vertical, None)


def scripted_engine(rules: ScriptedRules) -> ScriptedEngine:
    return ScriptedEngine(rules)
