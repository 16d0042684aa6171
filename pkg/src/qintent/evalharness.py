"""Benchmark harness: segmented accuracy, the four-arm ablation, win-rate
whitelist derivation, and a synthetic benchmark generator.

Accuracy is always computed on the final resolved intent; a correct secondary
that loses resolution earns nothing. The synthetic benchmark plants three
case families so each ablation arm's added evidence is necessary for a known
slice: (A) solvable only via catalog matches, (B) solvable only via a search
snippet, (C) needing the whitelist override of the secondary intent.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .catalog import CatalogEntity, EntityStore, Taxonomy, Vertical
from .disambiguation import ConflictWhitelist
from .errors import ClassificationError, ConfigError
from .pipeline import AblationFlags, ClassificationResult, PipelineDeps, classify_query
from .reasoner import FixtureSearchTool, KeywordRule, ScriptedEngine, ScriptedRules

BENCH_SEGMENTS = ("head", "torso", "tail")


@dataclass(frozen=True)
class BenchmarkCase:
    query: str
    truth: str
    segment: str

    def __post_init__(self) -> None:
        if self.segment not in BENCH_SEGMENTS:
            raise ConfigError(f"segment must be one of {BENCH_SEGMENTS}, got {self.segment!r}")


def load_benchmark(source: str | Path | Iterable[str], taxonomy: Taxonomy) -> list[BenchmarkCase]:
    """Read line-delimited JSON cases {query, truth, segment}."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    cases = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            case = BenchmarkCase(doc["query"], doc["truth"], doc["segment"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"benchmark line {lineno}: {exc}") from exc
        if case.truth not in taxonomy:
            raise ConfigError(f"benchmark line {lineno}: unknown truth {case.truth!r}")
        cases.append(case)
    return cases


@dataclass
class SegmentScore:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float | None:
        return None if self.total == 0 else self.correct / self.total


@dataclass
class EvalReport:
    """Per-segment and overall accuracy for one pipeline configuration."""

    arm: str
    segments: dict[str, SegmentScore] = field(default_factory=dict)
    overall: SegmentScore = field(default_factory=SegmentScore)
    failed: int = 0
    tool_calls: int = 0
    retrievals: int = 0

    @property
    def accuracy(self) -> float | None:
        return self.overall.accuracy

    def to_json(self) -> dict:
        return {
            "arm": self.arm,
            "overall": {
                "correct": self.overall.correct,
                "total": self.overall.total,
                "accuracy": self.overall.accuracy,
            },
            "segments": {
                seg: {"correct": s.correct, "total": s.total, "accuracy": s.accuracy}
                for seg, s in sorted(self.segments.items())
            },
            "failed": self.failed,
            "tool_calls": self.tool_calls,
            "retrievals": self.retrievals,
        }


def evaluate(
    cases: list[BenchmarkCase],
    deps: PipelineDeps,
    config=None,
    arm: str = "eval",
) -> EvalReport:
    """Classify every case; failures count as incorrect, never as skipped."""
    if config is not None:
        deps = deps.with_config(config)
    report = EvalReport(arm=arm)
    for case in cases:
        seg = report.segments.setdefault(case.segment, SegmentScore())
        seg.total += 1
        report.overall.total += 1
        try:
            result: ClassificationResult = classify_query(case.query, deps)
        except ClassificationError:
            report.failed += 1
            continue
        report.tool_calls += result.tool_calls
        report.retrievals += result.retrievals
        if result.resolved.final == case.truth:
            seg.correct += 1
            report.overall.correct += 1
    return report


ABLATION_ARMS = (
    ("baseline", AblationFlags(catalog_grounding=False, agentic_search=False, dual_intent=False)),
    ("+catalog", AblationFlags(catalog_grounding=True, agentic_search=False, dual_intent=False)),
    ("+agentic", AblationFlags(catalog_grounding=True, agentic_search=True, dual_intent=False)),
    ("full", AblationFlags(catalog_grounding=True, agentic_search=True, dual_intent=True)),
)


@dataclass
class AblationReport:
    arms: list[EvalReport]

    def deltas(self) -> list[tuple[str, float]]:
        out = []
        for prev, cur in zip(self.arms, self.arms[1:]):
            if prev.accuracy is None or cur.accuracy is None:
                continue
            out.append((f"{prev.arm} -> {cur.arm}", cur.accuracy - prev.accuracy))
        return out

    def to_json(self) -> dict:
        return {
            "arms": [a.to_json() for a in self.arms],
            "deltas": [{"step": s, "delta": d} for s, d in self.deltas()],
        }

    def render(self) -> str:
        lines = [f"{'arm':<10} {'accuracy':>9} {'tool_calls':>11} {'retrievals':>11}"]
        for a in self.arms:
            acc = "n/a" if a.accuracy is None else f"{a.accuracy:8.3f}"
            lines.append(f"{a.arm:<10} {acc:>9} {a.tool_calls:>11} {a.retrievals:>11}")
        for step, delta in self.deltas():
            lines.append(f"  {step}: {delta:+.3f}")
        return "\n".join(lines)


def run_ablation(cases: list[BenchmarkCase], deps: PipelineDeps) -> AblationReport:
    """Run the four arms over identical dependencies, flags being the only
    difference, and report accuracies plus consecutive deltas."""
    arms = []
    for name, flags in ABLATION_ARMS:
        config = replace(deps.config, ablation_flags=flags)
        arms.append(evaluate(cases, deps, config=config, arm=name))
    return AblationReport(arms=arms)


def derive_whitelist(
    source: str | Path | Iterable[str],
    taxonomy: Taxonomy,
    threshold: float,
    min_support: int = 20,
    version: str | None = None,
) -> ConflictWhitelist:
    """Derive override pairs from labeled conflict outcomes.

    Input is line-delimited JSON {primary, secondary, winner} with winner in
    {primary, secondary}. A pair (p, s) is included iff its secondary win
    rate reaches the threshold over at least min_support observations.
    """
    if not 0.5 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0.5, 1], got {threshold}")
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    counts: dict[tuple[str, str], list[int]] = {}
    problems: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            primary, secondary, winner = doc["primary"], doc["secondary"], doc["winner"]
        except (json.JSONDecodeError, KeyError, TypeError):
            problems.append(f"line {lineno}: malformed record")
            continue
        if winner not in ("primary", "secondary"):
            problems.append(f"line {lineno}: winner must be 'primary' or 'secondary'")
            continue
        if primary == secondary:
            problems.append(f"line {lineno}: self-pair ({primary!r})")
            continue
        for vid in (primary, secondary):
            if vid not in taxonomy:
                problems.append(f"line {lineno}: unknown vertical {vid!r}")
                break
        else:
            wins = counts.setdefault((primary, secondary), [0, 0])
            wins[0] += 1
            if winner == "secondary":
                wins[1] += 1
    if problems:
        raise ConfigError("interaction file invalid:\n" + "\n".join(f"  - {p}" for p in problems))
    pairs = frozenset(
        pair
        for pair, (total, sec_wins) in counts.items()
        if total >= min_support and sec_wins / total >= threshold
    )
    return ConflictWhitelist(
        pairs=pairs, version=version or f"derived-t{threshold}-m{min_support}"
    )


# ---------------------------------------------------------------------------
# Synthetic benchmark
# ---------------------------------------------------------------------------

SYNTH_TAXONOMY = Taxonomy(
    (
        Vertical("restaurant", "Restaurant"),
        Vertical("grocery", "Grocery"),
        Vertical("retail_store", "Retail Store"),
        Vertical("alcohol", "Alcohol"),
        Vertical("flower", "Flower"),
        Vertical("dish", "Dish"),
        Vertical("pet", "Pet"),
    )
)

_SYNTH_TRUTHS = ("grocery", "alcohol", "retail_store", "flower", "dish", "pet")
_VOWELS = "aeiou"
# Disjoint consonant pools per family keep cross-family surfaces far apart in
# edit distance, so a family-B query can never clear tau against a planted
# family-A/C entity and the ablation arms stay structurally separable.
_FAMILY_CONSONANTS = {"a": "bcdfg", "b": "lmnpr", "c": "stvz"}


def _pseudo_word(rng: random.Random, family: str) -> str:
    consonants = _FAMILY_CONSONANTS[family]
    return "".join(
        rng.choice(consonants) + rng.choice(_VOWELS) for _ in range(rng.randint(2, 3))
    )


@dataclass(frozen=True)
class SyntheticBenchmark:
    """Cases plus the exact fixture stack they were built against."""

    cases: tuple[BenchmarkCase, ...]
    store: EntityStore
    tool: FixtureSearchTool
    whitelist: ConflictWhitelist
    rules: ScriptedRules
    taxonomy: Taxonomy

    def engine(self) -> ScriptedEngine:
        return ScriptedEngine(self.rules)


def build_synthetic_benchmark(seed: int, cases_per_family: int = 100) -> SyntheticBenchmark:
    """Generate the three-family corpus with case-unique token suffixes so
    families cannot cross-match above the fuzzy threshold."""
    if cases_per_family < 1:
        raise ConfigError("cases_per_family must be >= 1")
    rng = random.Random(seed)
    cases: list[BenchmarkCase] = []
    entities: list[CatalogEntity] = []
    search_fixtures: dict[str, list[dict]] = {}
    whitelist_pairs: set[tuple[str, str]] = set()
    keyword_rules = [
        KeywordRule(keyword=f"hallmark of {v}", primary=v) for v in _SYNTH_TRUTHS
    ]

    def segment(i: int) -> str:
        return BENCH_SEGMENTS[i % 3]

    # family A: one catalog entity, named exactly like the query
    for i in range(cases_per_family):
        query = f"{_pseudo_word(rng, 'a')}qa{i:03d} {_pseudo_word(rng, 'a')}na{i:03d}"
        truth = _SYNTH_TRUTHS[i % len(_SYNTH_TRUTHS)]
        entities.append(
            CatalogEntity(
                entity_id=f"syn-a-{i:03d}",
                name=query,
                kind=rng.choice(("merchant", "brand", "product")),
                vertical=truth,
            )
        )
        cases.append(BenchmarkCase(query=query, truth=truth, segment=segment(i)))

    # family B: nothing in the catalog, one planted search snippet
    for i in range(cases_per_family):
        query = f"{_pseudo_word(rng, 'b')}qb{i:03d} {_pseudo_word(rng, 'b')}nb{i:03d}"
        truth = _SYNTH_TRUTHS[(i + 1) % len(_SYNTH_TRUTHS)]
        search_fixtures[query] = [
            {
                "url": f"https://fixtures.test/b/{i:03d}",
                "title": f"About {query}",
                "snippet": f"{query} is a classic hallmark of {truth} storefronts.",
            }
        ]
        cases.append(BenchmarkCase(query=query, truth=truth, segment=segment(i)))

    # family C: two entities, the top match carries the wrong vertical and the
    # whitelisted secondary carries the truth
    for i in range(cases_per_family):
        query = f"{_pseudo_word(rng, 'c')}qc{i:03d} {_pseudo_word(rng, 'c')}nc{i:03d}"
        truth = _SYNTH_TRUTHS[i % len(_SYNTH_TRUTHS)]
        wrong = _SYNTH_TRUTHS[(i + 2) % len(_SYNTH_TRUTHS)]
        if wrong == truth:
            wrong = _SYNTH_TRUTHS[(i + 3) % len(_SYNTH_TRUTHS)]
        entities.append(
            CatalogEntity(
                entity_id=f"syn-c-{i:03d}-p",
                name=query,
                kind="merchant",
                vertical=wrong,
            )
        )
        entities.append(
            CatalogEntity(
                entity_id=f"syn-c-{i:03d}-s",
                name=f"{query} depot",
                kind="merchant",
                vertical=truth,
            )
        )
        whitelist_pairs.add((wrong, truth))
        cases.append(BenchmarkCase(query=query, truth=truth, segment=segment(i)))

    store = EntityStore(entities, SYNTH_TAXONOMY, version=f"synthetic-{seed}")
    rules = ScriptedRules(
        keyword_rules=tuple(keyword_rules),
        default_vertical="restaurant",
        secondary_margin=0.1,
    )
    whitelist = ConflictWhitelist(
        pairs=frozenset(whitelist_pairs), version=f"synthetic-w{seed}"
    )
    return SyntheticBenchmark(
        cases=tuple(cases),
        store=store,
        tool=FixtureSearchTool(search_fixtures),
        whitelist=whitelist,
        rules=rules,
        taxonomy=SYNTH_TAXONOMY,
    )
