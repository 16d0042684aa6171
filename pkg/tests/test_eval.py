import json

import pytest

from qintent.errors import ConfigError
from qintent.evalharness import (
    BenchmarkCase,
    build_synthetic_benchmark,
    derive_whitelist,
    evaluate,
    load_benchmark,
    run_ablation,
)
from qintent.pipeline import PipelineConfig, PipelineDeps
from qintent.reasoner import PolicyContext
from qintent.retrieval import HashEncoder, build_index

TABLE_CASES = [
    BenchmarkCase("wildflower", "restaurant", "head"),
    BenchmarkCase("better chew", "grocery", "torso"),
    BenchmarkCase("450 north", "alcohol", "tail"),
]


def test_evaluate_table_cases_all_correct(deps):
    report = evaluate(TABLE_CASES, deps)
    assert report.overall.correct == 3
    assert report.overall.total == 3
    assert report.accuracy == 1.0


def test_evaluate_empty_case_list_has_undefined_accuracy(deps):
    report = evaluate([], deps)
    assert report.overall.total == 0
    assert report.accuracy is None


def test_evaluate_wrong_truth_counts_against(deps):
    cases = TABLE_CASES[:2] + [BenchmarkCase("450 north", "flower", "tail")]
    report = evaluate(cases, deps)
    assert report.overall.correct == 2
    assert report.accuracy == pytest.approx(2 / 3)


def test_evaluate_segments_aggregate_to_overall(deps):
    cases = TABLE_CASES * 3
    report = evaluate(cases, deps)
    total = sum(s.total for s in report.segments.values())
    correct = sum(s.correct for s in report.segments.values())
    assert total == report.overall.total
    assert correct == report.overall.correct
    # weighted segment accuracies reproduce the overall accuracy
    weighted = sum(
        s.accuracy * s.total for s in report.segments.values() if s.accuracy is not None
    )
    assert weighted / total == pytest.approx(report.accuracy)


def test_evaluate_failures_count_as_incorrect(deps):
    from dataclasses import replace

    from qintent.reasoner import FinalAnswer

    class Broken:
        identity = "broken"

        def respond(self, request):
            return FinalAnswer("nope")

    report = evaluate(TABLE_CASES, replace(deps, engine=Broken()))
    assert report.failed == 3
    assert report.overall.correct == 0
    assert report.overall.total == 3


def test_load_benchmark_validates(taxonomy, tmp_path):
    path = tmp_path / "bench.jsonl"
    path.write_text(
        json.dumps({"query": "x", "truth": "dish", "segment": "head"}) + "\n",
        encoding="utf-8",
    )
    cases = load_benchmark(path, taxonomy)
    assert cases == [BenchmarkCase("x", "dish", "head")]
    path.write_text(
        json.dumps({"query": "x", "truth": "spaceport", "segment": "head"}) + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="unknown truth"):
        load_benchmark(path, taxonomy)


def _synthetic_deps(seed=7, cases_per_family=40):
    bench = build_synthetic_benchmark(seed, cases_per_family)
    encoder = HashEncoder(dimension=64, seed=seed)
    deps = PipelineDeps(
        store=bench.store,
        index=build_index(bench.store, encoder),
        encoder=encoder,
        engine=bench.engine(),
        tool=bench.tool,
        whitelist=bench.whitelist,
        policy=PolicyContext.empty(),
        config=PipelineConfig(),
    )
    return bench, deps


def test_ablation_arms_strictly_increase():
    bench, deps = _synthetic_deps()
    report = run_ablation(list(bench.cases), deps)
    accs = [a.accuracy for a in report.arms]
    assert all(a is not None for a in accs)
    assert accs == sorted(accs)
    assert len(set(accs)) == 4  # strict
    assert [a.arm for a in report.arms] == ["baseline", "+catalog", "+agentic", "full"]


def test_ablation_baseline_issues_nothing():
    bench, deps = _synthetic_deps(seed=11, cases_per_family=10)
    report = run_ablation(list(bench.cases), deps)
    baseline = report.arms[0]
    assert baseline.retrievals == 0
    assert baseline.tool_calls == 0


def test_ablation_full_arm_equals_evaluate_with_all_flags():
    bench, deps = _synthetic_deps(seed=13, cases_per_family=10)
    report = run_ablation(list(bench.cases), deps)
    standalone = evaluate(list(bench.cases), deps)
    assert report.arms[-1].accuracy == standalone.accuracy


def test_ablation_deltas_positive():
    bench, deps = _synthetic_deps(seed=3, cases_per_family=20)
    report = run_ablation(list(bench.cases), deps)
    assert all(delta > 0 for _, delta in report.deltas())
    rendered = report.render()
    assert "baseline" in rendered and "full" in rendered


def test_synthetic_generator_deterministic():
    first = build_synthetic_benchmark(5, 10)
    second = build_synthetic_benchmark(5, 10)
    assert first.cases == second.cases
    assert [e.entity_id for e in first.store] == [e.entity_id for e in second.store]
    assert first.whitelist.pairs == second.whitelist.pairs


def test_synthetic_segments_cover_all():
    bench = build_synthetic_benchmark(2, 9)
    segments = {c.segment for c in bench.cases}
    assert segments == {"head", "torso", "tail"}


# -- derive_whitelist ----------------------------------------------------------


def _interactions(n, wins, primary="dish", secondary="grocery"):
    lines = []
    for i in range(n):
        winner = "secondary" if i < wins else "primary"
        lines.append(json.dumps({"primary": primary, "secondary": secondary, "winner": winner}))
    return lines


def test_derive_whitelist_includes_high_win_rate(taxonomy):
    w = derive_whitelist(_interactions(30, 27), taxonomy, threshold=0.8)
    assert ("dish", "grocery") in w.pairs


def test_derive_whitelist_respects_min_support(taxonomy):
    w = derive_whitelist(_interactions(10, 10), taxonomy, threshold=0.8, min_support=20)
    assert w.pairs == frozenset()


def test_derive_whitelist_threshold_must_exceed_half(taxonomy):
    with pytest.raises(ConfigError, match="threshold"):
        derive_whitelist(_interactions(30, 27), taxonomy, threshold=0.5)


def test_derive_whitelist_rate_below_threshold_excluded(taxonomy):
    w = derive_whitelist(_interactions(30, 20), taxonomy, threshold=0.8)
    assert w.pairs == frozenset()


def test_derive_whitelist_reports_malformed_lines(taxonomy):
    lines = _interactions(5, 5) + ["{broken", json.dumps({"primary": "a"})]
    with pytest.raises(ConfigError) as err:
        derive_whitelist(lines, taxonomy, threshold=0.8)
    assert "line 6" in str(err.value)
    assert "line 7" in str(err.value)
