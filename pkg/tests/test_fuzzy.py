import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qintent.catalog import Query, normalize_text
from qintent.errors import ConfigError, IndexIntegrityError
from qintent.fuzzy import fuzzy_score, partial_ratio_score, refine, token_set_score
from qintent.retrieval import CandidateMatch, RetrievalConfig, semantic_topn

from .oracles import ref_fuzzy, ref_partial_ratio, ref_token_set

norm_text = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=40
).map(normalize_text)


def test_token_set_identical():
    assert token_set_score("wildflower", "wildflower") == 1.0


def test_token_set_reordered_tokens():
    assert token_set_score("chew better", "better chew") == 1.0


def test_token_set_subset_value_matches_oracle():
    got = token_set_score("better chew", "better chew farms")
    assert got == pytest.approx(ref_token_set("better chew", "better chew farms"), abs=1e-9)


def test_partial_ratio_exact_substring():
    assert partial_ratio_score("wild", "wildflower") == 1.0


def test_partial_ratio_disjoint():
    # every window of "xyz" sits at distance 3 from "abc"
    assert partial_ratio_score("abc", "xyz") == pytest.approx(
        ref_partial_ratio("abc", "xyz"), abs=1e-9
    )
    assert partial_ratio_score("abc", "xyz") == 0.0


def test_partial_ratio_exact_prefix_window():
    assert partial_ratio_score("450 north", "450 north craft ales") == 1.0


def test_fuzzy_identical_any_alpha():
    for alpha in (0.0, 0.3, 0.6, 1.0):
        assert fuzzy_score("taco townhouse", "taco townhouse", alpha) == 1.0


def test_fuzzy_alpha_one_degenerates_to_token_set():
    q, e = "green garden", "garden green grocers"
    assert fuzzy_score(q, e, 1.0) == token_set_score(q, e)


def test_fuzzy_blend_matches_oracle():
    q, e = "better chew", "better chew farms"
    assert fuzzy_score(q, e, 0.6) == pytest.approx(ref_fuzzy(q, e, 0.6), abs=1e-9)


def test_fuzzy_alpha_validated():
    with pytest.raises(ConfigError):
        fuzzy_score("a", "b", 1.5)


def test_oracle_equivalence_1000_random_pairs():
    rng = random.Random(20240817)
    alphabet = "abcdefghij '-&0123456789"
    for _ in range(1000):
        q = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        e = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        q, e = normalize_text(q), normalize_text(e)
        assert token_set_score(q, e) == pytest.approx(ref_token_set(q, e), abs=1e-9)
        assert partial_ratio_score(q, e) == pytest.approx(ref_partial_ratio(q, e), abs=1e-9)
        assert fuzzy_score(q, e, 0.6) == pytest.approx(ref_fuzzy(q, e, 0.6), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(q=norm_text, e=norm_text, alpha=st.floats(0.0, 1.0))
def test_fuzzy_bounds_and_symmetry(q, e, alpha):
    score = fuzzy_score(q, e, alpha)
    assert 0.0 <= score <= 1.0
    assert score == pytest.approx(fuzzy_score(e, q, alpha), abs=1e-12)


# -- refine -------------------------------------------------------------------


def _candidates(deps_index, store, encoder, raw, top_n=50):
    q = Query.from_raw(raw)
    return semantic_topn(deps_index, q, encoder, top_n), q


def test_refine_zero_threshold_keeps_all(index, store, encoder):
    config = RetrievalConfig(tau_fuzzy=0.0)
    cands, q = _candidates(index, store, encoder, "wildflower")
    evidence = refine(cands, q, config, store)
    assert len(evidence.matches) == len(cands)
    fuzzies = [m.fuzzy for m in evidence.matches]
    assert fuzzies == sorted(fuzzies, reverse=True)


def test_refine_threshold_one_without_exact_match_is_empty(index, store, encoder):
    config = RetrievalConfig(tau_fuzzy=1.0)
    cands, q = _candidates(index, store, encoder, "wildfl nonsense")
    assert refine(cands, q, config, store).is_empty()


def test_refine_wildflower_partition_matches_oracle(index, store, encoder):
    config = RetrievalConfig()
    cands, q = _candidates(index, store, encoder, "wildflower")
    evidence = refine(cands, q, config, store)
    retained = [m.entity_id for m in evidence.matches]
    assert retained == ["m-wildflower-bites", "m-wildflower-stems"]
    # every candidate lands on the oracle's side of the threshold
    for cand in cands:
        entity = store.get(cand.entity_id)
        oracle = max(
            ref_fuzzy(q.normalized, s, config.alpha) for s in entity.surfaces()
        )
        if cand.entity_id in retained:
            assert oracle >= config.tau_fuzzy
        else:
            assert oracle < config.tau_fuzzy
    # Wild Flour Bakery is a semantic neighbor the lexical filter must drop
    assert "m-wild-flour-bakery" in {c.entity_id for c in cands}
    assert "m-wild-flour-bakery" not in retained


def test_refine_scores_aliases(taxonomy):
    import json

    from qintent.catalog import load_catalog

    lines = [
        json.dumps(
            {
                "entity_id": "w1",
                "name": "Wild Garden Emporium",
                "kind": "merchant",
                "vertical": "flower",
                "aliases": ["wge"],
            }
        )
    ]
    store = load_catalog(lines, taxonomy)
    q = Query.from_raw("wge")
    cands = [CandidateMatch(entity_id="w1", surface="wge", cosine=1.0)]
    evidence = refine(cands, q, RetrievalConfig(), store)
    top = evidence.matches[0]
    assert top.surface == "wge"  # only the alias clears the threshold
    assert top.fuzzy == 1.0


def test_refine_tie_keeps_name_surface(index, store, encoder):
    # the alias and the full name both score 1.0; ties keep the name
    cands, q = _candidates(index, store, encoder, "better chew")
    evidence = refine(cands, q, RetrievalConfig(), store)
    top = evidence.matches[0]
    assert top.entity_id == "b-better-chew-farms"
    assert top.surface == "better chew farms"
    assert top.fuzzy == 1.0


def test_refine_unknown_entity_is_integrity_error(store):
    ghost = [CandidateMatch(entity_id="ghost", surface="ghost", cosine=0.5)]
    with pytest.raises(IndexIntegrityError):
        refine(ghost, Query.from_raw("ghost"), RetrievalConfig(), store)
