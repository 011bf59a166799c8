import random

import pytest

from linkq.core import (
    Candidate,
    CandidateList,
    EntityRef,
    GoldRecord,
    LinkingResult,
    Mention,
    Namespace,
    Query,
    canonical_set,
    entity_eq,
    normalize_title,
)
from linkq.errors import MixedNamespace


def test_normalize_title_examples():
    assert normalize_title("The_Girl  in White") == "the girl in white"
    assert normalize_title("") == ""
    assert normalize_title("NBA") == "nba"


def test_normalize_title_strips_and_collapses():
    assert normalize_title("  once \t a\nGENTLEMAN ") == "once a gentleman"
    assert normalize_title("___") == ""


def test_normalize_title_idempotent_on_random_strings():
    rng = random.Random(7)
    alphabet = "AbÇ _\tÉz09\n-ß"
    for _ in range(500):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 20)))
        once = normalize_title(raw)
        assert normalize_title(once) == once


def test_entity_eq_examples():
    assert entity_eq(EntityRef.qid("Q42"), EntityRef.qid("Q42"))
    assert entity_eq(
        EntityRef(Namespace.ARTICLE_TITLE, "The Girl in White"),
        EntityRef(Namespace.ARTICLE_TITLE, "the_girl_in_white"),
    )
    assert not entity_eq(
        EntityRef.qid("Q42"), EntityRef(Namespace.ARTICLE_TITLE, "q42")
    )


def test_entity_eq_is_an_equivalence_relation():
    rng = random.Random(13)
    pool = [
        EntityRef.qid(f"Q{rng.randrange(5)}")
        for _ in range(10)
    ] + [
        EntityRef(Namespace.ARTICLE_TITLE, rng.choice(["NBA", "nba", "N_BA", "x y"]))
        for _ in range(10)
    ] + [
        EntityRef(Namespace.LOCAL_DOC_ID, rng.choice(["d1", "D1", "d2"]))
        for _ in range(6)
    ]
    for a in pool:
        assert entity_eq(a, a)
        for b in pool:
            assert entity_eq(a, b) == entity_eq(b, a)
            for c in pool:
                if entity_eq(a, b) and entity_eq(b, c):
                    assert entity_eq(a, c)


def test_entity_ref_validation():
    with pytest.raises(ValueError):
        EntityRef.qid("42")
    with pytest.raises(ValueError):
        EntityRef.qid("Qabc")
    with pytest.raises(ValueError):
        EntityRef(Namespace.ARTICLE_TITLE, "")
    # title constructor normalizes its key up front
    assert EntityRef.title("The_Girl In White").key == "the girl in white"


def test_canonical_set_dedupes_under_entity_eq():
    refs = [
        EntityRef(Namespace.ARTICLE_TITLE, "NBA"),
        EntityRef(Namespace.ARTICLE_TITLE, "nba"),
        EntityRef(Namespace.ARTICLE_TITLE, " NBA  "),
    ]
    assert len(canonical_set(refs)) == 1


def _cand(key: str, rank: int, score: float) -> Candidate:
    return Candidate(
        entity=EntityRef.title(key), title=key, description="", rank=rank, score=score
    )


def test_candidate_list_invariants():
    mention = Mention("x")
    CandidateList(mention, (_cand("a", 1, 2.0), _cand("b", 2, 1.0)), k_requested=5)
    with pytest.raises(ValueError):
        CandidateList(mention, (_cand("a", 2, 1.0),), k_requested=5)
    with pytest.raises(ValueError):
        CandidateList(mention, (_cand("a", 1, 1.0), _cand("b", 2, 2.0)), k_requested=5)
    with pytest.raises(ValueError):
        CandidateList(mention, (_cand("a", 1, 2.0), _cand("A", 2, 1.0)), k_requested=5)
    with pytest.raises(ValueError):
        CandidateList(mention, (_cand("a", 1, 2.0), _cand("b", 2, 1.0)), k_requested=1)


def test_candidate_rank_must_be_positive():
    with pytest.raises(ValueError):
        _cand("a", 0, 1.0)


def test_predicted_set_derivation_and_order_insensitivity():
    query = Query("q", "who?")
    a, b = EntityRef.qid("Q1"), EntityRef.qid("Q2")
    selections = (
        (Mention("m1"), a),
        (Mention("m2"), None),
        (Mention("m3"), b),
        (Mention("m4"), a),
    )
    result = LinkingResult(query, selections)
    assert result.predicted_set == frozenset({a, b})

    rng = random.Random(3)
    for _ in range(20):
        shuffled = list(selections)
        rng.shuffle(shuffled)
        assert LinkingResult(query, tuple(shuffled)).predicted_set == result.predicted_set


def test_gold_record_rejects_mixed_namespaces():
    with pytest.raises(MixedNamespace):
        GoldRecord(
            query=Query("q", "text"),
            gold_entities=frozenset({EntityRef.qid("Q1"), EntityRef.title("Some Title")}),
        )
