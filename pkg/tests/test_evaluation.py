import itertools
import json

import numpy as np
import pytest

from oracles import brute_edit_distance
from mmda.evaluation import (DEL, INS, MATCH, SUB, ErrorReport, ResultRow, classify_word_errors,
                             edit_distance, score_corpus, tokenize)


def test_identical_sequences():
    ali = edit_distance("ABC", "ABC")
    assert ali.distance == 0 and all(op.kind == MATCH for op in ali.ops)


def test_empty_reference_is_all_insertions():
    ali = edit_distance("", "XYZ")
    assert [op.kind for op in ali.ops] == [INS] * 3


def test_quota_colota_matches_recursion():
    assert edit_distance("QUOTA", "COLOTA").distance == brute_edit_distance(tuple("QUOTA"), tuple("COLOTA"))


def test_tie_break_prefers_substitution():
    assert [op.kind for op in edit_distance("AB", "AC").ops] == [MATCH, SUB]
    assert [op.kind for op in edit_distance("AB", "BA").ops] == [SUB, SUB]


@pytest.mark.parametrize("n", range(6))
def test_dp_equals_recursion_exhaustive_small(n):
    seqs = [s for k in range(n + 1) for s in itertools.product("abc", repeat=k)]
    for a in seqs:
        if len(a) != n:
            continue
        for b in seqs:
            assert edit_distance(a, b).distance == brute_edit_distance(a, b)


def test_symmetry_triangle_and_replay():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b, c = (tuple(rng.choice(list("abcd"), size=rng.integers(0, 9))) for _ in range(3))
        ab, ba = edit_distance(a, b), edit_distance(b, a)
        assert ab.distance == ba.distance
        assert ab.distance <= edit_distance(a, c).distance + edit_distance(c, b).distance
        assert ab.replay(a) == list(b)
        assert ab.count(SUB) + ab.count(DEL) + ab.count(INS) == ab.distance


def test_tokenize():
    assert tokenize(" A  B ", "word") == ["A", "B"]
    assert tokenize(" A  B ", "char") == ["A", " ", "B"]
    with pytest.raises(ValueError):
        tokenize("A", "phone")


def test_classify_examples():
    lex = {"BOEING", "BOLDING", "CASINO"}
    assert classify_word_errors(edit_distance(["CASINO"], ["ACCINO"]), lex) == (1, 0)
    assert classify_word_errors(edit_distance(["BOEING"], ["BOLDING"]), lex) == (0, 1)
    assert classify_word_errors(edit_distance(["A", "B"], ["A"]), lex) == (0, 0)


def test_classify_counts_cover_subs_and_inserts():
    rng = np.random.default_rng(1)
    words = ["W%d" % i for i in range(8)]
    lex = set(words[:5])
    for _ in range(100):
        ref = list(rng.choice(words, size=rng.integers(0, 7)))
        hyp = list(rng.choice(words, size=rng.integers(0, 7)))
        ali = edit_distance(ref, hyp)
        assert sum(classify_word_errors(ali, lex)) == ali.count(SUB) + ali.count(INS)


def test_score_corpus_arithmetic():
    ref = "A B C D E F G H I J"
    rep = score_corpus({"u": ref}, {"u": "A X C D E F Y H I J"}, "word")
    assert rep.error_rate == pytest.approx(20.0)
    perfect = score_corpus({"u": ref}, {"u": ref}, "char")
    assert perfect.error_rate == 0.0
    with pytest.raises(KeyError, match="u2"):
        score_corpus({"u": ref, "u2": ref}, {"u": ref}, "word")


def test_score_corpus_equals_recount():
    refs = {"a": "THE CAT SAT", "b": "ON THE MAT", "c": "A DOG", "d": "RAN FAST AWAY", "e": "HOME"}
    hyps = {"a": "THE CAT SAT", "b": "ON A MAT", "c": "A DOG BARKED", "d": "RAN AWAY", "e": "HOMES"}
    for unit in ("word", "char"):
        rep = score_corpus(refs, hyps, unit)
        errors = sum(brute_edit_distance(tuple(tokenize(refs[k], unit)), tuple(tokenize(hyps[k], unit)))
                     for k in refs)
        n = sum(len(tokenize(r, unit)) for r in refs.values())
        assert rep.errors == errors and rep.ref_tokens == n
        assert rep.error_rate == pytest.approx(100 * errors / n)


def test_taxonomy_percentages_and_pooling():
    lex = {"THE", "CAT", "SAT", "ON", "MAT", "A"}
    dev = score_corpus({"x": "THE CAT SAT"}, {"x": "THE KAT SAT ON"}, "word", lex)
    ev = score_corpus({"y": "ON THE MAT"}, {"y": "ON A MAT"}, "word", lex)
    assert (dev.nonsense, dev.legal) == (1, 1)
    assert dev.nonsense_pct + dev.legal_pct == pytest.approx(100.0)
    assert ErrorReport("word").nonsense_pct is None
    pooled = dev.merge(ev)
    assert pooled.error_rate == pytest.approx(100 * (dev.errors + ev.errors) / 6)
    row = ResultRow("rep-phonestream", wer={"dev": dev, "eval": ev},
                    cer={"dev": score_corpus({"x": "AB"}, {"x": "AB"}, "char"),
                         "eval": score_corpus({"y": "AB"}, {"y": "AC"}, "char")})
    rec = json.loads(row.to_json())
    assert rec["WER_pooled"] == pytest.approx(pooled.error_rate, abs=1e-4)
    assert rec["nonsense_pct"] + rec["legal_pct"] == pytest.approx(100.0)
    assert "n/a" not in row.table()
    with pytest.raises(ValueError):
        dev.merge(ErrorReport("char"))
