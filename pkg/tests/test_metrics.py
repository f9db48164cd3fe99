import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen import random_document
from oracles import brute_force_alignments, exhaustive_suber_total, naive_edit_distance
from subext.metrics import (MIN_SHIFT_GAIN, Break, EmptyCorpus, EmptyReference, SuberCounts, Word,
                            aligned_texts, apply_shift, build_report, edit_distance,
                            format_report_kv, format_report_table, match_matrix, ned_corpus,
                            normalize_text, normalized_edit_distance, pair_cues, score_sample,
                            split_words, suber, suber_streams, tokenize_with_breaks)
from subext.srt import SrtDocument, SubtitleCue

short = st.text("abcd", max_size=8)


@pytest.mark.parametrize("a,b,d", [("", "abc", 3), ("kitten", "sitting", 3), ("flaw", "lawn", 2),
                                   ("", "", 0), ("abc", "abc", 0)])
def test_edit_distance_values(a, b, d):
    assert edit_distance(a, b) == d == naive_edit_distance(a, b)


@given(short, short, short)
def test_edit_distance_metric_axioms(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, b) == brute_force_alignments(a, b)


def test_edit_distance_on_token_lists():
    assert edit_distance(["we", "go"], ["we", "went", "go"]) == 1


def test_ned_examples():
    assert ned_corpus([("x", "x"), ("ab", "ab")]) == 1.0
    assert ned_corpus([("ab", "")]) == 0.0
    assert ned_corpus([("abc", "abd"), ("hello", "hello")]) == pytest.approx(1 - (1 / 3) / 2)
    assert normalized_edit_distance("", "") == 0.0
    with pytest.raises(EmptyCorpus):
        ned_corpus([])


@given(st.lists(st.tuples(short, short), min_size=1, max_size=5))
def test_ned_bounds(pairs):
    assert 0.0 <= ned_corpus(pairs) <= 1.0


def test_split_words():
    assert split_words("Then who am I?") == ["Then", "who", "am", "I?"]
    assert split_words("那么我是谁?") == ["那", "么", "我", "是", "谁", "?"]
    assert split_words("iPhone手机 ok") == ["iPhone", "手", "机", "ok"]
    assert split_words("  ") == []


def test_normalize_text():
    assert normalize_text("Hello, World!!  It's") == "hello world it's"
    assert normalize_text("...") == ""


def test_tokenize_examples():
    doc = SrtDocument([SubtitleCue(1, 0, 1000, ["Then who am I?"])])
    stream = tokenize_with_breaks(doc)
    assert [t.key for t in stream.tokens] == [(False, w) for w in ("Then", "who", "am", "I?")] + [Break().key]
    doc = SrtDocument([SubtitleCue(1, 0, 1000, ["那么我是谁?"])])
    stream = tokenize_with_breaks(doc)
    assert [t.text for t in stream.tokens[:-1]] == list("那么我是谁?")
    assert (stream.n_words, stream.n_breaks) == (6, 1)
    assert len(tokenize_with_breaks(SrtDocument())) == 0


def test_bilingual_cue_is_one_segment():
    doc = SrtDocument([SubtitleCue(1, 0, 1000, ["你好", "hi there"])])
    assert [repr(t) for t in tokenize_with_breaks(doc).tokens] == [
        "Word(你)", "Word(好)", "Word(hi)", "Word(there)", "Break"]


def _doc(*cues):
    return SrtDocument([SubtitleCue(i, s, e, [text]) for i, (s, e, text) in enumerate(cues, 1)])


REF = _doc((0, 2000, "the cat sat"), (2500, 4000, "on the mat"))


def test_suber_identity():
    counts = suber(REF, REF)
    assert counts == SuberCounts(0, 0, 0, 6, 2)
    assert counts.value == 0.0


def test_suber_one_substitution():
    hyp = _doc((0, 2000, "the dog sat"), (2500, 4000, "on the mat"))
    assert suber(hyp, REF) == SuberCounts(1, 0, 0, 6, 2)


def test_suber_swap_repaired_by_one_shift():
    ref = [Word(w) for w in "a b c d".split()] + [Break()]
    hyp = [Word(w) for w in "a c b d".split()] + [Break()]
    counts = suber_streams(hyp, ref)
    assert (counts.word_edits, counts.break_edits, counts.shifts) == (0, 0, 1)
    assert exhaustive_suber_total(_tuples(hyp), _tuples(ref)) == counts.edits


def test_swap_across_cues():
    ref = _doc((0, 1000, "one two"), (1000, 2000, "three four"))
    hyp = _doc((0, 1000, "one three"), (1000, 2000, "two four"))
    counts = suber(hyp, ref)
    assert counts.edits == 2  # two substitutions; a single move gains only 1 here


def test_shift_blocked_outside_time_window():
    ref = _doc((0, 1000, "alpha"), (9000, 10000, "beta"))
    hyp = _doc((0, 1000, "beta"), (9000, 10000, "alpha"))
    # each word is time-incompatible with its text twin, so nothing can match
    assert suber(hyp, ref, tolerance_ms=1000) == SuberCounts(2, 0, 0, 2, 2)


def test_break_edits_counted_separately():
    merged = _doc((0, 4000, "the cat sat on the mat"))
    counts = suber(merged, REF)
    assert (counts.word_edits, counts.break_edits, counts.shifts) == (0, 1, 0)


def test_negative_samples():
    empty = SrtDocument()
    assert suber(empty, empty) == SuberCounts(0, 0, 0, 0, 1)
    assert suber(REF, empty).edits == 7  # 8 tokens, the final break matches
    assert suber(empty, REF).percent == 100.0


def test_empty_reference_stream():
    with pytest.raises(EmptyReference):
        suber_streams([Word("a")], [])
    with pytest.raises(EmptyReference):
        SuberCounts().value


def test_match_matrix_tolerance():
    h = [Word("a", 2500, 3000)]
    r = [Word("a", 0, 1500), Word("a", 0, 1499), Word("b", 2500, 3000)]
    assert match_matrix(h, r, 1000).tolist() == [[True, False, False]]
    assert match_matrix([Word("a")], r).tolist() == [[True, True, False]]


def test_apply_shift():
    assert apply_shift("abcdef", 1, 2, 5) == list("adebcf")
    assert apply_shift("abcdef", 3, 2, 0) == list("deabcf")


def test_index_invariance():
    hyp = _doc((0, 2000, "the cat"), (2500, 4000, "on a mat"))
    renum = SrtDocument([SubtitleCue(c.index + 7, c.start, c.end, c.lines) for c in hyp])
    assert suber(renum, REF) == suber(hyp, REF)


def _tuples(tokens):
    return [(t.is_break, t.text, t.start, t.end) for t in tokens]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from("ab|"), max_size=7), st.lists(st.sampled_from("ab|"), min_size=1, max_size=7))
def test_never_undercounts_exhaustive_search(h, r):
    hyp = [Break() if x == "|" else Word(x) for x in h]
    ref = [Break() if x == "|" else Word(x) for x in r]
    counts = suber_streams(hyp, ref)
    no_shift = edit_distance([t.key for t in hyp], [t.key for t in ref])
    assert exhaustive_suber_total(_tuples(hyp), _tuples(ref)) <= counts.edits <= no_shift


def test_shift_acceptance_rule():
    # moving "c" before "d" saves one edit only, so two edits stay
    ref = [Word(w) for w in "a b c x".split()]
    hyp = [Word(w) for w in "a b d c".split()]
    counts = suber_streams(hyp, ref)
    assert counts.shifts == 0 and counts.edits == 2
    # moving "x" to the end saves two, which pays for the shift
    counts = suber_streams([Word(w) for w in "x a b c".split()], ref)
    assert (counts.shifts, counts.edits) == (1, 1)
    assert MIN_SHIFT_GAIN == 2


def test_greedy_total_never_exceeds_plain_ter_on_documents():
    rng = random.Random(5)
    for _ in range(30):
        ref = random_document(rng, max_cues=5, limit_ms=60_000)
        hyp = random_document(rng, max_cues=5, limit_ms=60_000)
        if not ref.cues:
            continue
        h = tokenize_with_breaks(hyp).tokens
        r = tokenize_with_breaks(ref).tokens
        plain = int(_plain_distance(h, r))
        assert suber(hyp, ref).edits <= plain


def _plain_distance(h, r):
    from oracles import _constrained_distance
    return _constrained_distance(_tuples(h), _tuples(r), 1000)


def test_pair_cues_and_texts():
    hyp = _doc((2600, 3900, "on the mat"), (0, 1800, "the cat sat"), (6000, 7000, "extra"))
    pairs = pair_cues(hyp, REF)
    assert [(h and h.text, r and r.text) for h, r in pairs] == [
        ("the cat sat", "the cat sat"), ("on the mat", "on the mat"), ("extra", None)]
    assert aligned_texts(hyp, REF) == ("the cat sat on the mat extra", "the cat sat on the mat")


def test_report_toy_pair():
    hyp = _doc((0, 2000, "the dog sat"), (2500, 4000, "on the mat"))
    score = score_sample("toy", hyp, REF)
    assert (score.ed, score.max_len) == (3, 22)
    report = build_report([score, score_sample("same", REF, REF)])
    assert report.ned == pytest.approx(1 - (3 / 22) / 2)
    assert report.suber_percent == pytest.approx(100 * 1 / 16)
    kv = dict(line.split("=") for line in format_report_kv(report).splitlines())
    assert kv == {"samples": "2", "ned": f"{1 - 3 / 44:.6f}", "suber_percent": "6.250000",
                  "word_edits": "1", "break_edits": "0", "shifts": "0",
                  "ref_words": "12", "ref_breaks": "4"}
    table = format_report_table(report).splitlines()
    assert table[1].split("\t")[:3] == ["toy", "3", "22"]
    assert table[-1] == f"NED\t{1 - 3 / 44:.6f}"


def test_fixed_points_on_random_documents():
    rng = random.Random(3)
    for _ in range(20):
        doc = random_document(rng, max_cues=6)
        if not doc.cues:
            continue
        s = score_sample("x", doc, doc)
        assert s.ed == 0 and s.suber.edits == 0
        assert math.isclose(build_report([s]).ned, 1.0)
