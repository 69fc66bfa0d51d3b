import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pdbias.biasing import (
    PAPER_BANDS,
    BoostSpec,
    BiasingList,
    FrequencyBand,
    biasing_list_from_words,
    boost_counts,
    extract_band,
    read_biasing_list,
    word_frequencies,
    write_biasing_list,
)
from pdbias.corpus import Vocabulary, count_stats, parse_corpus_lines

MICRO = ["u1\t▁war rant", "u2\t▁war rant", "u3\t▁war farin"]


def named(ct, vocab):
    uni = {vocab.tokens[i]: int(n) for i, n in enumerate(ct.unigram) if n}
    adj = {(vocab.tokens[a], vocab.tokens[b]): n for (a, b), n in ct.adjacency.items()}
    return uni, adj


def test_word_frequencies():
    c, v = parse_corpus_lines(MICRO)
    assert word_frequencies(c, v) == {"warrant": 2, "warfarin": 1}
    empty, _ = parse_corpus_lines([], v)
    assert word_frequencies(empty, v) == {}
    c, v = parse_corpus_lines(["a\t▁go", "b\t▁go ▁go"])
    assert word_frequencies(c, v) == {"go": 3}


def test_band_basics():
    assert 2 in FrequencyBand(1, 5) and 1 not in FrequencyBand(1, 5)
    assert FrequencyBand.parse("(10,20]") == FrequencyBand(10, 20)
    assert FrequencyBand.parse("1") == FrequencyBand(0, 1)
    with pytest.raises(ValueError):
        FrequencyBand(5, 5)


def test_extract_band_examples():
    _, v = parse_corpus_lines(MICRO)
    assert extract_band({"warrant": 2, "warfarin": 1}, FrequencyBand(1, 5), v).words == ["warrant"]
    assert extract_band({"warrant": 2}, FrequencyBand(10, 20), v).words == []
    v2 = Vocabulary(("▁a", "▁b"))
    assert extract_band({"b": 1, "a": 1}, FrequencyBand(0, 1), v2).words == ["a", "b"]


def test_extract_band_reports_unsegmentable():
    v = Vocabulary(("▁a",))
    bl = extract_band({"a": 1, "zz": 1}, FrequencyBand(0, 1), v)
    assert bl.words == ["a"]
    assert len(bl.warnings) == 1 and "zz" in bl.warnings[0]


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("abc", min_size=1, max_size=4), st.integers(1, 40), max_size=30))
def test_paper_bands_partition(freqs):
    v = Vocabulary(tuple("▁" + c for c in "abc") + tuple("abc"))
    lists = [set(extract_band(freqs, b, v).words) for b in PAPER_BANDS]
    for i in range(len(lists)):
        for j in range(i + 1, len(lists)):
            assert not lists[i] & lists[j]
    assert set().union(*lists) == {w for w, f in freqs.items() if f <= 20}
    for band, words in zip(PAPER_BANDS, lists):
        assert all(freqs[w] in band for w in words)


def test_list_file_roundtrip(tmp_path):
    c, v = parse_corpus_lines(MICRO)
    bl = extract_band(word_frequencies(c, v), FrequencyBand(0, 5), v)
    write_biasing_list(tmp_path / "l.tsv", bl)
    rows = read_biasing_list(tmp_path / "l.tsv")
    assert rows == [("warfarin", 1), ("warrant", 2)]
    assert biasing_list_from_words(rows, v).entries == bl.entries


def test_list_file_errors(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("warfarin\tx\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad frequency"):
        read_biasing_list(p)
    p.write_text("warfarin 1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="expected"):
        read_biasing_list(p)


def test_boost_micro_intra_word():
    c, v = parse_corpus_lines(MICRO)
    ct = count_stats(c, v, "intra-word")
    bl = extract_band(word_frequencies(c, v), FrequencyBand(0, 1), v)
    uni, adj = named(boost_counts(ct, c, v, BoostSpec(bl, 100)), v)
    assert uni == {"▁war": 102, "rant": 2, "farin": 100}
    assert adj == {("▁war", "rant"): 2, ("▁war", "farin"): 100}


def test_boost_identity_cases():
    c, v = parse_corpus_lines(MICRO)
    ct = count_stats(c, v)
    bl = extract_band(word_frequencies(c, v), FrequencyBand(0, 1), v)
    assert boost_counts(ct, c, v, BoostSpec(bl, 1)) == ct
    assert boost_counts(ct, c, v, BoostSpec(BiasingList([], v.fingerprint()), 100)) == ct


def test_boost_rejects_foreign_vocab():
    c, v = parse_corpus_lines(MICRO)
    other = Vocabulary(("▁war", "farin", "rant"))
    bl = extract_band({"warfarin": 1}, FrequencyBand(0, 1), other)
    with pytest.raises(ValueError, match="different vocabulary"):
        boost_counts(count_stats(c, v), c, v, BoostSpec(bl, 100))


def test_boost_factor_validation():
    with pytest.raises(ValueError):
        BoostSpec(BiasingList([]), 0)
    with pytest.raises(ValueError):
        BoostSpec(BiasingList([]), 2.5)


def _check_against_expansion(utts, targets, factor, mode):
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    bl = biasing_list_from_words([(w, 0) for w in sorted(targets)], v)
    got = named(boost_counts(count_stats(c, v, mode), c, v, BoostSpec(bl, factor)), v)
    uni, adj = oracles.count_pairs(oracles.expand_corpus(utts, targets, factor), mode)
    assert got == ({t: n for t, n in uni.items() if n}, dict(adj))


@pytest.mark.parametrize("mode", ["full-stream", "intra-word"])
@pytest.mark.parametrize("seed", range(25))
def test_boost_matches_expanded_recount(seed, mode):
    rng = random.Random(seed)
    utts = oracles.random_corpus(rng, max_utts=20)
    words = sorted({oracles.word_text(w) for u in utts for w in oracles.words_of(u)})
    targets = set(rng.sample(words, rng.randint(1, min(3, len(words)))))
    _check_against_expansion(utts, targets, rng.choice([2, 3, 10, 100]), mode)


def test_boost_single_token_word_full_stream():
    # "▁go" repeated in place creates ▁go->▁go pairs
    _check_against_expansion([["▁a", "▁go", "▁b"]], {"go"}, 4, "full-stream")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 5000), st.integers(1, 50), st.integers(1, 50))
def test_boost_monotone(seed, f1, f2):
    lo, hi = sorted((f1, f2))
    rng = random.Random(seed)
    utts = oracles.random_corpus(rng, max_utts=10)
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    words = sorted(word_frequencies(c, v))
    bl = biasing_list_from_words([(words[0], 1)], v)
    base = count_stats(c, v)
    a = boost_counts(base, c, v, BoostSpec(bl, lo))
    b = boost_counts(base, c, v, BoostSpec(bl, hi))
    assert (b.unigram >= a.unigram).all()
    for key, n in a.adjacency.items():
        assert b.adjacency[key] >= n
    touched = {k for k in b.adjacency if b.adjacency[k] != base.adjacency.get(k, 0)}
    for key in set(base.adjacency) - touched:
        assert a.adjacency[key] == b.adjacency[key] == base.adjacency[key]
