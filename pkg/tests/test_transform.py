import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pdbias.biasing import BoostSpec, FrequencyBand, biasing_list_from_words, boost_counts, extract_band, word_frequencies
from pdbias.corpus import count_stats, parse_corpus_lines
from pdbias.transform import (
    ReplacementSchedule,
    TransformMatrix,
    auto_curve,
    build_transform,
    connection_probs,
    load_matrix,
    replacement_prob,
    save_matrix,
    substitution_scores,
)

MICRO = ["u1\t▁war rant", "u2\t▁war rant", "u3\t▁war farin"]
FIXED = ReplacementSchedule("fixed", 0.7)


@pytest.fixture
def micro():
    c, v = parse_corpus_lines(MICRO)
    return c, v, count_stats(c, v)


def test_connection_micro(micro):
    _, v, ct = micro
    conn = connection_probs(ct, v)
    i = v.id_of
    assert conn.forward(i["▁war"]) == pytest.approx({i["rant"]: 2 / 3, i["farin"]: 1 / 3}, abs=1e-15)
    assert conn.backward(i["rant"]) == {i["▁war"]: 1.0}
    assert conn.backward(i["farin"]) == {i["▁war"]: 1.0}
    with pytest.raises(KeyError):
        conn.backward(i["▁war"])


def test_connection_point_mass_and_omission():
    c, v = parse_corpus_lines(["u\t▁a ▁b", "w\trant"])
    conn = connection_probs(count_stats(c, v), v)
    assert conn.forward(v.id_of["▁a"]) == {v.id_of["▁b"]: 1.0}
    # ▁b has no successor, rant no predecessor: both omitted
    assert not conn.defined[v.id_of["▁b"]] and not conn.defined[v.id_of["rant"]]
    with pytest.raises(KeyError):
        conn.forward(v.id_of["▁b"])


@pytest.mark.parametrize("seed", range(10))
def test_connection_rows_normalized(seed):
    utts = oracles.random_corpus(random.Random(seed))
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    conn = connection_probs(count_stats(c, v), v)
    sums = conn.probs.sum(axis=1)
    assert np.all(np.abs(sums[conn.defined] - 1) <= 1e-9)
    assert np.all(sums[~conn.defined] == 0)


def test_auto_schedule_values():
    assert auto_curve(1000) == 0.9
    assert auto_curve(100) == 0.09
    assert auto_curve(500) == 0.45
    assert auto_curve(0) == 0.09 and auto_curve(10**6) == 0.9
    auto_keep = ReplacementSchedule("auto")
    auto_rep = ReplacementSchedule("auto", convention="replace")
    assert replacement_prob(500, auto_rep) == 0.45
    assert replacement_prob(500, auto_keep) == pytest.approx(0.55, abs=1e-15)
    assert replacement_prob(3, FIXED) == 0.7


def test_auto_schedule_continuity():
    for n, v in ((100, 0.09), (1000, 0.9)):
        for d in (1e-6, 1e-9):
            assert abs(auto_curve(n - d) - v) < 1e-5
            assert abs(auto_curve(n + d) - v) < 1e-5


def test_schedule_parse_and_validation():
    assert ReplacementSchedule.parse("fixed:0.3") == ReplacementSchedule("fixed", 0.3)
    assert ReplacementSchedule.parse("0.3") == ReplacementSchedule("fixed", 0.3)
    assert ReplacementSchedule.parse("auto", "replace").convention == "replace"
    with pytest.raises(ValueError):
        ReplacementSchedule("fixed", 1.5)
    with pytest.raises(ValueError):
        ReplacementSchedule("cosine")


def test_figure3_rows(micro):
    c, v, ct = micro
    bl = extract_band(word_frequencies(c, v), FrequencyBand(0, 1), v)
    boosted = boost_counts(ct, c, v, BoostSpec(bl, 100))
    tm = build_transform(connection_probs(boosted, v), boosted.unigram, FIXED)
    i = v.id_of
    assert tm.T[i["rant"], i["farin"]] == pytest.approx(0.7, abs=1e-15)
    assert tm.T[i["rant"], i["rant"]] == pytest.approx(0.3, abs=1e-15)
    assert tm.T[i["rant"], i["▁war"]] == 0.0
    assert tm.T[i["▁war"], i["▁war"]] == 1.0


def test_zero_p_gives_identity(micro):
    _, v, ct = micro
    tm = build_transform(connection_probs(ct, v), ct.unigram, ReplacementSchedule("fixed", 0.0))
    assert np.array_equal(tm.T, np.eye(len(v)))


def test_dimension_mismatch(micro):
    _, v, ct = micro
    with pytest.raises(ValueError):
        build_transform(connection_probs(ct, v), ct.unigram[:-1], FIXED)


def _brute(utts, p_of, same_class_only, mode="full-stream"):
    uni, adj = oracles.count_pairs(utts, mode)
    tokens = list(dict.fromkeys(t for u in utts for t in u))
    conn = oracles.connection(adj, tokens)
    return tokens, oracles.eq3_raw(conn, tokens, {t: p_of(uni[t]) for t in tokens}, same_class_only)


@pytest.mark.parametrize("same_class_only", [True, False])
@pytest.mark.parametrize("seed", range(12))
def test_scores_match_triple_loop(seed, same_class_only):
    utts = oracles.random_corpus(random.Random(seed))
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    ct = count_stats(c, v)
    sched = ReplacementSchedule("auto", convention="replace")
    p = replacement_prob(ct.unigram, sched)
    got = substitution_scores(connection_probs(ct, v), p, same_class_only)
    tokens, raw = _brute(utts, lambda n: float(auto_curve(n)), same_class_only)
    assert tokens == list(v.tokens)
    for a in range(len(v)):
        assert got[a, a] == 0.0
        for b in range(len(v)):
            if a != b:
                assert abs(got[a, b] - raw.get((v.tokens[a], v.tokens[b]), 0.0)) <= 1e-12


@pytest.mark.parametrize("schedule", [FIXED, ReplacementSchedule("auto"),
                                      ReplacementSchedule("auto", convention="replace")])
@pytest.mark.parametrize("seed", range(8))
def test_matrix_invariants(seed, schedule):
    utts = oracles.random_corpus(random.Random(seed))
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    ct = count_stats(c, v)
    tm = build_transform(connection_probs(ct, v), ct.unigram, schedule)
    T = tm.T
    assert np.all(np.abs(T.sum(axis=1) - 1) <= 1e-9)
    assert np.all((T >= 0) & (T <= 1))
    p = replacement_prob(ct.unigram, schedule)
    off = T.sum(axis=1) - np.diag(T)
    live = off > 0
    assert np.array_equal(np.diag(T)[live], 1 - np.asarray(p)[live])
    assert np.all(np.diag(T)[~live] == 1.0)
    # no cross-class entries by default
    pre = v.is_prefix
    assert np.all(T[np.ix_(pre, ~pre)] == 0) and np.all(T[np.ix_(~pre, pre)] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_offdiagonal_linear_in_p(seed, p1, p2):
    utts = oracles.random_corpus(random.Random(seed), max_utts=10)
    c, v = parse_corpus_lines(oracles.corpus_lines(utts))
    ct = count_stats(c, v)
    conn = connection_probs(ct, v)
    t1 = build_transform(conn, ct.unigram, ReplacementSchedule("fixed", p1)).T
    t2 = build_transform(conn, ct.unigram, ReplacementSchedule("fixed", p2)).T
    off = ~np.eye(len(v), dtype=bool)
    np.testing.assert_allclose(t1[off] * p2, t2[off] * p1, rtol=0, atol=1e-12)


def test_boost_never_lowers_score_toward_rare():
    # rant and farin both connect through ▁war; boosting warfarin raises rant->farin
    base = ["▁war rant", "▁war rant", "▁war farin", "▁war den", "▁me den", "▁me rant"]
    lines = [f"u{i}\t{s}" for i, s in enumerate(base)]
    c, v = parse_corpus_lines(lines)
    ct = count_stats(c, v)
    bl = biasing_list_from_words([("warfarin", 1)], v)
    i = v.id_of
    prev = -1.0
    for f in (1, 2, 10, 100, 1000):
        b = boost_counts(ct, c, v, BoostSpec(bl, f))
        s = substitution_scores(connection_probs(b, v), np.full(len(v), 0.5))
        assert s[i["rant"], i["farin"]] >= prev
        assert s[i["den"], i["farin"]] > 0
        prev = s[i["rant"], i["farin"]]


def test_matrix_file_roundtrip(tmp_path, micro):
    _, v, ct = micro
    tm = build_transform(connection_probs(ct, v), ct.unigram, FIXED, provenance={"vocab_hash": v.fingerprint()})
    save_matrix(tmp_path / "m.pdbm", tm)
    raw = (tmp_path / "m.pdbm").read_bytes()
    assert raw[:4] == b"PDBM"
    assert int.from_bytes(raw[4:8], "little") == 1 and int.from_bytes(raw[8:12], "little") == 3
    back = load_matrix(tmp_path / "m.pdbm")
    assert np.array_equal(back.T, tm.T)
    assert back.provenance["vocab_hash"] == v.fingerprint()
    assert back.provenance["schedule"] == {"kind": "fixed", "p": 0.7}


def test_matrix_file_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        load_matrix(tmp_path / "x")


def test_identity_helper():
    assert np.array_equal(TransformMatrix.identity(4).T, np.eye(4))
