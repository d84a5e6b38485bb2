import math
import random
from collections import Counter

import numpy as np
import pytest

from oracles import naive_bm25
from qeew.catalog import Entity
from qeew.eekb import Eekb
from qeew.embedder import TextEncoder, encode_text
from qeew.expansion import expand_query
from qeew.retrieval import (AdjustConfig, BM25Retriever, Candidate, EmbeddingIndex,
                            EmbeddingRetriever, bm25_score, build_index, index_from_dict,
                            index_to_dict, parse_candidates, rank_embedding, rank_lexical,
                            retrieve_embedding, retrieve_lexical)

from conftest import LDL, QUERY, SE, TEL

WORDS = ["play", "by", "sheena", "easton", "telefone", "long", "distance", "love", "little", "feat"]


def _cands(texts):
    return [Candidate(i, t) for i, t in enumerate(texts)]


def _random_corpus(rng, n):
    return [" ".join(rng.choices(WORDS, k=rng.randint(1, 8))) for _ in range(n)]


def test_single_candidate_stats():
    idx = build_index(_cands(["play telefone by sheena"]))
    assert idx.avg_doc_length == 4
    assert "easton" not in idx.postings


def test_postings_match_brute_force_counts():
    rng = random.Random(0)
    texts = _random_corpus(rng, 100)
    idx = build_index(_cands(texts))
    for tok, plist in idx.postings.items():
        for cid, tf in plist:
            assert Counter(texts[cid].split())[tok] == tf
    assert sum(len(p) for p in idx.postings.values()) == sum(len(set(t.split())) for t in texts)


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        build_index([Candidate(1, "a"), Candidate(1, "b")])
    with pytest.raises(ValueError):
        Candidate(1, "  ")


def test_hand_computed_single_doc_score():
    idx = build_index(_cands(["telefone sheena"]))
    idf = math.log(1 + 0.5 / 1.5)
    assert bm25_score(idx, ["telefone"], 0) == pytest.approx(idf * 2.2 / (1 + 1.2), abs=1e-15)
    assert bm25_score(idx, ["madonna"], 0) == 0.0
    assert bm25_score(idx, ["telefone", "madonna"], 0) == bm25_score(idx, ["telefone"], 0)
    with pytest.raises(KeyError):
        bm25_score(idx, ["x"], 5)


@pytest.mark.parametrize("seed", range(20))
def test_lexical_matches_oracle(seed):
    rng = random.Random(seed)
    texts = _random_corpus(rng, rng.randint(1, 50))
    idx = build_index(_cands(texts))
    query = rng.choices(WORDS + ["zzz"], k=rng.randint(1, 5))
    got = rank_lexical(idx, query, n=100)
    want = naive_bm25(texts, query)
    assert [c for c, _ in got] == [c for c, _ in want]
    assert all(abs(a - b) <= 1e-9 for (_, a), (_, b) in zip(got, want))
    for cid, s in got:
        assert s == pytest.approx(bm25_score(idx, query, cid), abs=1e-12)


def test_empty_query_gives_empty_result():
    idx = build_index(_cands(["a b"]))
    assert rank_lexical(idx, []) == []
    assert rank_lexical(idx, ["zzz"]) == []


def test_expansion_tokens_are_appended(sheena_eekb):
    idx = build_index(_cands(["play telefone by sheena easton", "play long distance love by little feat"]))
    xq = expand_query(QUERY, [LDL, SE], sheena_eekb, 1)
    bare = expand_query(QUERY, [LDL, SE], Eekb(), 0)
    with_exp = dict(retrieve_lexical(idx, xq))
    without = dict(retrieve_lexical(idx, bare))
    assert with_exp[0] > without[0]
    assert with_exp[1] == without[1]


def test_boost_multiplies_once(sheena_eekb):
    idx = build_index(_cands(["play telefone by sheena easton", "play long distance love by little feat"]))
    xq = expand_query(QUERY, [LDL, SE], sheena_eekb, 1)
    raw = dict(retrieve_lexical(idx, xq))
    # SE and TEL both level 2 and both inside candidate 0: one boost only
    boosted = dict(retrieve_lexical(idx, xq, np.array([1, 2, 2, 2])))
    assert boosted[0] == raw[0] * 1.5
    assert boosted[1] == raw[1]


def test_boost_flips_equal_scores():
    idx = build_index(_cands(["play alpha", "play beta"]))
    assert [c for c, _ in rank_lexical(idx, ["play"])] == [0, 1]
    ranked = rank_lexical(idx, ["play"], [Entity("beta", "T")])
    assert [c for c, _ in ranked] == [1, 0]
    assert ranked[0][1] == 1.5 * ranked[1][1]


def test_no_boost_is_bit_identical():
    rng = random.Random(3)
    idx = build_index(_cands(_random_corpus(rng, 40)))
    q = rng.choices(WORDS, k=4)
    assert rank_lexical(idx, q, []) == rank_lexical(idx, q)
    bare = expand_query(" ".join(q), [Entity("sheena easton", "T")], Eekb(), 0)
    assert retrieve_lexical(idx, bare, np.array([1])) == rank_lexical(idx, bare.query.split())


def test_rank_dominance_property():
    rng = random.Random(9)
    for _ in range(30):
        texts = _random_corpus(rng, 30)
        idx = build_index(_cands(texts))
        q = rng.choices(WORDS, k=3)
        ent = Entity(rng.choice(WORDS), "T")
        raw = dict(rank_lexical(idx, q, n=100))
        adj = rank_lexical(idx, q, [ent], n=100)
        pos = {c: i for i, (c, _) in enumerate(adj)}
        hit = idx.containing(ent)
        for a in raw:
            assert dict(adj)[a] >= raw[a]
            for b in raw:
                if a in hit and b not in hit and raw[a] >= raw[b]:
                    assert pos[a] < pos[b]


def _enc_index(texts, seed=0):
    enc = TextEncoder.initialize(dim=8, vocab_buckets=64, seed=seed)
    cands = _cands(texts)
    return enc, EmbeddingIndex.build(enc, cands)


def test_embedding_divides_distance():
    cands = _cands(["play alpha", "play beta"])
    idx = EmbeddingIndex(cands, np.array([[1.2, 0.0], [0.0, 1.1]]))
    raw = rank_embedding(idx, np.zeros(2))
    assert [c for c, _ in raw] == [1, 0]
    adj = rank_embedding(idx, np.zeros(2), [Entity("alpha", "T")])
    assert adj[0] == (0, pytest.approx(1.0, abs=1e-15))
    assert [c for c, _ in adj] == [0, 1]


def test_embedding_equal_distance_flip():
    cands = _cands(["play alpha", "play beta"])
    idx = EmbeddingIndex(cands, np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert [c for c, _ in rank_embedding(idx, np.zeros(2))] == [0, 1]
    assert [c for c, _ in rank_embedding(idx, np.zeros(2), [Entity("beta", "T")])] == [1, 0]


def test_identical_query_ranks_first():
    texts = ["play telefone by sheena easton", "play alpha", "play sheena"]
    enc, idx = _enc_index(texts)
    ranked = retrieve_embedding(enc, idx, texts[0], [Entity("alpha", "T")])
    assert ranked[0] == (0, 0.0)


def test_embedding_no_boost_bit_identical():
    enc, idx = _enc_index(_random_corpus(random.Random(1), 30))
    q = encode_text(enc, "play sheena easton")
    assert rank_embedding(idx, q, []) == rank_embedding(idx, q)
    dist = idx.distances(q)
    assert [c for c, _ in rank_embedding(idx, q, n=30)] == sorted(range(30), key=lambda i: (dist[i], i))


def test_adjust_config_validation():
    with pytest.raises(ValueError):
        AdjustConfig(lexical_alpha=1.0)


def test_index_round_trip_and_candidate_parsing():
    idx = build_index(parse_candidates(['{"id": 4, "text": "play telefone"}', "",
                                        '{"id": 2, "text": "play alpha"}']))
    again = index_from_dict(index_to_dict(idx))
    assert rank_lexical(again, ["play", "alpha"]) == rank_lexical(idx, ["play", "alpha"])
    with pytest.raises(ValueError, match="line 1"):
        parse_candidates(['{"id": "x", "text": "a"}'])


def test_estimators(sheena_eekb):
    texts = ["play telefone by sheena easton", "play long distance love by little feat"]
    bm = BM25Retriever(n_results=1).fit(_cands(texts))
    xq = expand_query(QUERY, [LDL, SE], sheena_eekb, 1)
    assert bm.rank(xq) == retrieve_lexical(bm.index_, xq, n=1)
    enc = TextEncoder.initialize(dim=8, vocab_buckets=64)
    er = EmbeddingRetriever(encoder=enc).fit(_cands(texts))
    assert er.rank(texts[1])[0][0] == 1
    assert er.rank(texts[1], [TEL])[0][0] == 1
    with pytest.raises(ValueError):
        EmbeddingRetriever().fit(_cands(texts))
