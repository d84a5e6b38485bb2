"""BM25 and embedding retrieval over reformulation candidates, with weight boosts.

After retrieval, a candidate that contains any entity predicted at level 2
is boosted once. In lexical mode its BM25 score is multiplied by
``lexical_alpha``. In embedding mode its distance is divided by
``embedding_alpha``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .catalog import Entity, contains_tokens, tokenize
from .embedder import TextEncoder, encode_many, encode_text
from .expansion import ExpandedQuery
from .validation import check_positive_int

RankedList = list[tuple[int, float]]


@dataclass(frozen=True)
class Candidate:
    id: int
    text: str
    norm_tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"candidate {self.id} has empty text")
        object.__setattr__(self, "norm_tokens", tuple(tokenize(self.text)))

    def contains(self, entity: Entity) -> bool:
        return contains_tokens(self.norm_tokens, entity.tokens)


@dataclass(frozen=True)
class AdjustConfig:
    lexical_alpha: float = 1.5
    embedding_alpha: float = 1.2

    def __post_init__(self):
        if not (self.lexical_alpha > 1 and self.embedding_alpha > 1):
            raise ValueError("both boost factors must exceed 1")


class RetrievalIndex:
    """Inverted index with the statistics BM25 needs."""

    def __init__(self, candidates: Sequence[Candidate], k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.candidates: dict[int, Candidate] = {}
        for c in candidates:
            if c.id in self.candidates:
                raise ValueError(f"duplicate candidate id {c.id}")
            self.candidates[c.id] = c
        self.doc_lengths = {c.id: len(c.norm_tokens) for c in candidates}
        self.avg_doc_length = (sum(self.doc_lengths.values()) / len(self.doc_lengths)
                               if self.doc_lengths else 0.0)
        postings: dict[str, list[tuple[int, int]]] = {}
        for cid in sorted(self.candidates):
            for tok, tf in Counter(self.candidates[cid].norm_tokens).items():
                postings.setdefault(tok, []).append((cid, tf))
        self.postings = postings
        self._ids = np.array(sorted(self.candidates), dtype=np.int64)
        self._row = {cid: i for i, cid in enumerate(self._ids.tolist())}
        self._contrib: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self):
        return len(self.candidates)

    @property
    def n_docs(self) -> int:
        return len(self.candidates)

    def idf(self, token: str) -> float:
        n = len(self.postings.get(token, ()))
        return math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5))

    def term_weight(self, tf: int, cid: int) -> float:
        norm = 1.0 - self.b + self.b * self.doc_lengths[cid] / self.avg_doc_length
        return tf * (self.k1 + 1.0) / (tf + self.k1 * norm)

    def _token_contrib(self, tok):
        """Rows and per-candidate BM25 contributions of one token, cached."""
        hit = self._contrib.get(tok)
        if hit is None:
            plist = self.postings[tok]
            idf = self.idf(tok)
            rows = np.array([self._row[cid] for cid, _ in plist], dtype=np.int64)
            vals = np.array([idf * self.term_weight(tf, cid) for cid, tf in plist])
            hit = self._contrib[tok] = (rows, vals)
        return hit

    def scores(self, query_tokens: Iterable[str]) -> dict[int, float]:
        """BM25 for every candidate sharing at least one token with the query."""
        acc = np.zeros(len(self._ids))
        matched = np.zeros(len(self._ids), dtype=bool)
        for tok in sorted(set(query_tokens)):
            if tok not in self.postings:
                continue
            rows, vals = self._token_contrib(tok)
            acc[rows] += vals
            matched[rows] = True
        return dict(zip(self._ids[matched].tolist(), acc[matched].tolist()))

    def containing(self, entity: Entity) -> set[int]:
        """Ids of candidates that contain ``entity`` as a token run."""
        toks = entity.tokens
        plist = self.postings.get(toks[0], ()) if toks else ()
        return {cid for cid, _ in plist if self.candidates[cid].contains(entity)}


def build_index(candidates: Iterable[Candidate], k1: float = 1.2, b: float = 0.75) -> RetrievalIndex:
    return RetrievalIndex(list(candidates), k1=k1, b=b)


def bm25_score(index: RetrievalIndex, query_tokens: Iterable[str], candidate_id: int) -> float:
    if candidate_id not in index.candidates:
        raise KeyError(f"unknown candidate id {candidate_id}")
    counts = Counter(index.candidates[candidate_id].norm_tokens)
    total = 0.0
    # query-side term frequency plays no role: each distinct token counts once
    for tok in sorted(set(query_tokens)):
        if tok in counts:
            total += index.idf(tok) * index.term_weight(counts[tok], candidate_id)
    return total


def _top(ids, values, n: int, descending: bool) -> RankedList:
    """First ``n`` by value, ties broken by ascending id."""
    ids = np.asarray(ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((ids, -values if descending else values))[:n]
    return list(zip(ids[order].tolist(), values[order].tolist()))


def expanded_tokens(xq: ExpandedQuery, use_expansion: bool = True) -> list[str]:
    """Tokens of the query text followed by those of every kept expansion."""
    tokens = tokenize(xq.query)
    if use_expansion:
        for ent in xq.expansions():
            tokens.extend(ent.tokens)
    return tokens


def important_entities(xq: ExpandedQuery, weights, originals_only: bool = False) -> list[Entity]:
    """Entities of non-PAD slots whose predicted level is 2."""
    if weights is None:
        return []
    weights = np.asarray(weights)
    slots = xq.slots
    if weights.shape != (len(slots),):
        raise ValueError(f"{weights.size} weights for {len(slots)} slots")
    return [s.entity for s, w in zip(slots, weights)
            if not s.is_pad and w == 2 and (not originals_only or s.origin.value == "original")]


def rank_lexical(index: RetrievalIndex, query_tokens: Sequence[str],
                 boost: Sequence[Entity] = (), cfg: AdjustConfig = AdjustConfig(),
                 n: int = 50) -> RankedList:
    n = check_positive_int(n, "n")
    scores = index.scores(query_tokens)
    if boost:
        boosted = set().union(*(index.containing(e) for e in boost))
        for cid in boosted & scores.keys():
            scores[cid] *= cfg.lexical_alpha
    return _top(list(scores.keys()), list(scores.values()), n, descending=True)


def retrieve_lexical(index: RetrievalIndex, xq: ExpandedQuery, weights=None,
                     cfg: AdjustConfig = AdjustConfig(), n: int = 50) -> RankedList:
    """BM25 over "query + expansion", then the level-2 boost."""
    return rank_lexical(index, expanded_tokens(xq), important_entities(xq, weights), cfg, n)


class EmbeddingIndex:
    """Exact Euclidean search over precomputed candidate vectors."""

    def __init__(self, candidates: Sequence[Candidate], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[0] != len(candidates):
            raise ValueError("one vector per candidate is required")
        ids = [c.id for c in candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate candidate ids")
        self.candidates = list(candidates)
        self.ids = np.array(ids, dtype=np.int64)
        self.vectors = vectors

    @classmethod
    def build(cls, encoder: TextEncoder, candidates: Sequence[Candidate]) -> "EmbeddingIndex":
        return cls(candidates, encode_many(encoder, [c.text for c in candidates]))

    def distances(self, qvec: np.ndarray) -> np.ndarray:
        return np.sqrt(((self.vectors - qvec) ** 2).sum(axis=1))


def rank_embedding(index: EmbeddingIndex, qvec: np.ndarray, boost: Sequence[Entity] = (),
                   cfg: AdjustConfig = AdjustConfig(), n: int = 50) -> RankedList:
    n = check_positive_int(n, "n")
    dist = index.distances(qvec)
    if boost:
        hit = np.array([any(c.contains(e) for e in boost) for c in index.candidates])
        dist = np.where(hit, dist / cfg.embedding_alpha, dist)
    return _top(index.ids, dist, n, descending=False)


def retrieve_embedding(encoder: TextEncoder, index: EmbeddingIndex, query: str,
                       boost: Sequence[Entity] = (), cfg: AdjustConfig = AdjustConfig(),
                       n: int = 50) -> RankedList:
    """Nearest candidates by Euclidean distance, level-2 hits shrunk by ``embedding_alpha``."""
    return rank_embedding(index, encode_text(encoder, query), boost, cfg, n)


class BM25Retriever(BaseEstimator):
    """``fit`` indexes candidates; ``rank`` scores expanded queries."""

    def __init__(self, k1=1.2, b=0.75, lexical_alpha=1.5, n_results=50):
        self.k1 = k1
        self.b = b
        self.lexical_alpha = lexical_alpha
        self.n_results = n_results

    def fit(self, X: Sequence[Candidate], y=None):
        self.index_ = build_index(X, self.k1, self.b)
        return self

    def rank(self, xq: ExpandedQuery, weights=None) -> RankedList:
        check_is_fitted(self, "index_")
        return retrieve_lexical(self.index_, xq, weights, AdjustConfig(lexical_alpha=self.lexical_alpha),
                                self.n_results)


class EmbeddingRetriever(BaseEstimator):
    def __init__(self, encoder=None, embedding_alpha=1.2, n_results=50):
        self.encoder = encoder
        self.embedding_alpha = embedding_alpha
        self.n_results = n_results

    def fit(self, X: Sequence[Candidate], y=None):
        if self.encoder is None:
            raise ValueError("EmbeddingRetriever needs a trained TextEncoder")
        self.index_ = EmbeddingIndex.build(self.encoder, list(X))
        return self

    def rank(self, query: str, boost: Sequence[Entity] = ()) -> RankedList:
        check_is_fitted(self, "index_")
        return retrieve_embedding(self.encoder, self.index_, query, boost,
                                  AdjustConfig(embedding_alpha=self.embedding_alpha), self.n_results)


def parse_candidates(lines: Iterable[str]) -> list[Candidate]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            cid, text = obj["id"], obj["text"]
            if isinstance(cid, bool) or not isinstance(cid, int) or not isinstance(text, str):
                raise TypeError("need integer 'id' and string 'text'")
            out.append(Candidate(cid, text))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"candidates line {lineno}: {exc}") from exc
    return out


def index_to_dict(index: RetrievalIndex) -> dict:
    return {
        "k1": index.k1,
        "b": index.b,
        "candidates": [{"id": c.id, "text": c.text} for c in sorted(index.candidates.values(),
                                                                  key=lambda c: c.id)],
    }


def index_from_dict(data: dict) -> RetrievalIndex:
    cands = [Candidate(rec["id"], rec["text"]) for rec in data["candidates"]]
    return RetrievalIndex(cands, k1=data["k1"], b=data["b"])


def ranked_to_dict(query: str, ranked: RankedList) -> dict:
    return {"query": query, "results": [{"id": cid, "score": score} for cid, score in ranked]}
