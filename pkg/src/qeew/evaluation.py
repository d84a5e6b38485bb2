"""P@K evaluation and the expansion / weighting ablation grid."""

from __future__ import annotations

import json
from collections.abc import Collection
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .catalog import ReformulationPair, normalize
from .eekb import Eekb
from .embedder import TextEncoder, encode_text
from .expansion import ExpandedQuery, expand_query
from .retrieval import (AdjustConfig, EmbeddingIndex, RankedList, RetrievalIndex, expanded_tokens,
                        important_entities, rank_embedding, rank_lexical)
from .weights.labels import assign_labels, prune_expansions
from .weights.training import WeightModel, predict_weights

CONFIGS = ("baseline", "expansion", "weight", "full")
DEFAULT_K_SET = (1, 10, 50)

WeightFn = Callable[[ReformulationPair, ExpandedQuery], np.ndarray]


def precision_at_k(ranked: RankedList, gold_id, k: int) -> int:
    """1 if the gold candidate is among the first ``k`` results, else 0.

    ``gold_id`` may be a single id or a collection of acceptable ids.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold_id) if isinstance(gold_id, Collection) else {gold_id}
    return int(any(cid in gold for cid, _ in ranked[:k]))


def hit_rank(ranked: RankedList, gold: set[int]) -> int | None:
    for rank, (cid, _) in enumerate(ranked, start=1):
        if cid in gold:
            return rank
    return None


@dataclass
class ConfigResult:
    p_at: dict[int, float]
    n: int
    ranks: list[int | None] = field(default_factory=list)


@dataclass
class EvalReport:
    k_set: tuple[int, ...]
    configs: dict[str, ConfigResult]
    mode: str = "lexical"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "configs": {
                name: {"p_at": {str(k): r.p_at[k] for k in self.k_set}, "n": r.n}
                for name, r in self.configs.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def table(self) -> str:
        head = ["config"] + [f"P@{k}" for k in self.k_set] + ["n"]
        rows = [[name] + [f"{100 * r.p_at[k]:.1f}%" for k in self.k_set] + [str(r.n)]
                for name, r in self.configs.items()]
        widths = [max(len(row[i]) for row in [head] + rows) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)  # noqa: E731
                                    for i, (c, w) in enumerate(zip(row, widths)))
        return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def oracle_weights(pair: ReformulationPair, xq: ExpandedQuery) -> np.ndarray:
    """Gold labels used as if they were predictions (upper-bound run)."""
    return assign_labels(pair, xq)


def model_weights(model: WeightModel) -> WeightFn:
    return lambda pair, xq: predict_weights(model, xq)


@dataclass
class Pipeline:
    """Everything :func:`run_ablation` needs; unused parts may stay ``None``."""

    eekb: Eekb | None = None
    k: int = 3
    weight_fn: WeightFn | None = None
    index: RetrievalIndex | None = None
    encoder: TextEncoder | None = None
    embedding_index: EmbeddingIndex | None = None
    adjust: AdjustConfig = field(default_factory=AdjustConfig)


def _gold_lookup(candidates) -> dict[str, set[int]]:
    lookup: dict[str, set[int]] = {}
    for c in candidates:
        lookup.setdefault(normalize(c.text), set()).add(c.id)
    return lookup


def _check(pipe: Pipeline, configs, mode):
    unknown = set(configs) - set(CONFIGS)
    if unknown:
        raise ValueError(f"unknown configurations {sorted(unknown)}; choose from {CONFIGS}")
    if mode == "lexical" and pipe.index is None:
        raise ValueError("lexical evaluation needs a retrieval index")
    if mode == "embedding" and (pipe.encoder is None or pipe.embedding_index is None):
        raise ValueError("embedding evaluation needs an encoder and an embedding index")
    if mode not in ("lexical", "embedding"):
        raise ValueError(f"unknown mode {mode!r}")
    if {"expansion", "full"} & set(configs) and pipe.eekb is None:
        raise ValueError("expansion configurations need an EEKB")
    if {"weight", "full"} & set(configs) and pipe.weight_fn is None:
        raise ValueError("weighted configurations need a weight predictor")


def _rank(pipe: Pipeline, mode: str, xq: ExpandedQuery, use_expansion: bool, boost, n: int):
    if mode == "lexical":
        return rank_lexical(pipe.index, expanded_tokens(xq, use_expansion), boost, pipe.adjust, n)
    text = xq.query
    if use_expansion:
        text = " ".join([text] + [e.surface for e in xq.expansions()])
    return rank_embedding(pipe.embedding_index, encode_text(pipe.encoder, text), boost,
                          pipe.adjust, n)


def run_ablation(test_pairs: Sequence[ReformulationPair], pipe: Pipeline,
                 configs: Sequence[str] = CONFIGS, k_set: Sequence[int] = DEFAULT_K_SET,
                 mode: str = "lexical") -> EvalReport:
    """Evaluate baseline / expansion-only / weight-only / full on one test set.

    * baseline: the raw query, no boost;
    * expansion: query plus EEKB expansions, no boost;
    * weight: raw query, boost from level-2 *original* entities;
    * full: expansions with level-0 ones pruned, boost from every level-2 slot.
    """
    _check(pipe, configs, mode)
    k_set = tuple(sorted(set(int(k) for k in k_set)))
    if not k_set or k_set[0] < 1:
        raise ValueError("k_set must hold positive integers")
    depth = k_set[-1]
    candidates = (pipe.index.candidates.values() if mode == "lexical"
                  else pipe.embedding_index.candidates)
    gold_of = _gold_lookup(candidates)
    ranks: dict[str, list[int | None]] = {c: [] for c in configs}
    empty = Eekb()
    for pair in test_pairs:
        gold = gold_of.get(normalize(pair.reformulation), set())
        plain = expand_query(pair.query, pair.query_entities, empty, 0)
        needs_xq = {"expansion", "weight", "full"} & set(configs)
        xq = expand_query(pair.query, pair.query_entities, pipe.eekb or empty, pipe.k) if needs_xq else None
        weights = pipe.weight_fn(pair, xq) if {"weight", "full"} & set(configs) else None
        for name in configs:
            if name == "baseline":
                ranked = _rank(pipe, mode, plain, False, (), depth)
            elif name == "expansion":
                ranked = _rank(pipe, mode, xq, True, (), depth)
            elif name == "weight":
                boost = important_entities(xq, weights, originals_only=True)
                ranked = _rank(pipe, mode, plain, False, boost, depth)
            else:
                pruned = prune_expansions(xq, weights)
                ranked = _rank(pipe, mode, pruned, True, important_entities(xq, weights), depth)
            ranks[name].append(hit_rank(ranked, gold))
    n = len(test_pairs)
    results = {}
    for name in configs:
        r = ranks[name]
        p_at = {k: (sum(1 for x in r if x is not None and x <= k) / n if n else 0.0) for k in k_set}
        results[name] = ConfigResult(p_at, n, r)
    return EvalReport(k_set, results, mode)
