"""Entity expansion knowledge base: a weighted entity co-occurrence graph.

Each catalog record gives every entity a relevance level (1 query only,
2 response only, 3 both).  Every pair of entities in a record adds the
product of their levels to the edge joining them.  Scores stay exact
Python integers.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import IO, Iterable, Mapping

from .catalog import CatalogEntry, Entity, contains_entity

QUERY_ONLY = 1
RESPONSE_ONLY = 2
BOTH = 3


class EekbFormatError(ValueError):
    pass


def classify_level(entity: Entity, entry: CatalogEntry) -> int:
    in_query = contains_entity(entry.query, entity)
    in_response = contains_entity(entry.response, entity)
    if in_query and in_response:
        return BOTH
    if in_response:
        return RESPONSE_ONLY
    if in_query:
        return QUERY_ONLY
    raise ValueError(f"entity {entity.norm!r} occurs in neither query nor response")


@dataclass(frozen=True)
class EekbNode:
    key: str
    etype: str
    occurrence_count: int


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


class Eekb:
    """Undirected graph of entity keys with integer edge scores.

    Edges are stored once under ``(a, b)`` with ``a < b``; :meth:`score`
    reads them symmetrically.
    """

    def __init__(self, nodes: Mapping[str, EekbNode] | None = None,
                 edges: Mapping[tuple[str, str], int] | None = None):
        self.nodes: dict[str, EekbNode] = dict(nodes or {})
        self.edges: dict[tuple[str, str], int] = {}
        for (a, b), score in (edges or {}).items():
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            self.edges[_edge_key(a, b)] = int(score)
        self._adj: dict[str, dict[str, int]] = defaultdict(dict)
        for (a, b), score in self.edges.items():
            self._adj[a][b] = score
            self._adj[b][a] = score

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, key):
        return key in self.nodes

    def __eq__(self, other):
        if not isinstance(other, Eekb):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self):
        return f"Eekb(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def score(self, a: str, b: str) -> int:
        return self._adj.get(a, {}).get(b, 0)

    def neighbors(self, key: str) -> dict[str, int]:
        return dict(self._adj.get(key, {}))

    def top_k(self, key: str, k: int) -> list[tuple[str, str, int]]:
        return top_k_neighbors(self, key, k)


class EekbAccumulator:
    """Incremental builder; partial accumulators merge by integer addition."""

    def __init__(self):
        self.edge_scores: Counter = Counter()
        self.counts: Counter = Counter()
        self.types: dict[str, Counter] = defaultdict(Counter)

    def add(self, entry: CatalogEntry) -> None:
        levels = []
        for ent in entry.entities:
            levels.append((ent.norm, classify_level(ent, entry)))
            self.counts[ent.norm] += 1
            self.types[ent.norm][ent.etype] += 1
        # entities sharing a norm across types collapse to a single node
        for (a, la), (b, lb) in combinations(levels, 2):
            if a != b:
                self.edge_scores[_edge_key(a, b)] += la * lb

    def merge(self, other: "EekbAccumulator") -> "EekbAccumulator":
        self.edge_scores.update(other.edge_scores)
        self.counts.update(other.counts)
        for key, c in other.types.items():
            self.types[key].update(c)
        return self

    def result(self) -> Eekb:
        nodes = {}
        for key, count in self.counts.items():
            # majority type, ties to the lexicographically smallest label
            etype = min(self.types[key].items(), key=lambda kv: (-kv[1], kv[0]))[0]
            nodes[key] = EekbNode(key, etype, count)
        return Eekb(nodes, dict(self.edge_scores))


def build_eekb(catalog: Iterable[CatalogEntry]) -> Eekb:
    acc = EekbAccumulator()
    for entry in catalog:
        acc.add(entry)
    return acc.result()


def top_k_neighbors(eekb: Eekb, entity_key: str, k: int) -> list[tuple[str, str, int]]:
    """The ``k`` highest-scoring neighbors as ``(key, type, score)``.

    Ties go to the lexicographically smaller key.  Unknown keys give ``[]``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(eekb._adj.get(entity_key, {}).items(), key=lambda kv: (-kv[1], kv[0]))
    return [(key, eekb.nodes[key].etype, score) for key, score in ranked[:k]]


def eekb_to_dict(eekb: Eekb) -> dict:
    return {
        "nodes": [
            {"key": n.key, "type": n.etype, "count": n.occurrence_count}
            for n in sorted(eekb.nodes.values(), key=lambda n: n.key)
        ],
        "edges": [{"a": a, "b": b, "score": s} for (a, b), s in sorted(eekb.edges.items())],
    }


def save_eekb(eekb: Eekb, sink: IO[str]) -> None:
    json.dump(eekb_to_dict(eekb), sink, sort_keys=True, ensure_ascii=False, indent=1)
    sink.write("\n")


def eekb_from_dict(data) -> Eekb:
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise EekbFormatError("EEKB document needs 'nodes' and 'edges' arrays")
    nodes = {}
    for i, rec in enumerate(data["nodes"]):
        try:
            key, etype, count = rec["key"], rec["type"], rec["count"]
            if not (isinstance(key, str) and key and isinstance(etype, str)
                    and isinstance(count, int) and count >= 1):
                raise TypeError
        except (KeyError, TypeError):
            raise EekbFormatError(f"bad node record #{i}: {rec!r}") from None
        nodes[key] = EekbNode(key, etype, count)
    edges = {}
    for i, rec in enumerate(data["edges"]):
        try:
            a, b, score = rec["a"], rec["b"], rec["score"]
            if not (isinstance(score, int) and score >= 0 and a in nodes and b in nodes and a < b):
                raise TypeError
        except (KeyError, TypeError):
            raise EekbFormatError(f"bad edge record #{i}: {rec!r}") from None
        edges[(a, b)] = score
    return Eekb(nodes, edges)


def load_eekb(source: IO[str]) -> Eekb:
    try:
        data = json.load(source)
    except json.JSONDecodeError as exc:
        raise EekbFormatError(f"EEKB file is not valid JSON: {exc}") from exc
    return eekb_from_dict(data)
