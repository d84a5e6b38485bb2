"""Expand query entities with their strongest EEKB neighbors."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .catalog import CatalogEntry, Entity, ReformulationPair
from .eekb import Eekb, build_eekb, top_k_neighbors
from .validation import check_non_negative_int


class Origin(str, Enum):
    ORIGINAL = "original"
    EXPANDED = "expanded"


@dataclass(frozen=True)
class ExpansionSlot:
    """One entity position in an expanded query.

    ``entity is None`` marks a PAD slot.
    """

    entity: Entity | None
    origin: Origin
    parent_index: int
    relevance_score: int = 0

    @property
    def is_pad(self) -> bool:
        return self.entity is None

    def to_dict(self) -> dict:
        return {
            "text": "" if self.entity is None else self.entity.surface,
            "type": "" if self.entity is None else self.entity.etype,
            "origin": self.origin.value,
            "score": self.relevance_score,
        }


def pad_slot(parent_index: int) -> ExpansionSlot:
    return ExpansionSlot(None, Origin.EXPANDED, parent_index, 0)


@dataclass(frozen=True)
class ExpandedQuery:
    query: str
    groups: tuple[tuple[ExpansionSlot, ...], ...]
    k: int

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ValueError("an expanded query needs at least one group")
        for i, g in enumerate(groups):
            if len(g) != self.k + 1:
                raise ValueError(f"group {i} has {len(g)} slots, expected {self.k + 1}")
            if g[0].origin is not Origin.ORIGINAL or g[0].is_pad:
                raise ValueError(f"group {i} must start with its original entity")

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def slots(self) -> list[ExpansionSlot]:
        return [s for g in self.groups for s in g]

    @property
    def originals(self) -> list[Entity]:
        return [g[0].entity for g in self.groups]

    def expansions(self) -> list[Entity]:
        return [s.entity for g in self.groups for s in g[1:] if not s.is_pad]

    def pad_mask(self) -> list[bool]:
        """True for real (non-PAD) slots, in flattened order."""
        return [not s.is_pad for s in self.slots]

    def to_dict(self) -> dict:
        return {"query": self.query, "groups": [[s.to_dict() for s in g] for g in self.groups]}


def expand_query(query: str, query_entities: Sequence[Entity], eekb: Eekb, k: int) -> ExpandedQuery:
    """Attach the ``k`` best EEKB neighbors to every query entity.

    Neighbors that duplicate one of the query's own entities are skipped in
    favor of the next best.  Short groups are padded so the result always
    has ``m * (k + 1)`` slots.
    """
    k = check_non_negative_int(k, "k")
    if not query_entities:
        raise ValueError("no entities to expand")
    norms = [e.norm for e in query_entities]
    if len(set(norms)) != len(norms):
        raise ValueError("query entities must be unique by norm")
    original = set(norms)
    groups = []
    for i, ent in enumerate(query_entities):
        group = [ExpansionSlot(ent, Origin.ORIGINAL, i, 0)]
        if k:
            for key, etype, score in top_k_neighbors(eekb, ent.norm, k + len(original)):
                if key in original:
                    continue
                group.append(ExpansionSlot(Entity(key, etype), Origin.EXPANDED, i, score))
                if len(group) == k + 1:
                    break
        group.extend(pad_slot(i) for _ in range(k + 1 - len(group)))
        groups.append(group)
    return ExpandedQuery(query, groups, k)


def _query_and_entities(item) -> tuple[str, Sequence[Entity]]:
    if isinstance(item, ReformulationPair):
        return item.query, item.query_entities
    query, entities = item
    return query, entities


class QueryExpander(TransformerMixin, BaseEstimator):
    """Fit an EEKB on a catalog, then expand queries against it.

    Parameters
    ----------
    k : int, default=3
        Expansions per original entity.

    Attributes
    ----------
    eekb_ : Eekb
        Knowledge base built by :meth:`fit`.
    """

    def __init__(self, k: int = 3):
        self.k = k

    def fit(self, X: Iterable[CatalogEntry], y=None):
        check_non_negative_int(self.k, "k")
        self.eekb_ = build_eekb(X)
        return self

    @classmethod
    def from_eekb(cls, eekb: Eekb, k: int = 3) -> "QueryExpander":
        est = cls(k=k)
        est.eekb_ = eekb
        return est

    def transform(self, X) -> list[ExpandedQuery]:
        """``X`` holds :class:`ReformulationPair` objects or ``(query, entities)`` tuples."""
        check_is_fitted(self, "eekb_")
        out = []
        for item in X:
            query, entities = _query_and_entities(item)
            out.append(expand_query(query, entities, self.eekb_, self.k))
        return out
