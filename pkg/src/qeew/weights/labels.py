"""Gold weight levels for expanded slots, and pruning by predicted level."""

from __future__ import annotations

import numpy as np

from ..catalog import Entity, ReformulationPair, contains_entity
from ..expansion import ExpandedQuery, Origin, pad_slot
from .network import IGNORE


def label_entity(entity: Entity, query: str, reformulation: str) -> int:
    """2 if in the reformulation, else 1 if in the query, else 0."""
    if contains_entity(reformulation, entity):
        return 2
    if contains_entity(query, entity):
        return 1
    return 0


def assign_labels(pair: ReformulationPair, xq: ExpandedQuery) -> np.ndarray:
    """Per-slot labels in flattened order; PAD slots get ``IGNORE``."""
    return np.array(
        [IGNORE if s.is_pad else label_entity(s.entity, pair.query, pair.reformulation)
         for s in xq.slots],
        dtype=np.int64,
    )


def prune_expansions(xq: ExpandedQuery, weights) -> ExpandedQuery:
    """Turn expansions predicted at level 0 into PAD; originals always stay."""
    weights = np.asarray(weights)
    if weights.shape != (xq.m * (xq.k + 1),):
        raise ValueError(f"{weights.size} weights for {xq.m * (xq.k + 1)} slots")
    groups, p = [], 0
    for gi, group in enumerate(xq.groups):
        new = []
        for slot in group:
            drop = slot.origin is Origin.EXPANDED and not slot.is_pad and weights[p] == 0
            if not (drop or slot.is_pad):
                new.append(slot)
            p += 1
        # survivors keep their score order; padding goes to the tail
        new.extend(pad_slot(gi) for _ in range(len(group) - len(new)))
        groups.append(new)
    return ExpandedQuery(xq.query, groups, xq.k)
