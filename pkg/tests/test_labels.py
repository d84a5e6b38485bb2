import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qeew.catalog import Entity, ReformulationPair
from qeew.expansion import expand_query
from qeew.weights.labels import assign_labels, label_entity, prune_expansions
from qeew.weights.network import IGNORE

from conftest import LDL, QUERY, REFORMULATION, SE, TEL


def test_running_example_labels(sheena_eekb):
    assert label_entity(TEL, QUERY, REFORMULATION) == 2
    assert label_entity(SE, QUERY, REFORMULATION) == 2
    assert label_entity(LDL, QUERY, REFORMULATION) == 1
    assert label_entity(Entity("little feat", "ArtistName"), QUERY, REFORMULATION) == 0


def test_assign_labels_marks_pad(sheena_eekb):
    pair = ReformulationPair(QUERY, REFORMULATION, (LDL, SE))
    xq = expand_query(QUERY, [LDL, SE], sheena_eekb, 2)
    assert assign_labels(pair, xq).tolist() == [1, 2, IGNORE, 2, 2, IGNORE]


_word = st.sampled_from(["ka", "lo", "mi", "nu"])
_text = st.lists(_word, min_size=1, max_size=5).map(" ".join)


@settings(max_examples=300)
@given(_text, _text, st.lists(_word, min_size=1, max_size=2).map(" ".join))
def test_precedence(query, reformulation, surface):
    e = Entity(surface, "T")
    in_r = f" {e.norm} " in f" {reformulation} "
    in_q = f" {e.norm} " in f" {query} "
    assert label_entity(e, query, reformulation) == (2 if in_r else 1 if in_q else 0)


def _xq_and_weights(sheena_eekb):
    xq = expand_query(QUERY, [LDL, SE], sheena_eekb, 2)
    return xq, np.array([0, 0, IGNORE, 1, 2, IGNORE])


def test_prune_drops_level0_expansions_keeps_originals(sheena_eekb):
    xq, w = _xq_and_weights(sheena_eekb)
    pruned = prune_expansions(xq, w)
    assert pruned.groups[0][0].entity == LDL
    assert pruned.pad_mask() == [True, False, False, True, True, False]
    assert len(pruned.slots) == len(xq.slots)


def test_prune_without_zeros_is_identity(sheena_eekb):
    xq, _ = _xq_and_weights(sheena_eekb)
    assert prune_expansions(xq, np.array([1, 2, 0, 0, 1, 2])) == xq


def test_prune_checks_alignment(sheena_eekb):
    xq, _ = _xq_and_weights(sheena_eekb)
    with pytest.raises(ValueError):
        prune_expansions(xq, [1, 2])
