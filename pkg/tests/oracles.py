"""Brute-force reference implementations used by the tests."""

import math
import random
from collections import Counter

from qeew.catalog import CatalogEntry, Entity, normalize


def naive_eekb(catalog):
    """Literal double loop over ordered entity pairs; containment by padded substring."""

    def inside(text, norm):
        return f" {norm} " in f" {normalize(text)} "

    kg, counts, types = {}, {}, {}
    for entry in catalog:
        level = {}
        for e in entry.entities:
            q, r = inside(entry.query, e.norm), inside(entry.response, e.norm)
            level[e.norm] = 3 if (q and r) else 2 if r else 1
            counts[e.norm] = counts.get(e.norm, 0) + 1
            types.setdefault(e.norm, {}).setdefault(e.etype, 0)
            types[e.norm][e.etype] += 1
        ents = list(entry.entities)
        for m in range(len(ents)):
            for n in range(len(ents)):
                a, b = ents[m].norm, ents[n].norm
                if m == n or a == b:
                    continue
                kg.setdefault(a, {}).setdefault(b, 0)
                kg[a][b] += level[a] * level[b]
    return kg, counts, types


def eekb_matches_naive(eekb, catalog) -> bool:
    kg, counts, types = naive_eekb(catalog)
    want_edges = {}
    for a, row in kg.items():
        for b, s in row.items():
            want_edges[tuple(sorted((a, b)))] = s
    # the literal loop visits every unordered pair twice, once from each side
    for key, s in list(want_edges.items()):
        assert kg[key[0]][key[1]] == kg[key[1]][key[0]] == s
    if eekb.edges != want_edges:
        return False
    if {k: n.occurrence_count for k, n in eekb.nodes.items()} != counts:
        return False
    for key, c in types.items():
        best = max(c.values())
        if eekb.nodes[key].etype != min(t for t, v in c.items() if v == best):
            return False
    return True


_VOCAB = ["ka", "lo", "mi", "nu", "pe", "ra", "si", "to"]


def random_catalog(rng: random.Random, max_entries=20, max_entities=6):
    """Small catalogs over a tiny vocabulary so entities often recur and overlap."""
    out = []
    for _ in range(rng.randint(0, max_entries)):
        query = " ".join(rng.choices(_VOCAB, k=rng.randint(1, 6)))
        response = " ".join(rng.choices(_VOCAB, k=rng.randint(1, 6)))
        ents, seen = [], set()
        for _ in range(rng.randint(0, max_entities)):
            toks = (query if rng.random() < 0.5 else response).split()
            i = rng.randrange(len(toks))
            span = " ".join(toks[i: i + rng.randint(1, 2)])
            if span in seen:
                continue
            seen.add(span)
            ents.append(Entity(span.upper() if rng.random() < 0.2 else span, rng.choice("AB")))
        out.append(CatalogEntry(query, response, tuple(ents)))
    return out


def naive_bm25(texts, query_tokens, k1=1.2, b=0.75):
    """(id, score) for every text sharing a token with the query, best first, ties by id."""
    docs = [normalize(t).split() for t in texts]
    n_docs = len(docs)
    avgdl = sum(len(d) for d in docs) / n_docs
    scored = []
    for cid, doc in enumerate(docs):
        tf = Counter(doc)
        total, hit = 0.0, False
        for tok in sorted(set(query_tokens)):
            if tf[tok] == 0:
                continue
            hit = True
            df = sum(1 for d in docs if tok in d)
            idf = math.log(1 + (n_docs - df + 0.5) / (df + 0.5))
            total += idf * tf[tok] * (k1 + 1) / (tf[tok] + k1 * (1 - b + b * len(doc) / avgdl))
        if hit:
            scored.append((cid, total))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored


def random_network_case(seed: int):
    """A small random model, expanded query and label vector for gradient checks."""
    import numpy as np

    from qeew.expansion import ExpandedQuery, ExpansionSlot, Origin, pad_slot
    from qeew.weights.network import IGNORE, EncoderConfig, init_params

    rng = np.random.default_rng(seed)
    cfg = EncoderConfig(embed_dim=8, vocab_buckets=24, attention_heads=2, seed=int(seed))
    params = init_params(cfg)
    for name in params:
        params[name] = params[name] + rng.normal(0.0, 0.2, params[name].shape)
    words = ["ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "ve"]
    m, k = int(rng.integers(1, 4)), int(rng.integers(0, 3))
    groups = []
    for gi in range(m):
        phrase = lambda: " ".join(rng.choice(words, size=int(rng.integers(1, 3))))  # noqa: E731
        group = [ExpansionSlot(Entity(f"{phrase()} o{gi}", "A"), Origin.ORIGINAL, gi)]
        n_real = int(rng.integers(0, k + 1))
        for j in range(n_real):
            group.append(ExpansionSlot(Entity(f"{phrase()} e{gi}{j}", "B"), Origin.EXPANDED, gi,
                                       int(rng.integers(1, 9))))
        group += [pad_slot(gi) for _ in range(k - n_real)]
        groups.append(group)
    xq = ExpandedQuery(" ".join(rng.choice(words, size=4)), groups, k)
    labels = np.array([IGNORE if s.is_pad else int(rng.integers(0, 3)) for s in xq.slots])
    return cfg, params, xq, labels


def numeric_grads(f, params, h=1e-5):
    """Central differences of scalar ``f(params)`` for every entry of every tensor."""
    import numpy as np

    out = {}
    for name in sorted(params):
        p = params[name]
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = f(params)
            p[idx] = orig - h
            down = f(params)
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def rel_error(a, b):
    """Norm-wise relative error ``|a - b| / max(|a|, |b|)`` with a tiny floor."""
    import numpy as np

    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))
