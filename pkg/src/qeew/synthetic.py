"""Deterministic synthetic music-assistant corpus with planted alias relations.

Every *work* has a canonical title, an artist, and a lyric phrase that users
say instead of the title.  Every artist also has misheard spellings.  The
catalog records successful interactions.  The user says the noisy form and
the response uses the canonical one, so the EEKB links noise to correction.
Each test query uses a noisy form, and its gold reformulation is
``"play <title> by <artist>"``.

The candidate pool is crowded on purpose.  Every artist has many songs and
"mix" candidates, and there are decoys that reuse a work's lyric with
another artist.  Lyrics draw on a small pool of everyday words, so a lyric
match is only moderately strong evidence.  Plain BM25 therefore ranks the
gold among many near ties.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .catalog import CatalogEntry, Entity, ReformulationPair, normalize
from .retrieval import Candidate

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "kl", "pr", "st", "tr", "sh", "ch"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou", "ea"]
_CODAS = ["", "", "n", "r", "l", "s", "m", "x"]

LYRIC_LENGTHS = (2, 3)

SONG = "SongName"
ARTIST = "ArtistName"


@dataclass(frozen=True)
class SyntheticSizes:
    n_artists: int = 50
    songs_per_artist: int = 12
    misheard_per_artist: int = 2
    mixes_per_artist: int = 16
    catalog: int = 2000
    train: int = 1200
    val: int = 300
    test: int = 500
    candidates: int = 2000
    ambiguous_lyric_rate: float = 0.05
    lyric_vocab: int = 80

    def __post_init__(self):
        for name in ("n_artists", "songs_per_artist", "misheard_per_artist", "catalog", "train",
                     "val", "test", "candidates", "lyric_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Work:
    title: str
    artist: str
    lyric: str

    @property
    def gold(self) -> str:
        return f"play {self.title} by {self.artist}"


@dataclass
class SyntheticCorpus:
    catalog: list[CatalogEntry]
    train: list[ReformulationPair]
    val: list[ReformulationPair]
    test: list[ReformulationPair]
    candidates: list[Candidate]
    works: list[Work] = field(default_factory=list)
    misheard: dict[str, list[str]] = field(default_factory=dict)
    aliases: list[tuple[str, str]] = field(default_factory=list)


class _Words:
    """Unique pseudo-words; separate pools never share a word."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used = {"play", "by", "playing", "radio", "songs", "shuffle", "live", "remix",
                     "the", "sep"}

    def word(self, syllables=(2, 3)) -> str:
        while True:
            n = self.rng.choice(syllables)
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(n))
            w += self.rng.choice(_CODAS)
            if w not in self.used:
                self.used.add(w)
                return w

    def phrase(self, lengths) -> str:
        return " ".join(self.word() for _ in range(self.rng.choice(lengths)))


def _mishear(artist: str, words: _Words) -> str:
    toks = artist.split()
    i = words.rng.randrange(len(toks))
    toks[i] = words.word()
    return " ".join(toks)


def _entry(query, response, ents) -> CatalogEntry:
    return CatalogEntry(query, response, tuple(Entity(text, etype) for text, etype in ents))


def _catalog_record(kind: str, w: Work, misheard: str | None) -> CatalogEntry:
    resp = f"playing {w.title} by {w.artist}"
    if kind == "lyric":
        return _entry(f"play {w.lyric} by {w.artist}", resp,
                      [(w.lyric, SONG), (w.title, SONG), (w.artist, ARTIST)])
    if kind == "misheard":
        return _entry(f"play {w.title} by {misheard}", resp,
                      [(w.title, SONG), (misheard, ARTIST), (w.artist, ARTIST)])
    if kind == "artist":
        return _entry(f"play {w.artist}", resp, [(w.artist, ARTIST), (w.title, SONG)])
    return _entry(f"play {w.title} by {w.artist}", resp, [(w.title, SONG), (w.artist, ARTIST)])


def _pair(kind: str, w: Work, misheard: str) -> ReformulationPair:
    if kind == "lyric":
        q, ents = f"play {w.lyric} by {w.artist}", [(w.lyric, SONG), (w.artist, ARTIST)]
    elif kind == "misheard":
        q, ents = f"play {w.title} by {misheard}", [(w.title, SONG), (misheard, ARTIST)]
    else:
        q, ents = f"play {w.lyric} by {misheard}", [(w.lyric, SONG), (misheard, ARTIST)]
    return ReformulationPair(q, w.gold, tuple(Entity(t, e) for t, e in ents))


def generate_synthetic(seed: int = 7, sizes: SyntheticSizes | None = None) -> SyntheticCorpus:
    sizes = sizes or SyntheticSizes()
    rng = random.Random(seed)
    words = _Words(rng)

    artists = [words.phrase((2,)) for _ in range(sizes.n_artists)]
    misheard = {a: [_mishear(a, words) for _ in range(sizes.misheard_per_artist)] for a in artists}
    # lyrics reuse a small pool of everyday words, titles and artists do not
    common = [words.word() for _ in range(sizes.lyric_vocab)]
    lyrics: set[str] = set()
    works: list[Work] = []
    for a in artists:
        for _ in range(sizes.songs_per_artist):
            lyric = " ".join(rng.sample(common, rng.choice(LYRIC_LENGTHS)))
            while lyric in lyrics:
                lyric = " ".join(rng.sample(common, rng.choice(LYRIC_LENGTHS)))
            lyrics.add(lyric)
            works.append(Work(words.phrase((1, 2)), a, lyric))
    # some lyrics coincide with another artist's title, the classic ambiguous case
    for i, w in enumerate(works):
        if rng.random() < sizes.ambiguous_lyric_rate:
            other = rng.choice([x for x in works if x.artist != w.artist])
            works[i] = Work(w.title, w.artist, other.title)

    # Zipf popularity within each artist drives catalog sampling
    popularity = [1.0 / (1 + i % sizes.songs_per_artist) for i in range(len(works))]

    n_eval = sizes.train + sizes.val + sizes.test
    kinds = ["lyric"] * 2 + ["misheard", "both"]
    plan = [(rng.choice(kinds), rng.randrange(len(works))) for _ in range(n_eval)]
    pairs = []
    lyric_needed: dict[int, None] = {}
    misheard_needed: dict[str, int] = {}
    for kind, wi in plan:
        w = works[wi]
        mh = rng.choice(misheard[w.artist])
        pairs.append(_pair(kind, w, mh))
        # the catalog must hold the alias edge this pair relies on
        if kind in ("lyric", "both"):
            lyric_needed[wi] = None
        if kind in ("misheard", "both") and mh not in misheard_needed:
            siblings = [i for i, x in enumerate(works) if x.artist == w.artist]
            misheard_needed[mh] = rng.choice(siblings)
    mandatory = [("lyric", wi, None) for wi in lyric_needed]
    mandatory += [("misheard", wi, mh) for mh, wi in misheard_needed.items()]
    if len(mandatory) > sizes.catalog:
        raise ValueError("catalog too small to hold every alias the pairs rely on")
    rng.shuffle(mandatory)

    catalog = []
    for kind, wi, mh in mandatory:
        catalog.append(_catalog_record(kind, works[wi], mh))
    fill_kinds = ["plain", "plain", "artist", "lyric", "misheard"]
    while len(catalog) < sizes.catalog:
        wi = rng.choices(range(len(works)), weights=popularity)[0]
        w = works[wi]
        catalog.append(_catalog_record(rng.choice(fill_kinds), w, rng.choice(misheard[w.artist])))
    rng.shuffle(catalog)

    texts: list[str] = []
    seen: set[str] = set()

    def add(text):
        key = normalize(text)
        if key not in seen and len(texts) < sizes.candidates:
            seen.add(key)
            texts.append(text)

    for w in works:
        add(w.gold)
    # mixes bundle an artist's hits: exactly what raw expansion of the artist pulls in
    hits = max(2, min(4, sizes.songs_per_artist))
    for a_i, a in enumerate(artists):
        top = [w.title for w in works[a_i * sizes.songs_per_artist:][:hits]]
        for _ in range(sizes.mixes_per_artist):
            add(f"play {a} mix {' '.join(rng.sample(top, 2))}")
    decoys = []
    for w in works:
        decoys.append(f"play {w.lyric} by {rng.choice(artists)}")
        decoys.append(f"play {w.lyric} live")
    rng.shuffle(decoys)
    for d in decoys:
        add(d)
    while len(texts) < sizes.candidates:
        add(f"play {words.phrase((2, 3))} by {rng.choice(artists)}")
    rng.shuffle(texts)
    candidates = [Candidate(i, t) for i, t in enumerate(texts)]

    train = pairs[: sizes.train]
    val = pairs[sizes.train: sizes.train + sizes.val]
    test = pairs[sizes.train + sizes.val:]
    aliases = sorted({(normalize(w.lyric), normalize(w.title)) for w in works}
                     | {(normalize(m), normalize(a)) for a, ms in misheard.items() for m in ms})
    return SyntheticCorpus(catalog, train, val, test, candidates, works, misheard, aliases)
