"""Entity catalog records, reformulation pairs, and text normalization.

Every component downstream decides "does this text contain that entity"
through :func:`contains_entity`, so the normalization rules here are the
single source of truth for matching.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


class CatalogError(ValueError):
    """Raised when too many records of a JSON-lines file fail to parse."""

    def __init__(self, message: str, errors: Sequence[tuple[int, str]] = ()):
        super().__init__(message)
        self.errors = list(errors)


class _PunctToSpace(dict):
    """``str.translate`` table mapping every Unicode punctuation char to a space."""

    def __missing__(self, code):
        ch = chr(code)
        value = " " if unicodedata.category(ch).startswith("P") else ch
        self[code] = value
        return value


_PUNCT_TABLE = _PunctToSpace()


def normalize(text: str) -> str:
    """Lowercase, turn punctuation into spaces and collapse whitespace.

    >>> normalize("Long-Distance LOVE")
    'long distance love'
    """
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def tokenize(text: str) -> list[str]:
    return normalize(text).split()


def contains_tokens(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    """True iff ``needle`` is a contiguous run inside ``haystack``."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and list(haystack[i : i + n]) == list(needle):
            return True
    return False


@dataclass(frozen=True)
class Entity:
    """An entity mention: raw surface, normalized key and type label."""

    surface: str
    etype: str
    norm: str = field(init=False, compare=False)

    def __post_init__(self):
        norm = normalize(self.surface)
        if not norm:
            raise ValueError(f"entity {self.surface!r} normalizes to empty text")
        object.__setattr__(self, "norm", norm)

    @property
    def key(self) -> tuple[str, str]:
        return (self.norm, self.etype)

    @property
    def tokens(self) -> list[str]:
        return self.norm.split()

    def to_dict(self) -> dict:
        return {"text": self.surface, "type": self.etype}


def contains_entity(haystack: str, entity: Entity | str) -> bool:
    """Token-boundary containment of an entity inside free text.

    ``"sheenaeaston live"`` does not contain ``"sheena easton"``: tokens
    are never split.
    """
    norm = entity.norm if isinstance(entity, Entity) else normalize(entity)
    return contains_tokens(tokenize(haystack), norm.split())


def _check_unique(entities: Sequence[Entity], what: str) -> None:
    keys = [e.key for e in entities]
    if len(set(keys)) != len(keys):
        raise ValueError(f"{what} entities must be unique by (norm, type)")


def _dedupe(entities: Iterable[Entity]) -> tuple[Entity, ...]:
    seen: set[tuple[str, str]] = set()
    out = []
    for e in entities:
        if e.key not in seen:
            seen.add(e.key)
            out.append(e)
    return tuple(out)


@dataclass(frozen=True)
class CatalogEntry:
    query: str
    response: str
    entities: tuple[Entity, ...]
    satisfied: bool = True

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        _check_unique(self.entities, "catalog entry")
        for e in self.entities:
            if not (contains_entity(self.query, e) or contains_entity(self.response, e)):
                raise ValueError(f"entity {e.norm!r} occurs in neither query nor response")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "response": self.response,
            "entities": [e.to_dict() for e in self.entities],
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class ReformulationPair:
    query: str
    reformulation: str
    query_entities: tuple[Entity, ...]

    def __post_init__(self):
        object.__setattr__(self, "query_entities", tuple(self.query_entities))
        if not self.query.strip() or not self.reformulation.strip():
            raise ValueError("query and reformulation must be non-empty")
        _check_unique(self.query_entities, "query")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "reformulation": self.reformulation,
            "entities": [e.to_dict() for e in self.query_entities],
        }


@dataclass
class ParseReport:
    """Bookkeeping from one JSON-lines parse."""

    lines: int = 0
    accepted: int = 0
    unsatisfied: int = 0
    dropped_entities: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def error_rate(self) -> float:
        return len(self.errors) / self.lines if self.lines else 0.0


def _parse_entities(raw) -> list[Entity]:
    if not isinstance(raw, list):
        raise ValueError("'entities' must be a list")
    out = []
    for item in raw:
        if not isinstance(item, dict) or not isinstance(item.get("text"), str):
            raise ValueError("entity needs a string 'text'")
        etype = item.get("type", "")
        if not isinstance(etype, str):
            raise ValueError("entity 'type' must be a string")
        out.append(Entity(item["text"], etype))
    return out


def _require_str(obj: dict, key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise ValueError(f"missing string field {key!r}")
    return value


def _iter_records(lines: Iterable[str], report: ParseReport):
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        report.lines += 1
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("record is not a JSON object")
            yield lineno, obj
        except ValueError as exc:
            report.errors.append((lineno, str(exc)))


def _finish(report: ParseReport, max_error_rate: float, what: str) -> None:
    for lineno, msg in report.errors:
        logger.warning("%s line %d: %s", what, lineno, msg)
    if report.error_rate > max_error_rate:
        raise CatalogError(
            f"{len(report.errors)} of {report.lines} {what} lines malformed "
            f"(threshold {max_error_rate:.0%}); first at line {report.errors[0][0]}",
            report.errors,
        )


def read_catalog(
    lines: Iterable[str], *, max_error_rate: float = 0.1
) -> tuple[list[CatalogEntry], ParseReport]:
    """Parse catalog JSON-lines, returning entries plus a :class:`ParseReport`."""
    report = ParseReport()
    entries = []
    for lineno, obj in _iter_records(lines, report):
        try:
            query = _require_str(obj, "query")
            response = _require_str(obj, "response")
            satisfied = obj.get("satisfied", True)
            if not isinstance(satisfied, bool):
                raise ValueError("'satisfied' must be a boolean")
            entities = _dedupe(_parse_entities(obj.get("entities")))
        except ValueError as exc:
            report.errors.append((lineno, str(exc)))
            continue
        if not satisfied:
            report.unsatisfied += 1
            continue
        kept = tuple(
            e for e in entities if contains_entity(query, e) or contains_entity(response, e)
        )
        report.dropped_entities += len(entities) - len(kept)
        entries.append(CatalogEntry(query, response, kept, True))
        report.accepted += 1
    _finish(report, max_error_rate, "catalog")
    if report.dropped_entities:
        logger.warning("dropped %d entities absent from their record", report.dropped_entities)
    return entries, report


def parse_catalog(lines: Iterable[str], *, max_error_rate: float = 0.1) -> list[CatalogEntry]:
    return read_catalog(lines, max_error_rate=max_error_rate)[0]


def read_pairs(
    lines: Iterable[str], *, max_error_rate: float = 0.1
) -> tuple[list[ReformulationPair], ParseReport]:
    report = ParseReport()
    pairs = []
    for lineno, obj in _iter_records(lines, report):
        try:
            pair = ReformulationPair(
                _require_str(obj, "query"),
                _require_str(obj, "reformulation"),
                _dedupe(_parse_entities(obj.get("entities"))),
            )
        except ValueError as exc:
            report.errors.append((lineno, str(exc)))
            continue
        pairs.append(pair)
        report.accepted += 1
    _finish(report, max_error_rate, "pairs")
    return pairs, report


def parse_pairs(lines: Iterable[str], *, max_error_rate: float = 0.1) -> list[ReformulationPair]:
    return read_pairs(lines, max_error_rate=max_error_rate)[0]


def dump_jsonl(records: Iterable, fh) -> None:
    for rec in records:
        obj = rec.to_dict() if hasattr(rec, "to_dict") else rec
        fh.write(json.dumps(obj, sort_keys=True, ensure_ascii=False))
        fh.write("\n")
