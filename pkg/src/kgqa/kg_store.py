"""Interned triple store with forward and synthesized reverse adjacency.

Relations are numbered in pairs: forward relation ``i`` of the input file gets
id ``2 * i`` and its synthesized reverse (surface name ``<name>_reverse``) gets
``2 * i + 1``, so ``rid ^ 1`` flips direction.
"""
from __future__ import annotations

import io
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence, Union

REVERSE_SUFFIX = "_reverse"

Edge = tuple[int, int, int]


class KBError(Exception):
    """Base class for knowledge-base errors."""


class KBFormatError(KBError):
    def __init__(self, line_no: int, line: str, message: str = "expected head|relation|tail"):
        self.line_no = line_no
        self.line = line
        super().__init__(f"line {line_no}: {message}: {line!r}")


class EmptyKBError(KBError):
    pass


class InvalidIdError(KBError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "invalid id"


class EntityLinkError(KBError):
    """A bracketed span did not match any entity, or brackets are unbalanced."""

    def __init__(self, message: str, span: str | None = None):
        self.span = span
        super().__init__(message)


def reverse_of(rid: int) -> int:
    return rid ^ 1


def is_reverse(rid: int) -> bool:
    return bool(rid & 1)


@dataclass(frozen=True)
class LoadReport:
    entities: int
    forward_relations: int
    triples: int
    raw_lines: int
    duplicate_lines: int

    def as_dict(self) -> dict:
        return {
            "entities": self.entities,
            "forward_relations": self.forward_relations,
            "triples": self.triples,
            "raw_lines": self.raw_lines,
            "duplicate_lines": self.duplicate_lines,
        }


class KnowledgeGraph:
    """Immutable graph over interned entity and relation ids.

    Built by :func:`load_kb` or :meth:`from_triples`; not meant to be mutated
    afterwards.
    """

    def __init__(
        self,
        entity_names: list[str],
        forward_relation_names: list[str],
        triples: Sequence[Edge],
        raw_lines: int | None = None,
    ):
        self._entities = list(entity_names)
        self._entity_index = {name: i for i, name in enumerate(self._entities)}
        if len(self._entity_index) != len(self._entities):
            raise KBError("entity names must be distinct")
        self.relation_vocabulary = list(forward_relation_names)
        self._relations: list[str] = []
        for name in self.relation_vocabulary:
            self._relations.append(name)
            self._relations.append(name + REVERSE_SUFFIX)
        self._relation_index = {name: i for i, name in enumerate(self._relations)}

        buckets: dict[int, dict[int, set[int]]] = {}
        forward = set()
        for h, r, t in triples:
            if r & 1:
                raise KBError("stored triples must use forward relation ids")
            forward.add((h, r, t))
            buckets.setdefault(h, {}).setdefault(r, set()).add(t)
            buckets.setdefault(t, {}).setdefault(r ^ 1, set()).add(h)
        self.triple_count = len(forward)
        self.raw_lines = self.triple_count if raw_lines is None else raw_lines
        self._adj: dict[int, dict[int, tuple[int, ...]]] = {
            v: {r: tuple(sorted(us)) for r, us in sorted(rels.items())}
            for v, rels in sorted(buckets.items())
        }

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Build a graph from surface-form triples (deduplicated, first-seen interning)."""
        entity_index: dict[str, int] = {}
        relation_index: dict[str, int] = {}
        ids = []
        n = 0
        for h, r, t in triples:
            n += 1
            hi = entity_index.setdefault(h, len(entity_index))
            ri = relation_index.setdefault(r, len(relation_index))
            ti = entity_index.setdefault(t, len(entity_index))
            ids.append((hi, 2 * ri, ti))
        return cls(list(entity_index), list(relation_index), ids, raw_lines=n)

    # -- interning ---------------------------------------------------------
    @property
    def num_entities(self) -> int:
        return len(self._entities)

    @property
    def num_relations(self) -> int:
        """Number of relation ids, forward and reverse."""
        return len(self._relations)

    @property
    def relation_names(self) -> list[str]:
        return list(self._relations)

    def entity_name(self, eid: int) -> str:
        self._check_entity(eid)
        return self._entities[eid]

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_index[name]
        except KeyError:
            raise InvalidIdError(f"unknown entity {name!r}") from None

    def has_entity(self, name: str) -> bool:
        return name in self._entity_index

    def relation_name(self, rid: int) -> str:
        self._check_relation(rid)
        return self._relations[rid]

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_index[name]
        except KeyError:
            raise InvalidIdError(f"unknown relation {name!r}") from None

    def has_relation(self, name: str) -> bool:
        return name in self._relation_index

    def _check_entity(self, eid: int) -> None:
        if not 0 <= eid < len(self._entities):
            raise InvalidIdError(f"invalid entity id {eid!r}")

    def _check_relation(self, rid: int) -> None:
        if not 0 <= rid < len(self._relations):
            raise InvalidIdError(f"invalid relation id {rid!r}")

    # -- queries -----------------------------------------------------------
    def neighbors(self, v: int, r: int) -> tuple[int, ...]:
        """Sorted tails of stored edges ``(v, r, .)``."""
        self._check_entity(v)
        self._check_relation(r)
        return self._adj.get(v, {}).get(r, ())

    def relations_from(self, v: int) -> tuple[int, ...]:
        """Relation ids with at least one edge leaving ``v``, ascending."""
        self._check_entity(v)
        return tuple(self._adj.get(v, {}))

    def out_edges(self, v: int) -> dict[int, tuple[int, ...]]:
        self._check_entity(v)
        return self._adj.get(v, {})

    def frontier_edges(self, frontier: Iterable[int]) -> list[Edge]:
        """All outgoing edges of the frontier, ordered by (head, relation, tail)."""
        nodes = sorted(set(frontier))
        if not nodes:
            raise ValueError("frontier must be nonempty")
        out: list[Edge] = []
        for v in nodes:
            self._check_entity(v)
            for r, tails in self._adj.get(v, {}).items():
                out.extend((v, r, u) for u in tails)
        return out

    def forward_triples(self) -> list[Edge]:
        return [
            (v, r, u)
            for v, rels in self._adj.items()
            for r, tails in rels.items()
            if not r & 1
            for u in tails
        ]

    def adjacency_items(self):
        """Yield ``((v, r), tails)`` for every nonempty adjacency entry in id order."""
        for v, rels in self._adj.items():
            for r, tails in rels.items():
                yield (v, r), tails

    def report(self) -> LoadReport:
        return LoadReport(
            entities=self.num_entities,
            forward_relations=len(self.relation_vocabulary),
            triples=self.triple_count,
            raw_lines=self.raw_lines,
            duplicate_lines=self.raw_lines - self.triple_count,
        )

    # -- entity linking ----------------------------------------------------
    def link_entities(self, question: str) -> list[int]:
        return [self.entity_id_or_link_error(span) for span in bracket_spans(question)]

    def entity_id_or_link_error(self, span: str) -> int:
        eid = self._entity_index.get(span)
        if eid is None:
            raise EntityLinkError(f"no entity matches [{span}]", span=span)
        return eid


_BRACKETS = re.compile(r"[\[\]]")


def bracket_spans(question: str) -> list[str]:
    """Return the contents of each ``[...]`` span in order; reject unbalanced brackets."""
    spans = []
    start = None
    for m in _BRACKETS.finditer(question):
        if m.group() == "[":
            if start is not None:
                raise EntityLinkError(f"nested '[' at offset {m.start()} in {question!r}")
            start = m.end()
        else:
            if start is None:
                raise EntityLinkError(f"unmatched ']' at offset {m.start()} in {question!r}")
            spans.append(question[start:m.start()])
            start = None
    if start is not None:
        raise EntityLinkError(f"unclosed '[' in {question!r}")
    return spans


def link_entities(g: KnowledgeGraph, question: str) -> list[int]:
    return g.link_entities(question)


Source = Union[str, os.PathLike, bytes, BinaryIO, io.TextIOBase]


def _iter_lines(source: Source):
    if isinstance(source, (bytes, bytearray)):
        yield from io.BytesIO(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(Path(source), "rb") as fh:
            yield from fh
    else:
        yield from source


def load_kb(source: Source) -> KnowledgeGraph:
    """Parse ``head|relation|tail`` lines into a :class:`KnowledgeGraph`.

    Blank lines are skipped; trailing whitespace is stripped. Lines with a
    field count other than three raise :class:`KBFormatError`.
    """
    triples = []
    for line_no, raw in enumerate(_iter_lines(source), start=1):
        line = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
        line = line.rstrip()
        if not line:
            continue
        fields = line.split("|")
        if len(fields) != 3 or not all(fields):
            raise KBFormatError(line_no, line)
        triples.append((fields[0], fields[1], fields[2]))
    if not triples:
        raise EmptyKBError("knowledge base is empty")
    return KnowledgeGraph.from_triples(triples)
