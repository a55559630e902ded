"""RDF terms, quads and an indexed in-memory quad store."""

from __future__ import annotations

import hashlib
import re
import threading
from typing import Iterable, Iterator, NamedTuple, Optional

from kgindex.namespaces import ARTIFACT, RDF_LANGSTRING, XSD_STRING

IRI = "iri"
BLANK = "blank"
LITERAL = "literal"


class InvalidLiteral(ValueError):
    pass


class UnsalvageableIRI(ValueError):
    """Raised when a string cannot be turned into an absolute IRI."""


class Term(NamedTuple):
    kind: str
    value: str
    datatype: Optional[str] = None
    language: Optional[str] = None

    @classmethod
    def iri(cls, value: str) -> "Term":
        return cls(IRI, value)

    @classmethod
    def blank(cls, label: str) -> "Term":
        if not label:
            raise ValueError("blank node label must be non-empty")
        return cls(BLANK, label)

    @property
    def is_iri(self) -> bool:
        return self.kind == IRI

    @property
    def is_blank(self) -> bool:
        return self.kind == BLANK

    @property
    def is_literal(self) -> bool:
        return self.kind == LITERAL

    def n3(self) -> str:
        """N-Triples style rendering, used for debugging and sort keys."""
        from kgindex.rdf.nquads import term_to_nt

        return term_to_nt(self)

    def __repr__(self) -> str:
        return f"Term({self.n3()})"


def make_literal(lexical: str, datatype: Optional[str] = None, language: Optional[str] = None) -> Term:
    """Build a literal term.

    The lexical form is kept verbatim, numeric and dateTime values are not
    canonicalized. Language-tagged literals get the rdf:langString datatype.
    """
    if datatype is not None and language is not None:
        raise InvalidLiteral(f"literal {lexical!r} cannot carry both a datatype and a language tag")
    if language is not None:
        if not language:
            raise InvalidLiteral("empty language tag")
        return Term(LITERAL, lexical, RDF_LANGSTRING, language)
    return Term(LITERAL, lexical, datatype or XSD_STRING, None)


# Graph name of the default graph. An IRI so that a Quad's graph is always an IRI term.
DEFAULT_GRAPH = Term.iri("urn:x-kgindex:default-graph")


class Quad(NamedTuple):
    subject: Term
    predicate: Term
    object: Term
    graph: Term = DEFAULT_GRAPH

    @property
    def triple(self) -> tuple[Term, Term, Term]:
        return (self.subject, self.predicate, self.object)

    s = property(lambda self: self.subject)
    p = property(lambda self: self.predicate)
    o = property(lambda self: self.object)
    g = property(lambda self: self.graph)


Triple = tuple  # (subject, predicate, object) of Terms


# --- IRI hygiene --------------------------------------------------------

# Characters excluded by the IRIREF production of Turtle/SPARQL, plus controls.
_FORBIDDEN = set('<>"{}|^`\\ ') | {chr(c) for c in range(0x00, 0x21)} | {chr(0x7F)}
_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")


def _percent_encode(ch: str) -> str:
    return "".join(f"%{b:02X}" for b in ch.encode("utf-8"))


def sanitize_iri(raw: str) -> Term:
    """Percent-encode characters forbidden in IRIs and check the result is absolute."""
    if not raw:
        raise UnsalvageableIRI("empty IRI")
    if any(ch in _FORBIDDEN for ch in raw):
        cleaned = "".join(_percent_encode(ch) if ch in _FORBIDDEN else ch for ch in raw)
    else:
        cleaned = raw
    if not _SCHEME.match(cleaned):
        raise UnsalvageableIRI(f"no scheme in {raw!r}")
    return Term(IRI, cleaned)


def is_absolute_iri(value: str) -> bool:
    return bool(_SCHEME.match(value)) and not any(ch in _FORBIDDEN for ch in value)


# --- skolemization ------------------------------------------------------

SKOLEM_PREFIX = ARTIFACT + ".well-known/genid/"


def digest(*parts: str, length: int = 16) -> str:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8"))
    return h.hexdigest()[:length]


def skolemize(label: str, scope: str) -> Term:
    return Term(IRI, SKOLEM_PREFIX + digest(label, scope))


def is_skolem(term: Term) -> bool:
    return term.kind == IRI and term.value.startswith(SKOLEM_PREFIX)


# --- dataset ------------------------------------------------------------


class Dataset:
    """A set of quads indexed by every position.

    Writes are serialized by an internal lock; callers that mutate from
    several threads get the single-writer contract for free. Reads take the
    same lock briefly and always return fresh containers.
    """

    def __init__(self, quads: Iterable[Quad] = ()):
        self._quads: set[Quad] = set()
        self._index: tuple[dict, dict, dict, dict] = ({}, {}, {}, {})
        self._lock = threading.RLock()
        for q in quads:
            self.add(q)

    def add(self, quad: Quad) -> bool:
        """Insert ``quad``; return True when it was not already present."""
        with self._lock:
            if quad in self._quads:
                return False
            self._quads.add(quad)
            for pos, idx in enumerate(self._index):
                idx.setdefault(quad[pos], set()).add(quad)
            return True

    def add_all(self, quads: Iterable[Quad]) -> set[Quad]:
        added = set()
        with self._lock:
            for q in quads:
                if self.add(q):
                    added.add(q)
        return added

    def discard(self, quad: Quad) -> None:
        with self._lock:
            if quad not in self._quads:
                return
            self._quads.remove(quad)
            for pos, idx in enumerate(self._index):
                bucket = idx[quad[pos]]
                bucket.discard(quad)
                if not bucket:
                    del idx[quad[pos]]

    def match(self, s=None, p=None, o=None, g=None) -> set[Quad]:
        """Quads matching the pattern; ``None`` is a wildcard in any position."""
        pattern = (s, p, o, g)
        with self._lock:
            candidates = None
            for pos, term in enumerate(pattern):
                if term is None:
                    continue
                bucket = self._index[pos].get(term)
                if not bucket:
                    return set()
                if candidates is None or len(bucket) < len(candidates):
                    candidates = bucket
            if candidates is None:
                return set(self._quads)
            return {q for q in candidates if all(t is None or q[i] == t for i, t in enumerate(pattern))}

    def triples(self, s=None, p=None, o=None, g=None) -> Iterator[tuple[Term, Term, Term]]:
        for q in self.match(s, p, o, g):
            yield q.triple

    def graph(self, name: Term) -> set[tuple[Term, Term, Term]]:
        return {q.triple for q in self.match(g=name)}

    def graph_names(self) -> set[Term]:
        with self._lock:
            return set(self._index[3])

    @property
    def default_graph(self) -> set[tuple[Term, Term, Term]]:
        return self.graph(DEFAULT_GRAPH)

    @property
    def named_graphs(self) -> dict[Term, set[tuple[Term, Term, Term]]]:
        return {g: self.graph(g) for g in self.graph_names() if g != DEFAULT_GRAPH}

    def copy(self) -> "Dataset":
        return Dataset(self.quads())

    def quads(self) -> set[Quad]:
        with self._lock:
            return set(self._quads)

    def __contains__(self, quad) -> bool:
        return quad in self._quads

    def __iter__(self) -> Iterator[Quad]:
        return iter(self.quads())

    def __len__(self) -> int:
        return len(self._quads)

    def __eq__(self, other) -> bool:
        if isinstance(other, Dataset):
            return self.quads() == other.quads()
        return NotImplemented

    def __repr__(self) -> str:
        return f"<Dataset {len(self)} quads, {len(self.graph_names())} graphs>"


def dataset_match(ds: Dataset, pattern: tuple) -> set[Quad]:
    """Module-level form of :meth:`Dataset.match` taking a 3- or 4-tuple pattern."""
    if len(pattern) == 3:
        pattern = (*pattern, None)
    return ds.match(*pattern)


def graph_to_dataset(triples: Iterable, graph: Term = DEFAULT_GRAPH) -> Dataset:
    return Dataset(Quad(s, p, o, graph) for s, p, o in triples)
