"""Turtle and TriG serialization with deterministic output."""

from __future__ import annotations

import re
from collections import defaultdict
from typing import Iterable, Optional

from kgindex.namespaces import RDF, XSD, XSD_STRING
from kgindex.rdf.model import BLANK, DEFAULT_GRAPH, IRI, Dataset, Quad, Term
from kgindex.rdf.nquads import _escape_iri, blank_label, term_to_nt

_SAFE_LOCAL = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_SHORTHAND = {
    XSD.integer: re.compile(r"^[+-]?[0-9]+$"),
    XSD.decimal: re.compile(r"^[+-]?[0-9]*\.[0-9]+$"),
    XSD.double: re.compile(r"^[+-]?(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)[eE][+-]?[0-9]+$"),
    XSD.boolean: re.compile(r"^(?:true|false)$"),
}


def _long_string(value: str) -> str:
    body = value.replace("\\", "\\\\").replace('"', '\\"').replace("\r", "\\r")
    return f'"""{body}"""'


class _Writer:
    def __init__(self, prefixes: Optional[dict[str, str]]):
        # longest namespaces first so the most specific prefix wins
        self.prefixes = sorted((prefixes or {}).items(), key=lambda kv: (-len(kv[1]), kv[0]))

    def iri(self, value: str) -> str:
        if value == RDF.type:
            return "a"
        return self.name(value)

    def name(self, value: str) -> str:
        for prefix, ns in self.prefixes:
            if value.startswith(ns) and _SAFE_LOCAL.match(value[len(ns):]):
                return f"{prefix}:{value[len(ns):]}"
        return f"<{_escape_iri(value)}>"

    def term(self, term: Term) -> str:
        if term.kind == IRI:
            return self.name(term.value)
        if term.kind == BLANK:
            return f"_:{blank_label(term)}"
        if term.language is None and term.datatype in _SHORTHAND and _SHORTHAND[term.datatype].match(term.value):
            return term.value
        if "\n" in term.value:
            text = _long_string(term.value)
        else:
            text = term_to_nt(Term("literal", term.value))
        if term.language:
            return f"{text}@{term.language}"
        if term.datatype and term.datatype != XSD_STRING:
            return f"{text}^^{self.name(term.datatype)}"
        return text

    def block(self, triples: Iterable[tuple], indent: str = "") -> list[str]:
        by_subject: dict[Term, list[tuple[Term, Term]]] = defaultdict(list)
        for s, p, o in triples:
            by_subject[s].append((p, o))
        lines = []
        for s in sorted(by_subject, key=term_to_nt):
            pairs = sorted(by_subject[s], key=lambda po: (term_to_nt(po[0]), term_to_nt(po[1])))
            head = f"{indent}{self.term(s)} "
            parts = [f"{self.iri(p.value)} {self.term(o)}" for p, o in pairs]
            sep = f" ;\n{indent}    "
            lines.append(head + sep.join(parts) + " .")
        return lines

    def header(self) -> list[str]:
        return [f"@prefix {p}: <{_escape_iri(ns)}> ." for p, ns in sorted(self.prefixes)]


def serialize_turtle(triples: Iterable[tuple], prefixes: Optional[dict[str, str]] = None) -> str:
    w = _Writer(prefixes)
    lines = w.header()
    if lines:
        lines.append("")
    lines.extend(w.block(triples))
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_trig(ds: Dataset | Iterable[Quad], prefixes: Optional[dict[str, str]] = None) -> str:
    w = _Writer(prefixes)
    graphs: dict[Term, list[tuple]] = defaultdict(list)
    for q in ds:
        graphs[q.graph].append(q.triple)
    lines = w.header()
    if lines:
        lines.append("")
    if DEFAULT_GRAPH in graphs:
        lines.extend(w.block(graphs.pop(DEFAULT_GRAPH)))
        lines.append("")
    for g in sorted(graphs, key=term_to_nt):
        lines.append(f"GRAPH {w.term(g)} {{")
        lines.extend(w.block(graphs[g], indent="    "))
        lines.append("}")
        lines.append("")
    return "\n".join(lines)
