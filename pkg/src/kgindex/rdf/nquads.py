"""N-Quads reading and writing (also used for N-Triples style term rendering)."""

from __future__ import annotations

import re
from typing import Iterable, Optional

from kgindex.namespaces import RDF_LANGSTRING, XSD_STRING
from kgindex.rdf.model import BLANK, DEFAULT_GRAPH, IRI, LITERAL, Dataset, Quad, Term, make_literal
from kgindex.rdf.turtle import ParseDiagnostic, ParseResult, fresh_blank

_LABEL_OK = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?$")


def _escape_string(value: str) -> str:
    out = []
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _escape_iri(value: str) -> str:
    out = []
    for ch in value:
        if ord(ch) <= 0x20 or ch in '<>"{}|^`\\':
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def blank_label(term: Term) -> str:
    label = term.value
    if _LABEL_OK.match(label):
        return label
    return "x" + label.encode("utf-8").hex()


def term_to_nt(term: Term) -> str:
    if term.kind == IRI:
        return f"<{_escape_iri(term.value)}>"
    if term.kind == BLANK:
        return f"_:{blank_label(term)}"
    text = f'"{_escape_string(term.value)}"'
    if term.language:
        return f"{text}@{term.language}"
    if term.datatype and term.datatype != XSD_STRING:
        return f"{text}^^<{_escape_iri(term.datatype)}>"
    return text


def quad_sort_key(q: Quad) -> tuple:
    graph = "" if q.graph == DEFAULT_GRAPH else term_to_nt(q.graph)
    return (graph, term_to_nt(q.subject), term_to_nt(q.predicate), term_to_nt(q.object))


def serialize_nquads(quads: Iterable[Quad] | Dataset) -> str:
    """One line per quad in a deterministic order: graph, subject, predicate, object."""
    lines = []
    for key in sorted(quad_sort_key(q) for q in quads):
        graph, s, p, o = key
        lines.append(f"{s} {p} {o} {graph} .\n" if graph else f"{s} {p} {o} .\n")
    return "".join(lines)


# --- parsing ------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<iri><(?:[^\x00-\x20<>"{}|^`\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>)
      | (?P<bnode>_:[A-Za-z0-9_À-\U000EFFFF](?:[A-Za-z0-9_.\-·À-\U000EFFFF]*[A-Za-z0-9_\-·À-\U000EFFFF])?)
      | (?P<lit>"(?:[^"\\\n\r]|\\[tbnrf"'\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*")
        (?:@(?P<lang>[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)|\^\^(?P<dt><(?:[^\x00-\x20<>"{}|^`\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>))?
      | (?P<dot>\.)
      | (?P<comment>\#.*)
    )""",
    re.X,
)
_UNESCAPE = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})|\\([tbnrf\"'\\])")
_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _LineError(Exception):
    def __init__(self, column: int, message: str):
        self.column = column
        self.message = message


def _unescape(text: str, column: int) -> str:
    def sub(m):
        if m.group(3):
            return _ECHAR[m.group(3)]
        code = int(m.group(1) or m.group(2), 16)
        if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
            raise _LineError(column, "invalid code point escape")
        return chr(code)

    return _UNESCAPE.sub(sub, text)


def _parse_line(line: str, bnodes: dict) -> Optional[Quad]:
    pos = 0
    terms: list[Term] = []
    done = False
    while pos < len(line):
        if not line[pos:].strip():
            break
        m = _TOKEN.match(line, pos)
        if not m or m.end() == pos:
            raise _LineError(pos + 1, f"unexpected text {line[pos:pos + 10]!r}")
        col = m.start() + 1
        pos = m.end()
        if m.group("comment"):
            break
        if done:
            raise _LineError(col, "content after terminating '.'")
        if m.group("dot"):
            done = True
            continue
        if m.group("iri"):
            value = _unescape(m.group("iri")[1:-1], col)
            if re.search(r'[\x00-\x20<>"{}|^`\\]', value):
                raise _LineError(col, "escaped character not allowed in IRI")
            terms.append(Term(IRI, value))
        elif m.group("bnode"):
            label = m.group("bnode")[2:]
            if label not in bnodes:
                bnodes[label] = fresh_blank()
            terms.append(bnodes[label])
        else:
            raw = m.group("lit")[1:-1]
            lexical = _unescape(raw, col)
            if m.group("lang"):
                terms.append(make_literal(lexical, language=m.group("lang")))
            elif m.group("dt"):
                dt = _unescape(m.group("dt")[1:-1], col)
                if dt == RDF_LANGSTRING:
                    raise _LineError(col, "rdf:langString literal without language tag")
                terms.append(make_literal(lexical, dt))
            else:
                terms.append(make_literal(lexical))
    if not terms and not done:
        return None
    if not done:
        raise _LineError(len(line) + 1, "missing terminating '.'")
    if len(terms) not in (3, 4):
        raise _LineError(1, f"expected 3 or 4 terms, found {len(terms)}")
    s, p, o = terms[:3]
    g = terms[3] if len(terms) == 4 else DEFAULT_GRAPH
    if s.kind == LITERAL:
        raise _LineError(1, "subject cannot be a literal")
    if p.kind != IRI:
        raise _LineError(1, "predicate must be an IRI")
    if g.kind != IRI:
        raise _LineError(1, "graph name must be an IRI")
    return Quad(s, p, o, g)


def parse_nquads(text: str) -> ParseResult:
    quads = []
    bnodes: dict[str, Term] = {}
    for lineno, line in enumerate(re.split(r"\r\n|\n|\r", text), 1):
        try:
            q = _parse_line(line, bnodes)
        except _LineError as exc:
            return ParseResult(None, [ParseDiagnostic("error", lineno, exc.column, exc.message)])
        except Exception as exc:  # last-resort guard for fuzzed input
            return ParseResult(None, [ParseDiagnostic("error", lineno, 1, f"unparseable line ({type(exc).__name__})")])
        if q is not None:
            quads.append(q)
    return ParseResult(Dataset(quads))


def load_nquads(text: str) -> Dataset:
    from kgindex.rdf.turtle import RDFSyntaxError

    result = parse_nquads(text)
    if not result.ok:
        raise RDFSyntaxError(result.diagnostics)
    return result.value
