"""Turtle and TriG parsing.

Both syntaxes share one recursive-descent parser; TriG mode additionally
accepts graph blocks. Errors never escape as exceptions: the parse result
carries positioned diagnostics and no document.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional

from kgindex.namespaces import RDF, XSD
from kgindex.rdf.model import (
    BLANK,
    DEFAULT_GRAPH,
    IRI,
    Dataset,
    InvalidLiteral,
    Quad,
    Term,
    make_literal,
)


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" | "warning"
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass
class ParseResult:
    value: object  # set of triples, Dataset, or None on error
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)
    prefixes: dict[str, str] = field(default_factory=dict)
    base: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


class RDFSyntaxError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


# --- character classes --------------------------------------------------

_BASE = (
    "A-Za-z\u00C0-\u00D6\u00D8-\u00F6\u00F8-\u02FF\u0370-\u037D\u037F-\u1FFF\u200C-\u200D"
    "\u2070-\u218F\u2C00-\u2FEF\u3001-\uD7FF\uF900-\uFDCF\uFDF0-\uFFFD\U00010000-\U000EFFFF"
)
_U = _BASE + "_"
_CHARS = _U + "\\-0-9\u00B7\u0300-\u036F\u203F-\u2040"
_PLX = r"%[0-9A-Fa-f]{2}|\\[_~.\-!$&'()*+,;=/?#@%]"

_PNAME = re.compile(
    rf"((?:[{_BASE}](?:[{_CHARS}.]*[{_CHARS}])?)?):"
    rf"((?:[{_U}:0-9]|{_PLX})(?:(?:[{_CHARS}.:]|{_PLX})*(?:[{_CHARS}:]|{_PLX}))?)?"
)
_BNODE = re.compile(rf"_:((?:[{_U}0-9])(?:[{_CHARS}.]*[{_CHARS}])?)")
_LANGTAG = re.compile(r"@([a-zA-Z]+(?:-[a-zA-Z0-9]+)*)")
_NUMBER = re.compile(
    r"[+-]?(?:(?P<dbl>(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)[eE][+-]?[0-9]+)|(?P<dec>[0-9]*\.[0-9]+)|(?P<int>[0-9]+))"
)
_IRIREF = re.compile(r'<((?:[^\x00-\x20<>"{}|^`\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*)>')
_UCHAR = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")
_WS = re.compile(r"(?:[ \t\r\n]+|#[^\r\n]*)*")
_KEYWORD = re.compile(rf"(?i:@prefix|@base|prefix|base|graph)(?![{_CHARS}:.])")
_LOCAL_ESC = re.compile(r"\\([_~.\-!$&'()*+,;=/?#@%])")

_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}

_fresh = itertools.count()


def fresh_blank() -> Term:
    return Term(BLANK, f"b{next(_fresh)}")


# --- IRI resolution (RFC 3986 section 5.2) -------------------------------

_URI_PARTS = re.compile(r"^(?:([^:/?#]+):)?(?://([^/?#]*))?([^?#]*)(?:\?([^#]*))?(?:#(.*))?$", re.S)


def _remove_dots(path: str) -> str:
    out: list[str] = []
    while path:
        if path.startswith("../"):
            path = path[3:]
        elif path.startswith("./"):
            path = path[2:]
        elif path.startswith("/./"):
            path = path[2:]
        elif path == "/.":
            path = "/"
        elif path.startswith("/../"):
            path = path[3:]
            if out:
                out.pop()
        elif path == "/..":
            path = "/"
            if out:
                out.pop()
        elif path in (".", ".."):
            path = ""
        else:
            start = 1 if path.startswith("/") else 0
            idx = path.find("/", start)
            if idx < 0:
                idx = len(path)
            out.append(path[:idx])
            path = path[idx:]
    return "".join(out)


def resolve_iri(base: Optional[str], ref: str) -> str:
    r_scheme, r_auth, r_path, r_query, r_frag = _URI_PARTS.match(ref).groups()
    if r_scheme is not None:
        return _recompose(r_scheme, r_auth, _remove_dots(r_path), r_query, r_frag)
    if not base:
        return ref
    b_scheme, b_auth, b_path, b_query, _ = _URI_PARTS.match(base).groups()
    if r_auth is not None:
        auth, path, query = r_auth, _remove_dots(r_path), r_query
    else:
        auth = b_auth
        if r_path == "":
            path = b_path
            query = r_query if r_query is not None else b_query
        else:
            if r_path.startswith("/"):
                path = _remove_dots(r_path)
            else:
                if b_auth is not None and b_path == "":
                    merged = "/" + r_path
                else:
                    merged = b_path[: b_path.rfind("/") + 1] + r_path
                path = _remove_dots(merged)
            query = r_query
    return _recompose(b_scheme, auth, path, query, r_frag)


def _recompose(scheme, auth, path, query, frag) -> str:
    out = ""
    if scheme is not None:
        out += scheme + ":"
    if auth is not None:
        out += "//" + auth
    out += path
    if query is not None:
        out += "?" + query
    if frag is not None:
        out += "#" + frag
    return out


# --- parser -------------------------------------------------------------


class _Error(Exception):
    def __init__(self, pos: int, message: str):
        self.pos = pos
        self.message = message


class _Parser:
    def __init__(self, text: str, base: Optional[str], trig: bool, prefixes: Optional[dict] = None):
        self.text = text
        self.pos = 0
        self.base = base
        self.trig = trig
        self.prefixes: dict[str, str] = dict(prefixes or {})
        self.declared: dict[str, str] = {}
        self.bnodes: dict[str, Term] = {}
        self.quads: list[Quad] = []
        self.graph = DEFAULT_GRAPH

    # low-level helpers

    def ws(self) -> None:
        self.pos = _WS.match(self.text, self.pos).end()

    def peek(self, n: int = 1) -> str:
        return self.text[self.pos : self.pos + n]

    def expect(self, ch: str) -> None:
        self.ws()
        if not self.text.startswith(ch, self.pos):
            found = self.text[self.pos : self.pos + 10] or "end of input"
            raise _Error(self.pos, f"expected {ch!r}, found {found!r}")
        self.pos += len(ch)

    def at_eof(self) -> bool:
        self.ws()
        return self.pos >= len(self.text)

    def emit(self, s: Term, p: Term, o: Term) -> None:
        self.quads.append(Quad(s, p, o, self.graph))

    # document structure

    def document(self) -> None:
        while not self.at_eof():
            self.statement()

    def statement(self) -> None:
        m = _KEYWORD.match(self.text, self.pos)
        word = m.group(0).lower() if m else None
        if word in ("@prefix", "prefix"):
            self.pos = m.end()
            self.prefix_decl(sparql_style=word == "prefix")
            return
        if word in ("@base", "base"):
            self.pos = m.end()
            self.base_decl(sparql_style=word == "base")
            return
        if word == "graph":
            if not self.trig:
                raise _Error(self.pos, "GRAPH blocks are only allowed in TriG")
            self.pos = m.end()
            self.ws()
            name = self.graph_label()
            self.wrapped_graph(name)
            return
        ch = self.peek()
        if ch == "{":
            if not self.trig:
                raise _Error(self.pos, "graph blocks are only allowed in TriG")
            self.wrapped_graph(DEFAULT_GRAPH)
            return
        self.triples_or_graph()

    def prefix_decl(self, sparql_style: bool) -> None:
        self.ws()
        m = _PNAME.match(self.text, self.pos)
        if not m or m.group(2):
            raise _Error(self.pos, "expected prefix name")
        self.pos = m.end()
        self.ws()
        iri = self.iriref()
        iri = self.resolve(iri)
        self.prefixes[m.group(1)] = iri
        self.declared[m.group(1)] = iri
        if not sparql_style:
            self.expect(".")

    def base_decl(self, sparql_style: bool) -> None:
        self.ws()
        self.base = self.iriref()
        if not sparql_style:
            self.expect(".")

    def triples_or_graph(self) -> None:
        start = self.pos
        ch = self.peek()
        if ch == "[":
            subject = self.blank_property_list_or_anon()
            self.ws()
            if self.trig and self.peek() == "{":
                raise _Error(start, "graph names must be IRIs")
            if self.peek() != ".":
                self.predicate_object_list(subject)
            self.expect(".")
            return
        if ch == "(":
            subject = self.collection()
            self.predicate_object_list(subject)
            self.expect(".")
            return
        subject = self.subject_term()
        self.ws()
        if self.trig and self.peek() == "{":
            if subject.kind != IRI:
                raise _Error(start, "graph names must be IRIs")
            self.wrapped_graph(subject)
            return
        self.predicate_object_list(subject)
        self.expect(".")

    def graph_label(self) -> Term:
        start = self.pos
        term = self.subject_term()
        if term.kind != IRI:
            raise _Error(start, "graph names must be IRIs")
        return term

    def wrapped_graph(self, name: Term) -> None:
        self.expect("{")
        outer = self.graph
        self.graph = name
        try:
            while True:
                self.ws()
                if self.peek() == "}":
                    self.pos += 1
                    return
                self.triples_in_block()
                self.ws()
                if self.peek() == ".":
                    self.pos += 1
                    continue
                self.expect("}")
                return
        finally:
            self.graph = outer

    def triples_in_block(self) -> None:
        ch = self.peek()
        if ch == "[":
            subject = self.blank_property_list_or_anon()
            self.ws()
            if self.peek() not in (".", "}"):
                self.predicate_object_list(subject)
            return
        if ch == "(":
            subject = self.collection()
        else:
            subject = self.subject_term()
        self.predicate_object_list(subject)

    # terms

    def subject_term(self) -> Term:
        self.ws()
        ch = self.peek()
        if ch == "<":
            return Term(IRI, self.resolve(self.iriref()))
        if self.text.startswith("_:", self.pos):
            return self.blank_label()
        m = _PNAME.match(self.text, self.pos)
        if m:
            return self.pname(m)
        found = self.text[self.pos : self.pos + 10] or "end of input"
        raise _Error(self.pos, f"expected subject, found {found!r}")

    def predicate_object_list(self, subject: Term) -> None:
        while True:
            self.ws()
            predicate = self.verb()
            self.object_list(subject, predicate)
            self.ws()
            if self.peek() != ";":
                return
            while self.peek() == ";":
                self.pos += 1
                self.ws()
            if self.peek() in (".", "]", "}", ""):
                return

    def verb(self) -> Term:
        start = self.pos
        if self.text.startswith("a", self.pos) and self._word_end(self.pos + 1):
            self.pos += 1
            return Term(IRI, RDF.type)
        term = self.subject_term()
        if term.kind != IRI:
            raise _Error(start, "predicate must be an IRI")
        return term

    def _word_end(self, pos: int) -> bool:
        return pos >= len(self.text) or not re.match(rf"[{_CHARS}.:]", self.text[pos])

    def object_list(self, subject: Term, predicate: Term) -> None:
        while True:
            obj = self.object_term()
            self.emit(subject, predicate, obj)
            self.ws()
            if self.peek() != ",":
                return
            self.pos += 1

    def object_term(self) -> Term:
        self.ws()
        ch = self.peek()
        if ch == "[":
            return self.blank_property_list_or_anon()
        if ch == "(":
            return self.collection()
        if ch in ('"', "'"):
            return self.rdf_literal()
        if ch and (ch.isdigit() or ch in "+-."):
            m = _NUMBER.match(self.text, self.pos)
            if m:
                self.pos = m.end()
                if m.group("dbl"):
                    return make_literal(m.group(0), XSD.double)
                if m.group("dec"):
                    return make_literal(m.group(0), XSD.decimal)
                return make_literal(m.group(0), XSD.integer)
        for word in ("true", "false"):
            if self.text.startswith(word, self.pos) and self._word_end(self.pos + len(word)):
                self.pos += len(word)
                return make_literal(word, XSD.boolean)
        return self.subject_term()

    def blank_label(self) -> Term:
        m = _BNODE.match(self.text, self.pos)
        if not m:
            raise _Error(self.pos, "malformed blank node label")
        self.pos = m.end()
        label = m.group(1)
        if label not in self.bnodes:
            self.bnodes[label] = fresh_blank()
        return self.bnodes[label]

    def blank_property_list_or_anon(self) -> Term:
        self.expect("[")
        node = fresh_blank()
        self.ws()
        if self.peek() == "]":
            self.pos += 1
            return node
        self.predicate_object_list(node)
        self.expect("]")
        return node

    def collection(self) -> Term:
        self.expect("(")
        items = []
        while True:
            self.ws()
            if self.peek() == ")":
                self.pos += 1
                break
            if self.pos >= len(self.text):
                raise _Error(self.pos, "unterminated collection")
            items.append(self.object_term())
        if not items:
            return Term(IRI, RDF.nil)
        head = fresh_blank()
        node = head
        for i, item in enumerate(items):
            self.emit(node, Term(IRI, RDF.first), item)
            nxt = fresh_blank() if i + 1 < len(items) else Term(IRI, RDF.nil)
            self.emit(node, Term(IRI, RDF.rest), nxt)
            node = nxt
        return head

    def rdf_literal(self) -> Term:
        start = self.pos
        lexical = self.string()
        if self.peek() == "@":
            m = _LANGTAG.match(self.text, self.pos)
            if not m:
                raise _Error(self.pos, "malformed language tag")
            self.pos = m.end()
            return make_literal(lexical, language=m.group(1))
        if self.text.startswith("^^", self.pos):
            self.pos += 2
            dt = self.subject_term()
            if dt.kind != IRI:
                raise _Error(start, "datatype must be an IRI")
            try:
                return make_literal(lexical, dt.value)
            except InvalidLiteral as exc:  # pragma: no cover - guarded above
                raise _Error(start, str(exc))
        return make_literal(lexical)

    def string(self) -> str:
        q = self.peek()
        long_q = q * 3
        if self.text.startswith(long_q, self.pos):
            self.pos += 3
            end_marker = long_q
            is_long = True
        else:
            self.pos += 1
            end_marker = q
            is_long = False
        out = []
        text = self.text
        n = len(text)
        while True:
            if self.pos >= n:
                raise _Error(self.pos, "unterminated string literal")
            ch = text[self.pos]
            if ch == "\\":
                out.append(self.escape())
                continue
            if text.startswith(end_marker, self.pos):
                if is_long:
                    # a closing run may be longer than three quotes: the extra quotes belong to content
                    run = self.pos
                    while run < n and text[run] == q:
                        run += 1
                    extra = run - self.pos - 3
                    if extra > 2:
                        raise _Error(self.pos, "too many quotes in long string")
                    out.append(q * extra)
                    self.pos = run
                    return "".join(out)
                self.pos += 1
                return "".join(out)
            if not is_long and ch in "\r\n":
                raise _Error(self.pos, "newline in short string literal")
            out.append(ch)
            self.pos += 1

    def escape(self) -> str:
        m = _UCHAR.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            code = int(m.group(1) or m.group(2), 16)
            if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
                raise _Error(m.start(), "invalid code point escape")
            return chr(code)
        nxt = self.text[self.pos + 1 : self.pos + 2]
        if nxt in _ECHAR:
            self.pos += 2
            return _ECHAR[nxt]
        raise _Error(self.pos, "invalid escape sequence")

    def iriref(self) -> str:
        m = _IRIREF.match(self.text, self.pos)
        if not m:
            raise _Error(self.pos, "malformed IRI reference")
        self.pos = m.end()
        raw = m.group(1)
        if "\\" in raw:
            def sub(mm):
                code = int(mm.group(1) or mm.group(2), 16)
                if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
                    raise _Error(m.start(), "invalid code point escape")
                return chr(code)

            raw = _UCHAR.sub(sub, raw)
            if re.search(r'[\x00-\x20<>"{}|^`\\]', raw):
                raise _Error(m.start(), "escaped character not allowed in IRI")
        return raw

    def resolve(self, iri: str) -> str:
        return resolve_iri(self.base, iri)

    def pname(self, m: re.Match) -> Term:
        prefix, local = m.group(1), m.group(2) or ""
        if prefix not in self.prefixes:
            raise _Error(self.pos, f"undeclared prefix {prefix!r}")
        self.pos = m.end()
        local = _LOCAL_ESC.sub(lambda mm: mm.group(1), local)
        return Term(IRI, self.prefixes[prefix] + local)


def _position(text: str, pos: int) -> tuple[int, int]:
    pos = max(0, min(pos, len(text)))
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _run(text: str, base: Optional[str], trig: bool, prefixes: Optional[dict]) -> tuple[Optional[_Parser], list[ParseDiagnostic]]:
    parser = _Parser(text, base, trig, prefixes)
    try:
        parser.document()
    except _Error as exc:
        line, col = _position(text, exc.pos)
        return None, [ParseDiagnostic("error", line, col, exc.message)]
    except RecursionError:
        line, col = _position(text, parser.pos)
        return None, [ParseDiagnostic("error", line, col, "nesting too deep")]
    except Exception as exc:  # last-resort guard: malformed input must yield a diagnostic
        line, col = _position(text, parser.pos)
        return None, [ParseDiagnostic("error", line, col, f"unparseable input ({type(exc).__name__})")]
    return parser, []


def parse_turtle(text: str, base: Optional[str] = None, prefixes: Optional[dict] = None) -> ParseResult:
    """Parse a Turtle document into a set of (s, p, o) triples.

    ``prefixes`` pre-declares namespace prefixes, letting manifest fragments
    that omit their ``@prefix`` lines still parse.
    """
    parser, diags = _run(text, base, False, prefixes)
    if parser is None:
        return ParseResult(None, diags)
    return ParseResult({q.triple for q in parser.quads}, diags, parser.prefixes, parser.base)


def parse_trig(text: str, base: Optional[str] = None, prefixes: Optional[dict] = None) -> ParseResult:
    parser, diags = _run(text, base, True, prefixes)
    if parser is None:
        return ParseResult(None, diags)
    return ParseResult(Dataset(parser.quads), diags, parser.prefixes, parser.base)


def load_turtle(text: str, base: Optional[str] = None, prefixes: Optional[dict] = None) -> set:
    result = parse_turtle(text, base, prefixes)
    if not result.ok:
        raise RDFSyntaxError(result.diagnostics)
    return result.value


def load_trig(text: str, base: Optional[str] = None, prefixes: Optional[dict] = None) -> Dataset:
    result = parse_trig(text, base, prefixes)
    if not result.ok:
        raise RDFSyntaxError(result.diagnostics)
    return result.value
