"""Recursive-descent parser for the SPARQL subset.

Two dialects share the grammar. The local dialect is what the engine
evaluates itself and rejects EXISTS, MINUS and property paths with an
``unsupported construct`` diagnostic. The extended dialect accepts EXISTS
and MINUS; it backs the simulated endpoints and the best-effort parse of
SERVICE bodies (which are forwarded verbatim either way).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from kgindex.namespaces import RDF, XSD
from kgindex.rdf.model import BLANK, IRI, InvalidLiteral, Term, make_literal
from kgindex.rdf.turtle import ParseDiagnostic, resolve_iri
from kgindex.sparql import ast
from kgindex.sparql.lexer import Token, prefixes_in, tokenize, variables_in

AGGREGATES = {"COUNT", "SUM", "AVG", "MIN", "MAX", "SAMPLE", "GROUP_CONCAT"}
BUILTINS = {
    "STR", "LANG", "LANGMATCHES", "DATATYPE", "BOUND", "IRI", "URI", "BNODE", "RAND", "ABS",
    "CEIL", "FLOOR", "ROUND", "CONCAT", "STRLEN", "UCASE", "LCASE", "ENCODE_FOR_URI",
    "CONTAINS", "STRSTARTS", "STRENDS", "STRBEFORE", "STRAFTER", "YEAR", "MONTH", "DAY",
    "HOURS", "MINUTES", "SECONDS", "TIMEZONE", "TZ", "NOW", "UUID", "STRUUID", "MD5", "SHA1",
    "SHA256", "SHA384", "SHA512", "COALESCE", "IF", "STRLANG", "STRDT", "SAMETERM", "ISIRI",
    "ISURI", "ISBLANK", "ISLITERAL", "ISNUMERIC", "REGEX", "SUBSTR", "REPLACE",
}
_UNSUPPORTED_FORMS = {
    "CONSTRUCT", "DESCRIBE", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE", "ADD", "MOVE",
    "COPY", "WITH",
}
_PATH_OPS = {"/", "|", "*", "+", "?", "^"}
_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_STRING_ESC = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})|\\(.)", re.S)
_LOCAL_ESC = re.compile(r"\\([_~.\-!$&'()*+,;=/?#@%])")


class SparqlSyntaxError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class UnsupportedConstruct(SparqlSyntaxError):
    pass


@dataclass
class QueryParse:
    query: Optional[ast.Query]
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.query is not None and not any(d.severity == "error" for d in self.diagnostics)


class _Fail(Exception):
    def __init__(self, message: str, token: Token, construct: Optional[str] = None):
        self.message = message
        self.token = token
        self.construct = construct


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


class _Parser:
    def __init__(self, text: str, tokens: list[Token], prefixes: dict, base: Optional[str], extended: bool):
        self.text = text
        self.toks = tokens
        self.i = 0
        self.prefixes = dict(prefixes)
        self.base = base
        self.extended = extended
        self.warnings: list[tuple[str, Token]] = []
        self.template = False  # blank nodes become terms instead of hidden variables
        self.bnode_count = 0

    # --- token helpers ---
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def at_word(self, *words: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok.kind == "WORD" and tok.value.upper() in words

    def at_punct(self, *values: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok.kind == "PUNCT" and tok.value in values

    def expect_punct(self, value: str) -> Token:
        if not self.at_punct(value):
            self.fail(f"expected '{value}'")
        return self.next()

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            self.fail(f"expected {word}")
        return self.next()

    def fail(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(tok.value)
        raise _Fail(f"{message}, found {found}", tok)

    def unsupported(self, construct: str, tok: Optional[Token] = None):
        raise _Fail(f"unsupported construct '{construct}'", tok or self.peek(), construct)

    # --- top level ---
    def parse(self) -> ast.Query:
        self.prologue()
        tok = self.peek()
        word = tok.value.upper() if tok.kind == "WORD" else ""
        if word == "SELECT":
            q = self.select_query()
            q.values = self.values_clause()
        elif word == "ASK":
            self.next()
            q = ast.Query("ask")
            self.dataset_clause()
            q.where = self.where_clause()
            self.solution_modifiers(q)
            q.values = self.values_clause()
        elif word == "INSERT":
            q = self.insert()
        elif word in _UNSUPPORTED_FORMS:
            self.unsupported(word)
        else:
            self.fail("expected SELECT, ASK or INSERT")
        if self.at_punct(";") and self.peek(1).kind != "EOF":
            self.unsupported("update sequence")
        if self.at_punct(";"):
            self.next()
        if self.peek().kind != "EOF":
            self.fail("unexpected trailing text")
        q.prefixes = self.prefixes
        q.base = self.base
        q.text = self.text
        return q

    def prologue(self):
        while True:
            if self.at_word("PREFIX"):
                self.next()
                tok = self.next()
                if tok.kind != "PNAME" or not tok.value.endswith(":") or tok.value.count(":") != 1:
                    self.fail("expected prefix name", tok)
                iri = self.next()
                if iri.kind != "IRI":
                    self.fail("expected IRI", iri)
                self.prefixes[tok.value[:-1]] = self.resolve(self.iri_text(iri))
            elif self.at_word("BASE"):
                self.next()
                iri = self.next()
                if iri.kind != "IRI":
                    self.fail("expected IRI", iri)
                self.base = self.resolve(self.iri_text(iri))
            else:
                return

    def dataset_clause(self):
        if self.at_word("FROM"):
            self.unsupported("FROM")

    def where_clause(self) -> ast.Group:
        if self.at_word("WHERE"):
            self.next()
        return self.group_graph_pattern()

    def select_query(self) -> ast.Query:
        self.expect_word("SELECT")
        q = ast.Query("select")
        if self.at_word("DISTINCT"):
            self.next()
            q.distinct = True
        elif self.at_word("REDUCED"):
            self.next()
            q.reduced = True
        if self.at_punct("*"):
            self.next()
            q.projection = None
        else:
            items = []
            while True:
                tok = self.peek()
                if tok.kind == "VAR":
                    self.next()
                    items.append((tok.value[1:], None))
                elif self.at_punct("("):
                    self.next()
                    expr = self.expression()
                    self.expect_word("AS")
                    var = self.next()
                    if var.kind != "VAR":
                        self.fail("expected variable", var)
                    self.expect_punct(")")
                    items.append((var.value[1:], expr))
                else:
                    break
            if not items:
                self.fail("expected projection")
            q.projection = items
        self.dataset_clause()
        q.where = self.where_clause()
        self.solution_modifiers(q)
        return q

    def solution_modifiers(self, q: ast.Query):
        if self.at_word("GROUP"):
            self.next()
            self.expect_word("BY")
            while True:
                tok = self.peek()
                if tok.kind == "VAR":
                    self.next()
                    q.group_by.append((ast.Var(tok.value[1:]), None))
                elif self.at_punct("("):
                    self.next()
                    expr = self.expression()
                    alias = None
                    if self.at_word("AS"):
                        self.next()
                        var = self.next()
                        if var.kind != "VAR":
                            self.fail("expected variable", var)
                        alias = var.value[1:]
                    self.expect_punct(")")
                    q.group_by.append((expr, alias))
                elif tok.kind == "WORD" and tok.value.upper() in BUILTINS:
                    q.group_by.append((self.primary(), None))
                else:
                    break
            if not q.group_by:
                self.fail("expected grouping condition")
        if self.at_word("HAVING"):
            self.next()
            q.having.append(self.constraint())
            while self.at_punct("(") or (self.peek().kind == "WORD" and self.peek().value.upper() in BUILTINS):
                q.having.append(self.constraint())
        if self.at_word("ORDER"):
            self.next()
            self.expect_word("BY")
            while True:
                tok = self.peek()
                if self.at_word("ASC", "DESC"):
                    self.next()
                    self.expect_punct("(")
                    expr = self.expression()
                    self.expect_punct(")")
                    q.order_by.append((expr, tok.value.upper() == "ASC"))
                elif tok.kind == "VAR":
                    self.next()
                    q.order_by.append((ast.Var(tok.value[1:]), True))
                elif self.at_punct("("):
                    self.next()
                    expr = self.expression()
                    self.expect_punct(")")
                    q.order_by.append((expr, True))
                elif tok.kind == "WORD" and tok.value.upper() in BUILTINS:
                    q.order_by.append((self.primary(), True))
                else:
                    break
            if not q.order_by:
                self.fail("expected ordering condition")
        self.limit_offset(q)

    def limit_offset(self, q: ast.Query):
        for _ in range(2):
            if self.at_word("LIMIT") and q.limit is None:
                self.next()
                q.limit = self.integer()
            elif self.at_word("OFFSET") and q.offset is None:
                self.next()
                q.offset = self.integer()

    def integer(self) -> int:
        tok = self.next()
        if tok.kind != "INTEGER":
            self.fail("expected integer", tok)
        return int(tok.value)

    def values_clause(self) -> Optional[ast.ValuesNode]:
        if self.at_word("VALUES"):
            self.next()
            return self.data_block()
        return None

    # --- updates ---
    def insert(self) -> ast.Query:
        self.expect_word("INSERT")
        if self.at_word("DATA"):
            self.next()
            q = ast.Query("insert-data")
            q.template = self.quad_block(allow_vars=False)
            return q
        q = ast.Query("insert-where")
        q.template = self.quad_block(allow_vars=True)
        if self.at_word("USING"):
            self.unsupported("USING")
        q.where = self.where_clause()
        return q

    def quad_block(self, allow_vars: bool) -> list[ast.QuadPattern]:
        self.expect_punct("{")
        out: list[ast.QuadPattern] = []
        saved = self.template
        self.template = True
        try:
            while not self.at_punct("}"):
                if self.at_punct("."):
                    self.next()
                    continue
                if self.at_word("GRAPH"):
                    self.next()
                    name = self.var_or_iri()
                    self.expect_punct("{")
                    triples: list[ast.TriplePattern] = []
                    while not self.at_punct("}"):
                        if self.at_punct("."):
                            self.next()
                            continue
                        self.triples_same_subject(triples)
                    self.next()
                    out.extend(ast.QuadPattern(t.s, t.p, t.o, name) for t in triples)
                    continue
                triples = []
                self.triples_same_subject(triples)
                out.extend(ast.QuadPattern(t.s, t.p, t.o, None) for t in triples)
            self.next()
        finally:
            self.template = saved
        if not allow_vars:
            for qp in out:
                for t in (qp.s, qp.p, qp.o, qp.graph):
                    if isinstance(t, ast.Var):
                        raise _Fail("variables are not allowed in INSERT DATA", self.peek())
        return out

    # --- graph patterns ---
    def group_graph_pattern(self) -> ast.Group:
        self.expect_punct("{")
        if self.at_word("SELECT"):
            sub = self.select_query()
            sub.values = self.values_clause()
            sub.prefixes = self.prefixes
            self.expect_punct("}")
            return ast.Group([ast.SubSelect(sub)])
        group = self.group_body()
        self.expect_punct("}")
        return group

    def group_body(self) -> ast.Group:
        elements: list = []

        def add_triples(triples):
            if elements and isinstance(elements[-1], ast.BGP):
                elements[-1].triples.extend(triples)
            else:
                elements.append(ast.BGP(list(triples)))

        while True:
            tok = self.peek()
            if tok.kind == "EOF" or self.at_punct("}"):
                return ast.Group(elements)
            if self.at_punct("."):
                self.next()
                continue
            word = tok.value.upper() if tok.kind == "WORD" else ""
            if word == "OPTIONAL":
                self.next()
                elements.append(ast.OptionalNode(self.group_graph_pattern()))
            elif word == "MINUS":
                if not self.extended:
                    self.unsupported("MINUS")
                self.next()
                elements.append(ast.MinusNode(self.group_graph_pattern()))
            elif word == "GRAPH":
                self.next()
                name = self.var_or_iri()
                elements.append(ast.GraphNode(name, self.group_graph_pattern()))
            elif word == "SERVICE":
                elements.append(self.service())
            elif word == "FILTER":
                self.next()
                start = self.peek().start
                expr = self.constraint()
                elements.append(ast.FilterNode(expr, self.text[start : self.toks[self.i - 1].end]))
            elif word == "BIND":
                self.next()
                self.expect_punct("(")
                expr = self.expression()
                self.expect_word("AS")
                var = self.next()
                if var.kind != "VAR":
                    self.fail("expected variable", var)
                self.expect_punct(")")
                elements.append(ast.BindNode(expr, var.value[1:]))
            elif word == "VALUES":
                self.next()
                elements.append(self.data_block())
            elif self.at_punct("{"):
                elements.append(self.group_or_union())
            else:
                triples: list[ast.TriplePattern] = []
                self.triples_same_subject(triples)
                add_triples(triples)
                if not (self.at_punct(".", "}") or self.peek().kind in ("WORD", "EOF") or self.at_punct("{")):
                    self.fail("expected '.' or '}'")

    def group_or_union(self):
        first_tok = self.peek()
        alts = [self.group_graph_pattern()]
        self.trailing_modifiers(alts[0], first_tok)
        while self.at_word("UNION"):
            self.next()
            alts.append(self.group_graph_pattern())
        if len(alts) == 1:
            return alts[0]
        return ast.UnionNode(alts)

    def trailing_modifiers(self, group: ast.Group, tok: Token):
        # Lenient reading of '{ SELECT ... } LIMIT n' written directly inside a group.
        if not self.at_word("LIMIT", "OFFSET"):
            return
        if len(group.elements) == 1 and isinstance(group.elements[0], ast.SubSelect):
            sub = group.elements[0].query
            before = (sub.limit, sub.offset)
            self.limit_offset(sub)
            if (sub.limit, sub.offset) != before:
                self.warnings.append(("solution modifier after a subquery group applied to the subquery", tok))
                return
        self.fail("unexpected solution modifier")

    def service(self) -> ast.ServiceNode:
        self.expect_word("SERVICE")
        silent = False
        if self.at_word("SILENT"):
            self.next()
            silent = True
        endpoint = self.var_or_iri()
        open_tok = self.expect_punct("{")
        depth = 1
        j = self.i
        while True:
            tok = self.toks[j]
            if tok.kind == "EOF":
                self.fail("unbalanced braces in SERVICE block", open_tok)
            if tok.kind == "PUNCT" and tok.value == "{":
                depth += 1
            elif tok.kind == "PUNCT" and tok.value == "}":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        inner = self.toks[self.i : j]
        close_tok = self.toks[j]
        inner_text = self.text[open_tok.end : close_tok.start]
        pattern = None
        sub = _Parser(self.text, inner + [Token("EOF", "", close_tok.start, close_tok.start)],
                      self.prefixes, self.base, extended=True)
        try:
            pattern = sub.group_body()
            if sub.peek().kind != "EOF":
                pattern = None
        except _Fail:
            pattern = None
        # the body is forwarded verbatim, so leniency in its local reading is only a note
        notes = [message for message, _tok in sub.warnings]
        self.i = j + 1
        return ast.ServiceNode(endpoint, inner_text, variables_in(inner), prefixes_in(inner), pattern, silent, notes)

    def data_block(self) -> ast.ValuesNode:
        if self.peek().kind == "VAR":
            var = self.next().value[1:]
            self.expect_punct("{")
            rows = []
            while not self.at_punct("}"):
                rows.append((self.data_value(),))
            self.next()
            return ast.ValuesNode([var], rows)
        self.expect_punct("(")
        variables = []
        while self.peek().kind == "VAR":
            variables.append(self.next().value[1:])
        self.expect_punct(")")
        self.expect_punct("{")
        rows = []
        while not self.at_punct("}"):
            self.expect_punct("(")
            row = []
            while not self.at_punct(")"):
                row.append(self.data_value())
            self.next()
            if len(row) != len(variables):
                self.fail("VALUES row length differs from variable list")
            rows.append(tuple(row))
        self.next()
        return ast.ValuesNode(variables, rows)

    def data_value(self) -> Optional[Term]:
        if self.at_word("UNDEF"):
            self.next()
            return None
        tok = self.peek()
        if tok.kind in ("VAR", "BNODE") or self.at_punct("["):
            self.fail("expected IRI, literal or UNDEF")
        term = self.var_or_term()
        if not isinstance(term, Term):
            self.fail("expected IRI, literal or UNDEF", tok)
        return term

    # --- triples ---
    def triples_same_subject(self, out: list):
        if self.at_punct("[") and not self.at_punct("]", k=1):
            self.next()
            subject = self.fresh_node()
            self.property_list(subject, out)
            self.expect_punct("]")
            if not self.at_punct(".", "}") and self.peek().kind != "EOF":
                self.property_list(subject, out)
            return
        if self.at_punct("(") and not self.at_punct(")", k=1):
            subject = self.collection(out)
        else:
            subject = self.var_or_term()
        self.property_list(subject, out)

    def property_list(self, subject, out: list):
        while True:
            verb = self.verb()
            self.object(subject, verb, out)
            while self.at_punct(","):
                self.next()
                self.object(subject, verb, out)
            if not self.at_punct(";"):
                return
            while self.at_punct(";"):
                self.next()
            if self.at_punct(".", "]", "}") or self.peek().kind == "EOF":
                return

    def verb(self):
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value in ("^", "!", "("):
            self.unsupported("property path")
        if tok.kind == "WORD" and tok.value == "a":
            self.next()
            verb = Term(IRI, RDF.type)
        elif tok.kind == "VAR":
            self.next()
            verb = ast.Var(tok.value[1:])
        elif tok.kind in ("IRI", "PNAME"):
            verb = self.iri_term()
        else:
            self.fail("expected predicate")
        nxt = self.peek()
        if nxt.kind == "PUNCT" and nxt.value in _PATH_OPS:
            if not (nxt.value == "+" and self.peek(1).kind in ("INTEGER", "DECIMAL", "DOUBLE")):
                self.unsupported("property path", nxt)
        return verb

    def object(self, subject, verb, out: list):
        obj = self.graph_node(out)
        out.append(ast.TriplePattern(subject, verb, obj))

    def graph_node(self, out: list):
        if self.at_punct("[") and not self.at_punct("]", k=1):
            self.next()
            node = self.fresh_node()
            self.property_list(node, out)
            self.expect_punct("]")
            return node
        if self.at_punct("(") and not self.at_punct(")", k=1):
            return self.collection(out)
        return self.var_or_term()

    def collection(self, out: list):
        self.expect_punct("(")
        items = []
        while not self.at_punct(")"):
            if self.peek().kind == "EOF":
                self.fail("unterminated collection")
            items.append(self.graph_node(out))
        self.next()
        head = Term(IRI, RDF.nil)
        for item in reversed(items):
            node = self.fresh_node()
            out.append(ast.TriplePattern(node, Term(IRI, RDF.first), item))
            out.append(ast.TriplePattern(node, Term(IRI, RDF.rest), head))
            head = node
        return head

    def fresh_node(self):
        self.bnode_count += 1
        label = f"anon{self.bnode_count}"
        return Term(BLANK, label) if self.template else ast.Var("#" + label)

    def var_or_iri(self):
        tok = self.peek()
        if tok.kind == "VAR":
            self.next()
            return ast.Var(tok.value[1:])
        if tok.kind in ("IRI", "PNAME"):
            return self.iri_term()
        self.fail("expected IRI or variable")

    def var_or_term(self):
        tok = self.peek()
        kind = tok.kind
        if kind == "VAR":
            self.next()
            return ast.Var(tok.value[1:])
        if kind in ("IRI", "PNAME"):
            return self.iri_term()
        if kind == "BNODE":
            self.next()
            label = tok.value[2:]
            return Term(BLANK, label) if self.template else ast.Var("#" + label)
        if self.at_punct("[") and self.at_punct("]", k=1):
            self.next()
            self.next()
            return self.fresh_node()
        if self.at_punct("(") and self.at_punct(")", k=1):
            self.next()
            self.next()
            return Term(IRI, RDF.nil)
        if kind in ("STRING", "INTEGER", "DECIMAL", "DOUBLE") or self.at_word("TRUE", "FALSE"):
            return self.literal()
        if self.at_punct("+", "-") and self.peek(1).kind in ("INTEGER", "DECIMAL", "DOUBLE"):
            return self.literal()
        self.fail("expected RDF term or variable")

    def literal(self) -> Term:
        tok = self.next()
        sign = ""
        if tok.kind == "PUNCT":
            sign = tok.value
            tok = self.next()
        if tok.kind == "INTEGER":
            return make_literal(sign + tok.value, XSD.integer)
        if tok.kind == "DECIMAL":
            return make_literal(sign + tok.value, XSD.decimal)
        if tok.kind == "DOUBLE":
            return make_literal(sign + tok.value, XSD.double)
        if tok.kind == "WORD":
            return make_literal(tok.value.lower(), XSD.boolean)
        value = self.string_value(tok)
        if self.peek().kind == "LANGTAG":
            return make_literal(value, language=self.next().value[1:])
        if self.at_punct("^^"):
            self.next()
            dt = self.iri_term()
            return make_literal(value, dt.value)
        return make_literal(value)

    def string_value(self, tok: Token) -> str:
        raw = tok.value
        body = raw[3:-3] if raw[:3] in ('"""', "'''") and len(raw) >= 6 else raw[1:-1]

        def sub(m):
            if m.group(3) is not None:
                if m.group(3) not in _ECHAR:
                    raise _Fail(f"invalid escape '\\{m.group(3)}'", tok)
                return _ECHAR[m.group(3)]
            code = int(m.group(1) or m.group(2), 16)
            if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
                raise _Fail("invalid code point escape", tok)
            return chr(code)

        return _STRING_ESC.sub(sub, body)

    def iri_text(self, tok: Token) -> str:
        raw = tok.value[1:-1]
        out = re.sub(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})", lambda m: chr(int(m.group(1) or m.group(2), 16)), raw)
        return out

    def resolve(self, value: str) -> str:
        if self.base and not re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*:", value):
            return resolve_iri(self.base, value)
        return value

    def iri_term(self) -> Term:
        tok = self.next()
        if tok.kind == "IRI":
            return Term(IRI, self.resolve(self.iri_text(tok)))
        if tok.kind == "PNAME":
            prefix, local = tok.value.split(":", 1)
            if prefix not in self.prefixes:
                raise _Fail(f"undefined prefix '{prefix}:'", tok)
            return Term(IRI, self.prefixes[prefix] + _LOCAL_ESC.sub(r"\1", local))
        self.fail("expected IRI", tok)

    # --- expressions ---
    def constraint(self):
        if self.at_punct("("):
            self.next()
            expr = self.expression()
            self.expect_punct(")")
            return expr
        tok = self.peek()
        if tok.kind == "WORD" or tok.kind in ("IRI", "PNAME"):
            return self.primary()
        self.fail("expected constraint")

    def expression(self):
        left = self.and_expr()
        while self.at_punct("||"):
            self.next()
            left = ast.BinOp("||", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.relational()
        while self.at_punct("&&"):
            self.next()
            left = ast.BinOp("&&", left, self.relational())
        return left

    def relational(self):
        left = self.additive()
        if self.at_punct("=", "!=", "<", ">", "<=", ">="):
            op = self.next().value
            return ast.BinOp(op, left, self.additive())
        negated = False
        if self.at_word("NOT") and self.at_word("IN", k=1):
            self.next()
            negated = True
        if self.at_word("IN"):
            self.next()
            return ast.InList(left, tuple(self.arg_list()), negated)
        return left

    def additive(self):
        left = self.multiplicative()
        while True:
            if self.at_punct("+", "-"):
                op = self.next().value
                left = ast.BinOp(op, left, self.multiplicative())
            else:
                return left

    def multiplicative(self):
        left = self.unary()
        while self.at_punct("*", "/"):
            op = self.next().value
            left = ast.BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.at_punct("!"):
            self.next()
            return ast.UnaryOp("!", self.unary())
        if self.at_punct("-", "+"):
            op = self.next().value
            return ast.UnaryOp(op, self.unary())
        return self.primary()

    def arg_list(self) -> list:
        if self.peek().kind == "PUNCT" and self.peek().value == "(" and self.at_punct(")", k=1):
            self.next()
            self.next()
            return []
        self.expect_punct("(")
        args = [self.expression()]
        while self.at_punct(","):
            self.next()
            args.append(self.expression())
        self.expect_punct(")")
        return args

    def primary(self):
        tok = self.peek()
        if self.at_punct("("):
            self.next()
            expr = self.expression()
            self.expect_punct(")")
            return expr
        if tok.kind == "VAR":
            self.next()
            return ast.Var(tok.value[1:])
        if tok.kind in ("STRING", "INTEGER", "DECIMAL", "DOUBLE") or self.at_word("TRUE", "FALSE"):
            return self.literal()
        if tok.kind in ("IRI", "PNAME"):
            iri = self.iri_term()
            if self.at_punct("("):
                return ast.Call(iri.value, tuple(self.arg_list()))
            return iri
        if tok.kind == "WORD":
            word = tok.value.upper()
            if word == "NOT" and self.at_word("EXISTS", k=1):
                if not self.extended:
                    self.unsupported("NOT EXISTS")
                self.next()
                self.next()
                return ast.Exists(self.group_graph_pattern(), negated=True)
            if word == "EXISTS":
                if not self.extended:
                    self.unsupported("EXISTS")
                self.next()
                return ast.Exists(self.group_graph_pattern())
            if word in AGGREGATES:
                return self.aggregate()
            if word in BUILTINS:
                self.next()
                if word == "BNODE" and self.at_punct("(") and self.at_punct(")", k=1):
                    self.next()
                    self.next()
                    return ast.Call(word, ())
                return ast.Call(word, tuple(self.arg_list()))
            self.fail("unknown function")
        self.fail("expected expression")

    def aggregate(self):
        name = self.next().value.upper()
        self.expect_punct("(")
        distinct = False
        if self.at_word("DISTINCT"):
            self.next()
            distinct = True
        if name == "COUNT" and self.at_punct("*"):
            self.next()
            arg = "*"
        else:
            arg = self.expression()
        separator = " "
        if name == "GROUP_CONCAT" and self.at_punct(";"):
            self.next()
            self.expect_word("SEPARATOR")
            self.expect_punct("=")
            tok = self.next()
            if tok.kind != "STRING":
                self.fail("expected separator string", tok)
            separator = self.string_value(tok)
        self.expect_punct(")")
        return ast.Aggregate(name, arg, distinct, separator)


def parse_query(text: str, prefixes: Optional[dict] = None, base: Optional[str] = None,
                extended: bool = False) -> QueryParse:
    """Parse ``text``; never raises, problems come back as diagnostics."""
    parser = _Parser(text, tokenize(text), prefixes or {}, base, extended)
    diagnostics = []
    try:
        query = parser.parse()
    except _Fail as exc:
        line, col = _position(text, exc.token.start)
        message = exc.message
        if exc.construct:
            message = f"{message} at {line}:{col}"
        return QueryParse(None, [ParseDiagnostic("error", line, col, message)])
    except RecursionError:
        return QueryParse(None, [ParseDiagnostic("error", 1, 1, "query nesting too deep")])
    except InvalidLiteral as exc:
        return QueryParse(None, [ParseDiagnostic("error", 1, 1, str(exc))])
    for message, tok in parser.warnings:
        line, col = _position(text, tok.start)
        diagnostics.append(ParseDiagnostic("warning", line, col, message))
    return QueryParse(query, diagnostics)


def compile_query(text: str, prefixes: Optional[dict] = None, base: Optional[str] = None,
                  extended: bool = False) -> ast.Query:
    """Parse or raise: ``UnsupportedConstruct`` for out-of-subset syntax, else ``SparqlSyntaxError``."""
    result = parse_query(text, prefixes, base, extended)
    if not result.ok:
        if any("unsupported construct" in d.message for d in result.diagnostics):
            raise UnsupportedConstruct(result.diagnostics)
        raise SparqlSyntaxError(result.diagnostics)
    return result.query


def find_services(node) -> list[ast.ServiceNode]:
    """Every SERVICE node reachable from a query or pattern, subqueries included."""
    found: list[ast.ServiceNode] = []

    def walk(n):
        if isinstance(n, ast.Query):
            if n.where is not None:
                walk(n.where)
        elif isinstance(n, ast.Group):
            for el in n.elements:
                walk(el)
        elif isinstance(n, ast.ServiceNode):
            found.append(n)
        elif isinstance(n, (ast.GraphNode, ast.OptionalNode, ast.MinusNode)):
            walk(n.pattern)
        elif isinstance(n, ast.UnionNode):
            for alt in n.alternatives:
                walk(alt)
        elif isinstance(n, ast.SubSelect):
            walk(n.query)

    walk(node)
    return found
