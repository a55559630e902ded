"""SERVICE rewriting and result pagination.

A query with one SERVICE block is split into a remote SELECT over the
verbatim block text and a local residual in which the block is replaced by
an inline VALUES table. Once the remote rows are injected, evaluating the
residual gives the same bag of solutions as evaluating the SERVICE in place.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Iterator, Optional

from kgindex.rdf.model import IRI, Term
from kgindex.sparql import ast
from kgindex.sparql.lexer import tokenize
from kgindex.sparql.parser import UnsupportedConstruct, find_services
from kgindex.rdf.turtle import ParseDiagnostic


class PaginationUnsupported(ValueError):
    pass


class InjectedValues(ast.ValuesNode):
    """Placeholder for the remote bindings of a rewritten SERVICE block."""


@dataclass
class FederatedPlan:
    residual: ast.Query
    remote_query: Optional[str] = None
    endpoint: Optional[str] = None
    variables: tuple = ()
    silent: bool = False

    @property
    def is_federated(self) -> bool:
        return self.remote_query is not None

    def inject(self, rows: Optional[list[dict]]) -> ast.Query:
        """The residual with ``rows`` as the VALUES table (``None`` = silent failure)."""
        if not self.is_federated:
            return self.residual
        q = copy.deepcopy(self.residual)
        node = _find_injected(q)
        if rows is None:
            node.variables = []
            node.rows = [()]
        else:
            node.rows = [tuple(r.get(v) for v in self.variables) for r in rows]
        return q


def _find_injected(node) -> InjectedValues:
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, InjectedValues):
            return n
        if isinstance(n, ast.Query):
            if n.where is not None:
                stack.append(n.where)
        elif isinstance(n, ast.Group):
            stack.extend(n.elements)
        elif isinstance(n, (ast.GraphNode, ast.OptionalNode, ast.MinusNode)):
            stack.append(n.pattern)
        elif isinstance(n, ast.UnionNode):
            stack.extend(n.alternatives)
        elif isinstance(n, ast.SubSelect):
            stack.append(n.query)
    raise LookupError("no injected VALUES node")


def _expr_vars(e, out: set):
    if isinstance(e, ast.Var):
        out.add(e.name)
    elif isinstance(e, ast.BinOp):
        _expr_vars(e.left, out)
        _expr_vars(e.right, out)
    elif isinstance(e, ast.UnaryOp):
        _expr_vars(e.arg, out)
    elif isinstance(e, ast.Call):
        for a in e.args:
            _expr_vars(a, out)
    elif isinstance(e, ast.InList):
        _expr_vars(e.expr, out)
        for a in e.options:
            _expr_vars(a, out)
    elif isinstance(e, ast.Aggregate):
        if e.arg != "*":
            _expr_vars(e.arg, out)
    elif isinstance(e, ast.Exists):
        _pattern_vars(e.pattern, out, None)


def _pattern_vars(n, out: set, skip) -> None:
    """Collect every variable used anywhere except inside ``skip``."""
    if n is skip:
        return
    if isinstance(n, ast.Query):
        for name, expr in n.projection or []:
            out.add(name)
            if expr is not None:
                _expr_vars(expr, out)
        for expr, alias in n.group_by:
            _expr_vars(expr, out)
            if alias:
                out.add(alias)
        for expr in n.having:
            _expr_vars(expr, out)
        for expr, _asc in n.order_by:
            _expr_vars(expr, out)
        if n.values is not None:
            out.update(n.values.variables)
        for qp in n.template:
            for t in (qp.s, qp.p, qp.o, qp.graph):
                if isinstance(t, ast.Var):
                    out.add(t.name)
        if n.where is not None:
            _pattern_vars(n.where, out, skip)
    elif isinstance(n, ast.Group):
        for el in n.elements:
            _pattern_vars(el, out, skip)
    elif isinstance(n, ast.BGP):
        for tp in n.triples:
            for t in (tp.s, tp.p, tp.o):
                if isinstance(t, ast.Var) and not t.hidden:
                    out.add(t.name)
    elif isinstance(n, ast.GraphNode):
        if isinstance(n.name, ast.Var):
            out.add(n.name.name)
        _pattern_vars(n.pattern, out, skip)
    elif isinstance(n, (ast.OptionalNode, ast.MinusNode)):
        _pattern_vars(n.pattern, out, skip)
    elif isinstance(n, ast.UnionNode):
        for alt in n.alternatives:
            _pattern_vars(alt, out, skip)
    elif isinstance(n, ast.ValuesNode):
        out.update(n.variables)
    elif isinstance(n, ast.BindNode):
        out.add(n.var)
        _expr_vars(n.expr, out)
    elif isinstance(n, ast.FilterNode):
        _expr_vars(n.expr, out)
    elif isinstance(n, ast.SubSelect):
        _pattern_vars(n.query, out, skip)
    elif isinstance(n, ast.ServiceNode):
        out.update(n.variables)


def _contains(n, target) -> bool:
    return any(s is target for s in find_services(n))


def _under_star(n, target) -> bool:
    """True when some SELECT * on the path from ``n`` to ``target`` exposes its variables."""
    if isinstance(n, ast.Query):
        if n.where is None or not _contains(n.where, target):
            return False
        return (n.form == "select" and n.projection is None) or _under_star(n.where, target)
    if isinstance(n, ast.Group):
        return any(_under_star(el, target) for el in n.elements)
    if isinstance(n, (ast.GraphNode, ast.OptionalNode, ast.MinusNode)):
        return _under_star(n.pattern, target)
    if isinstance(n, ast.UnionNode):
        return any(_under_star(a, target) for a in n.alternatives)
    if isinstance(n, ast.SubSelect):
        return _under_star(n.query, target)
    return False


def _replace(n, target, replacement) -> bool:
    if isinstance(n, ast.Query):
        return n.where is not None and _replace(n.where, target, replacement)
    if isinstance(n, ast.Group):
        for i, el in enumerate(n.elements):
            if el is target:
                n.elements[i] = replacement
                return True
            if _replace(el, target, replacement):
                return True
        return False
    if isinstance(n, (ast.GraphNode, ast.OptionalNode, ast.MinusNode)):
        return _replace(n.pattern, target, replacement)
    if isinstance(n, ast.UnionNode):
        return any(_replace(a, target, replacement) for a in n.alternatives)
    if isinstance(n, ast.SubSelect):
        return _replace(n.query, target, replacement)
    return False


def prologue_for(prefixes: dict, used: list[str], base: Optional[str] = None) -> str:
    lines = []
    if base:
        lines.append(f"BASE <{base}>")
    for p in used:
        if p in prefixes:
            lines.append(f"PREFIX {p}: <{prefixes[p]}>")
    return "".join(line + "\n" for line in lines)


def rewrite_service(query: ast.Query) -> FederatedPlan:
    services = find_services(query)
    if not services:
        return FederatedPlan(residual=query)
    if len(services) > 1:
        raise UnsupportedConstruct([ParseDiagnostic(
            "error", 1, 1, "unsupported construct 'multiple SERVICE blocks'")])
    residual = copy.deepcopy(query)
    svc = find_services(residual)[0]
    if not isinstance(svc.endpoint, Term) or svc.endpoint.kind != IRI:
        raise UnsupportedConstruct([ParseDiagnostic(
            "error", 1, 1, "unsupported construct 'SERVICE with a variable endpoint'")])
    outside: set[str] = set()
    _pattern_vars(residual, outside, svc)
    under_star = _under_star(residual, svc)
    inner = list(svc.variables)
    shared = inner if under_star else [v for v in inner if v in outside]
    if not shared:
        shared = inner
    projection = " ".join("?" + v for v in shared) if shared else "*"
    text = prologue_for(query.prefixes, svc.prefixes_used, query.base)
    text += f"SELECT {projection} WHERE {{{svc.text}}}"
    placeholder = InjectedValues(list(shared), [])
    _replace(residual, svc, placeholder)
    return FederatedPlan(residual, text, svc.endpoint.value, tuple(shared), svc.silent)


# --- pagination ----------------------------------------------------------------

def _select_shape(text: str):
    toks = tokenize(text)
    i = 0
    while i < len(toks) and toks[i].kind == "WORD" and toks[i].value.upper() in ("PREFIX", "BASE"):
        i += 3 if toks[i].value.upper() == "PREFIX" else 2
    if i >= len(toks) or toks[i].kind != "WORD" or toks[i].value.upper() != "SELECT":
        raise PaginationUnsupported("only SELECT queries can be paginated")
    i += 1
    projected: list[str] = []
    star = False
    depth = 0
    while i < len(toks):
        tok = toks[i]
        if tok.kind == "EOF":
            raise PaginationUnsupported("query has no WHERE clause")
        if depth == 0 and (tok.kind == "PUNCT" and tok.value == "{" or
                           tok.kind == "WORD" and tok.value.upper() in ("WHERE", "FROM")):
            break
        if tok.kind == "PUNCT" and tok.value == "(":
            depth += 1
        elif tok.kind == "PUNCT" and tok.value == ")":
            depth -= 1
        elif tok.kind == "PUNCT" and tok.value == "*" and depth == 0:
            star = True
        elif tok.kind == "VAR":
            prev = toks[i - 1]
            if depth == 0 or prev.kind == "WORD" and prev.value.upper() == "AS":
                projected.append(tok.value[1:])
        i += 1
    # find the end of the WHERE group
    while i < len(toks) and not (toks[i].kind == "PUNCT" and toks[i].value == "{"):
        i += 1
    start = i
    depth = 0
    while i < len(toks):
        tok = toks[i]
        if tok.kind == "PUNCT" and tok.value == "{":
            depth += 1
        elif tok.kind == "PUNCT" and tok.value == "}":
            depth -= 1
            if depth == 0:
                break
        i += 1
    where_vars = []
    for tok in toks[start:i]:
        if tok.kind == "VAR" and tok.value[1:] not in where_vars:
            where_vars.append(tok.value[1:])
    tail = {t.value.upper() for t in toks[i + 1 :] if t.kind == "WORD"}
    return (where_vars if star else projected), tail


def paginate(query_text: str, page_size: int) -> Iterator[str]:
    """Page texts ``LIMIT n OFFSET k*n`` for k = 0, 1, ... ; the caller stops on a short page."""
    if page_size < 1:
        raise ValueError("page size must be at least 1")
    variables, tail = _select_shape(query_text)
    if "LIMIT" in tail or "OFFSET" in tail:
        raise PaginationUnsupported("query already has LIMIT/OFFSET")
    if "VALUES" in tail:
        raise PaginationUnsupported("trailing VALUES clause")
    base = query_text.rstrip()
    if "ORDER" not in tail and variables:
        base += " ORDER BY " + " ".join("?" + v for v in variables)
    k = 0
    while True:
        yield f"{base} LIMIT {page_size} OFFSET {k * page_size}"
        k += 1
