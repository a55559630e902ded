"""Bag-semantics evaluation of parsed queries over a :class:`Dataset`."""

from __future__ import annotations

import hashlib
import math
import random
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_FLOOR, Decimal
from typing import Callable, Optional, Union
from urllib.parse import quote

from kgindex.namespaces import RDF_LANGSTRING, XSD, XSD_STRING
from kgindex.rdf.model import BLANK, DEFAULT_GRAPH, IRI, LITERAL, Dataset, Term, make_literal
from kgindex.rdf.results import ResultsDocument
from kgindex.sparql import ast
from kgindex.sparql import values as V
from kgindex.sparql.values import ExprError

UNION = "union"
Row = dict


class EvaluationError(RuntimeError):
    """The query cannot be evaluated here (e.g. SERVICE without a remote executor)."""


@dataclass
class EvalContext:
    dataset: Dataset
    default_graph: Union[Term, str] = DEFAULT_GRAPH  # a graph name, or UNION for the merge of all graphs
    rand: Callable[[], float] = random.random
    now: Callable[[], Term] = None

    def __post_init__(self):
        if self.now is None:
            stamp = V.format_datetime(datetime.now(timezone.utc))
            self.now = lambda: stamp


# --- pattern matching ------------------------------------------------------

def _resolve(t, mu):
    if isinstance(t, ast.Var):
        return mu.get(t.name)
    return t


def _match_triple(ctx: EvalContext, graph, s, p, o):
    ds = ctx.dataset
    if graph == UNION:
        seen = set()
        for q in ds.match(s, p, o, None):
            if q.triple not in seen:
                seen.add(q.triple)
                yield q.triple
    else:
        for q in ds.match(s, p, o, graph):
            yield q.triple


def _bound_count(tp, mu) -> int:
    return sum(1 for t in (tp.s, tp.p, tp.o) if not isinstance(t, ast.Var) or t.name in mu)


def match_bgp(triples: list, mu: Row, ctx: EvalContext, graph) -> list[Row]:
    if not triples:
        return [dict(mu)]
    # most constrained pattern first
    best = max(range(len(triples)), key=lambda i: _bound_count(triples[i], mu))
    tp = triples[best]
    rest = triples[:best] + triples[best + 1 :]
    s, p, o = (_resolve(t, mu) for t in (tp.s, tp.p, tp.o))
    out = []
    for triple in _match_triple(ctx, graph, s, p, o):
        ext = dict(mu)
        ok = True
        for pat, val in zip((tp.s, tp.p, tp.o), triple):
            if isinstance(pat, ast.Var):
                cur = ext.get(pat.name)
                if cur is None:
                    ext[pat.name] = val
                elif cur != val:
                    ok = False
                    break
        if ok:
            out.extend(match_bgp(rest, ext, ctx, graph))
    return out


def compatible(a: Row, b: Row) -> bool:
    if len(a) > len(b):
        a, b = b, a
    for k, v in a.items():
        w = b.get(k)
        if w is not None and w != v:
            return False
    return True


def join(left: list[Row], right: list[Row]) -> list[Row]:
    if not left or not right:
        return []
    if len(left) == 1 and not left[0]:
        return [dict(r) for r in right]
    if len(right) == 1 and not right[0]:
        return [dict(r) for r in left]
    common = set(left[0])
    for r in left:
        common &= r.keys()
    for r in right:
        common &= r.keys()
    keys = sorted(common)
    buckets: dict[tuple, list[Row]] = {}
    for r in right:
        buckets.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for mu in left:
        for nu in buckets.get(tuple(mu[k] for k in keys), ()):
            if compatible(mu, nu):
                merged = dict(mu)
                merged.update(nu)
                out.append(merged)
    return out


class Evaluator:
    def __init__(self, ctx: EvalContext):
        self.ctx = ctx
        self.graph = ctx.default_graph  # active graph, read by EXISTS

    # --- graph patterns ---
    def group(self, group: ast.Group, graph, seed: Optional[Row] = None) -> list[Row]:
        sols, filters = self.group_parts(group, graph, seed)
        saved, self.graph = self.graph, graph
        try:
            return [mu for mu in sols if all(self.test(f.expr, mu) for f in filters)]
        finally:
            self.graph = saved

    def group_parts(self, group: ast.Group, graph, seed: Optional[Row] = None):
        saved, self.graph = self.graph, graph
        try:
            return self._group_parts(group, graph, seed)
        finally:
            self.graph = saved

    def _group_parts(self, group: ast.Group, graph, seed: Optional[Row] = None):
        sols: list[Row] = [dict(seed) if seed else {}]
        filters = []
        for el in group.elements:
            if isinstance(el, ast.BGP):
                sols = [m for mu in sols for m in match_bgp(el.triples, mu, self.ctx, graph)]
            elif isinstance(el, ast.FilterNode):
                filters.append(el)
            elif isinstance(el, ast.Group):
                sols = join(sols, self.group(el, graph))
            elif isinstance(el, ast.UnionNode):
                rows = []
                for alt in el.alternatives:
                    rows.extend(self.group(alt, graph))
                sols = join(sols, rows)
            elif isinstance(el, ast.OptionalNode):
                inner, inner_filters = self.group_parts(el.pattern, graph)
                sols = self.left_join(sols, inner, inner_filters)
            elif isinstance(el, ast.MinusNode):
                right = self.group(el.pattern, graph)
                sols = [mu for mu in sols
                        if not any(compatible(mu, nu) and set(mu) & set(nu) for nu in right)]
            elif isinstance(el, ast.GraphNode):
                sols = join(sols, self.graph_node(el))
            elif isinstance(el, ast.ValuesNode):
                sols = join(sols, values_rows(el))
            elif isinstance(el, ast.BindNode):
                out = []
                for mu in sols:
                    nu = dict(mu)
                    try:
                        nu[el.var] = self.expr(el.expr, mu)
                    except ExprError:
                        pass
                    out.append(nu)
                sols = out
            elif isinstance(el, ast.SubSelect):
                sols = join(sols, self.select_rows(el.query, graph))
            elif isinstance(el, ast.ServiceNode):
                raise EvaluationError("SERVICE must be rewritten before local evaluation")
            else:
                raise EvaluationError(f"unknown pattern node {type(el).__name__}")
            if not sols:
                break
        return sols, filters

    def left_join(self, left, right, filters) -> list[Row]:
        out = []
        for mu in left:
            matched = False
            for nu in right:
                if compatible(mu, nu):
                    merged = dict(mu)
                    merged.update(nu)
                    if all(self.test(f.expr, merged) for f in filters):
                        out.append(merged)
                        matched = True
            if not matched:
                out.append(mu)
        return out

    def graph_node(self, node: ast.GraphNode) -> list[Row]:
        names = sorted((g for g in self.ctx.dataset.graph_names() if g != DEFAULT_GRAPH), key=lambda t: t.value)
        if isinstance(node.name, Term):
            if node.name not in names:
                return []
            return self.group(node.pattern, node.name)
        out = []
        for g in names:
            for mu in self.group(node.pattern, g, seed={node.name.name: g}):
                out.append(mu)
        return out

    # --- queries ---
    def where_rows(self, query: ast.Query, graph) -> list[Row]:
        rows = self.group(query.where, graph) if query.where is not None else [{}]
        if query.values is not None:
            rows = join(rows, values_rows(query.values))
        return rows

    def select_rows(self, query: ast.Query, graph=None) -> list[Row]:
        """Solution rows of a SELECT (used for subqueries and top-level selects)."""
        graph = self.ctx.default_graph if graph is None else graph
        rows = self.where_rows(query, graph)
        aggregated = bool(query.group_by) or _has_aggregate(query)
        if aggregated:
            rows = self.aggregate(query, rows)
        elif query.projection:
            for name, expr in query.projection:
                if expr is None:
                    continue
                for mu in rows:
                    try:
                        mu[name] = self.expr(expr, mu)
                    except ExprError:
                        pass
        if query.order_by:
            rows = self.order(rows, query.order_by)
        names = projected_names(query)
        rows = [{k: mu[k] for k in names if k in mu} for mu in rows]
        if query.distinct or query.reduced:
            seen = set()
            unique = []
            for mu in rows:
                key = frozenset(mu.items())
                if key not in seen:
                    seen.add(key)
                    unique.append(mu)
            rows = unique
        start = query.offset or 0
        end = None if query.limit is None else start + query.limit
        return rows[start:end]

    def aggregate(self, query: ast.Query, rows: list[Row]) -> list[Row]:
        groups: dict[tuple, list[Row]] = {}
        for mu in rows:
            key = []
            for expr, _alias in query.group_by:
                try:
                    key.append(self.expr(expr, mu))
                except ExprError:
                    key.append(None)
            groups.setdefault(tuple(key), []).append(mu)
        if not query.group_by and not groups:
            groups[()] = []
        out = []
        for key, members in groups.items():
            row: Row = {}
            for (expr, alias), value in zip(query.group_by, key):
                if value is None:
                    continue
                if alias:
                    row[alias] = value
                elif isinstance(expr, ast.Var):
                    row[expr.name] = value
            ok = True
            for cond in query.having:
                if not self.test(cond, row, members):
                    ok = False
                    break
            if not ok:
                continue
            for name, expr in query.projection or []:
                if expr is None:
                    continue
                try:
                    row[name] = self.expr(expr, row, members)
                except ExprError:
                    pass
            row["#group"] = members
            out.append(row)
        return out

    def order(self, rows: list[Row], conditions) -> list[Row]:
        def keyed(mu):
            members = mu.get("#group")
            keys = []
            for expr, _asc in conditions:
                try:
                    keys.append(V.OrderKey(self.expr(expr, mu, members)))
                except ExprError:
                    keys.append(V.OrderKey(None))
            return keys

        decorated = [(keyed(mu), i, mu) for i, mu in enumerate(rows)]
        for pos in reversed(range(len(conditions))):
            asc = conditions[pos][1]
            decorated.sort(key=lambda d: d[0][pos], reverse=not asc)
        return [mu for _k, _i, mu in decorated]

    # --- expressions ---
    def test(self, expr, mu: Row, group=None) -> bool:
        try:
            return V.ebv(self.expr(expr, mu, group))
        except ExprError:
            return False

    def expr(self, e, mu: Row, group: Optional[list[Row]] = None) -> Term:
        if isinstance(e, ast.Var):
            v = mu.get(e.name)
            if v is None:
                raise ExprError(f"unbound variable ?{e.name}")
            return v
        if isinstance(e, Term):
            return e
        if isinstance(e, ast.BinOp):
            op = e.op
            if op == "||":
                return self._or(e, mu, group)
            if op == "&&":
                return self._and(e, mu, group)
            a = self.expr(e.left, mu, group)
            b = self.expr(e.right, mu, group)
            if op in ("+", "-", "*", "/"):
                return V.arithmetic(op, a, b)
            return V.boolean(V.compare(op, a, b))
        if isinstance(e, ast.UnaryOp):
            if e.op == "!":
                return V.boolean(not V.ebv(self.expr(e.arg, mu, group)))
            a = self.expr(e.arg, mu, group)
            if e.op == "-":
                return V.negate(a)
            V.numeric_value(a)
            return a
        if isinstance(e, ast.InList):
            value = self.expr(e.expr, mu, group)
            found = False
            error = False
            for opt in e.options:
                try:
                    if V.equals(value, self.expr(opt, mu, group)):
                        found = True
                        break
                except ExprError:
                    error = True
            if not found and error:
                raise ExprError("IN comparison error")
            return V.boolean(found != e.negated)
        if isinstance(e, ast.Exists):
            clean = {k: v for k, v in mu.items() if not k.startswith("#")}
            rows = self.group(e.pattern, self.graph, seed=clean)
            return V.boolean(bool(rows) != e.negated)
        if isinstance(e, ast.Aggregate):
            if group is None:
                raise ExprError("aggregate outside of a group")
            return self.aggregate_value(e, group)
        if isinstance(e, ast.Call):
            return self.call(e, mu, group)
        raise ExprError(f"cannot evaluate {type(e).__name__}")

    def _or(self, e, mu, group):
        err = None
        for side in (e.left, e.right):
            try:
                if V.ebv(self.expr(side, mu, group)):
                    return V.TRUE
            except ExprError as exc:
                err = exc
        if err:
            raise err
        return V.FALSE

    def _and(self, e, mu, group):
        err = None
        for side in (e.left, e.right):
            try:
                if not V.ebv(self.expr(side, mu, group)):
                    return V.FALSE
            except ExprError as exc:
                err = exc
        if err:
            raise err
        return V.TRUE

    def aggregate_value(self, agg: ast.Aggregate, group: list[Row]) -> Term:
        name = agg.name
        if agg.arg == "*":
            members = group
            if agg.distinct:
                members = list({frozenset((k, v) for k, v in mu.items() if not k.startswith("#")): mu for mu in group}.values())
            return make_literal(str(len(members)), XSD.integer)
        vals = []
        for mu in group:
            try:
                vals.append(self.expr(agg.arg, mu))
            except ExprError:
                continue
        if agg.distinct:
            vals = list(dict.fromkeys(vals))
        if name == "COUNT":
            return make_literal(str(len(vals)), XSD.integer)
        if name in ("SUM", "AVG"):
            if not vals:
                return make_literal("0", XSD.integer)
            total = vals[0]
            V.numeric_value(total)
            for v in vals[1:]:
                total = V.arithmetic("+", total, v)
            if name == "SUM":
                return total
            return V.arithmetic("/", total, make_literal(str(len(vals)), XSD.integer))
        if name in ("MIN", "MAX"):
            if not vals:
                raise ExprError("MIN/MAX of empty group")
            pick = min if name == "MIN" else max
            return pick(vals, key=V.OrderKey)
        if name == "SAMPLE":
            if not vals:
                raise ExprError("SAMPLE of empty group")
            return vals[0]
        if name == "GROUP_CONCAT":
            return make_literal(agg.separator.join(_lexical(v) for v in vals))
        raise ExprError(f"unknown aggregate {name}")

    def call(self, e: ast.Call, mu: Row, group) -> Term:
        name = e.name
        if name == "BOUND":
            arg = e.args[0] if e.args else None
            if not isinstance(arg, ast.Var):
                raise ExprError("BOUND needs a variable")
            return V.boolean(mu.get(arg.name) is not None)
        if name == "IF":
            cond = V.ebv(self.expr(e.args[0], mu, group))
            return self.expr(e.args[1] if cond else e.args[2], mu, group)
        if name == "COALESCE":
            for arg in e.args:
                try:
                    return self.expr(arg, mu, group)
                except ExprError:
                    continue
            raise ExprError("COALESCE found no value")
        if name == "RAND":
            return V.make_number(self.ctx.rand(), 2)
        if name == "NOW":
            return self.ctx.now()
        args = [self.expr(a, mu, group) for a in e.args]
        fn = _FUNCTIONS.get(name)
        if fn is None:
            cast = _CASTS.get(name)
            if cast is None:
                raise ExprError(f"unsupported function {name}")
            if len(args) != 1:
                raise ExprError("cast takes one argument")
            return cast(args[0])
        try:
            return fn(*args)
        except TypeError as exc:
            raise ExprError(f"bad arguments to {name}: {exc}")


def _has_aggregate(query: ast.Query) -> bool:
    exprs = [expr for _n, expr in (query.projection or []) if expr is not None]
    exprs += list(query.having)
    return any(_contains_aggregate(x) for x in exprs)


def _contains_aggregate(e) -> bool:
    if isinstance(e, ast.Aggregate):
        return True
    if isinstance(e, ast.BinOp):
        return _contains_aggregate(e.left) or _contains_aggregate(e.right)
    if isinstance(e, ast.UnaryOp):
        return _contains_aggregate(e.arg)
    if isinstance(e, ast.Call):
        return any(_contains_aggregate(a) for a in e.args)
    if isinstance(e, ast.InList):
        return _contains_aggregate(e.expr) or any(_contains_aggregate(a) for a in e.options)
    return False


def values_rows(node: ast.ValuesNode) -> list[Row]:
    rows = []
    for tup in node.rows:
        rows.append({v: t for v, t in zip(node.variables, tup) if t is not None})
    return rows


def pattern_variables(node) -> list[str]:
    """Visible variable names of a pattern in order of first appearance."""
    seen: dict[str, None] = {}

    def add(t):
        if isinstance(t, ast.Var) and not t.hidden:
            seen.setdefault(t.name, None)

    def walk(n):
        if isinstance(n, ast.Group):
            for el in n.elements:
                walk(el)
        elif isinstance(n, ast.BGP):
            for tp in n.triples:
                add(tp.s)
                add(tp.p)
                add(tp.o)
        elif isinstance(n, ast.GraphNode):
            add(n.name)
            walk(n.pattern)
        elif isinstance(n, (ast.OptionalNode,)):
            walk(n.pattern)
        elif isinstance(n, ast.UnionNode):
            for alt in n.alternatives:
                walk(alt)
        elif isinstance(n, ast.ValuesNode):
            for v in n.variables:
                seen.setdefault(v, None)
        elif isinstance(n, ast.BindNode):
            seen.setdefault(n.var, None)
        elif isinstance(n, ast.SubSelect):
            for v in projected_names(n.query):
                seen.setdefault(v, None)
        elif isinstance(n, ast.ServiceNode):
            for v in n.variables:
                seen.setdefault(v, None)

    walk(node)
    return list(seen)


def projected_names(query: ast.Query) -> list[str]:
    if query.projection is not None:
        return [name for name, _e in query.projection]
    names = pattern_variables(query.where) if query.where is not None else []
    if query.values is not None:
        names += [v for v in query.values.variables if v not in names]
    return names


def evaluate_local(query: ast.Query, ctx: EvalContext) -> ResultsDocument:
    ev = Evaluator(ctx)
    if query.form == "ask":
        rows = ev.where_rows(query, ctx.default_graph)
        start = query.offset or 0
        end = None if query.limit is None else start + query.limit
        return ResultsDocument.ask(bool(rows[start:end]))
    if query.form == "select":
        return ResultsDocument.select(projected_names(query), ev.select_rows(query))
    raise EvaluationError(f"cannot evaluate a {query.form} form as a query")


def where_solutions(query: ast.Query, ctx: EvalContext) -> list[Row]:
    """Every WHERE solution of a query, with hidden variables stripped."""
    rows = Evaluator(ctx).where_rows(query, ctx.default_graph)
    return [{k: v for k, v in mu.items() if not k.startswith("#")} for mu in rows]


# --- builtin functions ---------------------------------------------------------

def _lexical(t: Term) -> str:
    if t.kind == BLANK:
        raise ExprError("blank node has no string form")
    return t.value


def _str(t):
    return make_literal(_lexical(t))


def _lang(t):
    if t.kind != LITERAL:
        raise ExprError("LANG of non-literal")
    return make_literal(t.language or "")


def _datatype(t):
    if t.kind != LITERAL:
        raise ExprError("DATATYPE of non-literal")
    return Term(IRI, t.datatype or XSD_STRING)


def _string_arg(t: Term) -> Term:
    if not V.string_like(t):
        raise ExprError("string expected")
    return t


def _same_kind(src: Term, value: str) -> Term:
    if src.language:
        return make_literal(value, language=src.language)
    return make_literal(value)


def _compatible_args(a: Term, b: Term):
    _string_arg(a)
    _string_arg(b)
    if b.language and a.language != b.language:
        raise ExprError("incompatible language tags")


def _contains(a, b):
    _compatible_args(a, b)
    return V.boolean(b.value in a.value)


def _strstarts(a, b):
    _compatible_args(a, b)
    return V.boolean(a.value.startswith(b.value))


def _strends(a, b):
    _compatible_args(a, b)
    return V.boolean(a.value.endswith(b.value))


def _strbefore(a, b):
    _compatible_args(a, b)
    idx = a.value.find(b.value)
    if idx < 0:
        return make_literal("")
    return _same_kind(a, a.value[:idx])


def _strafter(a, b):
    _compatible_args(a, b)
    idx = a.value.find(b.value)
    if idx < 0:
        return make_literal("")
    return _same_kind(a, a.value[idx + len(b.value):])


def _concat(*args):
    for a in args:
        _string_arg(a)
    langs = {a.language for a in args}
    value = "".join(a.value for a in args)
    if len(langs) == 1 and None not in langs:
        return make_literal(value, language=langs.pop())
    return make_literal(value)


def _regex_flags(flags: str) -> int:
    out = 0
    for ch in flags:
        if ch == "i":
            out |= re.I
        elif ch == "s":
            out |= re.S
        elif ch == "m":
            out |= re.M
        elif ch == "x":
            out |= re.X
        else:
            raise ExprError(f"unknown regex flag {ch}")
    return out


def _regex(text, pattern, flags=None):
    _string_arg(text)
    try:
        rx = re.compile(pattern.value, _regex_flags(flags.value if flags else ""))
    except re.error as exc:
        raise ExprError(str(exc))
    return V.boolean(rx.search(text.value) is not None)


def _replace(text, pattern, repl, flags=None):
    _string_arg(text)
    try:
        rx = re.compile(pattern.value, _regex_flags(flags.value if flags else ""))
        replacement = re.sub(r"\$(\d)", r"\\\1", repl.value)
        return _same_kind(text, rx.sub(replacement, text.value))
    except re.error as exc:
        raise ExprError(str(exc))


def _substr(text, start, length=None):
    _string_arg(text)
    s = V.numeric_value(start)
    begin = int(round(float(s))) - 1
    if length is None:
        end = len(text.value)
    else:
        end = begin + int(round(float(V.numeric_value(length))))
    begin_c = max(begin, 0)
    return _same_kind(text, text.value[begin_c:max(end, begin_c)])


def _round_like(fn):
    def inner(t):
        x = V.numeric_value(t)
        kind = V._rank(x)
        if kind == 0:
            return t
        if kind == 1:
            return V.make_number(fn(Decimal(x)), 1)
        return V.make_number(float(fn(x)) if math.isfinite(x) else x, 2)
    return inner


def _round_half_up(x):
    if isinstance(x, Decimal):
        return (x + Decimal("0.5")).to_integral_value(rounding=ROUND_FLOOR)
    return math.floor(x + 0.5)


def _abs(t):
    x = V.numeric_value(t)
    return V.make_number(abs(x), V._rank(x))


def _dt_part(getter):
    def inner(t):
        if not V.is_datetime(t):
            raise ExprError("dateTime expected")
        return getter(V.datetime_value(t), t)
    return inner


def _seconds(dt, t):
    frac = Decimal(dt.microsecond) / Decimal(1000000)
    return V.make_number(Decimal(dt.second) + frac, 1)


def _hash(algo):
    def inner(t):
        _string_arg(t)
        return make_literal(hashlib.new(algo, t.value.encode("utf-8")).hexdigest())
    return inner


def _iri(t):
    if t.kind == IRI:
        return t
    if not V.is_string(t):
        raise ExprError("IRI needs a simple literal")
    return Term(IRI, t.value)


def _bnode(t=None):
    if t is None:
        return Term(BLANK, "f" + uuid.uuid4().hex)
    return Term(BLANK, "f" + hashlib.sha256(_lexical(t).encode("utf-8")).hexdigest()[:16])


def _strlang(a, b):
    if not V.is_string(a):
        raise ExprError("STRLANG needs a simple literal")
    return make_literal(a.value, language=b.value)


def _strdt(a, b):
    if not V.is_string(a) or b.kind != IRI:
        raise ExprError("STRDT needs a simple literal and an IRI")
    return make_literal(a.value, b.value)


def _langmatches(tag, rng):
    t = tag.value.lower()
    r = rng.value.lower()
    if r == "*":
        return V.boolean(t != "")
    return V.boolean(t == r or t.startswith(r + "-"))


_FUNCTIONS = {
    "STR": _str,
    "LANG": _lang,
    "LANGMATCHES": _langmatches,
    "DATATYPE": _datatype,
    "IRI": _iri,
    "URI": _iri,
    "BNODE": _bnode,
    "ABS": _abs,
    "CEIL": _round_like(math.ceil),
    "FLOOR": _round_like(math.floor),
    "ROUND": _round_like(_round_half_up),
    "CONCAT": _concat,
    "STRLEN": lambda t: make_literal(str(len(_string_arg(t).value)), XSD.integer),
    "UCASE": lambda t: _same_kind(_string_arg(t), t.value.upper()),
    "LCASE": lambda t: _same_kind(_string_arg(t), t.value.lower()),
    "ENCODE_FOR_URI": lambda t: make_literal(quote(_string_arg(t).value, safe="-_.~")),
    "CONTAINS": _contains,
    "STRSTARTS": _strstarts,
    "STRENDS": _strends,
    "STRBEFORE": _strbefore,
    "STRAFTER": _strafter,
    "YEAR": _dt_part(lambda d, t: V.make_number(d.year, 0)),
    "MONTH": _dt_part(lambda d, t: V.make_number(d.month, 0)),
    "DAY": _dt_part(lambda d, t: V.make_number(d.day, 0)),
    "HOURS": _dt_part(lambda d, t: V.make_number(d.hour, 0)),
    "MINUTES": _dt_part(lambda d, t: V.make_number(d.minute, 0)),
    "SECONDS": _dt_part(_seconds),
    "UUID": lambda: Term(IRI, "urn:uuid:" + str(uuid.uuid4())),
    "STRUUID": lambda: make_literal(str(uuid.uuid4())),
    "MD5": _hash("md5"),
    "SHA1": _hash("sha1"),
    "SHA256": _hash("sha256"),
    "SHA384": _hash("sha384"),
    "SHA512": _hash("sha512"),
    "STRLANG": _strlang,
    "STRDT": _strdt,
    "SAMETERM": lambda a, b: V.boolean(a == b),
    "ISIRI": lambda t: V.boolean(t.kind == IRI),
    "ISURI": lambda t: V.boolean(t.kind == IRI),
    "ISBLANK": lambda t: V.boolean(t.kind == BLANK),
    "ISLITERAL": lambda t: V.boolean(t.kind == LITERAL),
    "ISNUMERIC": lambda t: V.boolean(V.is_numeric(t) and _well_formed_number(t)),
    "REGEX": _regex,
    "REPLACE": _replace,
    "SUBSTR": _substr,
}


def _well_formed_number(t: Term) -> bool:
    try:
        V.numeric_value(t)
        return True
    except ExprError:
        return False


def _cast_string(t):
    return make_literal(_lexical(t))


def _cast_numeric(dt, kind):
    def inner(t):
        if t.kind != LITERAL:
            raise ExprError("cannot cast non-literal")
        if V.is_numeric(t):
            x = V.numeric_value(t)
        elif t.datatype == XSD.boolean:
            x = 1 if V.ebv(t) else 0
        else:
            text = t.value.strip()
            try:
                if kind == 0:
                    if not re.match(r"^[+-]?[0-9]+$", text):
                        raise ExprError("not an integer")
                    x = int(text)
                elif kind == 1:
                    if not re.match(r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)$", text):
                        raise ExprError("not a decimal")
                    x = Decimal(text)
                else:
                    x = float(text.replace("INF", "inf"))
            except ValueError:
                raise ExprError("not a number")
        try:
            if kind == 0:
                if isinstance(x, float) and not math.isfinite(x):
                    raise ExprError("non-finite integer")
                return make_literal(str(int(x)), dt)
            if kind == 1:
                if isinstance(x, float) and not math.isfinite(x):
                    raise ExprError("non-finite decimal")
                return make_literal(V.decimal_lexical(Decimal(str(x)) if isinstance(x, float) else Decimal(x)), dt)
            return make_literal(V.double_lexical(float(x)), dt)
        except (ValueError, ArithmeticError) as exc:
            raise ExprError(str(exc))
    return inner


def _cast_boolean(t):
    if t.kind != LITERAL:
        raise ExprError("cannot cast non-literal")
    if V.is_numeric(t):
        return V.boolean(V.ebv(t))
    if t.value in ("true", "1"):
        return V.TRUE
    if t.value in ("false", "0"):
        return V.FALSE
    raise ExprError("not a boolean")


def _cast_datetime(t):
    if t.kind != LITERAL:
        raise ExprError("cannot cast non-literal")
    out = make_literal(t.value, XSD.dateTime)
    V.datetime_value(out)
    return out


_CASTS = {
    XSD.string: _cast_string,
    XSD.integer: _cast_numeric(XSD.integer, 0),
    XSD.int: _cast_numeric(XSD.int, 0),
    XSD.decimal: _cast_numeric(XSD.decimal, 1),
    XSD.double: _cast_numeric(XSD.double, 2),
    XSD.float: _cast_numeric(XSD.float, 2),
    XSD.boolean: _cast_boolean,
    XSD.dateTime: _cast_datetime,
}
