"""Entry points: evaluate queries and execute INSERT updates, federating when needed."""

from __future__ import annotations

import logging
from typing import Callable, Iterable, Optional, Union

from kgindex.rdf.model import (
    BLANK,
    DEFAULT_GRAPH,
    IRI,
    LITERAL,
    Dataset,
    Quad,
    Term,
    UnsalvageableIRI,
    sanitize_iri,
    skolemize,
)
from kgindex.rdf.results import ResultsDocument
from kgindex.sparql import ast
from kgindex.sparql.evaluator import EvalContext, EvaluationError, evaluate_local, where_solutions
from kgindex.sparql.federation import FederatedPlan, rewrite_service
from kgindex.sparql.parser import compile_query

log = logging.getLogger("kgindex.sparql")

# (endpoint IRI, query text) -> ResultsDocument; raises RemoteQueryError on failure
RemoteExecutor = Callable[[str, str], ResultsDocument]
TargetPolicy = Union[Term, Callable[[tuple], Iterable[Term]]]


class RemoteQueryError(RuntimeError):
    def __init__(self, message: str, response=None):
        super().__init__(message)
        self.response = response


class UpdateAborted(RuntimeError):
    def __init__(self, cause: Exception):
        super().__init__(f"update aborted: {cause}")
        self.cause = cause


def _as_query(query: Union[str, ast.Query], prefixes: Optional[dict]) -> ast.Query:
    if isinstance(query, str):
        return compile_query(query, prefixes)
    return query


def _context(ds: Dataset, default_graph, rand, now) -> EvalContext:
    ctx = EvalContext(ds, default_graph)
    if rand is not None:
        ctx.rand = rand
    if now is not None:
        ctx.now = now
    return ctx


def fetch_remote(plan: FederatedPlan, remote: Optional[RemoteExecutor]) -> Optional[list[dict]]:
    """Remote rows for a federated plan (``None`` when a SILENT service failed)."""
    if remote is None:
        raise EvaluationError("SERVICE requires a remote executor")
    try:
        doc = remote(plan.endpoint, plan.remote_query)
    except RemoteQueryError:
        if plan.silent:
            return None
        raise
    if doc.form != "bindings":
        if plan.silent:
            return None
        raise RemoteQueryError("remote answered a SELECT with a boolean")
    return list(doc.solutions.rows)


def evaluate(query: Union[str, ast.Query], ds: Dataset, remote: Optional[RemoteExecutor] = None, *,
             default_graph=DEFAULT_GRAPH, prefixes: Optional[dict] = None, rand=None, now=None) -> ResultsDocument:
    """Evaluate an ASK or SELECT query; a SERVICE block is federated through ``remote``."""
    q = _as_query(query, prefixes)
    plan = rewrite_service(q)
    if plan.is_federated:
        q = plan.inject(fetch_remote(plan, remote))
    return evaluate_local(q, _context(ds, default_graph, rand, now))


def _targets(policy: TargetPolicy, triple: tuple) -> list[Term]:
    if isinstance(policy, Term):
        return [policy]
    return list(policy(triple))


def execute_update(query: Union[str, ast.Query], ds: Dataset, remote: Optional[RemoteExecutor] = None, *,
                   target: TargetPolicy = DEFAULT_GRAPH, default_graph=DEFAULT_GRAPH, scope: str = "",
                   prefixes: Optional[dict] = None, warnings: Optional[list] = None,
                   rand=None, now=None) -> set[Quad]:
    """Run INSERT DATA or INSERT ... WHERE and return exactly the quads that were new.

    Blank nodes from remote answers and from the template are replaced by
    skolem IRIs derived from ``scope``. Triples whose IRIs cannot be
    sanitized are skipped and reported through ``warnings``.
    """
    q = _as_query(query, prefixes)
    if q.form not in ("insert-data", "insert-where"):
        raise EvaluationError(f"not an update: {q.form}")

    def warn(message: str):
        log.warning(message)
        if warnings is not None:
            warnings.append(message)

    if q.form == "insert-data":
        rows = [{}]
        federated = False
    else:
        plan = rewrite_service(q)
        federated = plan.is_federated
        where_q = q
        if federated:
            try:
                where_q = plan.inject(fetch_remote(plan, remote))
            except (RemoteQueryError, EvaluationError) as exc:
                raise UpdateAborted(exc)
        rows = where_solutions(where_q, _context(ds, default_graph, rand, now))

    quads = []
    for index, row in enumerate(rows):
        minted: dict[str, Term] = {}

        def inst(t):
            if isinstance(t, ast.Var):
                value = row.get(t.name)
                if value is None:
                    return None
                if value.kind == BLANK and federated:
                    return skolemize("remote:" + value.value, scope)
                return value
            if t.kind == BLANK:
                if t.value not in minted:
                    label = t.value if q.form == "insert-data" else f"{t.value}#{index}"
                    minted[t.value] = skolemize("template:" + label, scope)
                return minted[t.value]
            return t

        for qp in q.template:
            s, p, o = inst(qp.s), inst(qp.p), inst(qp.o)
            if s is None or p is None or o is None:
                continue
            if s.kind == LITERAL or p.kind != IRI:
                continue
            try:
                s, p, o = (_clean(t) for t in (s, p, o))
            except UnsalvageableIRI as exc:
                warn(f"skipped triple with unusable IRI: {exc}")
                continue
            if qp.graph is not None:
                g = inst(qp.graph)
                if g is None or g.kind != IRI:
                    continue
                graphs = [g]
            else:
                graphs = _targets(target, (s, p, o))
            for g in graphs:
                quads.append(Quad(s, p, o, g))
    return ds.add_all(quads)


def _clean(t: Term) -> Term:
    if t.kind == IRI:
        return sanitize_iri(t.value)
    return t
