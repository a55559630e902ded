"""SPARQL subset: parsing, local evaluation, SERVICE federation and updates."""

from kgindex.sparql.ast import Query, Var
from kgindex.sparql.engine import (
    RemoteExecutor,
    RemoteQueryError,
    UpdateAborted,
    evaluate,
    execute_update,
    fetch_remote,
)
from kgindex.sparql.evaluator import UNION, EvalContext, EvaluationError
from kgindex.sparql.federation import FederatedPlan, PaginationUnsupported, paginate, prologue_for, rewrite_service
from kgindex.sparql.parser import (
    QueryParse,
    SparqlSyntaxError,
    UnsupportedConstruct,
    compile_query,
    find_services,
    parse_query,
)
from kgindex.sparql.values import ExprError

__all__ = [name for name in dir() if not name.startswith("_")]
