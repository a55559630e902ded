"""Syntax tree for the supported SPARQL forms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

from kgindex.rdf.model import Term


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def hidden(self) -> bool:
        """Blank nodes in patterns become variables that never show up in results."""
        return self.name.startswith("#")

    def __str__(self) -> str:
        return "?" + self.name


TermOrVar = Union[Term, Var]


# --- expressions ---------------------------------------------------------

@dataclass(frozen=True)
class BinOp:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class UnaryOp:
    op: str
    arg: Any


@dataclass(frozen=True)
class Call:
    name: str  # upper-case builtin name or function IRI
    args: tuple = ()


@dataclass(frozen=True)
class InList:
    expr: Any
    options: tuple
    negated: bool = False


@dataclass(frozen=True)
class Exists:
    pattern: "Group"
    negated: bool = False


@dataclass(frozen=True)
class Aggregate:
    name: str  # COUNT SUM AVG MIN MAX SAMPLE GROUP_CONCAT
    arg: Any  # expression or "*"
    distinct: bool = False
    separator: str = " "


# --- graph patterns ------------------------------------------------------

@dataclass
class TriplePattern:
    s: TermOrVar
    p: TermOrVar
    o: TermOrVar


@dataclass
class BGP:
    triples: list[TriplePattern] = field(default_factory=list)


@dataclass
class GraphNode:
    name: TermOrVar
    pattern: "Group"


@dataclass
class ServiceNode:
    endpoint: TermOrVar
    text: str  # verbatim inner text, braces excluded
    variables: list[str]
    prefixes_used: list[str]
    pattern: Optional["Group"] = None
    silent: bool = False
    notes: list = field(default_factory=list)


@dataclass
class ValuesNode:
    variables: list[str]
    rows: list[tuple]  # tuples of Term or None (UNDEF)


@dataclass
class BindNode:
    expr: Any
    var: str


@dataclass
class FilterNode:
    expr: Any
    text: str = ""


@dataclass
class OptionalNode:
    pattern: "Group"


@dataclass
class UnionNode:
    alternatives: list["Group"]


@dataclass
class MinusNode:
    pattern: "Group"


@dataclass
class SubSelect:
    query: "Query"


@dataclass
class Group:
    elements: list = field(default_factory=list)


# --- queries -------------------------------------------------------------

@dataclass
class QuadPattern:
    s: TermOrVar
    p: TermOrVar
    o: TermOrVar
    graph: Optional[TermOrVar] = None  # None: caller-designated target graph


@dataclass
class Query:
    form: str  # ask | select | insert-where | insert-data
    where: Optional[Group] = None
    projection: Optional[list[tuple[str, Any]]] = None  # None means SELECT *
    distinct: bool = False
    reduced: bool = False
    group_by: list = field(default_factory=list)  # (expr, alias or None)
    having: list = field(default_factory=list)
    order_by: list = field(default_factory=list)  # (expr, ascending)
    limit: Optional[int] = None
    offset: Optional[int] = None
    values: Optional[ValuesNode] = None
    template: list[QuadPattern] = field(default_factory=list)
    prefixes: dict[str, str] = field(default_factory=dict)
    base: Optional[str] = None
    text: str = ""

    @property
    def is_update(self) -> bool:
        return self.form in ("insert-where", "insert-data")
