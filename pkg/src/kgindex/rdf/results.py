"""SPARQL 1.1 Query Results JSON format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from kgindex.namespaces import RDF_LANGSTRING, XSD_STRING
from kgindex.rdf.model import BLANK, IRI, Term, make_literal

RESULTS_JSON = "application/sparql-results+json"


class ProtocolError(ValueError):
    """A remote answer that does not follow the results format."""

    def __init__(self, message: str, fragment: str = ""):
        self.fragment = fragment
        super().__init__(f"{message}: {fragment}" if fragment else message)


@dataclass
class SolutionSequence:
    variables: list[str] = field(default_factory=list)
    rows: list[dict[str, Term]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass
class ResultsDocument:
    form: str  # "boolean" | "bindings"
    boolean: Optional[bool] = None
    solutions: Optional[SolutionSequence] = None

    @classmethod
    def ask(cls, value: bool) -> "ResultsDocument":
        return cls("boolean", boolean=bool(value))

    @classmethod
    def select(cls, variables: list[str], rows: list[dict[str, Term]]) -> "ResultsDocument":
        return cls("bindings", solutions=SolutionSequence(list(variables), list(rows)))

    @property
    def variables(self) -> list[str]:
        return self.solutions.variables if self.solutions else []

    @property
    def truth(self) -> bool:
        """Boolean answer, or whether a bindings answer has at least one row."""
        if self.form == "boolean":
            return bool(self.boolean)
        return bool(self.solutions and self.solutions.rows)


def _fragment(obj) -> str:
    text = json.dumps(obj, ensure_ascii=False, default=str)
    return text if len(text) <= 200 else text[:197] + "..."


def _decode_term(obj) -> Term:
    if not isinstance(obj, dict) or not isinstance(obj.get("value"), str):
        raise ProtocolError("malformed RDF term", _fragment(obj))
    kind = obj.get("type")
    value = obj["value"]
    if kind == "uri":
        return Term(IRI, value)
    if kind == "bnode":
        if not value:
            raise ProtocolError("empty blank node label", _fragment(obj))
        return Term(BLANK, value)
    if kind in ("literal", "typed-literal"):
        lang = obj.get("xml:lang")
        dt = obj.get("datatype")
        if lang is not None and not isinstance(lang, str) or dt is not None and not isinstance(dt, str):
            raise ProtocolError("malformed literal", _fragment(obj))
        if lang:
            return make_literal(value, language=lang)
        if dt == RDF_LANGSTRING:
            raise ProtocolError("language string without language", _fragment(obj))
        return make_literal(value, dt)
    raise ProtocolError(f"unknown term kind {kind!r}", _fragment(obj))


def parse_sparql_results(data: bytes | str, media_type: str = RESULTS_JSON) -> ResultsDocument:
    base_type = media_type.split(";")[0].strip().lower()
    if base_type not in (RESULTS_JSON, "application/json"):
        raise ProtocolError(f"unsupported results media type {media_type!r}")
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError, RecursionError) as exc:
        raw = data if isinstance(data, str) else data[:200].decode("utf-8", "replace")
        raise ProtocolError(f"invalid JSON ({exc})", raw[:200])
    if not isinstance(doc, dict):
        raise ProtocolError("results document is not an object", _fragment(doc))
    if "boolean" in doc:
        if not isinstance(doc["boolean"], bool):
            raise ProtocolError("boolean answer is not true/false", _fragment(doc["boolean"]))
        return ResultsDocument.ask(doc["boolean"])
    head = doc.get("head")
    results = doc.get("results")
    if not isinstance(head, dict) or not isinstance(results, dict):
        raise ProtocolError("missing head or results", _fragment(doc))
    variables = head.get("vars", [])
    bindings = results.get("bindings")
    if not isinstance(variables, list) or not all(isinstance(v, str) for v in variables):
        raise ProtocolError("malformed head.vars", _fragment(head))
    if not isinstance(bindings, list):
        raise ProtocolError("malformed results.bindings", _fragment(results))
    rows = []
    for binding in bindings:
        if not isinstance(binding, dict):
            raise ProtocolError("malformed solution", _fragment(binding))
        row = {}
        for var, obj in binding.items():
            if var not in variables:
                raise ProtocolError(f"binding for undeclared variable {var!r}", _fragment(binding))
            row[var] = _decode_term(obj)
        rows.append(row)
    return ResultsDocument.select(variables, rows)


def _encode_term(term: Term) -> dict:
    if term.kind == IRI:
        return {"type": "uri", "value": term.value}
    if term.kind == BLANK:
        return {"type": "bnode", "value": term.value}
    out = {"type": "literal", "value": term.value}
    if term.language:
        out["xml:lang"] = term.language
    elif term.datatype and term.datatype != XSD_STRING:
        out["datatype"] = term.datatype
    return out


def write_sparql_results(doc: ResultsDocument) -> bytes:
    if doc.form == "boolean":
        payload = {"head": {}, "boolean": bool(doc.boolean)}
    else:
        sols = doc.solutions or SolutionSequence()
        payload = {
            "head": {"vars": list(sols.variables)},
            "results": {"bindings": [{k: _encode_term(v) for k, v in row.items()} for row in sols.rows]},
        }
    return json.dumps(payload, ensure_ascii=False).encode("utf-8")
