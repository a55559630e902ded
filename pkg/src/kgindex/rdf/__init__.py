"""RDF data model and concrete syntaxes."""

from kgindex.rdf.model import (
    BLANK,
    DEFAULT_GRAPH,
    IRI,
    LITERAL,
    Dataset,
    InvalidLiteral,
    Quad,
    Term,
    UnsalvageableIRI,
    dataset_match,
    is_skolem,
    make_literal,
    sanitize_iri,
    skolemize,
)
from kgindex.rdf.nquads import load_nquads, parse_nquads, serialize_nquads
from kgindex.rdf.results import (
    RESULTS_JSON,
    ProtocolError,
    ResultsDocument,
    SolutionSequence,
    parse_sparql_results,
    write_sparql_results,
)
from kgindex.rdf.turtle import (
    ParseDiagnostic,
    ParseResult,
    RDFSyntaxError,
    load_trig,
    load_turtle,
    parse_trig,
    parse_turtle,
)
from kgindex.rdf.writer import serialize_trig, serialize_turtle

__all__ = [name for name in dir() if not name.startswith("_")]
