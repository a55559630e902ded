import json
import random

import pytest
from hypothesis import given, strategies as st

from oracles import isomorphic, random_quads, random_triples, as_dataset

from kgindex.rdf import (
    DEFAULT_GRAPH,
    Dataset,
    InvalidLiteral,
    ProtocolError,
    Quad,
    RDFSyntaxError,
    ResultsDocument,
    Term,
    UnsalvageableIRI,
    is_skolem,
    load_nquads,
    load_trig,
    load_turtle,
    make_literal,
    parse_nquads,
    parse_sparql_results,
    parse_trig,
    parse_turtle,
    sanitize_iri,
    serialize_nquads,
    serialize_trig,
    serialize_turtle,
    skolemize,
    write_sparql_results,
)

XSD = "http://www.w3.org/2001/XMLSchema#"
EX = "http://example.org/"


def ex(n):
    return Term.iri(EX + n)


# --- model --------------------------------------------------------------------------

def test_dataset_match_by_any_position():
    ds = Dataset()
    a = Quad(ex("s"), ex("p"), ex("o"))
    b = Quad(ex("s"), ex("q"), make_literal("1"), ex("g"))
    assert ds.add(a) and ds.add(b)
    assert not ds.add(a)
    assert ds.match(s=ex("s")) == {a, b}
    assert ds.match(g=ex("g")) == {b}
    assert ds.match(p=ex("q"), o=make_literal("1")) == {b}
    assert ds.match(o=ex("missing")) == set()
    ds.discard(b)
    assert ds.graph_names() == {DEFAULT_GRAPH}
    assert len(ds) == 1


def test_default_and_named_graph_views():
    ds = Dataset([Quad(ex("s"), ex("p"), ex("o")), Quad(ex("s"), ex("p"), ex("o"), ex("g"))])
    assert ds.default_graph == {(ex("s"), ex("p"), ex("o"))}
    assert set(ds.named_graphs) == {ex("g")}


def test_literal_forms():
    assert make_literal("x").datatype == XSD + "string"
    lang = make_literal("chat", language="fr")
    assert lang.datatype.endswith("#langString") and lang.language == "fr"
    assert make_literal("01", XSD + "integer").value == "01"  # kept verbatim
    with pytest.raises(InvalidLiteral):
        make_literal("x", XSD + "string", "en")
    with pytest.raises(InvalidLiteral):
        make_literal("x", language="")


def test_sanitize_iri_percent_encodes():
    assert sanitize_iri("http://x.org/a b").value == "http://x.org/a%20b"
    assert sanitize_iri("http://x.org/{q}").value == "http://x.org/%7Bq%7D"
    with pytest.raises(UnsalvageableIRI):
        sanitize_iri("no-scheme/path")
    with pytest.raises(UnsalvageableIRI):
        sanitize_iri("")


def test_skolem_iris_are_deterministic_and_scoped():
    a = skolemize("b0", "http://e1|rule")
    assert a == skolemize("b0", "http://e1|rule")
    assert a != skolemize("b0", "http://e2|rule")
    assert is_skolem(a) and not is_skolem(ex("a"))


# --- turtle ---------------------------------------------------------------------

def test_turtle_core_syntax():
    text = """@prefix ex: <http://example.org/> .
    @base <http://base.example/dir/> .
    <rel> ex:p ex:o , "two"@en ; ex:q 1, 2.5, 1e3, true .
    _:b ex:list ( ex:a ex:b ) .
    [ ex:inner "v" ] ex:p ex:o .
    ex:s a ex:Class ; ex:long '''multi
line''' ."""
    g = load_turtle(text)
    subjects = {s for s, p, o in g}
    assert Term.iri("http://base.example/dir/rel") in subjects
    objects = {o for s, p, o in g}
    assert make_literal("1", XSD + "integer") in objects
    assert make_literal("2.5", XSD + "decimal") in objects
    assert make_literal("1e3", XSD + "double") in objects
    assert make_literal("true", XSD + "boolean") in objects
    assert make_literal("multi\nline") in objects
    assert (ex("s"), Term.iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type"), ex("Class")) in g
    firsts = [o for s, p, o in g if p.value.endswith("#first")]
    assert sorted(t.value for t in firsts) == [EX + "a", EX + "b"]


def test_turtle_relative_iri_resolution():
    g = load_turtle("<../up> <p> <#frag> .", base="http://h.example/a/b/c")
    (s, p, o), = g
    assert s.value == "http://h.example/a/up"
    assert p.value == "http://h.example/a/b/p"
    assert o.value == "http://h.example/a/b/c#frag"


def test_turtle_errors_carry_positions():
    result = parse_turtle("@prefix ex: <http://example.org/> .\nex:s ex:p .\n")
    assert not result.ok
    d = result.diagnostics[0]
    assert d.severity == "error" and d.line == 2
    with pytest.raises(RDFSyntaxError):
        load_turtle("ex:s ex:p ex:o .")  # undeclared prefix


def test_trig_named_graphs():
    ds = load_trig("""@prefix ex: <http://example.org/> .
    ex:s ex:p ex:o .
    ex:g { ex:s ex:p ex:o2 }
    GRAPH ex:h { ex:s ex:p ex:o3 . }""")
    assert ds.graph_names() == {DEFAULT_GRAPH, ex("g"), ex("h")}
    assert ds.match(g=ex("h"))


# --- n-quads --------------------------------------------------------------------------

def test_nquads_escapes_and_default_graph():
    text = ('<http://example.org/s> <http://example.org/p> "a\\"b\\nc\\u00e9" .\n'
            '<http://example.org/s> <http://example.org/p> _:x <http://example.org/g> .\n')
    ds = load_nquads(text)
    assert make_literal('a"b\ncé') in {q.o for q in ds.match(g=DEFAULT_GRAPH)}
    assert ds.match(g=ex("g"))
    assert isomorphic(ds.quads(), load_nquads(serialize_nquads(ds)).quads())


def test_nquads_reports_bad_line():
    result = parse_nquads('<http://e/s> <http://e/p> "x" .\n<http://e/s> "p" <http://e/o> .\n')
    assert not result.ok
    assert result.diagnostics[0].line == 2


def test_serializers_are_deterministic():
    rng = random.Random(11)
    quads = random_quads(rng, 20)
    assert serialize_nquads(as_dataset(quads)) == serialize_nquads(as_dataset(set(quads)))
    assert serialize_trig(as_dataset(quads)) == serialize_trig(as_dataset(list(quads)[::-1]))


# --- results JSON ------------------------------------------------------------------------

def test_results_json_round_trip():
    rows = [{"x": ex("a"), "y": make_literal("1", XSD + "integer")}, {"x": Term.blank("b1")},
            {"y": make_literal("hi", language="en")}]
    doc = ResultsDocument.select(["x", "y"], rows)
    back = parse_sparql_results(write_sparql_results(doc))
    assert back.variables == ["x", "y"]
    assert back.solutions.rows == rows
    assert parse_sparql_results(write_sparql_results(ResultsDocument.ask(True))).boolean is True


def test_results_json_rejects_malformed():
    with pytest.raises(ProtocolError):
        parse_sparql_results(b"{not json")
    with pytest.raises(ProtocolError):
        parse_sparql_results(json.dumps({"head": {}, "results": {"bindings": [{"x": {"type": "weird"}}]}}))


# --- properties -----------------------------------------------------------------------

@given(st.integers(min_value=0, max_value=10_000))
def test_turtle_round_trip_property(seed):
    triples = random_triples(random.Random(seed))
    assert isomorphic(triples, parse_turtle(serialize_turtle(triples)).value)


@given(st.integers(min_value=0, max_value=10_000))
def test_trig_and_nquads_round_trip_property(seed):
    quads = random_quads(random.Random(seed))
    ds = as_dataset(quads)
    assert isomorphic(quads, parse_trig(serialize_trig(ds)).value.quads())
    assert isomorphic(quads, parse_nquads(serialize_nquads(ds)).value.quads())


@given(st.text(max_size=80))
def test_parsers_never_raise_on_text(text):
    parse_turtle(text)
    parse_trig(text)
    parse_nquads(text)
