import random
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from oracles import as_dataset, brute_force, random_bgp_query, random_store, result_bag

from kgindex.rdf import DEFAULT_GRAPH, Dataset, Quad, ResultsDocument, Term, is_skolem, load_trig, make_literal
from kgindex.sparql import (
    PaginationUnsupported,
    RemoteQueryError,
    SparqlSyntaxError,
    UnsupportedConstruct,
    UpdateAborted,
    compile_query,
    evaluate,
    execute_update,
    paginate,
    parse_query,
    rewrite_service,
)

XSD = "http://www.w3.org/2001/XMLSchema#"
EX = "http://example.org/"

DATA = load_trig("""@prefix ex: <http://example.org/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
ex:a ex:age 30 ; ex:name "Ann" ; ex:knows ex:b .
ex:b ex:age 25 ; ex:name "Bob"@en .
ex:c ex:age 41 .
ex:g1 { ex:a ex:in ex:g1 . }
ex:g2 { ex:b ex:in ex:g2 . ex:t ex:start "2024-01-01T00:00:00.000Z"^^xsd:dateTime ;
        ex:end "2024-01-01T00:00:01.500Z"^^xsd:dateTime . }
""")


def ex(n):
    return Term.iri(EX + n)


def select(text, ds=DATA, **kw):
    return evaluate("PREFIX ex: <http://example.org/> " + text, ds, **kw).solutions.rows


def values(rows, var):
    return sorted(r[var].value for r in rows if var in r)


# --- parser ---------------------------------------------------------------------

def test_parse_reports_position():
    result = parse_query("SELECT * WHERE { ?s ?p }")
    assert not result.ok
    assert result.diagnostics[0].line == 1 and result.diagnostics[0].column > 1


def test_unsupported_constructs_are_named():
    for text in ("SELECT * WHERE { ?s ex:p+ ?o }", "CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }",
                 "DELETE DATA { <http://e/s> <http://e/p> <http://e/o> }"):
        with pytest.raises(SparqlSyntaxError) as err:
            compile_query(text, {"ex": EX})
        assert "unsupported" in str(err.value) or isinstance(err.value, UnsupportedConstruct)


def test_undeclared_prefix_is_an_error():
    assert not parse_query("SELECT * WHERE { ?s nope:p ?o }").ok


# --- evaluation ------------------------------------------------------------------

def test_optional_union_minus_filter():
    rows = select("SELECT ?s ?n WHERE { ?s ex:age ?a OPTIONAL { ?s ex:name ?n } }")
    assert len(rows) == 3 and values(rows, "n") == ["Ann", "Bob"]
    rows = select("SELECT ?s WHERE { { ?s ex:knows ?x } UNION { ?x ex:knows ?s } }")
    assert values(rows, "s") == [EX + "a", EX + "b"]
    rows = evaluate(compile_query("PREFIX ex: <http://example.org/> SELECT ?s WHERE { ?s ex:age ?a "
                                  "MINUS { ?s ex:name ?n } }", extended=True), DATA).solutions.rows
    assert values(rows, "s") == [EX + "c"]
    with pytest.raises(UnsupportedConstruct):
        compile_query("SELECT ?s WHERE { ?s ?p ?a MINUS { ?s ?q ?n } }")
    rows = select("SELECT ?s WHERE { ?s ex:age ?a FILTER(?a > 26 && ?a < 40) }")
    assert values(rows, "s") == [EX + "a"]
    rows = evaluate(compile_query("PREFIX ex: <http://example.org/> SELECT ?s WHERE { ?s ex:age ?a "
                                  "FILTER NOT EXISTS { ?s ex:knows ?x } }", extended=True), DATA).solutions.rows
    assert values(rows, "s") == [EX + "b", EX + "c"]


def test_bind_values_and_functions():
    rows = select('SELECT ?s ?l WHERE { ?s ex:name ?n BIND(LCASE(STR(?n)) AS ?l) }')
    assert values(rows, "l") == ["ann", "bob"]
    rows = select("SELECT ?s WHERE { VALUES ?s { ex:a ex:c } ?s ex:age ?a }")
    assert values(rows, "s") == [EX + "a", EX + "c"]
    rows = select('SELECT ?s WHERE { ?s ex:name ?n FILTER(LANGMATCHES(LANG(?n), "en")) }')
    assert values(rows, "s") == [EX + "b"]
    rows = select('SELECT ?s WHERE { ?s ex:name ?n FILTER(REGEX(?n, "^a", "i")) }')
    assert values(rows, "s") == [EX + "a"]


def test_aggregates_group_by_and_order():
    rows = select("SELECT (COUNT(*) AS ?n) (AVG(?a) AS ?avg) (MAX(?a) AS ?m) WHERE { ?s ex:age ?a }")
    assert rows[0]["n"].value == "3"
    assert Decimal(rows[0]["avg"].value) == Decimal(96) / 3
    assert rows[0]["m"].value == "41"
    rows = select("SELECT ?s WHERE { ?s ex:age ?a } ORDER BY DESC(?a) LIMIT 2")
    assert [r["s"].value for r in rows] == [EX + "c", EX + "a"]
    rows = select("SELECT ?k (COUNT(?s) AS ?n) WHERE { ?s ?k ?o } GROUP BY ?k HAVING (COUNT(?s) > 2)")
    assert values(rows, "k") == [EX + "age"]


def test_subquery_and_graph_patterns():
    rows = select("SELECT ?s WHERE { { SELECT ?s WHERE { ?s ex:age ?a } ORDER BY ?a LIMIT 1 } }")
    assert values(rows, "s") == [EX + "b"]
    rows = select("SELECT ?g ?s WHERE { GRAPH ?g { ?s ex:in ?g } }")
    assert sorted((r["g"].value, r["s"].value) for r in rows) == [(EX + "g1", EX + "a"), (EX + "g2", EX + "b")]


def test_datetime_subtraction_gives_decimal_seconds():
    rows = select("SELECT ?d WHERE { GRAPH ex:g2 { ex:t ex:start ?a ; ex:end ?b } BIND(?b - ?a AS ?d) }")
    assert Decimal(rows[0]["d"].value) == Decimal("1.5")


def test_ask_and_rand_now_hooks():
    assert evaluate("ASK { FILTER(RAND() = RAND()) }", DATA, rand=lambda: 0.5).boolean is True
    fixed = make_literal("2024-01-01T00:00:00.000Z", XSD + "dateTime")
    assert evaluate("ASK { FILTER(NOW() = NOW()) }", DATA, now=lambda: fixed).boolean is True
    # the hook is called once per NOW(), which lets a mock model a drifting clock
    ticks = iter(["2024-01-01T00:00:00.000Z", "2024-01-01T00:00:00.001Z"])
    drifting = lambda: make_literal(next(ticks), XSD + "dateTime")
    assert evaluate("ASK { FILTER(NOW() = NOW()) }", DATA, now=drifting).boolean is False


def test_union_default_graph_option():
    from kgindex.sparql import UNION

    rows = evaluate("SELECT ?s WHERE { ?s <http://example.org/in> ?g }", DATA, default_graph=UNION).solutions.rows
    assert values(rows, "s") == [EX + "a", EX + "b"]


# --- federation ----------------------------------------------------------------------

SERVICE_QUERY = """PREFIX ex: <http://example.org/>
SELECT ?s ?n WHERE { ?s ex:age ?a SERVICE <http://remote.example/sparql> { ?s ex:label ?n . FILTER(?n != "x") } }"""


def test_rewrite_keeps_service_text_verbatim():
    plan = rewrite_service(compile_query(SERVICE_QUERY))
    assert plan.endpoint == "http://remote.example/sparql"
    assert '?s ex:label ?n . FILTER(?n != "x")' in plan.remote_query
    assert plan.remote_query.startswith("PREFIX ex: <http://example.org/>")
    assert set(plan.variables) == {"s", "n"}


def test_federated_join_and_silent_failure():
    remote = Dataset([Quad(ex("a"), ex("label"), make_literal("A")), Quad(ex("z"), ex("label"), make_literal("Z"))])
    rows = evaluate(SERVICE_QUERY, DATA, lambda url, text: evaluate(text, remote)).solutions.rows
    assert [(r["s"].value, r["n"].value) for r in rows] == [(EX + "a", "A")]

    def failing(url, text):
        raise RemoteQueryError("down")

    with pytest.raises(RemoteQueryError):
        evaluate(SERVICE_QUERY, DATA, failing)
    silent = SERVICE_QUERY.replace("SERVICE <", "SERVICE SILENT <")
    assert len(evaluate(silent, DATA, failing).solutions.rows) == 3


def test_multiple_services_rejected():
    text = "SELECT * WHERE { SERVICE <http://a/> { ?s ?p ?o } SERVICE <http://b/> { ?s ?p ?o } }"
    with pytest.raises(UnsupportedConstruct):
        rewrite_service(compile_query(text))


def test_pagination_texts():
    pages = paginate("SELECT ?s WHERE { ?s ?p ?o }", 10)
    assert next(pages) == "SELECT ?s WHERE { ?s ?p ?o } ORDER BY ?s LIMIT 10 OFFSET 0"
    assert next(pages).endswith("LIMIT 10 OFFSET 10")
    with pytest.raises(PaginationUnsupported):
        next(paginate("SELECT ?s WHERE { ?s ?p ?o } LIMIT 5", 10))
    with pytest.raises(PaginationUnsupported):
        next(paginate("ASK { ?s ?p ?o }", 10))


# --- updates -----------------------------------------------------------------------

def test_insert_data_and_where_return_new_quads_only():
    ds = DATA.copy()
    added = execute_update("INSERT DATA { <http://example.org/a> <http://example.org/age> 30 }", ds)
    assert added == set()
    added = execute_update("PREFIX ex: <http://example.org/> INSERT { ?s ex:adult true } WHERE { ?s ex:age ?a "
                           "FILTER(?a >= 30) }", ds, target=ex("out"))
    assert {q.s for q in added} == {ex("a"), ex("c")} and {q.g for q in added} == {ex("out")}


def test_blank_nodes_are_skolemized_per_scope():
    ds = Dataset()
    text = "INSERT DATA { _:x <http://example.org/p> 1 }"
    (q1,) = execute_update(text, ds, scope="e1|r")
    (q2,) = execute_update(text, Dataset(), scope="e1|r")
    (q3,) = execute_update(text, Dataset(), scope="e2|r")
    assert is_skolem(q1.s) and q1 == q2 and q1.s != q3.s


def test_target_policy_callable_and_remote_abort():
    ds = Dataset()
    added = execute_update("INSERT DATA { <http://example.org/s> <http://example.org/p> 1 }", ds,
                           target=lambda triple: [ex("g1"), ex("g2")])
    assert {q.g for q in added} == {ex("g1"), ex("g2")}

    def failing(url, text):
        raise RemoteQueryError("refused")

    with pytest.raises(UpdateAborted):
        execute_update("INSERT { ?s ?p ?o } WHERE { SERVICE <http://r/> { ?s ?p ?o } }", ds, failing)
    assert len(ds) == 2


def test_remote_blank_nodes_become_skolem_iris():
    def remote(url, text):
        return ResultsDocument.select(["s"], [{"s": Term.blank("r1")}])

    added = execute_update("INSERT { ?s <http://example.org/seen> true } WHERE { SERVICE <http://r/> { ?s ?p ?o } }",
                           Dataset(), remote, scope="http://r/|rule")
    assert all(is_skolem(q.s) for q in added) and len(added) == 1


# --- properties -----------------------------------------------------------------------

@given(st.integers(min_value=0, max_value=100_000))
def test_evaluator_matches_enumeration(seed):
    rng = random.Random(seed)
    ds = as_dataset(random_store(rng, 30))
    q = random_bgp_query(rng)
    assert result_bag(evaluate(q.text(), ds).solutions.rows) == brute_force(q, ds.quads())


@given(st.integers(min_value=0, max_value=100_000), st.integers(min_value=1, max_value=8))
def test_pages_partition_the_result(seed, size):
    rng = random.Random(seed)
    ds = as_dataset(random_store(rng, 30))
    q = random_bgp_query(rng)
    rows = []
    for page in paginate(q.text(), size):
        batch = evaluate(page, ds).solutions.rows
        assert len(batch) <= size
        rows.extend(batch)
        if len(batch) < size:
            break
    assert result_bag(rows) == result_bag(evaluate(q.text(), ds).solutions.rows)


@given(st.text(max_size=120))
def test_query_parser_never_raises(text):
    parse_query(text)
    parse_query("SELECT * WHERE { " + text + " }", extended=True)
