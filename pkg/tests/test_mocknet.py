import json
import random

import pytest
import requests

from kgindex.mocknet import (
    ACTIVITY_HEADER,
    CONSTANT,
    DRIFTING,
    FRESH,
    MockSpec,
    answer_query,
    load_fleet_spec,
    uses_feature,
)
from kgindex.rdf import load_trig, parse_sparql_results

DATA = "<http://e/s> <http://e/p> 1 . <http://e/g> { <http://e/s> <http://e/q> 2 . }"
DS = load_trig(DATA)


def ask(spec, text, seed=0):
    status, body = answer_query(spec, DS, text, random.Random(seed))
    return status, (parse_sparql_results(body) if status == 200 else body.decode())


def test_feature_scan_ignores_literals_and_comments():
    assert uses_feature("SELECT * { ?s ?p ?o MINUS { ?s ?p 1 } }", "minus")
    assert not uses_feature('SELECT * { ?s ?p "MINUS" }', "minus")
    assert not uses_feature("SELECT * { ?s ?p ?o } # VALUES here", "values")
    assert uses_feature("SELECT * { { SELECT ?s { ?s ?p ?o } } }", "subquery")
    assert uses_feature("SELECT (COUNT(*) AS ?n) { ?s ?p ?o }", "aggregates")


def test_rejected_feature_status():
    status, body = ask(MockSpec(features={"not-exists": 501}),
                       "ASK { ?s ?p ?o FILTER NOT EXISTS { ?s <http://e/x> ?o } }")
    assert status == 501 and "not-exists" in body
    status, _ = ask(MockSpec(features={"not-exists": 501}), 'ASK { ?s ?p "NOT EXISTS" }')
    assert status == 200


def test_named_graphs_need_a_graph_pattern():
    status, doc = ask(MockSpec(), "SELECT ?o WHERE { <http://e/s> ?p ?o }")
    assert [r["o"].value for r in doc.solutions.rows] == ["1"]
    status, doc = ask(MockSpec(), "SELECT ?o WHERE { GRAPH ?g { <http://e/s> ?p ?o } }")
    assert [r["o"].value for r in doc.solutions.rows] == ["2"]


def test_updates_and_garbage_are_refused():
    assert ask(MockSpec(), "INSERT DATA { <http://e/a> <http://e/b> <http://e/c> }")[0] == 400
    assert ask(MockSpec(), "SELECT WHERE")[0] == 400


def test_rand_modes():
    text = "ASK { FILTER(RAND() = RAND()) }"
    assert ask(MockSpec(rand_mode=CONSTANT), text)[1].boolean is True
    assert ask(MockSpec(rand_mode=FRESH), text)[1].boolean is False


def test_now_modes():
    text = "ASK { FILTER(NOW() = NOW()) }"
    assert ask(MockSpec(now_mode=CONSTANT), text)[1].boolean is True
    assert ask(MockSpec(now_mode=DRIFTING), text)[1].boolean is False


def test_http_behaviour_and_log(mocks, tmp_path):
    m = mocks(MockSpec(name="one", dataset=DATA, server_header="Mock/1.0"))
    r = requests.get(m.url, params={"query": "ASK { ?s ?p ?o }"}, headers={ACTIVITY_HEADER: "urn:a"}, timeout=5)
    assert r.status_code == 200 and r.headers["Server"] == "Mock/1.0"
    r = requests.post(m.url, data="INSERT DATA { <http://e/a> <http://e/b> 1 }",
                      headers={"Content-Type": "application/sparql-update"}, timeout=5)
    assert r.status_code == 400
    assert [(e.method, e.is_update, e.status) for e in m.log] == [("GET", False, 200), ("POST", True, 400)]
    assert m.log[0].activity == "urn:a"
    out = tmp_path / "log.jsonl"
    m.dump_log(out)
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["mock"] == "one" and rows[1]["is_update"] is True


def test_no_server_header_unless_configured(mocks):
    m = mocks(MockSpec(dataset=DATA))
    r = requests.get(m.url, params={"query": "ASK {}"}, timeout=5)
    assert "Server" not in r.headers


def test_reconfigure_changes_data(mocks):
    m = mocks(MockSpec(dataset=DATA))
    m.reconfigure(dataset="<http://e/x> <http://e/y> <http://e/z> .", server_header="Changed")
    r = requests.get(m.url, params={"query": "SELECT ?s WHERE { ?s ?p ?o }"}, timeout=5)
    assert parse_sparql_results(r.content).solutions.rows[0]["s"].value == "http://e/x"
    assert r.headers["Server"] == "Changed"


def test_down_mock_resets_after_logging(mocks):
    m = mocks(MockSpec(availability="down"))
    with pytest.raises(requests.ConnectionError):
        requests.get(m.url, params={"query": "ASK {}"}, timeout=5)
    assert len(m.log) == 1 and m.log[0].status is None


def test_fleet_spec_file(tmp_path):
    (tmp_path / "d.trig").write_text(DATA)
    (tmp_path / "fleet.ini").write_text("""[alpha]
dataset = d.trig
reject = minus:501, values  ; answered with errors
rand = constant-per-query
server = Virtuoso/7
seed = 3

[beta]
availability = down
latency = 0.5
fail-first = 2
""")
    a, b = load_fleet_spec(tmp_path / "fleet.ini")
    assert a.name == "alpha" and a.features == {"minus": 501, "values": 400}
    assert a.rand_mode == CONSTANT and a.server_header == "Virtuoso/7" and a.seed == 3
    assert "http://e/s" in a.dataset
    assert b.availability == "down" and b.latency == 0.5 and b.fail_first == 2 and b.server_header is None
