"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line before asserting."""

from __future__ import annotations

import random
import time
from collections import Counter
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path

import pytest

from oracles import (
    BgpQuery,
    as_dataset,
    brute_force,
    isomorphic,
    join_bags,
    naive_saturate,
    random_bgp_query,
    random_ontology_case,
    random_quads,
    random_store,
    random_triples,
    result_bag,
)

from kgindex import cli
from kgindex.indexer import (
    LOGS,
    PASSED,
    FAILED,
    Indexer,
    CampaignConfig,
    TraceRecord,
    run_augmentation,
    run_reasoning,
)
from kgindex.client import EndpointDescriptor
from kgindex.manifest import AUGMENTATION, EXTRACTION, load_rule_file, load_rule_tree, validate_rules
from kgindex.mocknet import CONSTANT, DRIFTING, FRESH, MockSpec, load_fleet_spec, spawn_fleet, stop_fleet
from kgindex.owlrl import load_ontology, saturate
from kgindex.rdf import (
    DEFAULT_GRAPH,
    Dataset,
    Quad,
    Term,
    load_nquads,
    load_trig,
    make_literal,
    parse_nquads,
    parse_trig,
    parse_turtle,
    serialize_nquads,
    serialize_trig,
    serialize_turtle,
)
from kgindex.reports import generate_reports, load_term_list
from kgindex.sparql import evaluate, paginate, parse_query

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"

KGI = "http://ns.kgindex.org/index#"
SD = "http://www.w3.org/ns/sparql-service-description#"
SPARQLES = "http://sparqles.ai.wu.ac.at/#"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
PROV = "http://www.w3.org/ns/prov#"
EARL = "http://www.w3.org/ns/earl#"
DCAT = "http://www.w3.org/ns/dcat#"
VOID = "http://rdfs.org/ns/void#"
DCTERMS = "http://purl.org/dc/terms/"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
SKOS = "http://www.w3.org/2004/02/skos/core#"
SH = "http://www.w3.org/ns/shacl#"
XSD = "http://www.w3.org/2001/XMLSchema#"

SIX_FEATURES = ["SELNOTEXISTS", "SELMINUS", "SELVALUES", "SELBIND", "SELSUBQ", "AGGCOUNT"]

# every mock spawned by this module, for the read-only check
SPAWNED: list = []


def verdict(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nacceptance criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def I(v: str) -> Term:
    return Term.iri(v)


def fleet(specs):
    handles = spawn_fleet(specs)
    SPAWNED.extend(handles)
    return handles


def registry(index: Dataset) -> dict[str, Term]:
    return {q.s.value: q.o for q in index.match(p=I(KGI + "indexGraph"))}


# --- 1. fixture rules end to end ------------------------------------------------------------------------

DESCRIPTION_DATA = f"""@prefix dcat: <{DCAT}> . @prefix void: <{VOID}> . @prefix dcterms: <{DCTERMS}> .
@prefix schema: <http://schema.org/> . @prefix xsd: <{XSD}> .
<http://data.example/d1> a void:Dataset ; dcterms:title "First" ; dcterms:created "2020-05-01"^^xsd:date .
<http://data.example/d2> a dcat:Dataset ; schema:dateCreated "2021-07-09"^^xsd:date .
<http://data.example/d3> a dcat:Dataset ; dcterms:title "No date" .
<http://data.example/other> a <http://data.example/Thing> ; dcterms:created "1999-01-01"^^xsd:date .
"""

DATE_PROPERTIES = [DCTERMS + "created", "http://schema.org/dateCreated", "http://purl.org/pav/createdOn",
                   PROV + "generatedAtTime"]


@pytest.fixture(scope="module")
def fixture_campaign():
    started = time.monotonic()
    tree = load_rule_tree(FIXTURES / "rules")
    handles = fleet([MockSpec(name="compliant", dataset=DESCRIPTION_DATA),
                     MockSpec(name="strict", dataset=DESCRIPTION_DATA, features={"not-exists": 400})])
    try:
        indexer = Indexer(CampaignConfig(timeout_s=5, backoff_s=0.05))
        index = indexer.run_extraction([EndpointDescriptor(h.url, timeout=5) for h in handles], tree[EXTRACTION])
        extraction = index.copy()
        augmentation = run_augmentation(tree[AUGMENTATION], index)
        run_reasoning(index, load_ontology(FIXTURES / "ontology" / "sparql11-compliance.ttl"))
    finally:
        stop_fleet(handles)
    return {
        "tree": tree, "handles": handles, "extraction": extraction, "augmentation": augmentation,
        "index": index, "seconds": time.monotonic() - started,
    }


def test_criterion_1_fixture_rules(fixture_campaign, capsys):
    started = time.monotonic()
    problems = []
    tree = fixture_campaign["tree"]
    entries = tree[EXTRACTION] + tree[AUGMENTATION]
    if len(entries) != 4:
        problems.append(f"expected 4 rule entries, got {len(entries)}")
    diagnostics = validate_rules(entries)
    if diagnostics:
        problems.append(f"diagnostics: {[str(d) for d in diagnostics]}")
    ontology = load_ontology(FIXTURES / "ontology" / "sparql11-compliance.ttl")
    if not ontology:
        problems.append("compliance ontology parsed to nothing")

    compliant, strict = fixture_campaign["handles"]
    index = fixture_campaign["index"]
    graphs = registry(index)
    g_ok, g_strict = graphs[compliant.url], graphs[strict.url]
    ds_type = I(DCAT + "Dataset")

    # dataset description: every dataset instance with all its properties
    source = load_trig(DESCRIPTION_DATA)
    for d in ("http://data.example/d1", "http://data.example/d2", "http://data.example/d3"):
        expected = {(I(d), p, o) for _s, p, o in source.triples(s=I(d))} | {(I(d), I(RDF_TYPE), ds_type)}
        got = {q.triple for q in fixture_campaign["extraction"].match(s=I(d), g=g_ok)}
        if got != expected:
            problems.append(f"description of {d}: {got ^ expected}")
    if index.match(s=I("http://data.example/other"), g=g_ok):
        problems.append("dataset rule copied a non-dataset resource")

    # NOT EXISTS probe: compliant vs rejecting
    feature = (I(SD + "feature"), I(SPARQLES + "SELNOTEXISTS"))
    if not index.match(s=I(compliant.url), p=feature[0], o=feature[1], g=g_ok):
        problems.append("probe missing SELNOTEXISTS on the compliant mock")
    if index.match(p=feature[0], g=g_strict):
        problems.append("probe recorded a feature on the rejecting mock")

    # creation dates: three new equivalent dates per dataset with a creation date
    delta = fixture_campaign["augmentation"].delta
    per_subject = Counter(q.s.value for q in delta if q.p.value in DATE_PROPERTIES)
    for g in (g_ok, g_strict):
        for d in ("http://data.example/d1", "http://data.example/d2"):
            n = sum(1 for q in delta.match(s=I(d), g=g) if q.p.value in DATE_PROPERTIES)
            if n != 3:
                problems.append(f"creation-date rule gave {n} date quads for {d} in {g.value}")
    if set(per_subject) != {"http://data.example/d1", "http://data.example/d2"}:
        problems.append(f"creation-date rule touched {sorted(per_subject)}")

    # execution-time average on hand-made traces: 250, 500 and 1125 ms passed, 9 s failed
    fixture = Dataset()
    ep = "http://timed.example/sparql"
    t0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
    for i, (ms, outcome) in enumerate([(250, PASSED), (500, PASSED), (1125, PASSED), (9000, FAILED)]):
        fixture.add_all(TraceRecord(f"http://timed.example/a{i}", "http://rule", ep, t0,
                                    t0 + timedelta(milliseconds=ms), outcome).quads())
    fixture.add(Quad(I(ep), I(KGI + "indexGraph"), I("http://timed.example/g")))
    fixture.add(Quad(I(ep), I(KGI + "status"), I(KGI + "Indexed")))
    report = run_augmentation(tree[AUGMENTATION], fixture)
    avg = [q.o for q in report.delta.match(p=I(KGI + "averageExecutionTime"))]
    if [(Decimal(t.value), t.datatype) for t in avg] != [(Decimal("0.625"), XSD + "decimal")]:
        problems.append(f"average on fixture traces: {avg}")

    # execution-time average on the campaign's own traces, recomputed with Decimal arithmetic
    for url, g in graphs.items():
        durations = []
        for q in fixture_campaign["extraction"].match(p=I(EARL + "subject"), o=I(url), g=LOGS):
            act = q.s
            result = next(iter(index.match(s=act, p=I(EARL + "result")))).o
            if not index.match(s=result, p=I(EARL + "outcome"), o=I(EARL + "passed")):
                continue
            start = _instant(index, act, PROV + "startedAtTime")
            end = _instant(index, act, PROV + "endedAtTime")
            durations.append(Decimal((end - start) // timedelta(milliseconds=1)) / 1000)
        got = [Decimal(q.o.value) for q in index.match(s=I(url), p=I(KGI + "averageExecutionTime"), g=g)]
        if got != [sum(durations) / len(durations)]:
            problems.append(f"average for {url}: {got} vs {durations}")

    # compliance ontology applied to the compliant mock
    types = {q.o.value for q in index.match(s=I(compliant.url), p=I(RDF_TYPE), g=g_ok)}
    if KGI + "SPARQL11Compliant" not in types:
        problems.append("compliance ontology did not classify the compliant mock")
    if not index.match(s=I(compliant.url), p=I(SD + "feature"), o=I(SD + "SPARQL11Query"), g=g_ok):
        problems.append("compliance ontology did not add sd:SPARQL11Query")
    if index.match(s=I(strict.url), p=I(RDF_TYPE), o=I(KGI + "SPARQL11Compliant")):
        problems.append("compliance ontology classified the rejecting mock")

    seconds = fixture_campaign["seconds"] + (time.monotonic() - started)
    if seconds >= 10:
        problems.append(f"runtime {seconds:.1f}s")
    verdict(capsys, 1, not problems, "; ".join(problems) or f"fixture rules end to end in {seconds:.2f}s")


def _instant(index: Dataset, act: Term, predicate: str) -> datetime:
    (q,) = index.match(s=act, p=I(predicate))
    return datetime.fromisoformat(q.o.value.replace("Z", "+00:00"))


# --- 2. fleet oracle ------------------------------------------------------------------

def _t(v: str) -> str:
    return v if v.startswith('"') else f"<{v}>"


DATASETS = {
    "dcat": [
        ("http://m.example/d1", RDF_TYPE, DCAT + "Dataset"), ("http://m.example/d1", DCTERMS + "title", '"A"'),
        ("http://m.example/d1", DCAT + "distribution", "http://m.example/dist1"),
        ("http://m.example/dist1", RDF_TYPE, DCAT + "Distribution"),
        ("http://m.example/dist1", DCAT + "accessURL", "http://m.example/f.csv"),
    ],
    "void": [
        ("http://m.example/v1", RDF_TYPE, VOID + "Dataset"), ("http://m.example/v1", VOID + "triples", '"10"^^<%sinteger>' % XSD),
        ("http://m.example/v1", VOID + "sparqlEndpoint", "http://m.example/sparql"),
        ("http://m.example/v1", RDFS + "label", '"v"'),
    ],
    "named": [
        ("http://m.example/c1", RDF_TYPE, DCAT + "Catalog"), ("http://m.example/c1", DCAT + "dataset", "http://m.example/n1"),
        ("http://m.example/n1", RDF_TYPE, DCAT + "Dataset", "http://m.example/graph"),
        ("http://m.example/n1", DCTERMS + "title", '"N"', "http://m.example/graph"),
    ],
    "rdfs": [
        ("http://m.example/r1", RDF_TYPE, RDFS + "Resource"), ("http://m.example/r1", RDF_TYPE, VOID + "Dataset"),
        ("http://m.example/r1", RDFS + "comment", '"c"'),
    ],
    "skos": [
        ("http://m.example/k1", RDF_TYPE, SKOS + "Concept"), ("http://m.example/k1", SKOS + "prefLabel", '"k"@en'),
        ("http://m.example/s1", RDF_TYPE, SH + "NodeShape"),
    ],
    "owl": [
        ("http://m.example/o1", RDF_TYPE, OWL + "Class"), ("http://m.example/o1", RDFS + "subClassOf", "http://m.example/o2"),
        ("http://m.example/p1", RDF_TYPE, OWL + "ObjectProperty"),
    ],
    "empty": [],
}

# name -> mock settings plus the expected classification
FLEET = {
    "m01": dict(data="dcat", rand=CONSTANT, now=CONSTANT, server="Virtuoso/07.20.3235", product="Virtuoso"),
    "m02": dict(data="void", reject={"not-exists": 400}, rand=FRESH, now=DRIFTING, server="Virtuoso/08.03.3330",
                product="Virtuoso"),
    "m03": dict(data="named", reject={"minus": 500}, rand=CONSTANT, now=DRIFTING, latency=0.2,
                server="Apache-Jena-Fuseki/4.10.0", product="Apache-Jena-Fuseki"),
    "m04": dict(data="rdfs", reject={"values": 400, "bind": 400}, rand=FRESH, server="GraphDB/10.4.1 RDF4J/4.3.8",
                product="GraphDB"),
    "m05": dict(data="skos", reject={"subquery": 400, "aggregates": 500}, product="(absent)"),
    "m06": dict(data="dcat", availability="down", server="Virtuoso/07.20.3235", available=False),
    "m07": dict(data="void", latency=4.0, server="Stardog/9.1.0", available=False),
    "m08": dict(data="dcat", fail_first=1, rand=CONSTANT, server="Stardog/9.1.0", product="Stardog"),
    "m09": dict(data="owl", fail_first=5, available=False),
    "m10": dict(data="owl", reject={"rand": 400, "now": 400}, server="Blazegraph", product="Blazegraph"),
    "m11": dict(data="void", reject={"exists": 400}, now=DRIFTING, server="Apache-Jena-Fuseki/3.17.0",
                product="Apache-Jena-Fuseki"),
    "m12": dict(data="empty", rand=CONSTANT, server="Virtuoso/07.20.3235", product="Virtuoso"),
}
TIMEOUT_S = 2.0
FEATURE_NEEDS = {"SELNOTEXISTS": {"not-exists", "exists"}, "SELMINUS": {"minus"}, "SELVALUES": {"values"},
                 "SELBIND": {"bind"}, "SELSUBQ": {"subquery"}, "AGGCOUNT": {"aggregates"}}
META = {"RDF": "http://www.w3.org/1999/02/22-rdf-syntax-ns#", "RDFS": RDFS, "OWL": OWL, "SKOS": SKOS, "SHACL": SH}


def _trig(triples) -> str:
    lines = []
    for t in triples:
        stmt = f"{_t(t[0])} {_t(t[1])} {_t(t[2])} ."
        lines.append(stmt if len(t) == 3 else f"{_t(t[3])} {{ {stmt} }}")
    return "\n".join(lines) + "\n"


def expected_profile(cfg: dict) -> dict:
    available = cfg.get("available", True)
    triples = DATASETS[cfg["data"]]
    rejected = set(cfg.get("reject", {}))
    features = {f for f, needs in FEATURE_NEEDS.items() if not needs & rejected}
    rand = None if "rand" in rejected else ("Same" if cfg.get("rand", FRESH) == CONSTANT else "Distinct")
    now = None if "now" in rejected else ("Drifting" if cfg.get("now", CONSTANT) == DRIFTING else "Constant")
    default_types = {t[2] for t in triples if len(t) == 3 and t[1] == RDF_TYPE}
    return {
        "available": available,
        "features": features,
        "compliant": features == set(SIX_FEATURES),
        "rand": rand,
        "now": now,
        "rdfs": "Present" if RDFS + "Resource" in default_types else "Absent",
        "server": cfg.get("server"),
        "classes": {t[2] for t in triples if t[1] == RDF_TYPE},
        "properties": {t[1] for t in triples},
        "datasets": {t[0] for t in triples if t[1] == RDF_TYPE and t[2] in (DCAT + "Dataset", VOID + "Dataset")},
    }


def observed_profile(index: Dataset, url: str, graph: Term) -> dict:
    def objects(p):
        return {q.o.value for q in index.match(s=I(url), p=I(p), g=graph)}

    status = {q.o.value for q in index.match(s=I(url), p=I(KGI + "status"))}
    features = {v[len(SPARQLES):] for v in objects(SD + "feature") if v.startswith(SPARQLES)}
    rand = {v[len(KGI):-len("RandValues")] for v in objects(KGI + "randBehavior")}
    now = {v[len(KGI):-len("Now")] for v in objects(KGI + "nowBehavior")}
    rdfs = {v[len(KGI + "RdfsResource"):] for v in objects(KGI + "rdfsResourceProbe")}
    servers = objects(KGI + "serverHeader")
    return {
        "available": status == {KGI + "Indexed"},
        "features": features,
        "compliant": KGI + "SPARQL11Compliant" in objects(RDF_TYPE)
        and SD + "SPARQL11Query" in objects(SD + "feature"),
        "rand": rand.pop() if len(rand) == 1 else (None if not rand else rand),
        "now": now.pop() if len(now) == 1 else (None if not now else now),
        "rdfs": rdfs.pop() if len(rdfs) == 1 else rdfs,
        "server": servers.pop() if len(servers) == 1 else (None if not servers else servers),
        "classes": objects(KGI + "observedClass"),
        "properties": objects(KGI + "observedProperty"),
        "datasets": {q.s.value for q in index.match(p=I(RDF_TYPE), o=I(DCAT + "Dataset"), g=graph)},
    }


def _csv(path: Path) -> dict[str, int]:
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    out = {}
    for line in lines:
        key, _, n = line.rpartition(",")
        out[key] = int(n)
    return out


@pytest.fixture(scope="module")
def fleet_campaign(tmp_path_factory):
    root = tmp_path_factory.mktemp("fleet")
    sections = []
    for name, cfg in FLEET.items():
        (root / f"{name}.trig").write_text(_trig(DATASETS[cfg["data"]]), encoding="utf-8")
        lines = [f"[{name}]", f"dataset = {name}.trig", f"seed = {int(name[1:])}"]
        if cfg.get("reject"):
            lines.append("reject = " + " ".join(f"{k}:{v}" for k, v in cfg["reject"].items()))
        for key, opt in (("rand", "rand"), ("now", "now"), ("latency", "latency"), ("fail_first", "fail-first"),
                         ("server", "server"), ("availability", "availability")):
            if key in cfg:
                lines.append(f"{opt} = {cfg[key]}")
        sections.append("\n".join(lines))
    spec_file = root / "fleet.ini"
    spec_file.write_text("\n\n".join(sections) + "\n", encoding="utf-8")
    specs = load_fleet_spec(spec_file)
    handles = fleet(specs)
    catalog = root / "catalog.txt"
    catalog.write_text("".join(h.url + "\n" for h in handles), encoding="utf-8")
    out = root / "out"
    started = time.monotonic()
    try:
        code = cli.main(["run-all", "--catalog", str(catalog), "--out", str(out), "--timeout-s", str(TIMEOUT_S),
                         "--retries", "1", "--backoff-s", "0.1", "--jobs", "12"])
    finally:
        stop_fleet(handles)
    seconds = time.monotonic() - started
    index = load_nquads((out / "index.nq").read_text(encoding="utf-8"))
    return {"handles": handles, "code": code, "out": out, "index": index, "seconds": seconds}


def test_criterion_2_fleet_oracle(fleet_campaign, capsys):
    index = fleet_campaign["index"]
    graphs = registry(index)
    mismatches = []
    expected_all = {}
    for h in fleet_campaign["handles"]:
        expected = expected_profile(FLEET[h.name])
        expected_all[h.name] = expected
        observed = observed_profile(index, h.url, graphs[h.url])
        keys = expected if expected["available"] else ["available"]
        if not expected["available"] and len(index.match(g=graphs[h.url])) != 0:
            mismatches.append(f"{h.name}: unavailable endpoint has an index graph")
        for key in keys:
            if expected[key] != observed[key]:
                mismatches.append(f"{h.name}.{key}: expected {expected[key]!r}, got {observed[key]!r}")

    live = [e for e in expected_all.values() if e["available"]]
    products = Counter(FLEET[n]["product"] for n, e in expected_all.items() if e["available"])
    reports = fleet_campaign["out"] / "reports"
    checks = {
        "class-usage.csv": Counter(c for e in live for c in e["classes"] if c in load_term_list("dcat-void-classes.txt")),
        "property-usage.csv": Counter(p for e in live for p in e["properties"]
                                      if p in load_term_list("dcat-void-properties.txt")),
        "server-headers.csv": products,
        "features.csv": Counter([SPARQLES + f for e in live for f in e["features"]]
                                + [SD + "SPARQL11Query" for e in live if e["compliant"]]),
    }
    meta = {label: 0 for label in META}
    none = 0
    for e in live:
        terms = (e["classes"] | e["properties"]) - {RDF_TYPE}
        hits = [label for label, ns in META.items() if any(t.startswith(ns) for t in terms)]
        for label in hits:
            meta[label] += 1
        none += not hits
    checks["meta-vocabularies.csv"] = Counter({**meta, "(none)": none})
    for name, expected in checks.items():
        got = _csv(reports / name)
        want = {k: v for k, v in expected.items() if v or name == "meta-vocabularies.csv"}
        if got != want:
            mismatches.append(f"{name}: expected {dict(want)}, got {got}")
    if fleet_campaign["code"] != 0:
        mismatches.append(f"run-all exit code {fleet_campaign['code']}")
    seconds = fleet_campaign["seconds"]
    ok = not mismatches and seconds < 60
    verdict(capsys, 2, ok, f"{len(FLEET)} mocks, {len(mismatches)} mismatches, run-all {seconds:.1f}s"
            + ("; " + "; ".join(mismatches) if mismatches else ""))


# --- 3. OWL RL ------------------------------------------------------------------------

def _classify(features: list[str], ontology: set) -> tuple[bool, bool]:
    ep = I("http://probe.example/sparql")
    graph = I("http://probe.example/graph")
    index = Dataset([Quad(ep, I(KGI + "indexGraph"), graph), Quad(ep, I(KGI + "status"), I(KGI + "Indexed"))])
    index.add_all(Quad(ep, I(SD + "feature"), I(SPARQLES + f), graph) for f in features)
    run_reasoning(index, ontology)
    compliant = bool(index.match(s=ep, p=I(RDF_TYPE), o=I(KGI + "SPARQL11Compliant"), g=graph))
    query = bool(index.match(s=ep, p=I(SD + "feature"), o=I(SD + "SPARQL11Query"), g=graph))
    return compliant, query


def test_criterion_3_owl_rl(capsys):
    problems = []
    bundled = load_ontology(cli.bundled("ontology/index-ontology.ttl"))
    if _classify(SIX_FEATURES, bundled) != (True, True):
        problems.append("all features present but not classified")
    for missing in SIX_FEATURES:
        if _classify([f for f in SIX_FEATURES if f != missing], bundled) != (False, False):
            problems.append(f"still classified without {missing}")
    compliance = load_ontology(FIXTURES / "ontology" / "sparql11-compliance.ttl")
    if _classify(["SELNOTEXISTS"], compliance) != (True, True) or _classify([], compliance) != (False, False):
        problems.append("compliance ontology classification")

    rng = random.Random(3)
    mismatches = idempotence = monotonicity = 0
    for _ in range(200):
        data, schema = random_ontology_case(rng)
        got = saturate(data, schema)
        if set(got) != naive_saturate(data, schema):
            mismatches += 1
        if set(saturate(got, schema)) != set(got):
            idempotence += 1
        extra, _ = random_ontology_case(rng, max_triples=6)
        if not set(got) <= set(saturate(data | extra, schema)):
            monotonicity += 1
    if mismatches or idempotence or monotonicity:
        problems.append(f"{mismatches} oracle mismatches, {idempotence} idempotence and "
                        f"{monotonicity} monotonicity failures")
    verdict(capsys, 3, not problems, "; ".join(problems) or
            "remove-one-feature checks hold; 200 random graphs: 0 mismatches, idempotent, monotone")


# --- 4. SPARQL evaluator --------------------------------------------------------------

REMOTE = "http://remote.example/sparql"


def _federated_case(rng: random.Random):
    local = random_bgp_query(rng, max_patterns=2, allow_graph=False, allow_optional=False)
    remote = random_bgp_query(rng, max_patterns=2, allow_graph=False, allow_optional=False)
    for part in (local, remote):
        part.filter, part.projection, part.distinct = None, None, False
    names = sorted(set(local.variables()) | set(remote.variables()))
    projection = None
    if names and rng.random() < 0.4:
        projection = rng.sample(names, rng.randint(1, len(names)))
    body_local = local.text().split("{", 1)[1].rsplit("}", 1)[0]
    body_remote = remote.text().split("{", 1)[1].rsplit("}", 1)[0]
    proj = "*" if projection is None else " ".join("?" + v for v in projection)
    text = f"SELECT {proj} WHERE {{ {body_local} SERVICE <{REMOTE}> {{ {body_remote} }} }}"
    return local, remote, projection, text


def test_criterion_4_sparql_oracle(capsys):
    rng = random.Random(4)
    eval_bad = nonempty = 0
    for _ in range(500):
        ds = as_dataset(random_store(rng))
        q = random_bgp_query(rng)
        got = result_bag(evaluate(q.text(), ds).solutions.rows)
        expected = brute_force(q, ds.quads())
        nonempty += bool(expected)
        eval_bad += got != expected

    fed_bad = 0
    for _ in range(200):
        local_ds = as_dataset(random_store(rng, 25, graphs=[DEFAULT_GRAPH]))
        remote_ds = as_dataset(random_store(rng, 25, graphs=[DEFAULT_GRAPH]))
        local, remote, projection, text = _federated_case(rng)
        calls = []

        def executor(endpoint, query_text, remote_ds=remote_ds, calls=calls):
            calls.append(endpoint)
            return evaluate(query_text, remote_ds)

        got = result_bag(evaluate(text, local_ds, executor).solutions.rows)
        expected = join_bags(brute_force(local, local_ds.quads()), brute_force(remote, remote_ds.quads()))
        if projection is not None:
            projected = Counter()
            for row, n in expected.items():
                projected[frozenset((k, v) for k, v in row if k in projection)] += n
            expected = projected
        fed_bad += got != expected or calls != [REMOTE]

    page_bad = 0
    for _ in range(100):
        ds = as_dataset(random_store(rng))
        q = random_bgp_query(rng)
        size = rng.randint(1, 6)
        rows = []
        for page in paginate(q.text(), size):
            batch = evaluate(page, ds).solutions.rows
            rows.extend(batch)
            if len(batch) < size:
                break
        full = evaluate(q.text(), ds).solutions.rows
        page_bad += result_bag(rows) != result_bag(full) or result_bag(full) != brute_force(q, ds.quads())

    ok = eval_bad == fed_bad == page_bad == 0 and nonempty >= 100
    verdict(capsys, 4, ok, f"evaluator {eval_bad}/500 mismatches ({nonempty} non-empty), "
            f"federation {fed_bad}/200, pagination {page_bad}/100")


# --- 5. syntax round trips -------------------------------------------------------------

PREFIXES = {"ex": "http://example.org/", "o": "http://other.example/ns#", "xsd": XSD}


def _mutate(rng: random.Random, text: str) -> str:
    junk = '<>"\'{}[]().;,:@^_#\\ \n\t?$!-+=aZ09éx%'
    chars = list(text)
    for _ in range(rng.randint(1, 6)):
        op = rng.randrange(4)
        pos = rng.randrange(len(chars) + 1)
        if op == 0 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op == 1:
            chars.insert(pos, rng.choice(junk))
        elif op == 2 and chars:
            chars[min(pos, len(chars) - 1)] = rng.choice(junk)
        else:
            chars = chars[:pos]
    return "".join(chars)


def test_criterion_5_round_trips(capsys):
    rng = random.Random(5)
    failures = Counter()
    seeds = []
    for _ in range(300):
        triples = random_triples(rng)
        text = serialize_turtle(triples, PREFIXES if rng.random() < 0.5 else None)
        seeds.append(text)
        back = parse_turtle(text)
        if not back.ok or not isomorphic(triples, back.value):
            failures["turtle"] += 1
    for _ in range(300):
        quads = random_quads(rng)
        text = serialize_trig(as_dataset(quads), PREFIXES if rng.random() < 0.5 else None)
        seeds.append(text)
        back = parse_trig(text)
        if not back.ok or not isomorphic(quads, back.value.quads()):
            failures["trig"] += 1
    for _ in range(300):
        quads = random_quads(rng)
        text = serialize_nquads(as_dataset(quads))
        seeds.append(text)
        back = parse_nquads(text)
        if not back.ok or not isomorphic(quads, back.value.quads()):
            failures["nquads"] += 1

    crashes = []
    for i in range(10000):
        if i % 10 == 0:
            text = "".join(rng.choice('<>"{}[]().;:@^_#\\ \nabcPREFIX') for _ in range(rng.randint(0, 60)))
        else:
            text = _mutate(rng, rng.choice(seeds))
        for name, parse in (("turtle", parse_turtle), ("trig", parse_trig), ("nquads", parse_nquads)):
            try:
                parse(text)
            except Exception as exc:  # any exception is a crash
                crashes.append(f"{name}: {type(exc).__name__}: {exc}")
    ok = not failures and not crashes
    verdict(capsys, 5, ok, f"round-trip failures {dict(failures) or 0} over 3x300; "
            f"{len(crashes)} crashes over 10000 fuzzed inputs" + (f"; first: {crashes[0]}" if crashes else ""))


# --- 6. provenance --------------------------------------------------------------------

def test_criterion_6_provenance(fleet_campaign, capsys):
    index = fleet_campaign["index"]
    activities = {q.s for q in index.match(p=I(RDF_TYPE), o=I(PROV + "Activity"), g=LOGS)}
    executed = {e.activity for h in fleet_campaign["handles"] for e in h.log if e.role == "test"}
    problems = []
    if len(activities) != len(executed) or {a.value for a in activities} != executed:
        problems.append(f"{len(activities)} activities vs {len(executed)} logged test executions")
    if None in executed:
        problems.append("a test request carried no activity header")
    for act in activities:
        start = _instant(index, act, PROV + "startedAtTime")
        end = _instant(index, act, PROV + "endedAtTime")
        if start > end:
            problems.append(f"{act.value}: start after end")
        outcomes = [q.o for r in index.match(s=act, p=I(EARL + "result")) for q in index.match(s=r.o, p=I(EARL + "outcome"))]
        if len(outcomes) != 1:
            problems.append(f"{act.value}: {len(outcomes)} outcomes")
    verdict(capsys, 6, not problems, "; ".join(problems[:5]) or
            f"{len(activities)} activities, one per logged test execution, all well formed")


# --- 7. read-only ---------------------------------------------------------------------

def test_criterion_7_read_only(fixture_campaign, fleet_campaign, capsys):
    requests = [e for h in SPAWNED for e in h.log]
    updates = [e for e in requests if e.is_update or (e.query_text and parse_query(e.query_text, extended=True).ok
                                                        and parse_query(e.query_text, extended=True).query.is_update)]
    ok = not updates and len(requests) > 0
    verdict(capsys, 7, ok, f"{len(updates)} update operations in {len(requests)} requests to {len(SPAWNED)} mocks")


# --- 8. report shapes -----------------------------------------------------------------

EXPECTED_CLASSES = {DCAT + "Dataset": 4, VOID + "Dataset": 4, DCAT + "Catalog": 2, DCAT + "DataService": 1,
                    DCAT + "Distribution": 1}
EXPECTED_META = {"RDFS": 5, "OWL": 3, "SKOS": 2, "SHACL": 1, "RDF": 0, "(none)": 2}
EXPECTED_SERVERS = {"Virtuoso": 3, "Apache-Jena-Fuseki": 2, "(absent)": 1, "Blazegraph": 1, "GraphDB": 1, "Stardog": 1}


def test_criterion_8_report_shapes(tmp_path, capsys):
    excerpt = Path(str(cli.bundled("excerpt/index.nq")))
    problems = []
    runs = []
    for n in range(2):
        index = load_nquads(excerpt.read_text(encoding="utf-8"))
        out = tmp_path / f"run{n}"
        written = generate_reports(index, out)
        runs.append({p.name: p.read_bytes() for p in written})
    if runs[0] != runs[1]:
        problems.append("reports differ between runs")
    files = runs[0]
    for name in ("class-usage.csv", "property-usage.csv", "meta-vocabularies.csv", "server-headers.csv"):
        lines = files[name].decode().splitlines()
        if len(lines[0].split(",")) != 2 or any(len(line.rsplit(",", 1)) != 2 or not line.rsplit(",", 1)[1].isdigit()
                                                 for line in lines[1:]):
            problems.append(f"{name} is not a two-column table")
    if _csv_bytes(files["class-usage.csv"]) != EXPECTED_CLASSES:
        problems.append(f"class table {_csv_bytes(files['class-usage.csv'])}")
    if _csv_bytes(files["meta-vocabularies.csv"]) != EXPECTED_META:
        problems.append(f"meta-vocabulary summary {_csv_bytes(files['meta-vocabularies.csv'])}")
    if _csv_bytes(files["server-headers.csv"]) != EXPECTED_SERVERS:
        problems.append(f"server headers {_csv_bytes(files['server-headers.csv'])}")
    counts = list(_csv_bytes(files["property-usage.csv"]).values())
    if not counts or counts != sorted(counts, reverse=True):
        problems.append("property table not sorted by count")
    edges = [line.split(" ") for line in files["endpoint-vocabulary.edges"].decode().splitlines()]
    endpoints = {e[0] for e in edges}
    if any(len(e) != 2 for e in edges) or len(endpoints) != 9 or len(edges) != len({tuple(e) for e in edges}):
        problems.append(f"edge list: {len(edges)} edges over {len(endpoints)} endpoints")
    verdict(capsys, 8, not problems, "; ".join(problems) or
            f"tables, meta-vocabulary summary, server headers and {len(edges)} vocabulary edges; identical bytes")


def _csv_bytes(data: bytes) -> dict[str, int]:
    out = {}
    for line in data.decode().splitlines()[1:]:
        key, _, n = line.rpartition(",")
        out[key] = int(n)
    return out
