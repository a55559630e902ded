"""Regenerate src/kgindex/data/excerpt/index.nq.

Runs the bundled extraction rules against ten local mock endpoints, renames
the mocks to stable example URLs, gives every trace a fixed start time and
duration, then applies augmentation and inference. The output is a small but
complete index for exercising the report generator.

    python tools/build_excerpt.py
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

from kgindex.client import EndpointDescriptor, index_graph_for
from kgindex.indexer import CAMPAIGN, LOGS, CampaignConfig, Indexer, run_augmentation, run_reasoning
from kgindex.manifest import AUGMENTATION, EXTRACTION, load_rule_tree
from kgindex.mocknet import CONSTANT, DRIFTING, FRESH, MockSpec, spawn_fleet, stop_fleet
from kgindex.namespaces import ARTIFACT, PROV
from kgindex.owlrl import load_ontology
from kgindex.rdf.model import IRI, LITERAL, Dataset, Quad, Term, digest
from kgindex.rdf.nquads import serialize_nquads
from kgindex.sparql.values import format_datetime

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "kgindex" / "data"
OUT = DATA / "excerpt" / "index.nq"

PREFIXES = """@prefix dcat: <http://www.w3.org/ns/dcat#> .
@prefix dcterms: <http://purl.org/dc/terms/> .
@prefix void: <http://rdfs.org/ns/void#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix skos: <http://www.w3.org/2004/02/skos/core#> .
@prefix sh: <http://www.w3.org/ns/shacl#> .
@prefix foaf: <http://xmlns.com/foaf/0.1/> .
@prefix prov: <http://www.w3.org/ns/prov#> .
@prefix schema: <http://schema.org/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
"""

ENDPOINTS = [
    ("http://dbpedia.example.org/sparql", MockSpec(
        server_header="Virtuoso/07.20.3235", rand_mode=CONSTANT, dataset=PREFIXES + """
<http://dbpedia.example.org/void> a void:Dataset , dcat:Dataset ; dcterms:title "Encyclopedic data" ;
    void:triples 120000 ; dcterms:created "2019-04-01"^^xsd:date .
<http://dbpedia.example.org/ontology/Place> a owl:Class ; rdfs:label "Place"@en .
<http://dbpedia.example.org/resource/Lyon> a <http://dbpedia.example.org/ontology/Place> ;
    foaf:name "Lyon" ; skos:prefLabel "Lyon"@fr .
""")),
    ("http://data.agency.example.gov/sparql", MockSpec(
        server_header="Virtuoso/08.03.3330", rand_mode=CONSTANT, features={"subquery": 400}, dataset=PREFIXES + """
<http://data.agency.example.gov/catalog> a dcat:Catalog ; dcat:dataset <http://data.agency.example.gov/ds/1> .
<http://data.agency.example.gov/ds/1> a dcat:Dataset ; dcterms:title "Budget" ; dcterms:license <http://creativecommons.org/licenses/by/4.0/> ;
    dcat:distribution <http://data.agency.example.gov/ds/1/csv> ; dcterms:publisher <http://data.agency.example.gov/org> .
<http://data.agency.example.gov/ds/1/csv> a dcat:Distribution ; dcat:accessURL <http://data.agency.example.gov/files/budget.csv> .
<http://data.agency.example.gov/org> a foaf:Agent ; rdfs:label "Agency" .
""")),
    ("http://bio.example.org/fuseki/sparql", MockSpec(
        server_header="Apache-Jena-Fuseki/4.10.0", now_mode=DRIFTING, dataset=PREFIXES + """
<http://bio.example.org/void> a void:Dataset ; void:sparqlEndpoint <http://bio.example.org/fuseki/sparql> ;
    void:triples 5400 ; void:vocabulary <http://purl.obolibrary.org/obo/> .
<http://bio.example.org/gene/1> a <http://purl.obolibrary.org/obo/SO_0000704> ; owl:sameAs <http://other.example.org/g1> .
""")),
    ("http://shop.example.com/query", MockSpec(
        features={"minus": 500, "not-exists": 500}, dataset=PREFIXES + """
<http://shop.example.com/p/1> a schema:Product ; schema:name "Kettle" ; schema:offers <http://shop.example.com/o/1> .
<http://shop.example.com/o/1> a schema:Offer ; schema:price 30 .
schema:Product rdfs:subClassOf schema:Thing .
""")),
    ("http://thesaurus.example.eu/graphdb/repositories/main", MockSpec(
        server_header="GraphDB/10.4.1 RDF4J/4.3.8", rand_mode=CONSTANT, dataset=PREFIXES + """
<http://thesaurus.example.eu/c/1> a skos:Concept ; skos:prefLabel "Water"@en ; skos:broader <http://thesaurus.example.eu/c/0> .
<http://thesaurus.example.eu/shape> a sh:NodeShape ; sh:targetClass skos:Concept ; sh:property <http://thesaurus.example.eu/shape/p> .
<http://thesaurus.example.eu/g/meta> { <http://thesaurus.example.eu/void> a void:Dataset ; dcterms:title "Thesaurus" . }
""")),
    ("http://lod.example.net/blazegraph/sparql", MockSpec(
        server_header="Blazegraph", features={"aggregates": 400, "bind": 400}, dataset=PREFIXES + """
<http://lod.example.net/void> a void:Dataset ; void:classPartition <http://lod.example.net/void/cp1> ; void:entities 42 .
<http://lod.example.net/void/cp1> void:class foaf:Person ; void:entities 40 .
<http://lod.example.net/p/1> a foaf:Person ; foaf:name "Ada" .
""")),
    ("http://library.example.edu/sparql", MockSpec(
        server_header="Virtuoso/07.20.3235", dataset=PREFIXES + """
<http://library.example.edu/catalog> a dcat:Catalog ; dcat:dataset <http://library.example.edu/books> ; foaf:homepage <http://library.example.edu/> .
<http://library.example.edu/books> a dcat:Dataset ; dcterms:title "Holdings" ; dcterms:issued "2021-09-10"^^xsd:date ;
    dcat:keyword "books" ; dcterms:publisher <http://library.example.edu/org> .
""")),
    ("http://sparql.unreachable.example/sparql", MockSpec(availability="down")),
    ("http://ontology.example.org/ds/sparql", MockSpec(
        server_header="Apache-Jena-Fuseki/3.17.0", now_mode=DRIFTING, features={"values": 400}, dataset=PREFIXES + """
<http://ontology.example.org/onto> a owl:Ontology ; rdfs:comment "Domain model" .
<http://ontology.example.org/onto#hasPart> a owl:ObjectProperty ; rdfs:domain <http://ontology.example.org/onto#Whole> ;
    rdfs:range <http://ontology.example.org/onto#Part> .
<http://ontology.example.org/onto#Whole> a owl:Class . <http://ontology.example.org/onto#Part> a owl:Class .
""")),
    ("http://stardog.example.io/kg/query", MockSpec(
        server_header="Stardog/9.1.0", rand_mode=FRESH, dataset=PREFIXES + """
<http://stardog.example.io/service> a dcat:DataService ; dcat:endpointURL <http://stardog.example.io/kg/query> .
<http://stardog.example.io/kg> a dcat:Dataset ; dcterms:created "2023-02-14"^^xsd:date ;
    prov:wasDerivedFrom <http://stardog.example.io/raw> ; rdfs:label "Enterprise graph" .
""")),
]

BASE_TIME = datetime(2024, 3, 1, 8, 0, 0, tzinfo=timezone.utc)


def build() -> Dataset:
    specs = []
    for i, (_fake, spec) in enumerate(ENDPOINTS):
        spec.name = f"e{i:02d}"
        spec.seed = i
        specs.append(spec)
    rules = load_rule_tree(DATA / "rules")
    fleet = spawn_fleet(specs)
    try:
        cfg = CampaignConfig(timeout_s=5, retries=1, backoff_s=0.05, jobs=4)
        indexer = Indexer(cfg)
        indexer.run_extraction([EndpointDescriptor(h.url, timeout=5) for h in fleet], rules[EXTRACTION])
        mapping = {}
        for h, (fake, _spec) in zip(fleet, ENDPOINTS):
            mapping[h.url] = fake
            mapping[index_graph_for(h.url)] = index_graph_for(fake)
        index = rename(indexer.index, mapping)
    finally:
        stop_fleet(fleet)
    index = retime(index)
    run_augmentation(rules[AUGMENTATION], index)
    run_reasoning(index, load_ontology(DATA / "ontology" / "index-ontology.ttl"))
    return index


def rename(index: Dataset, mapping: dict) -> Dataset:
    """Mock URLs to stable URLs; activity IRIs re-derived from the new URL and rule."""
    subject_of = {}
    for q in index.match(p=Term.iri("http://www.w3.org/ns/earl#subject")):
        subject_of[q.s] = q.o.value
    rule_of = {q.s: q.o.value for q in index.match(p=Term.iri("http://www.w3.org/ns/earl#test"))}
    for act, url in subject_of.items():
        new = f"{ARTIFACT}activity/{digest(mapping.get(url, url), rule_of[act])}"
        mapping[act.value] = new
        mapping[act.value + "/result"] = new + "/result"

    def term(t: Term) -> Term:
        if t.kind == IRI and t.value in mapping:
            return Term.iri(mapping[t.value])
        return t
    return Dataset(Quad(term(q.s), term(q.p), term(q.o), term(q.g)) for q in index)


def retime(index: Dataset) -> Dataset:
    """Fixed, distinct instants: each trace gets a duration derived from its IRI."""
    started, ended = Term.iri(PROV.startedAtTime), Term.iri(PROV.endedAtTime)
    activities = sorted({q.s for q in index.match(p=started, g=LOGS)}, key=lambda t: t.value)
    times = {}
    for n, act in enumerate(activities):
        start = BASE_TIME + timedelta(seconds=n)
        millis = 20 + int(digest(act.value, length=4), 16) % 480
        times[(act, started)] = start
        times[(act, ended)] = start + timedelta(milliseconds=millis)
    times[(CAMPAIGN, started)] = BASE_TIME
    times[(CAMPAIGN, ended)] = BASE_TIME + timedelta(seconds=len(activities) + 1)
    out = Dataset()
    for q in index:
        when = times.get((q.s, q.p))
        if when is not None and q.o.kind == LITERAL:
            q = Quad(q.s, q.p, format_datetime(when), q.g)
        out.add(q)
    return out


def main() -> None:
    index = build()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(serialize_nquads(index), encoding="utf-8")
    print(f"wrote {len(index)} quads to {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
