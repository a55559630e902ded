"""Namespace IRIs shared by rules, ontology, index layout and reports.

The index vocabulary namespace (``kgi:``) and the artifact namespace used for
minted IRIs can be overridden with the ``KGINDEX_KGI_NAMESPACE`` and
``KGINDEX_ARTIFACT_NAMESPACE`` environment variables.
"""

import os


class Namespace(str):
    """A namespace IRI; attribute or item access mints a term IRI string."""

    def __getattr__(self, name: str) -> str:
        if name.startswith("__"):
            raise AttributeError(name)
        return self + name

    def __getitem__(self, name):
        if isinstance(name, str):
            return self + name
        return str.__getitem__(self, name)


RDF = Namespace("http://www.w3.org/1999/02/22-rdf-syntax-ns#")
RDFS = Namespace("http://www.w3.org/2000/01/rdf-schema#")
OWL = Namespace("http://www.w3.org/2002/07/owl#")
XSD = Namespace("http://www.w3.org/2001/XMLSchema#")
MF = Namespace("http://www.w3.org/2001/sw/DataAccess/tests/test-manifest#")
EARL = Namespace("http://www.w3.org/ns/earl#")
PROV = Namespace("http://www.w3.org/ns/prov#")
SD = Namespace("http://www.w3.org/ns/sparql-service-description#")
SPARQLES = Namespace("http://sparqles.ai.wu.ac.at/#")
DCTERMS = Namespace("http://purl.org/dc/terms/")
DCAT = Namespace("http://www.w3.org/ns/dcat#")
VOID = Namespace("http://rdfs.org/ns/void#")
SCHEMA = Namespace("http://schema.org/")
PAV = Namespace("http://purl.org/pav/")
SKOS = Namespace("http://www.w3.org/2004/02/skos/core#")
SH = Namespace("http://www.w3.org/ns/shacl#")
FOAF = Namespace("http://xmlns.com/foaf/0.1/")

KGI = Namespace(os.environ.get("KGINDEX_KGI_NAMESPACE", "http://ns.kgindex.org/index#"))
ARTIFACT = Namespace(os.environ.get("KGINDEX_ARTIFACT_NAMESPACE", "http://ns.kgindex.org/id/"))

# Prefixes known to every manifest and every query dispatched by the engine.
STANDARD_PREFIXES: dict[str, str] = {
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "mf": MF,
    "earl": EARL,
    "prov": PROV,
    "sd": SD,
    "sparqles": SPARQLES,
    "dcterms": DCTERMS,
    "dct": DCTERMS,
    "dcat": DCAT,
    "void": VOID,
    "schema": SCHEMA,
    "pav": PAV,
    "skos": SKOS,
    "sh": SH,
    "foaf": FOAF,
    "kgi": KGI,
}

XSD_STRING = XSD.string
RDF_LANGSTRING = RDF.langString
