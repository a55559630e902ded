"""Usage tables, meta-vocabulary and server-header summaries, vocabulary edges."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

from kgindex.namespaces import KGI, RDF, SD
from kgindex.rdf.model import IRI, LITERAL, Dataset, Term

CLASS = "class"
PROPERTY = "property"
META_VOCABULARY = "meta-vocabulary"
SERVER_HEADER = "server-header"
VOCABULARY = "vocabulary"
FEATURE = "feature"

ABSENT = "(absent)"
NO_META_VOCABULARY = "(none)"

_HEADERS = {
    CLASS: ("class", "endpoints"),
    PROPERTY: ("property", "endpoints"),
    META_VOCABULARY: ("meta_vocabulary", "endpoints"),
    SERVER_HEADER: ("server", "endpoints"),
    VOCABULARY: ("vocabulary", "endpoints"),
    FEATURE: ("feature", "endpoints"),
    "server-version": ("server_header", "endpoints"),
}


def _iri(v: str) -> Term:
    return Term.iri(v)


@dataclass
class UsageTable:
    scope: str
    rows: list[tuple[str, int]] = field(default_factory=list)
    detail: list[tuple[str, int]] = field(default_factory=list)

    def as_dict(self) -> dict[str, int]:
        return dict(self.rows)


@dataclass
class BipartiteEdgeList:
    edges: set[tuple[str, str]] = field(default_factory=set)

    def sorted(self) -> list[tuple[str, str]]:
        return sorted(self.edges)

    def degrees(self) -> dict[str, int]:
        return dict(Counter(e for e, _ in self.edges))


def _sorted_rows(counts: dict[str, int], keep_zero: bool = False) -> list[tuple[str, int]]:
    rows = [(k, n) for k, n in counts.items() if n > 0 or keep_zero]
    return sorted(rows, key=lambda r: (-r[1], r[0]))


# --- index access ---------------------------------------------------------------

def indexed_endpoints(index: Dataset) -> dict[str, Term]:
    """Endpoints that passed the availability gate, mapped to their index graph."""
    registry = {q.s: q.o for q in index.match(p=_iri(KGI.indexGraph))}
    indexed = {q.s for q in index.match(p=_iri(KGI.status), o=_iri(KGI.Indexed))}
    return {s.value: g for s, g in registry.items() if s in indexed}


def _endpoint_values(index: Dataset, predicate: str) -> dict[str, set[Term]]:
    p = _iri(predicate)
    out: dict[str, set[Term]] = {}
    for url, graph in indexed_endpoints(index).items():
        out[url] = {q.o for q in index.match(s=_iri(url), p=p, g=graph)}
    return out


def observed_terms(index: Dataset) -> dict[str, set[str]]:
    """Per endpoint, every observed class and property IRI."""
    classes = _endpoint_values(index, KGI.observedClass)
    props = _endpoint_values(index, KGI.observedProperty)
    return {url: {t.value for t in classes[url] | props[url] if t.kind == IRI} for url in classes}


# --- tables ----------------------------------------------------------------------

def usage_table(index: Dataset, terms: Iterable[str], scope: str = CLASS) -> UsageTable:
    """Distinct-endpoint counts of observed classes or properties from ``terms``."""
    predicate = {CLASS: KGI.observedClass, PROPERTY: KGI.observedProperty}[scope]
    wanted = list(dict.fromkeys(terms))
    observed = _endpoint_values(index, predicate)
    counts = {t: 0 for t in wanted}
    for values in observed.values():
        names = {v.value for v in values if v.kind == IRI}
        for t in wanted:
            if t in names:
                counts[t] += 1
    return UsageTable(scope, _sorted_rows(counts))


def metavocab_summary(index: Dataset, metavocabularies: Optional[dict[str, str]] = None) -> UsageTable:
    """Endpoints with at least one observed primitive of each meta-vocabulary.

    ``rdf:type`` is not counted as a primitive: nearly every endpoint uses it,
    so it carries no signal about the modelling language. Endpoints matching
    no meta-vocabulary are counted in the ``(none)`` row.
    """
    metavocabularies = metavocabularies if metavocabularies is not None else load_metavocabularies()
    counts = {label: 0 for label in metavocabularies}
    none = 0
    for url, terms in observed_terms(index).items():
        terms = terms - {RDF.type}
        hit = False
        for label, ns in metavocabularies.items():
            if any(t.startswith(ns) for t in terms):
                counts[label] += 1
                hit = True
        if not hit:
            none += 1
    rows = _sorted_rows(counts, keep_zero=True)
    rows.append((NO_META_VOCABULARY, none))
    return UsageTable(META_VOCABULARY, rows)


def product_token(header: str) -> str:
    """Server product name: the text before the first ``/`` (or first space)."""
    head = header.strip().split("/", 1)[0].strip()
    return head.split()[0] if head else header.strip()


def server_header_distribution(index: Dataset) -> UsageTable:
    """Endpoints per server product, an absent-header bucket, and verbatim values in ``detail``."""
    headers = _endpoint_values(index, KGI.serverHeader)
    products: Counter = Counter()
    verbatim: Counter = Counter()
    for url, values in headers.items():
        lits = sorted(v.value for v in values if v.kind == LITERAL)
        if not lits:
            products[ABSENT] += 1
            continue
        products[product_token(lits[0])] += 1
        verbatim[lits[0]] += 1
    return UsageTable(SERVER_HEADER, _sorted_rows(dict(products)), _sorted_rows(dict(verbatim)))


def version_counts(table: UsageTable) -> dict[str, int]:
    """Number of distinct header values per product in a server-header table."""
    out: Counter = Counter()
    for header, _n in table.detail:
        out[product_token(header)] += 1
    return dict(out)


def feature_table(index: Dataset) -> UsageTable:
    counts: Counter = Counter()
    for values in _endpoint_values(index, SD.feature).values():
        for v in values:
            counts[v.value] += 1
    return UsageTable(FEATURE, _sorted_rows(dict(counts)))


def vocabulary_of(term: str, namespaces: list[str]) -> str:
    """Longest matching known namespace, else the term cut after its last ``#`` or ``/``."""
    best = ""
    for ns in namespaces:
        if term.startswith(ns) and len(ns) > len(best):
            best = ns
    if best:
        return best
    cut = max(term.rfind("#"), term.rfind("/"))
    return term[: cut + 1] if cut > 0 else term


def vocabulary_edges(index: Dataset, prefixes: Optional[dict[str, str]] = None) -> BipartiteEdgeList:
    prefixes = prefixes if prefixes is not None else load_prefix_table()
    namespaces = sorted(set(prefixes.values()))
    edges = set()
    for url, terms in observed_terms(index).items():
        for t in terms:
            edges.add((url, vocabulary_of(t, namespaces)))
    return BipartiteEdgeList(edges)


def vocabulary_table(edges: BipartiteEdgeList) -> UsageTable:
    counts = Counter(v for _, v in edges.edges)
    return UsageTable(VOCABULARY, _sorted_rows(dict(counts)))


def endpoint_profiles(index: Dataset) -> list[dict]:
    """One flat record per indexed endpoint: the classifications the campaign produced."""
    out = []
    single = {
        "server": KGI.serverHeader,
        "rand": KGI.randBehavior,
        "now": KGI.nowBehavior,
        "rdfs_resource": KGI.rdfsResourceProbe,
        "average_execution_time": KGI.averageExecutionTime,
    }
    for url, graph in sorted(indexed_endpoints(index).items()):
        rec: dict = {"endpoint": url}
        for key, pred in single.items():
            values = sorted(q.o.value for q in index.match(s=_iri(url), p=_iri(pred), g=graph))
            rec[key] = "|".join(values)
        rec["features"] = "|".join(sorted(q.o.value for q in index.match(s=_iri(url), p=_iri(SD.feature), g=graph)))
        types = {q.o.value for q in index.match(s=_iri(url), p=_iri(RDF.type), g=graph)}
        rec["sparql11_compliant"] = KGI.SPARQL11Compliant in types
        out.append(rec)
    return out


# --- bundled data files -----------------------------------------------------------------

def _data_text(name: str) -> str:
    return resources.files("kgindex").joinpath("data", name).read_text(encoding="utf-8")


def _tsv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, value = line.split("\t")[:2]
        out[key.strip()] = value.strip()
    return out


def load_prefix_table(path=None) -> dict[str, str]:
    return _tsv(Path(path).read_text(encoding="utf-8") if path else _data_text("prefixes.tsv"))


def load_metavocabularies(path=None) -> dict[str, str]:
    return _tsv(Path(path).read_text(encoding="utf-8") if path else _data_text("terms/meta-vocabularies.tsv"))


def load_term_list(path_or_name: str) -> list[str]:
    p = Path(path_or_name)
    text = p.read_text(encoding="utf-8") if p.is_file() else _data_text(f"terms/{path_or_name}")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


# --- output --------------------------------------------------------------------------

CSV = "csv"
JSON_LINES = "json-lines"
EDGE_LIST = "edge-list"


def render(item: Union[UsageTable, BipartiteEdgeList], fmt: str = CSV, scope: Optional[str] = None) -> str:
    if isinstance(item, BipartiteEdgeList):
        header = ("endpoint", "vocabulary")
        rows = item.sorted()
    else:
        header = _HEADERS[scope or item.scope]
        rows = item.rows if scope != "server-version" else item.detail
    if fmt == CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == JSON_LINES:
        return "".join(json.dumps(dict(zip(header, r)), sort_keys=True) + "\n" for r in rows)
    if fmt == EDGE_LIST:
        if not isinstance(item, BipartiteEdgeList):
            raise ValueError("edge-list format needs an edge list")
        return "".join(f"{a} {b}\n" for a, b in rows)
    raise ValueError(f"unknown format {fmt!r}")


def emit(item, fmt: str, path, scope: Optional[str] = None) -> Path:
    path = Path(path)
    data = render(item, fmt, scope)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(data, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def generate_reports(index: Dataset, out_dir, classes: Optional[list[str]] = None,
                     properties: Optional[list[str]] = None) -> list[Path]:
    """Write every table and the vocabulary edge list under ``out_dir``."""
    out_dir = Path(out_dir)
    classes = classes if classes is not None else load_term_list("dcat-void-classes.txt")
    properties = properties if properties is not None else load_term_list("dcat-void-properties.txt")
    servers = server_header_distribution(index)
    edges = vocabulary_edges(index)
    written = [
        emit(usage_table(index, classes, CLASS), CSV, out_dir / "class-usage.csv"),
        emit(usage_table(index, properties, PROPERTY), CSV, out_dir / "property-usage.csv"),
        emit(metavocab_summary(index), CSV, out_dir / "meta-vocabularies.csv"),
        emit(servers, CSV, out_dir / "server-headers.csv"),
        emit(servers, CSV, out_dir / "server-header-values.csv", scope="server-version"),
        emit(feature_table(index), CSV, out_dir / "features.csv"),
        emit(vocabulary_table(edges), CSV, out_dir / "vocabulary-usage.csv"),
        emit(edges, CSV, out_dir / "endpoint-vocabulary.csv"),
        emit(edges, EDGE_LIST, out_dir / "endpoint-vocabulary.edges"),
    ]
    profiles = out_dir / "endpoints.jsonl"
    profiles.write_text("".join(json.dumps(p, sort_keys=True) + "\n" for p in endpoint_profiles(index)),
                        encoding="utf-8")
    written.append(profiles)
    return written
