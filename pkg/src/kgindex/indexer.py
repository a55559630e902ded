"""Campaign pipeline: catalog loading, extraction, augmentation, inference, traces."""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from kgindex.client import (
    NONE,
    REFUSED,
    EndpointDescriptor,
    RemoteResponse,
    SparqlClient,
    classify_error,
)
from kgindex.manifest import (
    EXPLICIT,
    EXTRACTION,
    LOG_GRAPH,
    ActionSpec,
    RuleEntry,
    SubstitutionError,
    substitute_template,
    with_prologue,
)
from kgindex.mocknet import ACTIVITY_HEADER, ROLE_HEADER
from kgindex.namespaces import ARTIFACT, DCAT, EARL, KGI, PROV, RDF, SD, STANDARD_PREFIXES, XSD
from kgindex.rdf.model import (
    BLANK,
    DEFAULT_GRAPH,
    IRI,
    LITERAL,
    Dataset,
    Quad,
    Term,
    UnsalvageableIRI,
    digest,
    make_literal,
    sanitize_iri,
    skolemize,
)
from kgindex.rdf.results import ResultsDocument
from kgindex.rdf.turtle import parse_turtle
from kgindex.sparql import ast
from kgindex.sparql.engine import RemoteQueryError, UpdateAborted, evaluate, execute_update
from kgindex.sparql.evaluator import UNION, EvaluationError
from kgindex.sparql.federation import PaginationUnsupported, paginate, rewrite_service
from kgindex.sparql.parser import SparqlSyntaxError, compile_query
from kgindex.sparql.values import ExprError, format_datetime

log = logging.getLogger("kgindex.indexer")

LOGS = Term.iri(KGI.Logs)
AUGMENTATION_GRAPH = Term.iri(ARTIFACT + "graph/augmentation")
ONTOLOGY_GRAPH = Term.iri(ARTIFACT + "graph/ontology")
CAMPAIGN = Term.iri(ARTIFACT + "campaign")
AVAILABILITY_RULE = ARTIFACT + "rules/extraction/availability"
AVAILABILITY_QUERY = "SELECT * WHERE { ?s ?p ?o } LIMIT 1"

PASSED = "passed"
FAILED = "failed"

_TYPE = Term.iri(RDF.type)


def T(value: str) -> Term:
    return Term.iri(value)


class CatalogError(ValueError):
    pass


# --- catalog -------------------------------------------------------------------

_OVERRIDES = {"timeout": float, "retries": int}


def _looks_like_turtle(text: str) -> bool:
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        return s.startswith(("@", "<", "[")) or s.split()[0].upper() in ("PREFIX", "BASE")
    return False


def load_catalog(path, timeout: float = 60.0, retries: int = 1) -> list[EndpointDescriptor]:
    """Endpoints from a URL-per-line text file or a Turtle service catalog.

    Text lines may carry ``timeout=S``, ``retries=N`` and ``label=X`` after the URL.
    """
    path = Path(path)
    if not path.is_file():
        raise CatalogError(f"catalog not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".ttl", ".turtle") or _looks_like_turtle(text):
        entries = _turtle_catalog(text, path)
    else:
        entries = _text_catalog(text)
    out, seen = [], set()
    for url, extra in entries:
        if url in seen:
            continue
        seen.add(url)
        opts = {"timeout": timeout, "retries": retries}
        opts.update({k: v for k, v in extra.items() if k in _OVERRIDES})
        out.append(EndpointDescriptor(url, tuple(extra.get("labels", ())), opts["timeout"], opts["retries"]))
    return out


def _checked_url(raw: str) -> str:
    url = sanitize_iri(raw).value
    if not url.lower().startswith(("http://", "https://")):
        raise UnsalvageableIRI(f"not an HTTP(S) URL: {raw}")
    return url


def _text_catalog(text: str) -> list[tuple[str, dict]]:
    entries, bad = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        # "#" starts a comment at line start or after whitespace; inside a URL it is a fragment
        s = line.split(" #", 1)[0].split("\t#", 1)[0].strip()
        if not s or s.startswith("#"):
            continue
        url_part, *rest = s.split()
        extra: dict = {"labels": []}
        try:
            url = _checked_url(url_part)
            for item in rest:
                key, sep, value = item.partition("=")
                if not sep:
                    raise ValueError(f"bad option {item!r}")
                if key == "label":
                    extra["labels"].append(value)
                elif key in _OVERRIDES:
                    extra[key] = _OVERRIDES[key](value)
                else:
                    raise ValueError(f"unknown option {key!r}")
        except (UnsalvageableIRI, ValueError) as exc:
            bad.append(f"line {lineno}: {exc}")
            continue
        entries.append((url, extra))
    if bad:
        raise CatalogError("invalid catalog entries: " + "; ".join(bad))
    return entries


def _turtle_catalog(text: str, path: Path) -> list[tuple[str, dict]]:
    result = parse_turtle(text, base=path.resolve().as_uri(), prefixes=STANDARD_PREFIXES)
    if not result.ok:
        raise CatalogError("; ".join(f"line {d.line}: {d.message}" for d in result.diagnostics if d.severity == "error"))
    g = result.value
    found, bad = [], []
    for cls, prop in ((SD.Service, SD.endpoint), (DCAT.DataService, DCAT.endpointURL)):
        subjects = {s for s, p, o in g if p == _TYPE and o == T(cls)}
        for s, p, o in g:
            if s in subjects and p == T(prop):
                try:
                    found.append(_checked_url(o.value))
                except UnsalvageableIRI as exc:
                    bad.append(str(exc))
    if bad:
        raise CatalogError("invalid catalog entries: " + "; ".join(bad))
    # keep document order
    found.sort(key=lambda u: (text.find(u) if text.find(u) >= 0 else len(text), u))
    return [(u, {}) for u in found]


# --- configuration and traces -------------------------------------------------------

@dataclass
class CampaignConfig:
    catalog: Optional[Path] = None
    rules: Optional[Path] = None
    ontology: Optional[Path] = None
    out: Path = Path("out")
    timeout_s: float = 60.0
    retries: int = 1
    page_size: int = 10000
    jobs: int = 16
    politeness_ms: int = 0
    max_iterations: int = 100
    backoff_s: float = 2.0
    stages: tuple[str, ...] = ("extract", "augment", "reason", "report")

    def check_paths(self) -> list[str]:
        problems = []
        for name in ("catalog", "rules", "ontology"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                problems.append(f"{name} path does not exist: {p}")
        return problems


@dataclass
class TraceRecord:
    activity: str
    rule_id: str
    endpoint_url: str
    started_at: datetime
    ended_at: datetime
    outcome: str
    error_category: Optional[str] = None

    def quads(self) -> list[Quad]:
        act = T(self.activity)
        result = T(self.activity + "/result")
        q = [
            Quad(LOGS, T(KGI.trace), act, LOGS),
            Quad(act, _TYPE, T(PROV.Activity), LOGS),
            Quad(act, T(EARL.result), result, LOGS),
            Quad(act, T(EARL.subject), T(self.endpoint_url), LOGS),
            Quad(act, T(EARL.test), T(self.rule_id), LOGS),
            Quad(act, T(PROV.startedAtTime), format_datetime(self.started_at), LOGS),
            Quad(act, T(PROV.endedAtTime), format_datetime(self.ended_at), LOGS),
            Quad(result, _TYPE, T(EARL.TestResult), LOGS),
            Quad(result, T(EARL.outcome), T(EARL.passed if self.outcome == PASSED else EARL.failed), LOGS),
        ]
        if self.error_category and self.error_category != NONE:
            q.append(Quad(act, T(KGI.errorCategory), make_literal(self.error_category), LOGS))
        return q


@dataclass
class TestRun:
    outcome: str
    trace: Optional[TraceRecord] = None
    response: Optional[RemoteResponse] = None


@dataclass
class EndpointReport:
    url: str
    available: bool = False
    tests: int = 0
    passed: int = 0
    inserted: int = 0
    warnings: list = field(default_factory=list)


def availability_rule() -> RuleEntry:
    return RuleEntry(
        id=AVAILABILITY_RULE,
        title="Endpoint availability.",
        kind="test-query",
        stage=EXTRACTION,
        test_text=AVAILABILITY_QUERY,
        test_form="error-probe",
        on_success=(ActionSpec("INSERT DATA { $rawEndpointUrl a sd:Service ; sd:endpoint $rawEndpointUrl . }"),),
        prefixes=tuple(sorted(STANDARD_PREFIXES.items())),
    )


# --- extraction -------------------------------------------------------------

class Indexer:
    """Holds the index under construction; endpoint pipelines write through one lock."""

    def __init__(self, cfg: Optional[CampaignConfig] = None, client: Optional[SparqlClient] = None,
                 index: Optional[Dataset] = None):
        self.cfg = cfg or CampaignConfig()
        self.client = client or SparqlClient(self.cfg.jobs, self.cfg.politeness_ms, self.cfg.backoff_s)
        self.index = index if index is not None else Dataset()
        self.lock = threading.Lock()
        self.reports: dict[str, EndpointReport] = {}

    def _insert(self, quads) -> set[Quad]:
        with self.lock:
            return self.index.add_all(quads)

    def _graph_snapshot(self, g: Term) -> Dataset:
        with self.lock:
            return Dataset(self.index.match(g=g))

    def _policy_graph(self, action: ActionSpec, endpoint: EndpointDescriptor) -> Term:
        if action.target_policy == LOG_GRAPH:
            return LOGS
        if action.target_policy == EXPLICIT and action.target_graph:
            return T(action.target_graph)
        return endpoint.index_graph

    def _paged_remote(self, endpoint: EndpointDescriptor, headers: dict, sink: list):
        base = self.client.executor(endpoint, headers, sink)
        size = self.cfg.page_size

        def run(url: str, text: str) -> ResultsDocument:
            try:
                pages = paginate(text, size)
            except PaginationUnsupported:
                return base(url, text)
            rows, variables = [], None
            for page_text in pages:
                doc = base(url, page_text)
                if doc.form != "bindings":
                    return doc
                variables = variables or doc.variables
                page = list(doc.solutions.rows)
                rows.extend(page)
                if len(page) < size:
                    break
            return ResultsDocument.select(variables or [], rows)
        return run

    def run_test(self, entry: RuleEntry, endpoint: EndpointDescriptor, seq: int = 0) -> TestRun:
        """Execute one test; dummy tests pass without a remote call and leave no trace."""
        if entry.is_dummy:
            return TestRun(PASSED)
        activity = f"{ARTIFACT}activity/{digest(endpoint.url, entry.id, str(seq))}"
        headers = {ACTIVITY_HEADER: activity, ROLE_HEADER: "test"}
        text = substitute_template(entry.test_text, endpoint)
        query = compile_query(text, entry.prefix_map)
        plan = rewrite_service(query)
        if plan.is_federated:
            target = EndpointDescriptor(plan.endpoint, timeout=endpoint.timeout, retries=endpoint.retries)
            resp = self.client.query_remote(target, plan.remote_query, headers)
        else:
            resp = self.client.query_remote(endpoint, with_prologue(text, entry.prefix_map), headers)

        category = classify_error(resp)
        if not resp.ok:
            outcome = FAILED
        elif entry.test_form != "ask":
            outcome = PASSED
        else:
            outcome = PASSED if self._ask_truth(query, plan, resp, endpoint) else FAILED
        trace = TraceRecord(activity, entry.id, endpoint.url, resp.started_at, resp.ended_at, outcome,
                            category if outcome == FAILED else None)
        self._insert(trace.quads())
        return TestRun(outcome, trace, resp)

    def _ask_truth(self, query: ast.Query, plan, resp: RemoteResponse, endpoint: EndpointDescriptor) -> bool:
        doc = resp.results
        if not plan.is_federated:
            return doc.truth if doc.form == "boolean" else len(doc.solutions.rows) > 0
        if doc.form != "bindings":
            return False
        residual = plan.inject(list(doc.solutions.rows))
        local = evaluate(residual, self._graph_snapshot(endpoint.index_graph), default_graph=endpoint.index_graph)
        return local.truth

    def run_action(self, entry: RuleEntry, action: ActionSpec, endpoint: EndpointDescriptor,
                   activity: Optional[str], report: EndpointReport) -> set[Quad]:
        headers = {ROLE_HEADER: "action"}
        if activity:
            headers[ACTIVITY_HEADER] = activity
        sink: list = []
        try:
            text = substitute_template(action.update_text, endpoint)
            q = compile_query(text, entry.prefix_map)
            scratch = self._graph_snapshot(endpoint.index_graph)
            added = execute_update(q, scratch, self._paged_remote(endpoint, headers, sink),
                                   target=self._policy_graph(action, endpoint),
                                   default_graph=endpoint.index_graph,
                                   scope=f"{endpoint.url}|{entry.id}", warnings=report.warnings)
        except (UpdateAborted, EvaluationError, ExprError, SparqlSyntaxError, SubstitutionError) as exc:
            report.warnings.append(f"{entry.id}: action skipped: {exc}")
            log.warning("%s on %s: action skipped: %s", entry.id, endpoint.url, exc)
            return set()
        return self._insert(added)

    def extract_endpoint(self, endpoint: EndpointDescriptor, rules: list[RuleEntry]) -> EndpointReport:
        report = EndpointReport(endpoint.url)
        self.reports[endpoint.url] = report
        self._insert([Quad(T(endpoint.url), T(KGI.indexGraph), endpoint.index_graph, DEFAULT_GRAPH)])
        seq = 0
        for n, entry in enumerate([availability_rule()] + list(rules)):
            run = self.run_test(entry, endpoint, seq)
            if run.trace is not None:
                seq += 1
                report.tests += 1
            if run.outcome == PASSED:
                report.passed += 1
            if n == 0:
                if run.outcome != PASSED:
                    self._insert([Quad(T(endpoint.url), T(KGI.status), T(KGI.Unavailable), DEFAULT_GRAPH)])
                    log.info("%s unavailable: %s", endpoint.url, run.response.error if run.response else "")
                    return report
                report.available = True
                self._insert([Quad(T(endpoint.url), T(KGI.status), T(KGI.Indexed), DEFAULT_GRAPH)])
                header = run.response.server_header if run.response else None
                if header is not None:
                    self._insert([Quad(T(endpoint.url), T(KGI.serverHeader), make_literal(header),
                                       endpoint.index_graph)])
            actions = entry.on_success if run.outcome == PASSED else entry.on_failure
            activity = run.trace.activity if run.trace else None
            for action in actions:
                report.inserted += len(self.run_action(entry, action, endpoint, activity, report))
        return report

    def run_extraction(self, catalog: list[EndpointDescriptor], rules: list[RuleEntry]) -> Dataset:
        started = datetime.now(timezone.utc)
        self._insert([
            Quad(CAMPAIGN, _TYPE, T(KGI.Campaign), DEFAULT_GRAPH),
            Quad(CAMPAIGN, T(KGI.catalogSize), make_literal(str(len(catalog)), XSD.integer), DEFAULT_GRAPH),
            Quad(CAMPAIGN, T(PROV.startedAtTime), format_datetime(started), DEFAULT_GRAPH),
        ])
        if catalog:
            with ThreadPoolExecutor(max_workers=max(1, min(self.cfg.jobs, len(catalog)))) as pool:
                list(pool.map(lambda e: self.extract_endpoint(e, rules), catalog))
        indexed = sum(1 for r in self.reports.values() if r.available)
        self._insert([
            Quad(CAMPAIGN, T(KGI.indexedEndpoints), make_literal(str(indexed), XSD.integer), DEFAULT_GRAPH),
            Quad(CAMPAIGN, T(PROV.endedAtTime), format_datetime(datetime.now(timezone.utc)), DEFAULT_GRAPH),
        ])
        return self.index


def run_extraction(catalog: list[EndpointDescriptor], rules: list[RuleEntry],
                   cfg: Optional[CampaignConfig] = None, client: Optional[SparqlClient] = None) -> Dataset:
    return Indexer(cfg, client).run_extraction(catalog, rules)


def run_test(entry: RuleEntry, endpoint: EndpointDescriptor, client: Optional[SparqlClient] = None) -> TestRun:
    return Indexer(client=client).run_test(entry, endpoint)


# --- augmentation ---------------------------------------------------------------

def endpoint_graphs(index: Dataset) -> dict[Term, Term]:
    """Registry of indexed endpoints: endpoint IRI -> its index graph."""
    return {q.s: q.o for q in index.match(p=T(KGI.indexGraph), g=DEFAULT_GRAPH)}


def augmentation_target(index: Dataset) -> Callable[[tuple], list[Term]]:
    """Insertion graphs for augmentation output.

    A subject that is a registered endpoint goes to that endpoint's graph;
    otherwise to every endpoint graph where it already occurs as a subject;
    otherwise to the shared augmentation graph.
    """
    registry = endpoint_graphs(index)
    graphs = set(registry.values())
    by_subject: dict[Term, set[Term]] = {}
    for q in index:
        if q.g in graphs:
            by_subject.setdefault(q.s, set()).add(q.g)

    def target(triple):
        s = triple[0]
        if s in registry:
            return [registry[s]]
        found = by_subject.get(s)
        if found:
            return sorted(found, key=lambda t: t.value)
        return [AUGMENTATION_GRAPH]
    return target


@dataclass
class AugmentationReport:
    delta: Dataset = field(default_factory=Dataset)
    applied: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def run_augmentation(rules: list[RuleEntry], index: Dataset) -> AugmentationReport:
    """Apply each augmentation rule once, in order, as local updates over the whole index."""
    report = AugmentationReport()
    for entry in rules:
        try:
            if not entry.is_dummy:
                test = compile_query(entry.test_text, entry.prefix_map)
                passed = evaluate(test, index, default_graph=UNION).truth
            else:
                passed = True
            actions = entry.on_success if passed else entry.on_failure
            for action in actions:
                if action.target_policy == LOG_GRAPH:
                    target = LOGS
                elif action.target_policy == EXPLICIT and action.target_graph:
                    target = T(action.target_graph)
                else:
                    target = augmentation_target(index)
                added = execute_update(action.update_text, index, None, target=target, default_graph=UNION,
                                       scope=entry.id, prefixes=entry.prefix_map, warnings=report.warnings)
                report.delta.add_all(added)
            report.applied.append(entry.id)
        except (EvaluationError, ExprError, SparqlSyntaxError, UpdateAborted, RemoteQueryError) as exc:
            log.warning("augmentation rule %s skipped: %s", entry.id, exc)
            report.skipped.append((entry.id, str(exc)))
    return report


# --- inference ------------------------------------------------------------------------

def run_reasoning(index: Dataset, schema: set, max_iterations: int = 100) -> Dataset:
    """Saturate each endpoint graph with the ontology; inferred triples stay in that graph."""
    from kgindex.owlrl import saturate

    delta = Dataset()
    for graph in sorted(set(endpoint_graphs(index).values()), key=lambda t: t.value):
        data = {q.triple for q in index.match(g=graph)}
        if not data:
            continue
        closed = saturate(data, schema, max_iterations)
        # memberships in anonymous ontology classes are intermediate results only
        delta.add_all(Quad(s, p, o, graph) for (s, p, o) in closed - data
                      if BLANK not in (s.kind, o.kind))
    index.add_all(delta)
    if schema:
        index.add_all(Quad(s, p, o, ONTOLOGY_GRAPH) for (s, p, o) in stable_blank_nodes(schema))
    return delta


def stable_blank_nodes(triples: set) -> set:
    """Blank nodes replaced by skolem IRIs derived from what they describe.

    Parser labels depend on how much was parsed before; content-derived
    names keep the stored ontology copy identical from run to run.
    """
    out_edges: dict[Term, list] = {}
    for s, p, o in triples:
        if s.kind == BLANK:
            out_edges.setdefault(s, []).append((p, o))

    def signature(node: Term, visiting: frozenset) -> str:
        if node.kind != BLANK:
            return node.n3()
        if node in visiting:
            return "_:cycle"
        inner = visiting | {node}
        return "[" + " ".join(sorted(f"{p.n3()} {signature(o, inner)}"
                                     for p, o in out_edges.get(node, ()))) + "]"

    names: dict[Term, Term] = {}
    taken: dict[str, int] = {}
    blanks = {t for triple in triples for t in (triple[0], triple[2]) if t.kind == BLANK}
    for node in sorted(blanks, key=lambda b: (signature(b, frozenset()), b.value)):
        sig = signature(node, frozenset())
        n = taken.get(sig, 0)
        taken[sig] = n + 1
        names[node] = skolemize(sig, f"ontology|{n}")
    return {(names.get(s, s), p, names.get(o, o)) for s, p, o in triples}


# --- determinism ------------------------------------------------------------------------

TIMING_PREDICATES = {KGI.averageExecutionTime}
_FIXED_INSTANT = make_literal("1970-01-01T00:00:00.000Z", XSD.dateTime)
_FIXED_DURATION = make_literal("0.0", XSD.decimal)


def normalize_timestamps(ds: Dataset) -> Dataset:
    """Copy of ``ds`` with run-dependent timing values replaced by constants."""
    out = Dataset()
    for q in ds:
        o = q.o
        if o.kind == LITERAL and o.datatype in (XSD.dateTime, XSD.dateTimeStamp):
            o = _FIXED_INSTANT
        elif q.p.kind == IRI and q.p.value in TIMING_PREDICATES:
            o = _FIXED_DURATION
        out.add(Quad(q.s, q.p, o, q.g))
    return out
