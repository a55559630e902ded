"""Rule manifests: load test/action entries from RDF, substitute templates, validate."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from kgindex.namespaces import ARTIFACT, DCTERMS, KGI, MF, RDF, STANDARD_PREFIXES
from kgindex.rdf.model import IRI, LITERAL, Term, UnsalvageableIRI, sanitize_iri
from kgindex.rdf.turtle import parse_turtle
from kgindex.sparql.federation import prologue_for
from kgindex.sparql.lexer import prefixes_in, tokenize
from kgindex.sparql.parser import find_services, parse_query

TOKEN = "$rawEndpointUrl"
PLACEHOLDER_URL = "http://placeholder.invalid/sparql"
_TOKEN_RE = re.compile(re.escape(TOKEN) + r"(?![A-Za-z0-9_·À-￿])")

EXTRACTION = "extraction"
AUGMENTATION = "augmentation"

ENDPOINT_GRAPH = "endpoint-graph"
LOG_GRAPH = "log-graph"
EXPLICIT = "explicit"


class ManifestError(ValueError):
    pass


class SubstitutionError(ValueError):
    pass


@dataclass(frozen=True)
class ActionSpec:
    update_text: str
    target_policy: str = ENDPOINT_GRAPH
    target_graph: Optional[str] = None


@dataclass(frozen=True)
class RuleEntry:
    id: str
    title: str
    kind: str  # "test-query" | "dummy-test"
    stage: str
    test_text: Optional[str] = None
    test_form: Optional[str] = None  # "ask" | "error-probe"
    on_success: tuple[ActionSpec, ...] = ()
    on_failure: tuple[ActionSpec, ...] = ()
    prefixes: tuple[tuple[str, str], ...] = ()
    source: Optional[str] = None

    @property
    def is_dummy(self) -> bool:
        return self.kind == "dummy-test"

    @property
    def prefix_map(self) -> dict[str, str]:
        return dict(self.prefixes)


@dataclass(frozen=True)
class RuleDiagnostic:
    severity: str
    rule: str
    part: str  # "test", "action 1", ...
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.rule} [{self.part}]: {self.message}"


# --- loading ---------------------------------------------------------------

def _objects(g: set, s: Term, p: str) -> list[Term]:
    pred = Term(IRI, p)
    return sorted((o for (s2, p2, o) in g if s2 == s and p2 == pred), key=lambda t: (t.kind, t.value))


def _one(g: set, s: Term, p: str) -> Optional[Term]:
    values = _objects(g, s, p)
    return values[0] if values else None


def read_list(g: set, head: Term) -> list[Term]:
    """Members of an RDF collection; raises ManifestError if the chain is malformed."""
    items = []
    seen = set()
    node = head
    while node != Term(IRI, RDF.nil):
        if node in seen:
            raise ManifestError(f"cyclic collection at {node.value}")
        seen.add(node)
        firsts = _objects(g, node, RDF.first)
        rests = _objects(g, node, RDF.rest)
        if len(firsts) != 1 or len(rests) != 1:
            raise ManifestError(f"malformed collection node {node.n3()}")
        items.append(firsts[0])
        node = rests[0]
    return items


def _test_form(text: str) -> str:
    toks = tokenize(text)
    i = 0
    while toks[i].kind == "WORD" and toks[i].value.upper() in ("PREFIX", "BASE"):
        i += 3 if toks[i].value.upper() == "PREFIX" else 2
        if i >= len(toks):
            return "error-probe"
    first = toks[i]
    return "ask" if first.kind == "WORD" and first.value.upper() == "ASK" else "error-probe"


def _actions(g: set, entry: Term, prop: str) -> tuple[ActionSpec, ...]:
    out = []
    for head in _objects(g, entry, prop):
        for item in read_list(g, head):
            if item.kind == LITERAL:
                out.append(ActionSpec(item.value))
                continue
            text = _one(g, item, MF.action)
            if text is None or text.kind != LITERAL:
                raise ManifestError(f"action of {entry.value} has no mf:action text")
            target = _one(g, item, KGI.targetGraph)
            if target is None:
                out.append(ActionSpec(text.value))
            elif target.value == KGI.Logs:
                out.append(ActionSpec(text.value, LOG_GRAPH, KGI.Logs))
            else:
                out.append(ActionSpec(text.value, EXPLICIT, target.value))
    return tuple(out)


def _is_entry_type(t: Term) -> bool:
    # the manifest vocabulary's class is ManifestEntry; lower-case spellings occur in the wild
    return t.kind == IRI and t.value.lower() == MF.ManifestEntry.lower()


def load_manifest(g: set, stage: str, prefixes: Optional[dict] = None, source: Optional[str] = None) -> list[RuleEntry]:
    """Entries of a manifest graph, in manifest-collection order or else by id."""
    rdf_type = Term(IRI, RDF.type)
    typed: dict[Term, set[str]] = {}
    for s, p, o in g:
        if p == rdf_type and o.kind == IRI:
            typed.setdefault(s, set()).add("entry" if _is_entry_type(o) else o.value)
    merged_prefixes = dict(STANDARD_PREFIXES)
    merged_prefixes.update(prefixes or {})
    prefix_items = tuple(sorted(merged_prefixes.items()))

    entries: dict[Term, RuleEntry] = {}
    for node, types in typed.items():
        if "entry" not in types:
            continue
        title_term = _one(g, node, DCTERMS["title"])
        title = title_term.value if title_term is not None else node.value
        query = _one(g, node, KGI.query)
        if KGI.DummyTest in types:
            kind, text, form = "dummy-test", None, None
        elif query is not None and query.kind == LITERAL:
            kind, text, form = "test-query", query.value, _test_form(query.value)
        else:
            raise ManifestError(f"entry {node.value} has neither a test query nor the dummy-test marker")
        entries[node] = RuleEntry(
            id=node.value,
            title=title,
            kind=kind,
            stage=stage,
            test_text=text,
            test_form=form,
            on_success=_actions(g, node, KGI.onSuccess),
            on_failure=_actions(g, node, KGI.onFailure),
            prefixes=prefix_items,
            source=source,
        )

    ordered: list[RuleEntry] = []
    for manifest, types in sorted(typed.items(), key=lambda kv: kv[0].value):
        if MF.Manifest not in types:
            continue
        for head in _objects(g, manifest, MF.entries):
            for item in read_list(g, head):
                if item in entries and entries[item] not in ordered:
                    ordered.append(entries[item])
    rest = sorted((e for e in entries.values() if e not in ordered), key=lambda e: e.id)
    return ordered + rest


def rules_base(stage: str, filename: str) -> str:
    """Base IRI for a rule file, independent of where the file is installed."""
    return f"{ARTIFACT}rules/{stage}/{filename}"


def load_rule_file(path: Path, stage: str) -> list[RuleEntry]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    result = parse_turtle(text, base=rules_base(stage, path.name), prefixes=STANDARD_PREFIXES)
    if not result.ok:
        detail = "; ".join(str(d) for d in result.diagnostics)
        raise ManifestError(f"{path}: {detail}")
    return load_manifest(result.value, stage, result.prefixes, source=str(path))


def load_rules_dir(directory: Path, stage: str) -> list[RuleEntry]:
    """All entries of ``*.ttl`` files in ``directory``, files taken in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        return []
    out: list[RuleEntry] = []
    for path in sorted(directory.glob("*.ttl"), key=lambda p: p.name):
        out.extend(load_rule_file(path, stage))
    return out


def load_rule_tree(root: Path) -> dict[str, list[RuleEntry]]:
    """``root/extraction`` and ``root/augmentation``; a root without them is a flat extraction set."""
    root = Path(root)
    ext, aug = root / EXTRACTION, root / AUGMENTATION
    if ext.is_dir() or aug.is_dir():
        return {EXTRACTION: load_rules_dir(ext, EXTRACTION), AUGMENTATION: load_rules_dir(aug, AUGMENTATION)}
    return {EXTRACTION: load_rules_dir(root, EXTRACTION), AUGMENTATION: []}


# --- templates ---------------------------------------------------------------

def endpoint_url(endpoint) -> str:
    return endpoint if isinstance(endpoint, str) else endpoint.url


def substitute_template(text: str, endpoint) -> str:
    """Replace each ``$rawEndpointUrl`` token by the bracketed endpoint IRI."""
    url = endpoint_url(endpoint)
    try:
        clean = sanitize_iri(url).value
    except UnsalvageableIRI as exc:
        raise SubstitutionError(str(exc))
    return _TOKEN_RE.sub(lambda _m: f"<{clean}>", text)


def with_prologue(text: str, prefixes: dict) -> str:
    """``text`` preceded by PREFIX declarations for the prefixed names it uses."""
    toks = tokenize(text)
    declared = set()
    for i, tok in enumerate(toks[:-1]):
        if tok.kind == "WORD" and tok.value.upper() == "PREFIX" and toks[i + 1].kind == "PNAME":
            declared.add(toks[i + 1].value[:-1])
    used = [p for p in prefixes_in(toks) if p not in declared]
    return prologue_for(prefixes, used) + text


# --- validation --------------------------------------------------------------

def _check_text(entry: RuleEntry, part: str, text: str, want_update: bool, out: list) -> Optional[object]:
    substituted = substitute_template(text, PLACEHOLDER_URL)
    result = parse_query(substituted, entry.prefix_map)
    for d in result.diagnostics:
        out.append(RuleDiagnostic(d.severity, entry.id, part, f"{d.line}:{d.column}: {d.message}"))
    if not result.ok:
        return None
    q = result.query
    if want_update and not q.is_update:
        out.append(RuleDiagnostic("error", entry.id, part, f"expected an INSERT update, found {q.form}"))
    if not want_update and q.is_update:
        out.append(RuleDiagnostic("error", entry.id, part, "a test must be a query, not an update"))
    services = find_services(q)
    if len(services) > 1:
        out.append(RuleDiagnostic("error", entry.id, part, "unsupported construct 'multiple SERVICE blocks'"))
    for svc in services:
        if not isinstance(svc.endpoint, Term):
            out.append(RuleDiagnostic("error", entry.id, part, "unsupported construct 'SERVICE with a variable endpoint'"))
    if entry.stage == AUGMENTATION and services:
        out.append(RuleDiagnostic("error", entry.id, part, "augmentation rules must not contain SERVICE"))
    return q


def validate_rule(entry: RuleEntry) -> list[RuleDiagnostic]:
    out: list[RuleDiagnostic] = []
    if entry.is_dummy:
        if not entry.on_success:
            out.append(RuleDiagnostic("error", entry.id, "test", "dummy test without success actions"))
    elif entry.test_text is not None:
        q = _check_text(entry, "test", entry.test_text, False, out)
        if q is not None and entry.stage == EXTRACTION and not find_services(q):
            out.append(RuleDiagnostic("warning", entry.id, "test",
                                      "extraction test has no SERVICE block; it will be sent to the endpoint as is"))
    for label, actions in (("success", entry.on_success), ("failure", entry.on_failure)):
        for i, action in enumerate(actions, 1):
            _check_text(entry, f"{label} action {i}", action.update_text, True, out)
    return out


def validate_rules(entries: Iterable[RuleEntry]) -> list[RuleDiagnostic]:
    out = []
    for e in entries:
        out.extend(validate_rule(e))
    return out
