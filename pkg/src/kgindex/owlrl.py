"""Forward chaining over an OWL 2 RL rule subset.

Rules: cax-sco, cax-eqc1/2, cls-hv1/2, cls-int1/2, prp-spo1, prp-eqp1/2,
prp-dom, prp-rng. All premises are matched against schema ∪ data ∪ inferred.
The fixed-arity rules run semi-naively (one premise from the last round's
delta); the two intersection rules walk collections and fire in full each round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from kgindex.namespaces import OWL, RDF, RDFS, STANDARD_PREFIXES
from kgindex.rdf.model import IRI, LITERAL, Term
from kgindex.rdf.turtle import load_turtle

Triple = tuple[Term, Term, Term]

TYPE = Term.iri(RDF.type)
FIRST = Term.iri(RDF.first)
REST = Term.iri(RDF.rest)
NIL = Term.iri(RDF.nil)
SUBCLASS = Term.iri(RDFS.subClassOf)
SUBPROP = Term.iri(RDFS.subPropertyOf)
DOMAIN = Term.iri(RDFS.domain)
RANGE = Term.iri(RDFS.range)
EQCLASS = Term.iri(OWL.equivalentClass)
EQPROP = Term.iri(OWL.equivalentProperty)
HASVALUE = Term.iri(OWL.hasValue)
ONPROP = Term.iri(OWL.onProperty)
INTERSECTION = Term.iri(OWL.intersectionOf)


class SaturationIncomplete(RuntimeError):
    def __init__(self, iterations: int, delta_size: int):
        super().__init__(f"no fixpoint after {iterations} iterations; last round derived {delta_size} triples")
        self.iterations = iterations
        self.delta_size = delta_size


class NotInGraph(LookupError):
    pass


@dataclass(frozen=True)
class RlRule:
    name: str
    premises: tuple[tuple, ...]
    conclusion: tuple
    skip_literal_subject: bool = False


# premise order matters only for join efficiency: schema premises first
RULES: tuple[RlRule, ...] = (
    RlRule("cax-sco", ((("?c1", SUBCLASS, "?c2")), ("?x", TYPE, "?c1")), ("?x", TYPE, "?c2")),
    RlRule("cax-eqc1", (("?c1", EQCLASS, "?c2"), ("?x", TYPE, "?c1")), ("?x", TYPE, "?c2")),
    RlRule("cax-eqc2", (("?c1", EQCLASS, "?c2"), ("?x", TYPE, "?c2")), ("?x", TYPE, "?c1")),
    RlRule("cls-hv1", (("?r", HASVALUE, "?y"), ("?r", ONPROP, "?p"), ("?u", TYPE, "?r")), ("?u", "?p", "?y")),
    RlRule("cls-hv2", (("?r", HASVALUE, "?y"), ("?r", ONPROP, "?p"), ("?u", "?p", "?y")), ("?u", TYPE, "?r")),
    RlRule("prp-spo1", (("?p1", SUBPROP, "?p2"), ("?x", "?p1", "?y")), ("?x", "?p2", "?y")),
    RlRule("prp-eqp1", (("?p1", EQPROP, "?p2"), ("?x", "?p1", "?y")), ("?x", "?p2", "?y")),
    RlRule("prp-eqp2", (("?p1", EQPROP, "?p2"), ("?x", "?p2", "?y")), ("?x", "?p1", "?y")),
    RlRule("prp-dom", (("?p", DOMAIN, "?c"), ("?x", "?p", "?y")), ("?x", TYPE, "?c")),
    RlRule("prp-rng", (("?p", RANGE, "?c"), ("?x", "?p", "?y")), ("?y", TYPE, "?c"), skip_literal_subject=True),
)
LIST_RULES = ("cls-int1", "cls-int2")
RULE_NAMES = tuple(r.name for r in RULES) + LIST_RULES


def _is_var(x) -> bool:
    return isinstance(x, str)


class _Index:
    def __init__(self, triples: Iterable[Triple] = ()):
        self.all: set[Triple] = set()
        self.by_p: dict[Term, set[Triple]] = {}
        self.sp: dict[tuple, set[Term]] = {}
        self.po: dict[tuple, set[Term]] = {}
        for t in triples:
            self.add(t)

    def add(self, t: Triple) -> bool:
        if t in self.all:
            return False
        s, p, o = t
        self.all.add(t)
        self.by_p.setdefault(p, set()).add(t)
        self.sp.setdefault((s, p), set()).add(o)
        self.po.setdefault((p, o), set()).add(s)
        return True

    def match(self, s, p, o) -> Iterator[Triple]:
        if p is not None:
            if s is not None:
                for obj in self.sp.get((s, p), ()):
                    if o is None or obj == o:
                        yield (s, p, obj)
            elif o is not None:
                for subj in self.po.get((p, o), ()):
                    yield (subj, p, o)
            else:
                yield from self.by_p.get(p, ())
        else:
            for t in self.all:
                if (s is None or t[0] == s) and (o is None or t[2] == o):
                    yield t


def _bind(pattern, binding) -> tuple:
    return tuple(binding.get(x) if _is_var(x) else x for x in pattern)


def _unify(pattern, triple, binding) -> Optional[dict]:
    out = dict(binding)
    for slot, value in zip(pattern, triple):
        if _is_var(slot):
            if slot in out and out[slot] != value:
                return None
            out[slot] = value
        elif slot != value:
            return None
    return out


def _join(premises, index: _Index, binding: dict, matched: list) -> Iterator[tuple[dict, list]]:
    if not premises:
        yield binding, matched
        return
    first, rest = premises[0], premises[1:]
    for triple in list(index.match(*_bind(first, binding))):
        b = _unify(first, triple, binding)
        if b is not None:
            yield from _join(rest, index, b, matched + [triple])


def _fire(rule: RlRule, index: _Index, delta: Optional[set]) -> Iterator[tuple[Triple, tuple]]:
    """Conclusions with their premises; with ``delta``, at least one premise is taken from it."""
    positions = range(len(rule.premises)) if delta is not None else [None]
    for i in positions:
        if i is None:
            seeds = [({}, [])]
            others = rule.premises
        else:
            seeds = []
            for t in delta:
                b = _unify(rule.premises[i], t, {})
                if b is not None:
                    seeds.append((b, [t]))
            others = rule.premises[:i] + rule.premises[i + 1:]
        for seed, first in seeds:
            for b, used in _join(others, index, seed, first):
                s, p, o = _bind(rule.conclusion, b)
                if p.kind != IRI or s.kind == LITERAL:
                    continue
                yield (s, p, o), tuple(used)


def _members(index: _Index, head: Term) -> Optional[list[Term]]:
    out, seen, node = [], set(), head
    while node != NIL:
        if node in seen:
            return None
        seen.add(node)
        firsts = index.sp.get((node, FIRST), set())
        rests = index.sp.get((node, REST), set())
        if len(firsts) != 1 or len(rests) != 1:
            return None
        out.append(next(iter(firsts)))
        node = next(iter(rests))
    return out


def _fire_lists(name: str, index: _Index) -> Iterator[tuple[Triple, tuple]]:
    for c, _p, head in sorted(index.by_p.get(INTERSECTION, ())):
        members = _members(index, head)
        if members is None:
            continue
        decl = (c, INTERSECTION, head)
        if name == "cls-int1":
            if not members:
                continue
            candidates = set.intersection(*(index.po.get((TYPE, m), set()) for m in members))
            for y in candidates:
                yield (y, TYPE, c), (decl,) + tuple((y, TYPE, m) for m in members)
        else:
            for y in list(index.po.get((TYPE, c), ())):
                for m in members:
                    yield (y, TYPE, m), (decl, (y, TYPE, c))


class Saturated(set):
    """Saturation output; ``derivations`` maps each inferred triple to (rule, premises)."""

    derivations: dict


def saturate(data: Iterable[Triple], schema: Iterable[Triple] = (), max_iterations: int = 100,
             rule_order: Optional[list[str]] = None) -> Saturated:
    """data ∪ every triple derivable from schema ∪ data, to a fixpoint."""
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    data = set(data)
    schema = set(schema)
    order = list(rule_order) if rule_order is not None else list(RULE_NAMES)
    by_name = {r.name: r for r in RULES}
    index = _Index(schema | data)
    derivations: dict[Triple, tuple] = {}
    delta: set = set(index.all)
    for iteration in range(1, max_iterations + 1):
        new: dict[Triple, tuple] = {}
        for name in order:
            if name in LIST_RULES:
                fired = _fire_lists(name, index)
            else:
                fired = _fire(by_name[name], index, delta)
            for triple, premises in fired:
                if triple not in index.all and triple not in new:
                    new[triple] = (name, premises)
        if not new:
            break
        for triple, why in new.items():
            index.add(triple)
            derivations[triple] = why
        delta = set(new)
        if iteration == max_iterations:
            raise SaturationIncomplete(iteration, len(new))
    out = Saturated(index.all - (schema - data))
    out.derivations = {t: d for t, d in derivations.items() if t in out}
    return out


@dataclass
class Derivation:
    triple: Triple
    rule: Optional[str] = None  # None for an asserted triple
    premises: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def rules(self) -> list[str]:
        """Rule names in the tree, depth first."""
        out = [] if self.rule is None else [self.rule]
        for p in self.premises:
            out.extend(p.rules())
        return out


def explain(triple: Triple, saturated: Saturated) -> Derivation:
    """The first recorded derivation of ``triple``, down to asserted leaves."""
    if triple not in saturated:
        raise NotInGraph(f"triple not in the saturated graph: {triple}")
    derivations = getattr(saturated, "derivations", {})

    def build(t: Triple) -> Derivation:
        why = derivations.get(t)
        if why is None:
            return Derivation(t)
        rule, premises = why
        return Derivation(t, rule, [build(p) for p in premises])
    return build(triple)


def load_ontology(path) -> set[Triple]:
    """Schema triples from a Turtle ontology file."""
    return load_turtle(Path(path).read_text(encoding="utf-8"), prefixes=STANDARD_PREFIXES,
                       base=Path(path).resolve().as_uri())
