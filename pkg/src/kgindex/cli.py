"""Command line entry point: validate, extract, augment, reason, report, run-all, mock-fleet."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional

from kgindex.indexer import (
    CampaignConfig,
    CatalogError,
    Indexer,
    load_catalog,
    run_augmentation,
    run_reasoning,
)
from kgindex.manifest import AUGMENTATION, EXTRACTION, ManifestError, load_rule_tree, validate_rules
from kgindex.mocknet import load_fleet_spec, spawn_fleet, stop_fleet
from kgindex.namespaces import STANDARD_PREFIXES
from kgindex.owlrl import SaturationIncomplete, load_ontology
from kgindex.rdf.model import Dataset
from kgindex.rdf.nquads import load_nquads, serialize_nquads
from kgindex.rdf.turtle import RDFSyntaxError
from kgindex.rdf.writer import serialize_trig
from kgindex.reports import generate_reports

log = logging.getLogger("kgindex")

ENV_PREFIX = "KGINDEX_"
EXTRACTION_FILE = "extraction.nq"
AUGMENTED_FILE = "augmented.nq"
INDEX_NQ = "index.nq"
INDEX_TRIG = "index.trig"
REPORTS_DIR = "reports"

# option name -> (type, default)
OPTIONS = {
    "catalog": (Path, None),
    "rules": (Path, None),
    "ontology": (Path, None),
    "out": (Path, Path("out")),
    "input": (Path, None),
    "timeout_s": (float, 60.0),
    "retries": (int, 1),
    "page_size": (int, 10000),
    "jobs": (int, 16),
    "politeness_ms": (int, 0),
    "max_iterations": (int, 100),
    "backoff_s": (float, 2.0),
}


class UsageError(Exception):
    pass


def bundled(name: str) -> Path:
    return Path(str(resources.files("kgindex").joinpath("data", name)))


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value file with the same keys as the flags")
    parser.add_argument("--catalog", help="endpoint catalog: one URL per line, or Turtle")
    parser.add_argument("--rules", help="rules directory (with extraction/ and augmentation/)")
    parser.add_argument("--ontology", help="ontology Turtle file for the inference stage")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--input", help="input N-Quads for augment/reason/report")
    parser.add_argument("--timeout-s", dest="timeout_s", help="per-request timeout in seconds (default: 60)")
    parser.add_argument("--retries", help="retries on network errors and timeouts (default: 1)")
    parser.add_argument("--page-size", dest="page_size", help="rows per page for action queries (default: 10000)")
    parser.add_argument("--jobs", help="endpoints processed in parallel (default: 16)")
    parser.add_argument("--politeness-ms", dest="politeness_ms", help="pause between requests to one endpoint")
    parser.add_argument("--max-iterations", dest="max_iterations", help="inference round limit (default: 100)")
    parser.add_argument("--backoff-s", dest="backoff_s", help="first retry delay in seconds (default: 2)")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgindex", description="Index SPARQL endpoints with declarative rules.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "check rule manifests and the ontology"),
        ("extract", "run extraction rules against the catalog"),
        ("augment", "apply augmentation rules to an extraction index"),
        ("reason", "saturate an index with the ontology"),
        ("report", "write usage tables and summaries"),
        ("run-all", "extract, augment, reason and report"),
    ):
        _common(sub.add_parser(name, help=help_text))
    fleet = sub.add_parser("mock-fleet", help="serve a fleet of mock endpoints")
    _common(fleet)
    fleet.add_argument("--spec", type=Path, required=True, help="fleet description (key = value sections)")
    fleet.add_argument("--duration-s", type=float, default=None, help="stop after this many seconds")
    fleet.add_argument("--catalog-out", type=Path, default=None, help="write the mock URLs as a catalog file")
    return parser


def _read_config(path: Path) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    text = path.read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[kgindex]\n" + text
    cp.read_string(text, source=str(path))
    out = {}
    for section in cp.sections():
        for key, value in cp[section].items():
            out[key.replace("-", "_")] = value
    return out


def resolve_options(args: argparse.Namespace, environ=None) -> dict:
    """Flags over environment over config file over defaults."""
    environ = os.environ if environ is None else environ
    layers: list[dict] = []
    config_path = getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        layers.append(_read_config(path))
    layers.append({k: environ[ENV_PREFIX + k.upper()] for k in OPTIONS if ENV_PREFIX + k.upper() in environ})
    layers.append({k: getattr(args, k) for k in OPTIONS if getattr(args, k, None) is not None})
    out = {}
    for key, (kind, default) in OPTIONS.items():
        value = default
        for layer in layers:
            if key in layer:
                value = layer[key]
        if value is not None and not isinstance(value, kind):
            try:
                value = kind(value)
            except ValueError:
                raise UsageError(f"invalid value for {key.replace('_', '-')}: {value!r}")
        out[key] = value
    unknown = set(layers[0]) - set(OPTIONS) if config_path else set()
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return out


def _config(opts: dict) -> CampaignConfig:
    cfg = CampaignConfig(
        catalog=opts["catalog"],
        rules=opts["rules"] or bundled("rules"),
        ontology=opts["ontology"] or bundled("ontology/index-ontology.ttl"),
        out=opts["out"],
        timeout_s=opts["timeout_s"],
        retries=opts["retries"],
        page_size=opts["page_size"],
        jobs=opts["jobs"],
        politeness_ms=opts["politeness_ms"],
        max_iterations=opts["max_iterations"],
        backoff_s=opts["backoff_s"],
    )
    problems = cfg.check_paths()
    if problems:
        raise UsageError("; ".join(problems))
    for name in ("timeout_s", "page_size", "jobs", "max_iterations"):
        if getattr(cfg, name) <= 0:
            raise UsageError(f"{name.replace('_', '-')} must be positive")
    if cfg.retries < 0 or cfg.politeness_ms < 0 or cfg.backoff_s < 0:
        raise UsageError("retries, politeness-ms and backoff-s must not be negative")
    return cfg


def _write_index(ds: Dataset, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_nquads(ds), encoding="utf-8")


def _read_index(path: Path) -> Dataset:
    if not path.is_file():
        raise UsageError(f"input index not found: {path}")
    return load_nquads(path.read_text(encoding="utf-8"))


# --- stages ------------------------------------------------------------------------

def do_validate(cfg: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        tree = load_rule_tree(cfg.rules)
    except (ManifestError, RDFSyntaxError) as exc:
        print(f"error: {exc}", file=out)
        return 1
    diagnostics = validate_rules(tree[EXTRACTION] + tree[AUGMENTATION])
    ontology_ok = True
    if cfg.ontology is not None:
        try:
            load_ontology(cfg.ontology)
        except RDFSyntaxError as exc:
            print(f"error: ontology {cfg.ontology}: {exc}", file=out)
            ontology_ok = False
    for d in diagnostics:
        print(d, file=out)
    errors = sum(1 for d in diagnostics if d.severity == "error")
    print(f"{len(tree[EXTRACTION])} extraction rules, {len(tree[AUGMENTATION])} augmentation rules, "
          f"{errors} errors, {len(diagnostics) - errors} warnings", file=out)
    return 0 if errors == 0 and ontology_ok else 1


def do_extract(cfg: CampaignConfig, out=None) -> tuple[int, Dataset]:
    out = out or sys.stdout
    if cfg.catalog is None:
        raise UsageError("extract needs --catalog")
    try:
        catalog = load_catalog(cfg.catalog, cfg.timeout_s, cfg.retries)
    except CatalogError as exc:
        raise UsageError(str(exc))
    tree = load_rule_tree(cfg.rules)
    problems = [d for d in validate_rules(tree[EXTRACTION]) if d.severity == "error"]
    if problems:
        raise UsageError("invalid extraction rules: " + "; ".join(str(d) for d in problems))
    indexer = Indexer(cfg)
    index = indexer.run_extraction(catalog, tree[EXTRACTION])
    _write_index(index, cfg.out / EXTRACTION_FILE)
    lines = []
    for ep in catalog:
        r = indexer.reports[ep.url]
        state = "indexed" if r.available else "unavailable"
        lines.append(f"{ep.url}\t{state}\ttests={r.tests}\tpassed={r.passed}\tinserted={r.inserted}")
    indexed = sum(1 for r in indexer.reports.values() if r.available)
    lines.append(f"campaign: {len(catalog)} endpoints, {indexed} indexed")
    (cfg.out / "campaign.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line, file=out)
    code = 1 if catalog and indexed == 0 else 0
    return code, index


def do_augment(cfg: CampaignConfig, index: Optional[Dataset] = None, source: Optional[Path] = None,
               out=None) -> Dataset:
    out = out or sys.stdout
    if index is None:
        index = _read_index(source or cfg.out / EXTRACTION_FILE)
    tree = load_rule_tree(cfg.rules)
    problems = [d for d in validate_rules(tree[AUGMENTATION]) if d.severity == "error"]
    if problems:
        raise UsageError("invalid augmentation rules: " + "; ".join(str(d) for d in problems))
    report = run_augmentation(tree[AUGMENTATION], index)
    _write_index(index, cfg.out / AUGMENTED_FILE)
    print(f"augmentation: {len(report.applied)} rules applied, {len(report.skipped)} skipped, "
          f"{len(report.delta)} quads added", file=out)
    return index


def do_reason(cfg: CampaignConfig, index: Optional[Dataset] = None, source: Optional[Path] = None,
              out=None) -> Dataset:
    out = out or sys.stdout
    if index is None:
        index = _read_index(source or cfg.out / AUGMENTED_FILE)
    schema = load_ontology(cfg.ontology) if cfg.ontology else set()
    delta = run_reasoning(index, schema, cfg.max_iterations)
    _write_index(index, cfg.out / INDEX_NQ)
    (cfg.out / INDEX_TRIG).write_text(serialize_trig(index, STANDARD_PREFIXES), encoding="utf-8")
    print(f"inference: {len(delta)} quads inferred", file=out)
    return index


def do_report(cfg: CampaignConfig, index: Optional[Dataset] = None, source: Optional[Path] = None,
              out=None) -> list[Path]:
    out = out or sys.stdout
    if index is None:
        index = _read_index(source or cfg.out / INDEX_NQ)
    written = generate_reports(index, cfg.out / REPORTS_DIR)
    print(f"reports: {len(written)} files in {cfg.out / REPORTS_DIR}", file=out)
    return written


def do_mock_fleet(args, cfg: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        specs = load_fleet_spec(args.spec)
    except (OSError, ValueError, configparser.Error) as exc:
        raise UsageError(f"fleet spec {args.spec}: {exc}")
    handles = spawn_fleet(specs)
    try:
        for h in handles:
            print(f"{h.name}\t{h.url}", file=out)
        if args.catalog_out:
            args.catalog_out.write_text("".join(h.url + "\n" for h in handles), encoding="utf-8")
        out.flush()
        deadline = None if args.duration_s is None else time.monotonic() + args.duration_s
        try:
            while deadline is None or time.monotonic() < deadline:
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
    finally:
        stop_fleet(handles)
        cfg.out.mkdir(parents=True, exist_ok=True)
        with open(cfg.out / "mock-requests.jsonl", "w", encoding="utf-8") as fh:
            for h in handles:
                for entry in h.log:
                    fh.write(json.dumps({"mock": h.name, **entry.__dict__}, sort_keys=True) + "\n")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        cfg = _config(opts)
        cmd = args.command
        if cmd == "validate":
            return do_validate(cfg)
        cfg.out.mkdir(parents=True, exist_ok=True)
        source = opts["input"]
        if cmd == "extract":
            return do_extract(cfg)[0]
        if cmd == "augment":
            do_augment(cfg, source=source)
            return 0
        if cmd == "reason":
            do_reason(cfg, source=source)
            return 0
        if cmd == "report":
            do_report(cfg, source=source)
            return 0
        if cmd == "run-all":
            code, index = do_extract(cfg)
            index = do_augment(cfg, index)
            index = do_reason(cfg, index)
            do_report(cfg, index)
            return code
        if cmd == "mock-fleet":
            return do_mock_fleet(args, cfg)
    except UsageError as exc:
        print(f"kgindex: error: {exc}", file=sys.stderr)
        return 2
    except (ManifestError, RDFSyntaxError) as exc:
        print(f"kgindex: error: {exc}", file=sys.stderr)
        return 2
    except SaturationIncomplete as exc:
        print(f"kgindex: error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
