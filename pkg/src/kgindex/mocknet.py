"""A fleet of local SPARQL endpoints with configurable data and quirks.

Each mock answers the SPARQL protocol over loopback using the in-package
evaluator (extended dialect), and can reject features, stall, fail its first
requests, drop connections, vary RAND/NOW behaviour and advertise an
arbitrary ``Server`` header. Every request is logged.
"""

from __future__ import annotations

import configparser
import json
import random
import re
import socket
import struct
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from kgindex.rdf.model import Dataset
from kgindex.rdf.results import RESULTS_JSON, write_sparql_results
from kgindex.rdf.turtle import load_trig
from kgindex.sparql.evaluator import EvalContext, evaluate_local
from kgindex.sparql.lexer import strip_literals
from kgindex.sparql.parser import parse_query
from kgindex.sparql.values import format_datetime

FRESH = "fresh-per-call"
CONSTANT = "constant-per-query"
DRIFTING = "drifting-per-call"

FEATURE_PATTERNS = {
    "not-exists": re.compile(r"\bNOT\s+EXISTS\b", re.I),
    "exists": re.compile(r"\bEXISTS\b", re.I),
    "minus": re.compile(r"\bMINUS\b", re.I),
    "values": re.compile(r"\bVALUES\b", re.I),
    "bind": re.compile(r"\bBIND\s*\(", re.I),
    "subquery": re.compile(r"\{\s*SELECT\b", re.I),
    "aggregates": re.compile(r"\b(COUNT|SUM|AVG|MIN|MAX|SAMPLE|GROUP_CONCAT)\s*\(|\bGROUP\s+BY\b", re.I),
    "service": re.compile(r"\bSERVICE\b", re.I),
    "rand": re.compile(r"\bRAND\s*\(", re.I),
    "now": re.compile(r"\bNOW\s*\(", re.I),
}

ACTIVITY_HEADER = "X-KGIndex-Activity"
ROLE_HEADER = "X-KGIndex-Role"


class SpawnError(RuntimeError):
    pass


@dataclass
class MockSpec:
    name: str = "mock"
    dataset: str = ""  # TriG text
    features: dict = field(default_factory=dict)  # feature -> rejected HTTP status
    rand_mode: str = FRESH
    now_mode: str = CONSTANT
    latency: float = 0.0
    fail_first: int = 0
    server_header: Optional[str] = None
    availability: str = "up"
    drift_ms: int = 1
    seed: Optional[int] = None

    def rejected(self, query_text: str) -> Optional[tuple[str, int]]:
        """The first rejected feature the query uses, by keyword scan."""
        scanned = strip_literals(query_text)
        for name in sorted(self.features):
            pattern = FEATURE_PATTERNS.get(name)
            if pattern is None:
                raise ValueError(f"unknown mock feature {name!r}")
            if pattern.search(scanned):
                return name, int(self.features[name])
        return None


@dataclass
class RequestLogEntry:
    method: str
    query_text: Optional[str]
    timestamp: str
    status: Optional[int]
    is_update: bool = False
    role: Optional[str] = None
    activity: Optional[str] = None


def uses_feature(query_text: str, feature: str) -> bool:
    return bool(FEATURE_PATTERNS[feature].search(strip_literals(query_text)))


def answer_query(spec: MockSpec, dataset: Dataset, query_text: str, rng: random.Random) -> tuple[int, bytes]:
    """Status and body the mock sends for ``query_text`` (latency not applied)."""
    hit = spec.rejected(query_text)
    if hit is not None:
        name, status = hit
        return status, f"Query rejected: feature {name} is not supported".encode()
    parsed = parse_query(query_text, extended=True)
    if not parsed.ok:
        return 400, ("Malformed query: " + "; ".join(str(d) for d in parsed.diagnostics)).encode()
    q = parsed.query
    if q.is_update:
        return 400, b"Updates are not accepted"
    ctx = EvalContext(dataset)
    if spec.rand_mode == CONSTANT:
        value = rng.random()
        ctx.rand = lambda: value
    else:
        ctx.rand = rng.random
    base = datetime.now(timezone.utc)
    if spec.now_mode == DRIFTING:
        counter = iter(range(1 << 30))
        ctx.now = lambda: format_datetime(base + timedelta(milliseconds=spec.drift_ms * next(counter)))
    else:
        stamp = format_datetime(base)
        ctx.now = lambda: stamp
    try:
        doc = evaluate_local(q, ctx)
    except Exception as exc:  # evaluator failures become server errors, as on a real endpoint
        return 500, f"Evaluation failed: {exc}".encode()
    return 200, write_sparql_results(doc)


class MockHandle:
    """Control handle for one running mock."""

    def __init__(self, spec: MockSpec):
        self._lock = threading.Lock()
        self._spec = spec
        self._dataset = load_trig(spec.dataset) if spec.dataset else Dataset()
        self._rng = random.Random(spec.seed)
        self._log: list[RequestLogEntry] = []
        self._seen = 0
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        self.url = ""

    @property
    def spec(self) -> MockSpec:
        with self._lock:
            return self._spec

    @property
    def name(self) -> str:
        return self.spec.name

    def reconfigure(self, **changes) -> None:
        """Apply spec changes to subsequent requests (dataset text reloads the data)."""
        with self._lock:
            self._spec = replace(self._spec, **changes)
            if "dataset" in changes:
                self._dataset = load_trig(self._spec.dataset) if self._spec.dataset else Dataset()
            if "fail_first" in changes:
                self._seen = 0

    @property
    def log(self) -> list[RequestLogEntry]:
        with self._lock:
            return list(self._log)

    def dump_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.log:
                fh.write(json.dumps({"mock": self.name, **asdict(entry)}, sort_keys=True) + "\n")

    def _admit(self) -> tuple[MockSpec, Dataset, int]:
        with self._lock:
            self._seen += 1
            return self._spec, self._dataset, self._seen

    def _record(self, entry: RequestLogEntry) -> None:
        with self._lock:
            self._log.append(entry)

    def start(self, host: str = "127.0.0.1", port: int = 0) -> "MockHandle":
        handle = self

        class Handler(_MockRequestHandler):
            mock = handle

        try:
            self._server = ThreadingHTTPServer((host, port), Handler)
        except OSError as exc:
            raise SpawnError(f"cannot bind {host}:{port}: {exc}")
        self._server.daemon_threads = True
        h, p = self._server.server_address[:2]
        self.url = f"http://{h}:{p}/sparql"
        self._thread = threading.Thread(target=self._server.serve_forever, name=f"mock-{self.name}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None


class _MockRequestHandler(BaseHTTPRequestHandler):
    mock: MockHandle
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # keep test output quiet
        pass

    def send_response(self, code, message=None):
        # like the base class, but the Server header is only sent when configured
        self.log_request(code)
        self.send_response_only(code, message)
        self.send_header("Date", self.date_time_string())
        header = self.mock.spec.server_header
        if header:
            self.send_header("Server", header)

    def _read_operation(self) -> tuple[Optional[str], bool]:
        parsed = urlparse(self.path)
        params = parse_qs(parsed.query, keep_blank_values=True)
        if self.command == "POST":
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length).decode("utf-8", "replace")
            ctype = (self.headers.get("Content-Type") or "").split(";")[0].strip().lower()
            if ctype == "application/sparql-query":
                return body, False
            if ctype == "application/sparql-update":
                return body, True
            params.update(parse_qs(body, keep_blank_values=True))
        if "update" in params:
            return params["update"][0], True
        if "query" in params:
            return params["query"][0], False
        return None, False

    def _handle(self):
        arrived = format_datetime(datetime.now(timezone.utc)).value
        text, is_update = self._read_operation()
        spec, dataset, n = self.mock._admit()
        entry = RequestLogEntry(self.command, text, arrived, None, is_update,
                                self.headers.get(ROLE_HEADER), self.headers.get(ACTIVITY_HEADER))
        if spec.availability != "up" or n <= spec.fail_first:
            self.mock._record(entry)
            self._reset()
            return
        if is_update:
            status, body, ctype = 400, b"Updates are not accepted", "text/plain"
        elif text is None:
            status, body, ctype = 400, b"Missing query parameter", "text/plain"
        else:
            with self.mock._lock:
                rng = random.Random(self.mock._rng.random())
            status, body = answer_query(spec, dataset, text, rng)
            ctype = RESULTS_JSON if status == 200 else "text/plain"
        entry.status = status
        self.mock._record(entry)
        if spec.latency > 0:
            time.sleep(spec.latency)
        try:
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _reset(self):
        try:
            self.connection.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
        except OSError:
            pass
        self.close_connection = True
        try:
            self.connection.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.connection.close()

    do_GET = _handle
    do_POST = _handle


def spawn_fleet(specs: list[MockSpec], host: str = "127.0.0.1") -> list[MockHandle]:
    """Start one mock per spec on free loopback ports."""
    handles = []
    try:
        for spec in specs:
            handles.append(MockHandle(spec).start(host))
    except SpawnError:
        stop_fleet(handles)
        raise
    return handles


def stop_fleet(handles: list[MockHandle]) -> None:
    for h in handles:
        h.stop()


# --- fleet spec files ------------------------------------------------------------

def _features(value: str) -> dict:
    out = {}
    for item in value.replace(",", " ").split():
        name, _, status = item.partition(":")
        if name not in FEATURE_PATTERNS:
            raise ValueError(f"unknown mock feature {name!r}")
        out[name] = int(status or 400)
    return out


def load_fleet_spec(path) -> list[MockSpec]:
    """Fleet description in key-value text: one ``[name]`` section per mock.

    Keys: dataset (TriG path, relative to the file), reject (``feature:status``
    list), rand, now, latency (seconds), fail-first, server, availability,
    drift-ms, seed.
    """
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.read_string(path.read_text(encoding="utf-8"), source=str(path))
    specs = []
    for name in cp.sections():
        sec = cp[name]
        dataset = ""
        if sec.get("dataset"):
            dataset = (path.parent / sec["dataset"]).read_text(encoding="utf-8")
        specs.append(MockSpec(
            name=name,
            dataset=dataset,
            features=_features(sec.get("reject", "")),
            rand_mode=sec.get("rand", FRESH),
            now_mode=sec.get("now", CONSTANT),
            latency=sec.getfloat("latency", 0.0),
            fail_first=sec.getint("fail-first", 0),
            server_header=sec.get("server") or None,
            availability=sec.get("availability", "up"),
            drift_ms=sec.getint("drift-ms", 1),
            seed=sec.getint("seed") if sec.get("seed") else None,
        ))
    return specs
