"""SPARQL protocol client with timing, retries, header capture and error classes."""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional
from urllib.parse import urlencode

import requests

from kgindex import __version__
from kgindex.namespaces import ARTIFACT
from kgindex.rdf.model import Term, digest
from kgindex.rdf.results import RESULTS_JSON, ProtocolError, ResultsDocument, parse_sparql_results
from kgindex.sparql.engine import RemoteQueryError

log = logging.getLogger("kgindex.client")

GET_LIMIT = 2000
DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRIES = 1
DEFAULT_BACKOFF = 2.0
USER_AGENT = f"kgindex/{__version__} (+http://ns.kgindex.org/; SPARQL endpoint indexer)"

OK = "ok"
HTTP_ERROR = "http-error"
TIMEOUT = "timeout"
NETWORK_ERROR = "network-error"
MALFORMED = "malformed-results"

UNAVAILABLE = "unavailable"
REFUSED = "refused-query"
BAD_RESULTS = "bad-results"
NONE = "none"


def index_graph_for(url: str) -> str:
    return f"{ARTIFACT}graph/{digest(url)}"


@dataclass(frozen=True)
class EndpointDescriptor:
    url: str
    labels: tuple[str, ...] = ()
    timeout: float = DEFAULT_TIMEOUT
    retries: int = DEFAULT_RETRIES

    @property
    def index_graph(self) -> Term:
        return Term.iri(index_graph_for(self.url))


@dataclass
class RemoteResponse:
    outcome: str
    started_at: datetime
    ended_at: datetime
    status: Optional[int] = None
    results: Optional[ResultsDocument] = None
    server_header: Optional[str] = None
    content_type: Optional[str] = None
    error: Optional[str] = None
    attempts: int = 1

    @property
    def ok(self) -> bool:
        return self.outcome == OK

    @property
    def duration(self) -> float:
        return (self.ended_at - self.started_at).total_seconds()


def classify_error(r: RemoteResponse) -> str:
    if r.outcome in (TIMEOUT, NETWORK_ERROR):
        return UNAVAILABLE
    if r.outcome == HTTP_ERROR:
        return REFUSED
    if r.outcome == MALFORMED:
        return BAD_RESULTS
    return NONE


def _floor_ms(dt: datetime) -> datetime:
    return dt.replace(microsecond=dt.microsecond // 1000 * 1000)


def _ceil_ms(dt: datetime) -> datetime:
    extra = dt.microsecond % 1000
    return dt if extra == 0 else dt + timedelta(microseconds=1000 - extra)


@dataclass
class _EndpointSlot:
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_end: float = -math.inf


class SparqlClient:
    """Thread-safe client; caps in-flight requests globally and to one per endpoint."""

    def __init__(self, max_in_flight: int = 16, politeness_ms: int = 0, backoff_s: float = DEFAULT_BACKOFF,
                 user_agent: str = USER_AGENT, get_limit: int = GET_LIMIT):
        self._global = threading.BoundedSemaphore(max(1, max_in_flight))
        self._slots: dict[str, _EndpointSlot] = {}
        self._slots_lock = threading.Lock()
        self._local = threading.local()
        self.politeness = politeness_ms / 1000.0
        self.backoff = backoff_s
        self.user_agent = user_agent
        self.get_limit = get_limit

    def _session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = requests.Session()
            s.headers["User-Agent"] = self.user_agent
            self._local.session = s
        return s

    def _slot(self, url: str) -> _EndpointSlot:
        with self._slots_lock:
            return self._slots.setdefault(url, _EndpointSlot())

    def query_remote(self, endpoint: EndpointDescriptor, query_text: str,
                     headers: Optional[dict] = None) -> RemoteResponse:
        """Send one query; never raises, failures are reported in ``outcome``."""
        slot = self._slot(endpoint.url)
        with slot.lock, self._global:
            wait = slot.last_end + self.politeness - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            attempts = 0
            started = datetime.now(timezone.utc)
            t0 = time.perf_counter()
            while True:
                attempts += 1
                resp = self._attempt(endpoint, query_text, headers or {})
                if resp.outcome not in (TIMEOUT, NETWORK_ERROR) or attempts > endpoint.retries:
                    break
                delay = self.backoff * 2 ** (attempts - 1)
                log.info("retrying %s in %.1fs after %s", endpoint.url, delay, resp.outcome)
                time.sleep(delay)
            elapsed = time.perf_counter() - t0
            slot.last_end = time.monotonic()
        resp.started_at = _floor_ms(started)
        resp.ended_at = _ceil_ms(started + timedelta(seconds=elapsed))
        resp.attempts = attempts
        return resp

    def _attempt(self, endpoint: EndpointDescriptor, query_text: str, headers: dict) -> RemoteResponse:
        now = datetime.now(timezone.utc)
        hdrs = {"Accept": f"{RESULTS_JSON}, application/json;q=0.9"}
        hdrs.update(headers)
        encoded = urlencode({"query": query_text})
        try:
            if len(encoded.encode("ascii")) <= self.get_limit:
                r = self._session().get(endpoint.url, params={"query": query_text}, headers=hdrs,
                                        timeout=endpoint.timeout)
            else:
                hdrs["Content-Type"] = "application/x-www-form-urlencoded"
                r = self._session().post(endpoint.url, data=encoded, headers=hdrs, timeout=endpoint.timeout)
        except requests.Timeout as exc:
            return RemoteResponse(TIMEOUT, now, now, error=str(exc))
        except requests.RequestException as exc:
            return RemoteResponse(NETWORK_ERROR, now, now, error=str(exc))
        server = r.headers.get("Server")
        ctype = r.headers.get("Content-Type")
        if not 200 <= r.status_code < 300:
            return RemoteResponse(HTTP_ERROR, now, now, status=r.status_code, server_header=server,
                                  content_type=ctype, error=r.text[:500])
        try:
            doc = parse_sparql_results(r.content, ctype or RESULTS_JSON)
        except ProtocolError as exc:
            return RemoteResponse(MALFORMED, now, now, status=r.status_code, server_header=server,
                                  content_type=ctype, error=str(exc))
        return RemoteResponse(OK, now, now, status=r.status_code, results=doc, server_header=server,
                              content_type=ctype)

    def executor(self, endpoint: EndpointDescriptor, headers: Optional[dict] = None, sink: Optional[list] = None):
        """Adapter for the query engine: raises ``RemoteQueryError`` unless the answer is ok.

        Every response is appended to ``sink`` when given.
        """
        def run(url: str, text: str) -> ResultsDocument:
            target = endpoint if url == endpoint.url else EndpointDescriptor(
                url, timeout=endpoint.timeout, retries=endpoint.retries)
            resp = self.query_remote(target, text, headers)
            if sink is not None:
                sink.append(resp)
            if not resp.ok:
                raise RemoteQueryError(f"{url}: {resp.outcome} {resp.status or ''} {resp.error or ''}".strip(), resp)
            return resp.results
        return run
