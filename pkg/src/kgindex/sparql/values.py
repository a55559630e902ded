"""Literal value semantics: numerics, dateTimes, comparison, effective boolean value."""

from __future__ import annotations

import math
import re
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation, localcontext

from kgindex.namespaces import RDF_LANGSTRING, XSD, XSD_STRING
from kgindex.rdf.model import BLANK, IRI, LITERAL, Term, make_literal


class ExprError(Exception):
    """Expression evaluation error; leaves the affected value unbound."""


INTEGER_TYPES = {
    XSD.integer, XSD.int, XSD.long, XSD.short, XSD.byte, XSD.nonNegativeInteger,
    XSD.nonPositiveInteger, XSD.positiveInteger, XSD.negativeInteger, XSD.unsignedInt,
    XSD.unsignedLong, XSD.unsignedShort, XSD.unsignedByte,
}
NUMERIC_TYPES = INTEGER_TYPES | {XSD.decimal, XSD.float, XSD.double}
TRUE = make_literal("true", XSD.boolean)
FALSE = make_literal("false", XSD.boolean)

_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_DEC_RE = re.compile(r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)$")
_DOUBLE_RE = re.compile(r"^(?:[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?|[+-]?INF|NaN)$")
_DT_RE = re.compile(
    r"^(-?\d{4,})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:\d{2})?$"
)
_DATE_RE = re.compile(r"^(-?\d{4,})-(\d{2})-(\d{2})(Z|[+-]\d{2}:\d{2})?$")


def boolean(value: bool) -> Term:
    return TRUE if value else FALSE


def is_numeric(term: Term) -> bool:
    return term.kind == LITERAL and term.datatype in NUMERIC_TYPES


def numeric_value(term: Term):
    """int for the integer family, Decimal for xsd:decimal, float for float/double."""
    if not is_numeric(term):
        raise ExprError("not a number")
    lex = term.value.strip()
    dt = term.datatype
    if dt in INTEGER_TYPES:
        if not _INT_RE.match(lex):
            raise ExprError("ill-typed integer")
        return int(lex)
    if dt == XSD.decimal:
        if not _DEC_RE.match(lex):
            raise ExprError("ill-typed decimal")
        return Decimal(lex)
    if not _DOUBLE_RE.match(lex):
        raise ExprError("ill-typed double")
    return float(lex.replace("INF", "inf"))


def _rank(value) -> int:
    if isinstance(value, bool):
        raise ExprError("boolean is not numeric")
    if isinstance(value, int):
        return 0
    if isinstance(value, Decimal):
        return 1
    return 2


def decimal_lexical(value: Decimal) -> str:
    """Canonical xsd:decimal form: no exponent, at least one fractional digit."""
    if not value.is_finite():
        raise ExprError("non-finite decimal")
    text = format(value.normalize(), "f")
    if "." not in text:
        text += ".0"
    if text.startswith("-") and text.strip("-0.") == "":
        text = "0.0"
    return text


def double_lexical(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "INF" if value > 0 else "-INF"
    mantissa, _, exp = f"{value:.17E}".partition("E")
    # shortest digit string that still reads back as the same float
    for digits in range(1, 18):
        candidate = f"{value:.{digits - 1}E}"
        if float(candidate) == value:
            mantissa, _, exp = candidate.partition("E")
            break
    if "." not in mantissa:
        mantissa += ".0"
    mantissa = mantissa.rstrip("0")
    if mantissa.endswith("."):
        mantissa += "0"
    return f"{mantissa}E{int(exp)}"


def make_number(value, kind: int) -> Term:
    if kind == 0:
        return make_literal(str(int(value)), XSD.integer)
    if kind == 1:
        return make_literal(decimal_lexical(Decimal(value)), XSD.decimal)
    return make_literal(double_lexical(float(value)), XSD.double)


def arithmetic(op: str, a: Term, b: Term) -> Term:
    if op == "-" and is_datetime(a) and is_datetime(b):
        return make_literal(decimal_lexical(seconds_between(b, a)), XSD.decimal)
    x = numeric_value(a)
    y = numeric_value(b)
    kind = max(_rank(x), _rank(y))
    if op == "/" and kind == 0:
        kind = 1
    if kind == 1:
        x, y = Decimal(x), Decimal(y)
    elif kind == 2:
        x, y = float(x), float(y)
    try:
        with localcontext() as ctx:
            ctx.prec = 28
            if op == "+":
                r = x + y
            elif op == "-":
                r = x - y
            elif op == "*":
                r = x * y
            elif op == "/":
                if y == 0 and kind != 2:
                    raise ExprError("division by zero")
                if kind == 2 and y == 0:
                    r = math.copysign(math.inf, x) if x else math.nan
                else:
                    r = x / y
            else:
                raise ExprError(f"unknown operator {op}")
    except (InvalidOperation, OverflowError, ZeroDivisionError) as exc:
        raise ExprError(str(exc))
    return make_number(r, kind)


def negate(a: Term) -> Term:
    x = numeric_value(a)
    return make_number(-x, _rank(x))


# --- dateTime --------------------------------------------------------------

def is_datetime(term: Term) -> bool:
    return term.kind == LITERAL and term.datatype in (XSD.dateTime, XSD.dateTimeStamp)


def datetime_value(term: Term) -> datetime:
    m = _DT_RE.match(term.value.strip())
    if not m:
        raise ExprError("ill-typed dateTime")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac = m.group(7) or ""
    micro = int((frac[1:] + "000000")[:6]) if frac else 0
    extra = timedelta(0)
    if hour == 24 and minute == 0 and second == 0 and micro == 0:
        hour = 0
        extra = timedelta(days=1)
    try:
        dt = datetime(year, month, day, hour, minute, second, micro, tzinfo=_tz(m.group(8)))
    except ValueError as exc:
        raise ExprError(str(exc))
    return dt + extra


def _tz(text):
    if not text or text == "Z":
        return timezone.utc
    sign = 1 if text[0] == "+" else -1
    hours, minutes = int(text[1:3]), int(text[4:6])
    return timezone(sign * timedelta(hours=hours, minutes=minutes))


def seconds_between(start: Term, end: Term) -> Decimal:
    """end − start in exact decimal seconds (values without a zone are read as UTC)."""
    delta = datetime_value(end) - datetime_value(start)
    return Decimal(delta.days * 86400 + delta.seconds) + Decimal(delta.microseconds) / Decimal(1000000)


def format_datetime(dt: datetime) -> Term:
    """UTC xsd:dateTime literal with millisecond precision."""
    dt = dt.astimezone(timezone.utc)
    text = dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{dt.microsecond // 1000:03d}Z"
    return make_literal(text, XSD.dateTime)


# --- strings and booleans ---------------------------------------------------

def is_string(term: Term) -> bool:
    return term.kind == LITERAL and term.datatype in (XSD_STRING, None)


def string_like(term: Term) -> bool:
    return term.kind == LITERAL and term.datatype in (XSD_STRING, None, RDF_LANGSTRING)


def ebv(term: Term) -> bool:
    if term.kind != LITERAL:
        raise ExprError("no effective boolean value for non-literal")
    if term.datatype == XSD.boolean:
        v = term.value.strip()
        if v in ("true", "1"):
            return True
        if v in ("false", "0"):
            return False
        return False
    if is_numeric(term):
        try:
            x = numeric_value(term)
        except ExprError:
            return False
        if isinstance(x, float) and math.isnan(x):
            return False
        return x != 0
    if string_like(term):
        return term.value != ""
    raise ExprError("no effective boolean value")


# --- comparison -------------------------------------------------------------

def _comparable(a: Term, b: Term):
    """Pair of natively comparable values, or None if the terms are not ordered together."""
    if a.kind != LITERAL or b.kind != LITERAL:
        return None
    if is_numeric(a) and is_numeric(b):
        x, y = numeric_value(a), numeric_value(b)
        if isinstance(x, float) or isinstance(y, float):
            return float(x), float(y)
        return Decimal(x), Decimal(y)
    if is_datetime(a) and is_datetime(b):
        return datetime_value(a), datetime_value(b)
    if is_string(a) and is_string(b):
        return a.value, b.value
    if a.datatype == XSD.boolean and b.datatype == XSD.boolean:
        return ebv(a), ebv(b)
    if a.datatype == RDF_LANGSTRING and b.datatype == RDF_LANGSTRING and a.language.lower() == b.language.lower():
        return a.value, b.value
    return None


def equals(a: Term, b: Term) -> bool:
    pair = _comparable(a, b)
    if pair is not None:
        return pair[0] == pair[1]
    if a == b:
        return True
    if a.kind == LITERAL and b.kind == LITERAL:
        known = NUMERIC_TYPES | {XSD_STRING, XSD.boolean, XSD.dateTime, RDF_LANGSTRING}
        if a.datatype not in known or b.datatype not in known:
            if a.datatype == b.datatype and a.language == b.language:
                raise ExprError("cannot compare literals of unknown datatype")
        return False
    return False


def compare(op: str, a: Term, b: Term) -> bool:
    if op == "=":
        return equals(a, b)
    if op == "!=":
        return not equals(a, b)
    pair = _comparable(a, b)
    if pair is None:
        raise ExprError("values are not ordered")
    x, y = pair
    if op == "<":
        return x < y
    if op == ">":
        return x > y
    if op == "<=":
        return x <= y
    if op == ">=":
        return x >= y
    raise ExprError(f"unknown operator {op}")


_KIND_ORDER = {BLANK: 1, IRI: 2, LITERAL: 3}


def order_key(term):
    """Total order for ORDER BY: unbound < blank < IRI < literal, literals by value when possible."""
    if term is None:
        return (0,)
    if term.kind != LITERAL:
        return (_KIND_ORDER[term.kind], term.value)
    try:
        if is_numeric(term):
            x = numeric_value(term)
            if isinstance(x, float) and math.isnan(x):
                return (3, 0, 0, "", term.value)
            return (3, 0, 1, float(x) if isinstance(x, float) else Decimal(x), term.value)
        if is_datetime(term):
            return (3, 1, 1, datetime_value(term).timestamp(), term.value)
    except ExprError:
        pass
    return (3, 2, 1, term.datatype or "", term.value, term.language or "")


class OrderKey:
    """Wrapper making ``order_key`` tuples of mixed types sortable."""

    __slots__ = ("key",)

    def __init__(self, term):
        self.key = order_key(term)

    def __lt__(self, other: "OrderKey") -> bool:
        a, b = self.key, other.key
        for x, y in zip(a, b):
            if x == y:
                continue
            try:
                return x < y
            except TypeError:
                return str(type(x)) < str(type(y))
        return len(a) < len(b)

    def __eq__(self, other) -> bool:
        return self.key == other.key
