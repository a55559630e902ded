"""Tokenizer for SPARQL query and update text.

Every token keeps its byte span so callers can slice verbatim source text
(SERVICE bodies are shipped to remote endpoints exactly as written).
Characters the subset does not know become ``UNKNOWN`` tokens instead of
failing, so bracket matching still works over foreign syntax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from kgindex.rdf.turtle import _BASE, _CHARS, _PLX, _U


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    start: int
    end: int


_SPEC = [
    ("WS", r"[ \t\r\n\f]+"),
    ("COMMENT", r"#[^\r\n]*"),
    ("IRI", r'<(?:[^\x00-\x20<>"{}|^`\\]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>'),
    ("STRING_LONG", r'"""(?:(?:"|"")?(?:[^"\\]|\\.))*"""' + r"|'''(?:(?:'|'')?(?:[^'\\]|\\.))*'''"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"' + r"|'(?:[^'\\\n\r]|\\.)*'"),
    ("VAR", rf"[?$](?:[{_U}0-9])(?:[{_U}0-9·̀-ͯ‿-⁀])*"),
    ("BNODE", rf"_:(?:[{_U}0-9])(?:[{_CHARS}.]*[{_CHARS}])?"),
    ("LANGTAG", r"@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*"),
    ("DOUBLE", r"(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)[eE][+-]?[0-9]+"),
    ("DECIMAL", r"[0-9]*\.[0-9]+"),
    ("INTEGER", r"[0-9]+"),
    (
        "PNAME",
        rf"(?:[{_BASE}](?:[{_CHARS}.]*[{_CHARS}])?)?:"
        rf"(?:(?:[{_U}:0-9]|{_PLX})(?:(?:[{_CHARS}.:]|{_PLX})*(?:[{_CHARS}:]|{_PLX}))?)?",
    ),
    ("WORD", rf"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"\^\^|&&|\|\||!=|<=|>=|[{}()\[\].,;*=<>!+\-/|^?]"),
    ("UNKNOWN", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{rx})" for name, rx in _SPEC), re.S)


def tokenize(text: str) -> list[Token]:
    """Tokens of ``text`` (whitespace and comments dropped), ending with an EOF token."""
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        kind = m.lastgroup
        if kind not in ("WS", "COMMENT"):
            value = m.group(0)
            if kind == "WORD":
                # a bare word directly followed by ':' is part of a prefixed name
                out.append(Token(kind, value, m.start(), m.end()))
            elif kind == "STRING_LONG":
                out.append(Token("STRING", value, m.start(), m.end()))
            else:
                out.append(Token(kind, value, m.start(), m.end()))
        pos = m.end()
    out.append(Token("EOF", "", n, n))
    return out


def strip_literals(text: str) -> str:
    """Text with IRIs, strings and comments blanked out, for keyword scanning."""
    parts = []
    pos = 0
    for m in _TOKEN_RE.finditer(text):
        if m.lastgroup in ("IRI", "STRING_LONG", "STRING", "COMMENT"):
            parts.append(text[pos : m.start()])
            parts.append(" ")
            pos = m.end()
    parts.append(text[pos:])
    return "".join(parts)


def variables_in(tokens: list[Token]) -> list[str]:
    """Distinct variable names in order of first appearance."""
    seen: dict[str, None] = {}
    for tok in tokens:
        if tok.kind == "VAR":
            seen.setdefault(tok.value[1:], None)
    return list(seen)


def prefixes_in(tokens: list[Token]) -> list[str]:
    seen: dict[str, None] = {}
    for tok in tokens:
        if tok.kind == "PNAME":
            seen.setdefault(tok.value.split(":", 1)[0], None)
    return list(seen)
