"""Plain-text ``.crn`` network format.

One statement per line, ``#`` starts a comment::

    species A, B
    0 -> A + B @ 1.0
    A + B <-> 2 B @ 1.0, 0.5   # forward, reverse

A ``<->`` line with a single rate uses it for both directions.  Without a
``species`` declaration the species order is the order of first mention;
with one, every species used in a reaction must be declared.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .network import Complex, Network, Reaction

__all__ = ["ParseError", "ErrorKind", "parse_network", "serialize_network", "load_network"]


class ErrorKind(str, enum.Enum):
    SYNTAX = "Syntax"
    UNKNOWN_SPECIES = "UnknownSpecies"
    NON_POSITIVE_RATE = "NonPositiveRate"
    EMPTY_NETWORK = "EmptyNetwork"
    NO_OP_REACTION = "NoOpReaction"


class ParseError(ValueError):
    def __init__(self, line: int, column: int, message: str, kind: ErrorKind):
        self.line = line
        self.column = column
        self.message = message
        self.kind = ErrorKind(kind)
        super().__init__(f"{line}:{column}: {self.kind.value}: {message}")


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")
_NUMBER = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_KEYWORD = "species"


@dataclass
class _RawReaction:
    lhs: list[tuple[int, str, int, int]]  # (coefficient, name, line, column)
    rhs: list[tuple[int, str, int, int]]
    rates: list[float]
    reversible: bool
    line: int
    arrow_col: int


class _Cursor:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    @property
    def col(self) -> int:
        return self.pos + 1

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self, s: str) -> bool:
        self.skip_ws()
        return self.text.startswith(s, self.pos)

    def match(self, pattern: re.Pattern):
        self.skip_ws()
        m = pattern.match(self.text, self.pos)
        if m:
            self.pos = m.end()
        return m

    def error(self, message: str, kind=ErrorKind.SYNTAX, col: int | None = None):
        col = self.col if col is None else col
        col = min(max(col, 1), max(len(self.text), 1))
        return ParseError(self.lineno, col, message, kind)


def _parse_complex(cur: _Cursor) -> list[tuple[int, str, int, int]]:
    cur.skip_ws()
    m = _INT.match(cur.text, cur.pos)
    if m and m.group() == "0":
        after = m.end()
        rest = cur.text[after:].lstrip(" \t")
        if not _IDENT.match(rest):
            cur.pos = after
            return []
    terms = []
    while True:
        cur.skip_ws()
        term_col = cur.col
        coeff = 1
        m = cur.match(_INT)
        if m:
            coeff = int(m.group())
            if coeff == 0:
                raise cur.error("stoichiometric coefficient must be positive", col=term_col)
        cur.skip_ws()
        name_col = cur.col
        m = cur.match(_IDENT)
        if not m:
            raise cur.error("expected species name")
        if m.group() == _KEYWORD:
            raise cur.error("'species' is reserved", col=name_col)
        terms.append((coeff, m.group(), cur.lineno, name_col))
        if not cur.peek("+"):
            break
        cur.pos += 1
    return terms


def _parse_rate(cur: _Cursor) -> float:
    cur.skip_ws()
    col = cur.col
    m = cur.match(_NUMBER)
    if not m:
        raise cur.error("expected rate constant")
    value = float(m.group())
    if not value > 0:
        raise cur.error(f"rate constant must be positive, got {m.group()}", ErrorKind.NON_POSITIVE_RATE, col)
    if value == float("inf"):
        raise cur.error("rate constant overflows", col=col)
    return value


def _parse_reaction(cur: _Cursor) -> _RawReaction:
    lhs = _parse_complex(cur)
    cur.skip_ws()
    arrow_col = cur.col
    if cur.peek("<->"):
        reversible = True
        cur.pos += 3
    elif cur.peek("->"):
        reversible = False
        cur.pos += 2
    else:
        raise cur.error("expected '->' or '<->'")
    rhs = _parse_complex(cur)
    if not cur.peek("@"):
        raise cur.error("expected '@' followed by a rate constant")
    cur.pos += 1
    rates = [_parse_rate(cur)]
    if cur.peek(","):
        comma_col = cur.col
        cur.pos += 1
        if not reversible:
            raise cur.error("a second rate is only allowed on '<->' reactions", col=comma_col)
        rates.append(_parse_rate(cur))
    if not cur.at_end():
        raise cur.error("unexpected trailing input")
    return _RawReaction(lhs, rhs, rates, reversible, cur.lineno, arrow_col)


def _parse_species_decl(cur: _Cursor) -> list[tuple[str, int]]:
    names = []
    while True:
        cur.skip_ws()
        col = cur.col
        m = cur.match(_IDENT)
        if not m or m.group() == _KEYWORD:
            raise cur.error("expected species name", col=col)
        names.append((m.group(), col))
        if not cur.peek(","):
            break
        cur.pos += 1
    if not cur.at_end():
        raise cur.error("unexpected trailing input in species declaration")
    return names


def parse_network(source: str) -> Network:
    """Parse ``.crn`` text into a validated :class:`Network`.

    Raises :class:`ParseError` at the first defect, with a 1-based
    line/column.
    """
    declared: list[str] = []
    raw: list[_RawReaction] = []
    lines = source.split("\n")
    for lineno, line in enumerate(lines, start=1):
        if line.endswith("\r"):
            line = line[:-1]
        hash_at = line.find("#")
        body = line if hash_at < 0 else line[:hash_at]
        cur = _Cursor(body, lineno)
        if cur.at_end():
            continue
        cur.skip_ws()
        m = _IDENT.match(body, cur.pos)
        if m and m.group() == _KEYWORD and not _IDENT.match(body, m.end()):
            rest = body[m.end():]
            if rest[:1] in (" ", "\t"):
                cur.pos = m.end()
                for name, col in _parse_species_decl(cur):
                    if name in declared:
                        raise ParseError(lineno, col, f"species {name!r} declared twice", ErrorKind.SYNTAX)
                    declared.append(name)
                continue
        raw.append(_parse_reaction(cur))

    if not raw:
        raise ParseError(1, 1, "network has no reactions", ErrorKind.EMPTY_NETWORK)

    if declared:
        species = list(declared)
        for rx in raw:
            for _, name, ln, col in rx.lhs + rx.rhs:
                if name not in species:
                    raise ParseError(ln, col, f"species {name!r} is not declared", ErrorKind.UNKNOWN_SPECIES)
    else:
        species = []
        for rx in raw:
            for _, name, _, _ in rx.lhs + rx.rhs:
                if name not in species:
                    species.append(name)
    index = {s: i for i, s in enumerate(species)}
    d = len(species)

    def build(terms):
        coeffs = [0] * d
        for coeff, name, _, _ in terms:
            coeffs[index[name]] += coeff
        return Complex(tuple(coeffs))

    reactions = []
    for rx in raw:
        c_in, c_out = build(rx.lhs), build(rx.rhs)
        if c_in == c_out:
            raise ParseError(rx.line, rx.arrow_col, "input and output complexes are identical",
                             ErrorKind.NO_OP_REACTION)
        reactions.append(Reaction(c_in, c_out, rx.rates[0]))
        if rx.reversible:
            reactions.append(Reaction(c_out, c_in, rx.rates[-1]))
    return Network(tuple(species), tuple(reactions))


def _format_complex(c: Complex, species) -> str:
    if c.is_empty:
        return "0"
    parts = []
    for name, coeff in zip(species, c.coefficients):
        if coeff == 1:
            parts.append(name)
        elif coeff > 1:
            parts.append(f"{coeff} {name}")
    return " + ".join(parts)


def serialize_network(net: Network) -> str:
    """Canonical text: declaration line, then one reaction per line (LF endings)."""
    lines = ["species " + ", ".join(net.species)]
    for r in net.reactions:
        lines.append(
            f"{_format_complex(r.input, net.species)} -> {_format_complex(r.output, net.species)}"
            f" @ {r.rate_constant!r}"
        )
    return "\n".join(lines) + "\n"


def load_network(path) -> Network:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_network(fh.read())
