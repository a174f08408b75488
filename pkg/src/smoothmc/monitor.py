"""Bounded temporal properties over piecewise-constant trajectories.

Grammar::

    expr   := or
    or     := and ('|' and)*
    and    := unary ('&' unary)*
    unary  := '!' unary | ('G'|'F') '[' num ',' num ']' '(' expr ')' | '(' expr ')' | atom
    atom   := NAME op INT          op in  < <= == >= > != (also the unicode forms)

Temporal windows are closed.  A Boolean signal is kept as a normalised list
of half-open true-intervals ``[s, e)``; right-open ends are exactly what
right-continuous trajectories produce, and the operators below map such
sets to such sets, so nesting is handled without sampling.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .ssa import Trajectory


class PropertySyntaxError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        suffix = f" (at position {position})" if position is not None else ""
        super().__init__(message + suffix)


class HorizonError(ValueError):
    """Property needs more of the trajectory than was simulated."""


_OPS = {
    "<": np.less,
    "<=": np.less_equal,
    "==": np.equal,
    ">=": np.greater_equal,
    ">": np.greater,
    "!=": np.not_equal,
}


@dataclass(frozen=True)
class Atomic:
    species: str
    op: str
    value: int

    def __str__(self):
        return f"{self.species} {self.op} {self.value}"


@dataclass(frozen=True)
class Not:
    child: "Formula"

    def __str__(self):
        return f"!({self.child})"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __str__(self):
        return " & ".join(f"({c})" for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __str__(self):
        return " | ".join(f"({c})" for c in self.children)


@dataclass(frozen=True)
class Globally:
    a: float
    b: float
    child: "Formula"

    def __str__(self):
        return f"G[{self.a!r},{self.b!r}]({self.child})"


@dataclass(frozen=True)
class Eventually:
    a: float
    b: float
    child: "Formula"

    def __str__(self):
        return f"F[{self.a!r},{self.b!r}]({self.child})"


Formula = Union[Atomic, Not, And, Or, Globally, Eventually]


def horizon(phi: Formula) -> float:
    """Latest trajectory time the formula can depend on when checked at 0."""
    if isinstance(phi, Atomic):
        return 0.0
    if isinstance(phi, Not):
        return horizon(phi.child)
    if isinstance(phi, (And, Or)):
        return max(horizon(c) for c in phi.children)
    return phi.b + horizon(phi.child)


def species_of(phi: Formula) -> set[str]:
    if isinstance(phi, Atomic):
        return {phi.species}
    if isinstance(phi, (And, Or)):
        return set().union(*(species_of(c) for c in phi.children))
    return species_of(phi.child)


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<op><=|>=|==|!=|≤|≥|<|>)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[\[\](),&|!∧∨¬-]))"
)
_UNICODE = {"≤": "<=", "≥": ">=", "∧": "&", "∨": "|", "¬": "!"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise PropertySyntaxError(f"unexpected character {text[pos:].lstrip()[0]!r}", pos)
        kind = m.lastgroup
        value = m.group(kind)
        value = _UNICODE.get(value, value)
        tokens.append((kind, value, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, species: Sequence[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.species = None if species is None else set(species)

    def peek(self):
        return self.tokens[self.i]

    def take(self, value: str | None = None, kind: str | None = None):
        tok = self.tokens[self.i]
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise PropertySyntaxError(f"expected {want!r}, got {got!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> Formula:
        phi = self.disjunction()
        self.take(kind="end")
        return phi

    def disjunction(self):
        parts = [self.conjunction()]
        while self.peek()[1] == "|":
            self.take("|")
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self):
        parts = [self.unary()]
        while self.peek()[1] == "&":
            self.take("&")
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def number(self) -> float:
        sign = 1.0
        if self.peek()[1] == "-":
            self.take("-")
            sign = -1.0
        return sign * float(self.take(kind="num")[1])

    def unary(self):
        kind, value, pos = self.peek()
        if value == "!":
            self.take("!")
            return Not(self.unary())
        if value == "(":
            self.take("(")
            phi = self.disjunction()
            self.take(")")
            return phi
        if kind == "name" and value in ("G", "F") and self.tokens[self.i + 1][1] == "[":
            self.take()
            self.take("[")
            a = self.number()
            self.take(",")
            b = self.number()
            self.take("]")
            if a < 0:
                raise PropertySyntaxError(f"negative interval start {a}", pos)
            if not a < b:
                raise PropertySyntaxError(f"empty or inverted interval [{a}, {b}]", pos)
            self.take("(")
            child = self.disjunction()
            self.take(")")
            return Globally(a, b, child) if value == "G" else Eventually(a, b, child)
        if kind == "name":
            self.take()
            op = self.take(kind="op")[1]
            sign = 1
            if self.peek()[1] == "-":
                self.take("-")
                sign = -1
            num_tok = self.take(kind="num")
            if not re.fullmatch(r"\d+", num_tok[1]):
                raise PropertySyntaxError(f"atoms compare against integers, got {num_tok[1]}", num_tok[2])
            if self.species is not None and value not in self.species:
                raise PropertySyntaxError(f"unknown species {value!r}", pos)
            return Atomic(value, op, sign * int(num_tok[1]))
        raise PropertySyntaxError(f"unexpected token {value or 'end of input'!r}", pos)


def parse_property(text: str, species: Sequence[str] | None = None) -> Formula:
    """Parse a property; with ``species`` given, unknown names are rejected."""
    return _Parser(text, species).parse()


# ---------------------------------------------------------------------------
# interval-set signals

Intervals = list[tuple[float, float]]


def _normalise(iv: Intervals) -> Intervals:
    out: Intervals = []
    for s, e in sorted(x for x in iv if x[1] > x[0]):
        if out and s <= out[-1][1]:
            if e > out[-1][1]:
                out[-1] = (out[-1][0], e)
        else:
            out.append((s, e))
    return out


def _complement(iv: Intervals) -> Intervals:
    out: Intervals = []
    cursor = -math.inf
    for s, e in iv:
        if s > cursor:
            out.append((cursor, s))
        cursor = e
    if cursor < math.inf:
        out.append((cursor, math.inf))
    return out


def _intersect(x: Intervals, y: Intervals) -> Intervals:
    out: Intervals = []
    i = j = 0
    while i < len(x) and j < len(y):
        s = max(x[i][0], y[j][0])
        e = min(x[i][1], y[j][1])
        if e > s:
            out.append((s, e))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return out


def _atom_intervals(traj: Trajectory, idx: int, op: str, value: int) -> Intervals:
    holds = _OPS[op](traj.states[:, idx], value)
    # Before time 0 and after the last jump the signal is extended by the
    # initial and final states.
    edges = np.append(traj.times, math.inf)
    edges[0] = -math.inf
    change = np.flatnonzero(np.diff(holds.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [len(holds)]))
    out: Intervals = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if holds[lo]:
            out.append((float(edges[lo]), float(edges[hi])))
    return out


def _signal(phi: Formula, traj: Trajectory, index: dict[str, int]) -> Intervals:
    if isinstance(phi, Atomic):
        return _atom_intervals(traj, index[phi.species], phi.op, phi.value)
    if isinstance(phi, Not):
        return _complement(_signal(phi.child, traj, index))
    if isinstance(phi, And):
        acc = _signal(phi.children[0], traj, index)
        for c in phi.children[1:]:
            acc = _intersect(acc, _signal(c, traj, index))
        return acc
    if isinstance(phi, Or):
        return _normalise([iv for c in phi.children for iv in _signal(c, traj, index)])
    child = _signal(phi.child, traj, index)
    if isinstance(phi, Eventually):
        # [t+a, t+b] meets [s, e)  <=>  t in [s-b, e-a)
        return _normalise([(s - phi.b, e - phi.a) for s, e in child])
    # [t+a, t+b] inside [s, e)  <=>  t in [s-a, e-b)
    return _normalise([(s - phi.a, e - phi.b) for s, e in child])


def satisfaction_signal(traj: Trajectory, phi: Formula, species: Sequence[str]) -> Intervals:
    """True-intervals of ``phi`` as a function of the evaluation time."""
    index = {name: i for i, name in enumerate(species)}
    missing = species_of(phi) - set(index)
    if missing:
        raise ValueError(f"unknown species in property: {sorted(missing)}")
    return _signal(phi, traj, index)


def check(traj: Trajectory, phi: Formula, species: Sequence[str]) -> int:
    """1 if the trajectory satisfies ``phi`` at time 0, else 0."""
    need = horizon(phi)
    if need > traj.t_end:
        raise HorizonError(f"property needs horizon {need} but trajectory ends at {traj.t_end}")
    return int(any(s <= 0.0 < e for s, e in satisfaction_signal(traj, phi, species)))


def label_batch(trajs: Sequence[Trajectory], phi: Formula, species: Sequence[str]) -> list[int]:
    return [check(t, phi, species) for t in trajs]
