"""Parametric chemical reaction network models.

A model file is line based::

    # SIR epidemic
    species S=95 I=5 R=0
    param k_I range 0.005 0.3
    param k_R range 0.005 0.3
    reaction infect: S + I -> I + I @ k_I
    reaction recover: I -> R @ k_R

An empty side of a reaction is written ``0``. Stoichiometric coefficients may
be given either by repetition (``I + I``) or as a prefix (``2 I``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Structurally invalid model (undeclared names, duplicates, bad ranges)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class ModelSyntaxError(ModelError):
    """The model text does not follow the file grammar."""


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float
    upper: float


@dataclass(frozen=True)
class Reaction:
    """A mass-action reaction.

    ``reactants`` and ``products`` are tuples of ``(species, multiplicity)``
    pairs sorted by species name, so two reactions with the same multisets
    compare equal regardless of how they were written.
    """

    label: str
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    rate_parameter: str

    @staticmethod
    def from_lists(label, reactants, products, rate_parameter) -> "Reaction":
        return Reaction(label, _multiset(reactants), _multiset(products), rate_parameter)


def _multiset(names) -> tuple[tuple[str, int], ...]:
    counts: dict[str, int] = {}
    for name in names:
        counts[name] = counts.get(name, 0) + 1
    return tuple(sorted(counts.items()))


@dataclass(frozen=True)
class CRNModel:
    species: tuple[str, ...]
    initial_state: tuple[int, ...]
    parameters: tuple[Parameter, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        if len(set(self.species)) != len(self.species):
            raise ModelError("duplicate species name")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ModelError("duplicate parameter name")
        if len(self.initial_state) != len(self.species):
            raise ModelError("initial state length does not match species count")
        if any(c < 0 for c in self.initial_state):
            raise ModelError("negative initial count")
        for p in self.parameters:
            if not p.lower < p.upper:
                raise ModelError(f"empty range for parameter {p.name!r}")
        labels = [r.label for r in self.reactions]
        if len(set(labels)) != len(labels):
            raise ModelError("duplicate reaction label")
        declared = set(self.species)
        for r in self.reactions:
            for name, _ in r.reactants + r.products:
                if name not in declared:
                    raise ModelError(f"undeclared species {name!r} in reaction {r.label!r}")
            if r.rate_parameter not in names:
                raise ModelError(
                    f"undeclared parameter {r.rate_parameter!r} in reaction {r.label!r}"
                )

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def dim(self) -> int:
        return len(self.parameters)

    @property
    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def bounds(self) -> np.ndarray:
        """``(dim, 2)`` array of ``[lower, upper]`` rows."""
        return np.array([[p.lower, p.upper] for p in self.parameters], dtype=float).reshape(-1, 2)

    def species_index(self, name: str) -> int:
        return self.species.index(name)

    # Dense arrays consumed by the simulator.  cached_property writes into
    # __dict__ directly, which a frozen dataclass still permits.
    @cached_property
    def reactant_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.reactions), self.n_species), dtype=np.int64)
        for i, r in enumerate(self.reactions):
            for name, k in r.reactants:
                out[i, self.species_index(name)] = k
        return out

    @cached_property
    def change_matrix(self) -> np.ndarray:
        out = -self.reactant_matrix.copy()
        for i, r in enumerate(self.reactions):
            for name, k in r.products:
                out[i, self.species_index(name)] += k
        return out

    @cached_property
    def rate_index(self) -> np.ndarray:
        names = self.parameter_names
        return np.array([names.index(r.rate_parameter) for r in self.reactions], dtype=np.int64)

    def check_point(self, point) -> np.ndarray:
        """Validate a parameter point against the declared ranges."""
        x = np.asarray(point, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        b = self.bounds
        if np.any(x < b[:, 0]) or np.any(x > b[:, 1]):
            raise ValueError(f"point {x.tolist()} outside the parameter box")
        return x


def propensities(model: CRNModel, state, point) -> np.ndarray:
    """Mass-action propensities with falling-factorial combinatorics.

    A reaction consuming ``a`` copies of a species present ``n`` times
    contributes ``n (n-1) ... (n-a+1)``, which is zero when ``n < a``.
    """
    x = np.asarray(state, dtype=np.int64)
    rates = np.asarray(point, dtype=float)[model.rate_index]
    out = rates.copy()
    stoich = model.reactant_matrix
    for r in range(stoich.shape[0]):
        for s in range(stoich.shape[1]):
            for j in range(stoich[r, s]):
                out[r] *= max(x[s] - j, 0)
    return out


def apply_reaction(model: CRNModel, state, reaction: int | str) -> np.ndarray:
    """Fire one reaction; raises ``RuntimeError`` if a count would go negative."""
    if isinstance(reaction, str):
        reaction = [r.label for r in model.reactions].index(reaction)
    x = np.asarray(state, dtype=np.int64)
    if np.any(x < model.reactant_matrix[reaction]):
        raise RuntimeError(
            f"reaction {model.reactions[reaction].label!r} is not applicable in state {x.tolist()}"
        )
    return x + model.change_matrix[reaction]


# ---------------------------------------------------------------------------
# text format

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_SPECIES_TOKEN = re.compile(rf"^({_NAME})=([-+]?\d+)$")
_PARAM_RE = re.compile(rf"^param\s+({_NAME})\s+range\s+({_NUMBER})\s+({_NUMBER})\s*$")
_REACTION_RE = re.compile(rf"^reaction\s+({_NAME})\s*:\s*(.*?)\s*->\s*(.*?)\s*@\s*({_NAME})\s*$")
_TERM_RE = re.compile(rf"^(?:(\d+)\s*\*?\s*)?({_NAME})$")


def _parse_side(text: str, lineno: int, col: int) -> list[str]:
    text = text.strip()
    if text == "0":
        return []
    if not text:
        raise ModelSyntaxError("empty reaction side (write 0 for none)", lineno, col)
    names: list[str] = []
    for term in text.split("+"):
        m = _TERM_RE.match(term.strip())
        if m is None:
            raise ModelSyntaxError(f"bad reaction term {term.strip()!r}", lineno, col)
        names.extend([m.group(2)] * int(m.group(1) or 1))
    return names


def parse_model(text: str) -> CRNModel:
    species: list[str] = []
    counts: list[int] = []
    params: list[Parameter] = []
    reactions: list[Reaction] = []
    seen_species: set[str] = set()
    seen_params: set[str] = set()
    pending: list[tuple[Reaction, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        keyword = stripped.split(None, 1)[0]
        if keyword == "species":
            tokens = stripped.split()[1:]
            if not tokens:
                raise ModelSyntaxError("species line declares nothing", lineno, col)
            for tok in tokens:
                tcol = line.find(tok) + 1
                m = _SPECIES_TOKEN.match(tok)
                if m is None:
                    raise ModelSyntaxError(f"expected Name=count, got {tok!r}", lineno, tcol)
                name, count = m.group(1), int(m.group(2))
                if name in seen_species:
                    raise ModelError(f"duplicate species {name!r}", lineno, tcol)
                if count < 0:
                    raise ModelError(f"negative initial count for {name!r}", lineno, tcol)
                seen_species.add(name)
                species.append(name)
                counts.append(count)
        elif keyword == "param":
            m = _PARAM_RE.match(stripped)
            if m is None:
                raise ModelSyntaxError("expected 'param <name> range <lo> <hi>'", lineno, col)
            name, lo, hi = m.group(1), float(m.group(2)), float(m.group(3))
            if name in seen_params:
                raise ModelError(f"duplicate parameter {name!r}", lineno, col)
            if not lo < hi:
                raise ModelError(f"empty range [{lo}, {hi}] for {name!r}", lineno, col)
            seen_params.add(name)
            params.append(Parameter(name, lo, hi))
        elif keyword == "reaction":
            m = _REACTION_RE.match(stripped)
            if m is None:
                raise ModelSyntaxError(
                    "expected 'reaction <label>: <lhs> -> <rhs> @ <param>'", lineno, col
                )
            lhs_col = col + m.start(2)
            rhs_col = col + m.start(3)
            r = Reaction.from_lists(
                m.group(1),
                _parse_side(m.group(2), lineno, lhs_col),
                _parse_side(m.group(3), lineno, rhs_col),
                m.group(4),
            )
            pending.append((r, lineno))
        else:
            raise ModelSyntaxError(f"unknown statement {keyword!r}", lineno, col)

    # Names are resolved after the whole file is read so declarations may
    # appear in any order.
    for r, lineno in pending:
        for name, _ in r.reactants + r.products:
            if name not in seen_species:
                raise ModelError(f"undeclared species {name!r}", lineno)
        if r.rate_parameter not in seen_params:
            raise ModelError(f"undeclared parameter {r.rate_parameter!r}", lineno)
        if r.label in {q.label for q in reactions}:
            raise ModelError(f"duplicate reaction label {r.label!r}", lineno)
        reactions.append(r)

    return CRNModel(tuple(species), tuple(counts), tuple(params), tuple(reactions))


def load_model(path) -> CRNModel:
    return parse_model(Path(path).read_text())


def _format_side(terms: tuple[tuple[str, int], ...]) -> str:
    if not terms:
        return "0"
    return " + ".join(name if k == 1 else f"{k} {name}" for name, k in terms)


def serialize_model(model: CRNModel) -> str:
    lines = []
    if model.species:
        lines.append(
            "species " + " ".join(f"{s}={c}" for s, c in zip(model.species, model.initial_state))
        )
    for p in model.parameters:
        lines.append(f"param {p.name} range {p.lower!r} {p.upper!r}")
    for r in model.reactions:
        lines.append(
            f"reaction {r.label}: {_format_side(r.reactants)} -> "
            f"{_format_side(r.products)} @ {r.rate_parameter}"
        )
    return "\n".join(lines) + "\n"


SIR_MODEL = """\
# SIR epidemic: infection and recovery
species S=95 I=5 R=0
param k_I range 0.005 0.3
param k_R range 0.005 0.3
reaction infect: S + I -> I + I @ k_I
reaction recover: I -> R @ k_R
"""

SIR_PROPERTY = "G[0,100](I > 0) & F[100,120](I == 0)"
