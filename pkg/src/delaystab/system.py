"""Delay system definition and its on-disk JSON description.

A system is ``x'(t) = A0 x(t) + sum_j Aj x(t - tau_j)`` with constant
square matrices and strictly positive delays.  The delay list may be
empty (plain ODE) and delays need not be distinct or sorted; list order
is the authoritative index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import ShapeMismatch, as_square_matrix

MAX_DIMENSION = 64


class ParseError(ValueError):
    """System description document is malformed or inconsistent."""


@dataclass(frozen=True)
class DelayedTerm:
    """One delayed coupling: matrix `a` applied to the state `tau` seconds ago."""

    tau: float
    a: np.ndarray

    def __post_init__(self):
        if not (isinstance(self.tau, (int, float)) and math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"delay must be a positive finite number, got {self.tau!r}")
        a = as_square_matrix(self.a, "delay matrix")
        a.setflags(write=False)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class DelaySystem:
    """Constant-coefficient linear delay differential system."""

    a0: np.ndarray
    terms: tuple[DelayedTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        a0 = as_square_matrix(self.a0, "A0")
        a0.setflags(write=False)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "terms", tuple(self.terms))
        n = a0.shape[0]
        if n > MAX_DIMENSION:
            raise ValueError(f"dimension {n} exceeds the supported cap of {MAX_DIMENSION}")
        for j, term in enumerate(self.terms):
            if not isinstance(term, DelayedTerm):
                raise TypeError("terms must be DelayedTerm instances")
            if term.a.shape != (n, n):
                raise ShapeMismatch(
                    f"delay matrix {j + 1} has shape {term.a.shape}, expected {(n, n)}"
                )

    @property
    def dim(self):
        return self.a0.shape[0]

    @property
    def delay_count(self):
        return len(self.terms)

    def delays(self):
        """Delay times in list order."""
        return [t.tau for t in self.terms]

    def scale_delays(self, factor):
        """Same matrices with every delay multiplied by `factor`."""
        if factor <= 0:
            raise ValueError("delay scale factor must be positive")
        return DelaySystem(self.a0, tuple(DelayedTerm(t.tau * factor, t.a) for t in self.terms))


def coefficient_sum(sys: DelaySystem):
    """A0 plus all delay matrices; the matrix whose negated inverse the
    fundamental-matrix integral must equal for an asymptotically stable
    system."""
    total = sys.a0.copy()
    for term in sys.terms:
        total += term.a
    return total


def _require(cond, msg):
    if not cond:
        raise ParseError(msg)


def _parse_matrix(obj, n, what):
    _require(isinstance(obj, list) and len(obj) > 0, f"{what} must be a non-empty array of rows")
    if n is None:
        n = len(obj)
    _require(len(obj) == n, f"{what} has {len(obj)} rows, expected {n}")
    rows = []
    for i, row in enumerate(obj):
        _require(isinstance(row, list), f"{what} row {i} is not an array")
        _require(len(row) == n, f"{what} row {i} has length {len(row)}, expected {n} (square)")
        for v in row:
            _require(
                isinstance(v, (int, float)) and not isinstance(v, bool),
                f"{what} row {i} contains a non-numeric entry {v!r}",
            )
            _require(math.isfinite(v), f"{what} row {i} contains a non-finite entry")
        rows.append([float(v) for v in row])
    return np.array(rows, dtype=float)


def parse_system(text: str) -> DelaySystem:
    """Parse the JSON system description.

    Expected document::

        {"A0": [[...]], "delays": [{"tau": 2.0, "A": [[...]]}, ...]}

    Raises ParseError with field context for malformed syntax, shape or
    dimension mismatches, non-positive delays, and non-finite entries.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    _require(isinstance(doc, dict), "top-level value must be an object")
    unknown = set(doc) - {"A0", "delays"}
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")
    _require("A0" in doc, 'missing required key "A0"')
    a0 = _parse_matrix(doc["A0"], None, "A0")
    n = a0.shape[0]
    _require(n <= MAX_DIMENSION, f"dimension {n} exceeds the supported cap of {MAX_DIMENSION}")
    terms = []
    delays = doc.get("delays", [])
    _require(isinstance(delays, list), '"delays" must be an array')
    for j, entry in enumerate(delays):
        where = f"delays[{j}]"
        _require(isinstance(entry, dict), f"{where} must be an object")
        unknown = set(entry) - {"tau", "A"}
        _require(not unknown, f"{where} has unknown keys: {sorted(unknown)}")
        _require("tau" in entry and "A" in entry, f'{where} needs both "tau" and "A"')
        tau = entry["tau"]
        _require(
            isinstance(tau, (int, float)) and not isinstance(tau, bool) and math.isfinite(tau),
            f"{where}.tau must be a finite number",
        )
        _require(tau > 0, f"{where}.tau must be positive, got {tau}")
        a = _parse_matrix(entry["A"], n, f"{where}.A")
        terms.append(DelayedTerm(float(tau), a))
    return DelaySystem(a0, tuple(terms))


def serialize_system(sys: DelaySystem) -> str:
    """Inverse of parse_system; floats are written in shortest round-trip
    form so parse(serialize(s)) reproduces s exactly."""
    doc = {
        "A0": sys.a0.tolist(),
        "delays": [{"tau": t.tau, "A": t.a.tolist()} for t in sys.terms],
    }
    return json.dumps(doc, indent=2)


def load_system(path) -> DelaySystem:
    """Read and parse a system description file."""
    with open(path, "r", encoding="utf-8") as f:
        return parse_system(f.read())
