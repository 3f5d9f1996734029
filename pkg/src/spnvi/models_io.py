"""Benchmark models: random Ising grids and UAI ``MARKOV`` factor graphs."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UAIParseError
from .polynomial import Monomial, Polynomial, from_factor_table


@dataclass(frozen=True)
class IsingSpec:
    rows: int
    cols: int
    gamma: float
    mode: str = "mixed"
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("Ising grids need at least 2 rows and 2 columns")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.mode not in ("mixed", "positive"):
            raise ValueError(f"mode must be 'mixed' or 'positive', got {self.mode!r}")

    @property
    def num_vars(self) -> int:
        return self.rows * self.cols


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """4-neighbour lattice edges, row-major; each site lists its right then down edge."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return edges


def gen_ising(spec: IsingSpec) -> Polynomial:
    """``sum_e theta_e x_i x_j`` over grid edges, no unary terms.

    Couplings are uniform on ``[-gamma, gamma]`` (mixed) or ``[0, gamma]``
    (positive).
    """
    rng = np.random.default_rng(spec.seed)
    edges = grid_edges(spec.rows, spec.cols)
    low = -spec.gamma if spec.mode == "mixed" else 0.0
    theta = rng.uniform(low, spec.gamma, len(edges))
    return Polynomial(tuple(Monomial(t, e) for t, e in zip(theta, edges)), spec.num_vars)


@dataclass(frozen=True)
class FactorGraph:
    """Binary Markov network.  Tables use last-scope-variable-fastest order."""

    num_vars: int
    cardinalities: tuple[int, ...]
    factors: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...]

    def log_potential(self, X: np.ndarray) -> np.ndarray:
        """``sum ln phi(x)`` for rows of ``X`` in ``{-1,+1}``; state ``s = (1 - x) / 2``."""
        S = ((1 - np.asarray(X)) // 2).astype(np.int64)
        out = np.zeros(len(S))
        for scope, table in self.factors:
            idx = np.zeros(len(S), dtype=np.int64)
            for v in scope:
                idx = idx * 2 + S[:, v]
            out += np.log(np.asarray(table))[idx]
        return out


class _Tokens:
    def __init__(self, text: str):
        self.tok = text.split()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.tok):
            raise UAIParseError("unexpected_eof", self.pos, f"file ended while reading {what}")
        self.pos += 1
        return self.tok[self.pos - 1]

    def int(self, what: str, low: int = 0) -> int:
        raw = self.next(what)
        if not re.fullmatch(r"[+-]?\d+", raw):
            raise UAIParseError("bad_integer", self.pos - 1, f"expected integer {what}, got {raw!r}")
        value = int(raw)
        if value < low:
            raise UAIParseError("bad_integer", self.pos - 1, f"{what} must be >= {low}, got {value}")
        return value

    def float(self, what: str) -> float:
        raw = self.next(what)
        try:
            value = float(raw)
        except ValueError:
            raise UAIParseError("bad_number", self.pos - 1, f"expected number {what}, got {raw!r}") from None
        if not math.isfinite(value):
            raise UAIParseError("bad_number", self.pos - 1, f"non-finite {what} {raw!r}")
        return value


def parse_uai(text: str) -> FactorGraph:
    """Parse a binary ``MARKOV`` network in UAI competition format.

    Raises:
        UAIParseError: with codes ``bad_header``, ``bad_integer``,
            ``bad_number``, ``bad_cardinality``, ``bad_variable``,
            ``table_size_mismatch``, ``non_positive_entry``,
            ``trailing_tokens`` or ``unexpected_eof``.
    """
    ts = _Tokens(text)
    header = ts.next("header")
    if header != "MARKOV":
        raise UAIParseError("bad_header", 0, f"expected MARKOV network, got {header!r}")
    n = ts.int("variable count", low=1)
    cards = []
    for v in range(n):
        card = ts.int(f"cardinality of variable {v}")
        if card != 2:
            raise UAIParseError("bad_cardinality", ts.pos - 1, f"variable {v} has cardinality {card}; only binary supported")
        cards.append(card)
    m = ts.int("factor count")
    scopes = []
    for f in range(m):
        size = ts.int(f"scope size of factor {f}")
        scope = []
        for _ in range(size):
            v = ts.int(f"variable in scope of factor {f}")
            if v >= n or v in scope:
                raise UAIParseError("bad_variable", ts.pos - 1, f"factor {f} scope variable {v} invalid or repeated")
            scope.append(v)
        scopes.append(tuple(scope))
    factors = []
    for f, scope in enumerate(scopes):
        count_pos = ts.pos
        count = ts.int(f"table size of factor {f}")
        expected = 1 << len(scope)
        if count != expected:
            raise UAIParseError("table_size_mismatch", count_pos, f"factor {f} declares {count} entries, scope needs {expected}")
        table = []
        for _ in range(count):
            e = ts.float(f"entry of factor {f}")
            if e <= 0:
                raise UAIParseError("non_positive_entry", ts.pos - 1, f"factor {f} has entry {e}; logical constraints unsupported")
            table.append(e)
        factors.append((scope, tuple(table)))
    if ts.pos != len(ts.tok):
        raise UAIParseError("trailing_tokens", ts.pos, f"{len(ts.tok) - ts.pos} unexpected tokens after last table")
    return FactorGraph(n, tuple(cards), tuple(factors))


def read_uai(path) -> FactorGraph:
    return parse_uai(Path(path).read_text())


def write_uai(fg: FactorGraph) -> str:
    lines = ["MARKOV", str(fg.num_vars), " ".join(map(str, fg.cardinalities)), str(len(fg.factors))]
    lines += [" ".join(map(str, (len(scope), *scope))) for scope, _ in fg.factors]
    for _, table in fg.factors:
        lines.append("")
        lines.append(str(len(table)))
        lines.append(" ".join(f"{e:.17g}" for e in table))
    return "\n".join(lines) + "\n"


def factor_graph_to_polynomial(fg: FactorGraph) -> Polynomial:
    """``v(x) = sum ln phi(x)`` as a canonical multilinear polynomial."""
    terms: list[Monomial] = []
    for scope, table in fg.factors:
        terms.extend(from_factor_table(scope, table, fg.num_vars).terms)
    return Polynomial(tuple(terms), fg.num_vars).canonicalize()


def ising_to_factor_graph(poly: Polynomial) -> FactorGraph:
    """Pairwise (and unary/constant-free) polynomial as explicit ``exp`` tables.

    A term ``theta x_i x_j`` becomes the table ``(e^t, e^-t, e^-t, e^t)``;
    unary terms ``h x_i`` become ``(e^h, e^-h)``.
    """
    factors = []
    for t in poly.terms:
        if len(t.vars) == 2:
            a = t.coefficient
            table = (math.exp(a), math.exp(-a), math.exp(-a), math.exp(a))
        elif len(t.vars) == 1:
            table = (math.exp(t.coefficient), math.exp(-t.coefficient))
        else:
            raise ValueError(f"cannot export term over {len(t.vars)} variables as a pairwise table")
        factors.append((t.vars, table))
    return FactorGraph(poly.num_vars, (2,) * poly.num_vars, tuple(factors))


def load_model(path) -> tuple[Polynomial, str]:
    """Read a ``.uai`` file or a polynomial text file; returns ``(poly, kind)``."""
    text = Path(path).read_text()
    first = text.split(None, 1)[0] if text.strip() else ""
    if first in ("MARKOV", "BAYES"):
        return factor_graph_to_polynomial(parse_uai(text)), "uai"
    return Polynomial.from_text(text).canonicalize(), "poly"
