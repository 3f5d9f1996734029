"""Exact reference values by brute force, for testing the fast passes.

Nothing here reuses the level schedule or the polynomial evaluator: the
circuit is re-walked node by node from its raw node list and parameter
vector, and monomials are evaluated directly from their variable lists.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .circuit import Circuit, LeafBernoulli, LeafLiteral, SumNode
from .elbo import ElboBreakdown
from .errors import SizeLimitError
from .polynomial import Monomial, Polynomial

MAX_PARTITION_VARS = 25
MAX_CIRCUIT_VARS = 20
MAX_GRID_WIDTH = 20


@dataclass
class OracleReport:
    quantity: str
    value: float
    method: str
    states_visited: int

    def to_dict(self) -> dict:
        return asdict(self)


def _require(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise SizeLimitError(f"{what} enumerates 2^{n} states; refused above {cap} variables", cap)


def _assignments(n: int, chunk_bits: int = 16):
    total = 1 << n
    step = 1 << min(n, chunk_bits)
    for start in range(0, total, step):
        idx = np.arange(start, min(start + step, total), dtype=np.int64)
        yield np.where((idx[:, None] >> np.arange(n)) & 1, -1.0, 1.0)


def _log_density(terms: tuple[Monomial, ...], X: np.ndarray) -> np.ndarray:
    out = np.zeros(len(X))
    for t in terms:
        col = np.full(len(X), t.coefficient)
        for v in t.vars:
            col = col * X[:, v]
        out += col
    return out


def exact_log_partition(poly: Polynomial, max_vars: int = MAX_PARTITION_VARS) -> float:
    """``ln sum_x exp(v(x))`` over all of ``{-1,+1}^n``."""
    _require(poly.num_vars, max_vars, "exact_log_partition")
    acc = -math.inf
    for X in _assignments(poly.num_vars):
        acc = float(np.logaddexp(acc, logsumexp(_log_density(poly.terms, X))))
    return acc


def _log_q(circuit: Circuit, X: np.ndarray) -> np.ndarray:
    """Node-by-node log-probability of each row of ``X`` (no shared evaluation code)."""
    params = circuit.params
    offsets = circuit.param_offset
    vals = []
    for i, node in enumerate(circuit.nodes):
        if isinstance(node, LeafLiteral):
            vals.append(np.where(X[:, node.var] == node.sign, 0.0, -np.inf))
        elif isinstance(node, LeafBernoulli):
            logit = params[offsets[i]]
            log_p = -np.logaddexp(0.0, -logit)
            log_not_p = -np.logaddexp(0.0, logit)
            vals.append(np.where(X[:, node.var] > 0, log_p, log_not_p))
        elif isinstance(node, SumNode):
            z = params[offsets[i]:offsets[i] + len(node.children)]
            log_w = z - logsumexp(z)
            stacked = np.stack([vals[c] + lw for c, lw in zip(node.children, log_w)])
            vals.append(logsumexp(stacked, axis=0))
        else:
            acc = np.zeros(len(X))
            for c in node.children:
                acc = acc + vals[c]
            vals.append(acc)
    return vals[-1]


def _circuit_sums(circuit: Circuit, polys: list[Polynomial]) -> tuple[float, list[float]]:
    """Entropy of q and ``E_q[v]`` for each polynomial, by enumeration."""
    _require(circuit.num_vars, MAX_CIRCUIT_VARS, "circuit enumeration")
    H = 0.0
    expect = [0.0] * len(polys)
    chunk_bits = max(8, min(16, 22 - int(math.log2(len(circuit.nodes) + 1))))
    for X in _assignments(circuit.num_vars, chunk_bits):
        lq = _log_q(circuit, X)
        q = np.exp(lq)
        pos = q > 0
        H -= float(q[pos] @ lq[pos])
        for j, poly in enumerate(polys):
            expect[j] += float(q @ _log_density(poly.terms, X[:, :poly.num_vars]))
    return H, expect


def exact_entropy(circuit: Circuit) -> float:
    return _circuit_sums(circuit, [])[0]


def exact_expectation(circuit: Circuit, monomial: Monomial) -> float:
    return exact_expectations(circuit, [monomial])[0]


def exact_expectations(circuit: Circuit, monomials) -> list[float]:
    """``E_q[f]`` for several monomials from a single enumeration."""
    return _circuit_sums(circuit, [Polynomial((m,), circuit.num_vars) for m in monomials])[1]


def exact_elbo(circuit: Circuit, poly: Polynomial, offset: float = 0.0) -> float:
    H, (e,) = _circuit_sums(circuit, [poly])
    return e + H - offset


def exact_elbo_breakdown(circuit: Circuit, poly: Polynomial, offset: float = 0.0) -> ElboBreakdown:
    """Per-term expectations, entropy and total from one enumeration."""
    H, terms = _circuit_sums(circuit, [Polynomial((t,), circuit.num_vars) for t in poly.terms])
    return ElboBreakdown(np.array(terms), H, offset, float(np.sum(terms)) + H - offset)


def exact_distribution(circuit: Circuit) -> np.ndarray:
    """``q(x)`` for every assignment, bit ``i`` of the row index meaning ``x_i = -1``."""
    _require(circuit.num_vars, MAX_CIRCUIT_VARS, "circuit enumeration")
    return np.concatenate([np.exp(_log_q(circuit, X)) for X in _assignments(circuit.num_vars)])


def grid_log_partition(poly: Polynomial, rows: int, cols: int, max_width: int = MAX_GRID_WIDTH) -> float:
    """``ln Z`` of a nearest-neighbour grid model by row transfer.

    Variables are ``r * cols + c``.  Terms may be constants, unary fields or
    couplings between lattice neighbours; anything else is rejected.  The
    transfer runs along the longer side, so the state space is
    ``2**min(rows, cols)``; each row is absorbed one column at a time.
    """
    if rows * cols != poly.num_vars:
        raise ValueError(f"{rows}x{cols} grid does not match {poly.num_vars} variables")
    transpose = cols > rows
    R, W = (cols, rows) if transpose else (rows, cols)
    if W > max_width:
        raise SizeLimitError(f"transfer matrix over width {W} exceeds cap {max_width}", max_width)

    def site(v: int) -> tuple[int, int]:
        r, c = divmod(v, cols)
        return (c, r) if transpose else (r, c)

    const = 0.0
    field = np.zeros((R, W))
    horiz = np.zeros((R, max(W - 1, 0)))
    vert = np.zeros((max(R - 1, 0), W))
    for t in poly.terms:
        if not t.vars:
            const += t.coefficient
        elif len(t.vars) == 1:
            r, c = site(t.vars[0])
            field[r, c] += t.coefficient
        elif len(t.vars) == 2:
            (r1, c1), (r2, c2) = sorted(map(site, t.vars))
            if r1 == r2 and c2 == c1 + 1:
                horiz[r1, c1] += t.coefficient
            elif c1 == c2 and r2 == r1 + 1:
                vert[r1, c1] += t.coefficient
            else:
                raise ValueError(f"term over {t.vars} is not a grid edge")
        else:
            raise ValueError(f"term over {len(t.vars)} variables is not a grid term")

    spin = np.array([1.0, -1.0])

    def axis(c: int) -> tuple[int, ...]:
        shape = [1] * W
        shape[c] = 2
        return tuple(shape)

    def row_energy(r: int) -> np.ndarray:
        e = np.zeros((2,) * W)
        for c in range(W):
            e = e + field[r, c] * spin.reshape(axis(c))
        for c in range(W - 1):
            e = e + horiz[r, c] * spin.reshape(axis(c)) * spin.reshape(axis(c + 1))
        return e

    log_alpha = row_energy(0)
    for r in range(1, R):
        for c in range(W):
            up = np.take(log_alpha, 0, axis=c)[..., None]
            down = np.take(log_alpha, 1, axis=c)[..., None]
            # new spin s' on the last axis: logaddexp over the old spin at column c
            new = np.logaddexp(up + vert[r - 1, c] * spin, down - vert[r - 1, c] * spin)
            log_alpha = np.moveaxis(new, -1, c)
        log_alpha = log_alpha + row_energy(r)
    return float(logsumexp(log_alpha)) + const
