"""Random instance generators and the suite-wide lower-bound ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spnvi import Circuit, FactorGraph, LeafBernoulli, LeafLiteral, Monomial, Polynomial, ProductNode, SumNode

#: Frozen edge-count constant for built circuits: edges <= C_EDGES * k * n_padded.
C_EDGES = 4


def random_selective_circuit(n: int, rng: np.random.Generator, share: float = 0.3) -> Circuit:
    """Random smooth, decomposable and selective circuit over ``n`` variables.

    Mixes Bernoulli leaves, literals, point masses, product splits and sums
    that branch on the sign of a pivot variable.  Sub-circuits over an
    already-seen scope are reused with probability ``share``.
    """
    nodes: list = []
    seen: dict[tuple[int, ...], list[int]] = {}

    def add(node) -> int:
        nodes.append(node)
        return len(nodes) - 1

    def logits(m: int) -> tuple[float, ...]:
        return tuple(rng.normal(0.0, 1.5, m))

    def gen(scope: tuple[int, ...]) -> int:
        if scope in seen and rng.random() < share:
            return int(rng.choice(seen[scope]))
        if len(scope) == 1:
            v = scope[0]
            kind = rng.integers(4)
            if kind == 0:
                out = add(LeafBernoulli(v, float(rng.normal(0.0, 2.0))))
            elif kind == 1:
                out = add(LeafLiteral(v, int(rng.choice([-1, 1]))))
            else:
                a, b = add(LeafLiteral(v, -1)), add(LeafLiteral(v, 1))
                out = add(SumNode((a, b), logits(2)))
        elif rng.random() < 0.5:
            perm = rng.permutation(scope)
            cut = int(rng.integers(1, len(scope)))
            left, right = tuple(sorted(perm[:cut])), tuple(sorted(perm[cut:]))
            out = add(ProductNode((gen(left), gen(right))))
        else:
            pivot = int(rng.choice(scope))
            rest = tuple(v for v in scope if v != pivot)
            signs = [-1, 1] if rng.random() < 0.8 else [int(rng.choice([-1, 1]))]
            kids = []
            for s in signs:
                lit = add(LeafLiteral(pivot, s))
                kids.append(add(ProductNode((lit, gen(rest)))))
            out = add(SumNode(tuple(kids), logits(len(kids))))
        seen.setdefault(scope, []).append(out)
        return out

    gen(tuple(range(n)))
    return Circuit(nodes, n)


def random_polynomial(n: int, rng: np.random.Generator, terms: int | None = None, max_degree: int = 3,
                      scale: float = 1.0) -> Polynomial:
    terms = int(rng.integers(1, 2 * n + 2)) if terms is None else terms
    out = []
    for _ in range(terms):
        d = int(rng.integers(0, min(max_degree, n) + 1))
        out.append(Monomial(float(rng.normal(0.0, scale)), tuple(rng.choice(n, d, replace=False))))
    return Polynomial(tuple(out), n)


def random_factor_graph(n: int, m: int, rng: np.random.Generator, max_scope: int = 3) -> FactorGraph:
    factors = []
    for _ in range(m):
        d = int(rng.integers(1, min(max_scope, n) + 1))
        scope = tuple(int(v) for v in rng.choice(n, d, replace=False))
        factors.append((scope, tuple(rng.uniform(0.1, 4.0, 1 << d))))
    return FactorGraph(n, (2,) * n, tuple(factors))


def product_of_tables(fg: FactorGraph, X: np.ndarray) -> np.ndarray:
    out = np.ones(len(X))
    for i, x in enumerate(X):
        for scope, table in fg.factors:
            idx = 0
            for v in scope:
                idx = 2 * idx + (0 if x[v] == 1 else 1)
            out[i] *= table[idx]
    return out


def rel_close(a: float, b: float, rel: float, floor: float = 1.0) -> bool:
    """``|a - b| <= rel * max(|a|, |b|, floor)``."""
    return abs(a - b) <= rel * max(abs(a), abs(b), floor)


@dataclass
class BoundLedger:
    """Every (ELBO, ln Z) pair checked anywhere in the suite."""

    tol: float = 1e-7
    checks: int = 0
    violations: list[tuple[str, float, float]] = field(default_factory=list)

    def check(self, elbo: float, log_z: float, where: str = "") -> bool:
        self.checks += 1
        ok = math.isfinite(elbo) and elbo <= log_z + self.tol
        if not ok:
            self.violations.append((where, elbo, log_z))
        return ok


BOUND_LEDGER = BoundLedger()


def check_bound(elbo: float, log_z: float, where: str = "") -> None:
    assert BOUND_LEDGER.check(elbo, log_z, where), f"ELBO {elbo!r} exceeds ln Z {log_z!r} ({where})"


CRITERION_NOTES: dict[int, list[str]] = {}


def note(criterion: int, text: str) -> None:
    """Attach a measurement to a criterion's line in the session summary."""
    CRITERION_NOTES.setdefault(criterion, []).append(text)
