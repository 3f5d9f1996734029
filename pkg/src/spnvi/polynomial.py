"""Multilinear polynomials over {-1,+1}^n, used as unnormalized log-densities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import PolynomialError, SizeLimitError

#: Coefficients with smaller magnitude are treated as zero.
DROP_TOL = 1e-12
#: Largest factor scope the dense Fourier transform accepts.
MAX_TABLE_VARS = 20


@dataclass(frozen=True)
class Monomial:
    """``coefficient * prod(x_i for i in vars)``; an empty ``vars`` is the constant term."""

    coefficient: float
    vars: tuple[int, ...] = ()

    def __post_init__(self):
        vs = tuple(sorted(int(v) for v in self.vars))
        if len(set(vs)) != len(vs):
            raise PolynomialError(f"repeated variable in monomial {vs}")
        if vs and vs[0] < 0:
            raise PolynomialError(f"negative variable index in monomial {vs}")
        object.__setattr__(self, "vars", vs)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    def __call__(self, x) -> float:
        x = np.asarray(x)
        return self.coefficient * float(np.prod(x[list(self.vars)])) if self.vars else self.coefficient


@dataclass(frozen=True)
class Polynomial:
    """Sum of monomials over ``num_vars`` variables."""

    terms: tuple[Monomial, ...]
    num_vars: int

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        for t in terms:
            if t.vars and t.vars[-1] >= self.num_vars:
                raise PolynomialError(
                    f"monomial variable {t.vars[-1]} out of range for num_vars={self.num_vars}"
                )

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[float, Sequence[int]]], num_vars: int) -> "Polynomial":
        return cls(tuple(Monomial(c, tuple(vs)) for c, vs in terms), num_vars)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(self.terms + other.terms, max(self.num_vars, other.num_vars))

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms])

    def evaluate(self, x) -> float:
        """``v(x)`` for one assignment in ``{-1,+1}^n``."""
        x = np.asarray(x)
        if x.shape != (self.num_vars,):
            raise PolynomialError(f"assignment shape {x.shape} does not match num_vars={self.num_vars}")
        return float(self.evaluate_many(x[None, :])[0])

    def evaluate_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(len(X))
        for t in self.terms:
            if t.vars:
                out += t.coefficient * np.prod(X[:, list(t.vars)], axis=1)
            else:
                out += t.coefficient
        return out

    def canonicalize(self, tol: float = DROP_TOL) -> "Polynomial":
        """Merge terms sharing a variable set and drop coefficients below ``tol``.

        Output terms are sorted by (degree, variables) so the result is unique.
        """
        merged: dict[tuple[int, ...], float] = {}
        for t in self.terms:
            merged[t.vars] = merged.get(t.vars, 0.0) + t.coefficient
        keep = sorted((vs for vs, c in merged.items() if abs(c) >= tol), key=lambda vs: (len(vs), vs))
        return Polynomial(tuple(Monomial(merged[vs], vs) for vs in keep), self.num_vars)

    def support(self) -> set[int]:
        return {v for t in self.terms for v in t.vars}

    # text format: one term per line, "<coefficient> <var...>"

    def to_text(self) -> str:
        lines = [f"# num_vars {self.num_vars}"]
        for t in self.terms:
            lines.append(" ".join([f"{t.coefficient:.17g}", *map(str, t.vars)]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, num_vars: int | None = None) -> "Polynomial":
        terms = []
        declared = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                tok = line[1:].split()
                if len(tok) == 2 and tok[0] == "num_vars":
                    declared = int(tok[1])
                continue
            tok = line.split()
            try:
                terms.append(Monomial(float(tok[0]), tuple(int(v) for v in tok[1:])))
            except ValueError as exc:
                raise PolynomialError(f"line {lineno}: {exc}") from None
        n = num_vars if num_vars is not None else declared
        if n is None:
            n = 1 + max((t.vars[-1] for t in terms if t.vars), default=-1)
        return cls(tuple(terms), n)


def fourier_coefficients(values: np.ndarray) -> np.ndarray:
    """Walsh-Fourier coefficients of a function on ``{-1,+1}^d``.

    ``values`` has shape ``(2,) * d``; index 0 on an axis means ``x = +1``.
    In the result, index 1 on axis ``i`` means variable ``i`` belongs to the
    monomial.  Costs ``d * 2**d`` operations.
    """
    c = np.array(values, dtype=np.float64)
    for axis in range(c.ndim):
        a = np.take(c, 0, axis=axis)
        b = np.take(c, 1, axis=axis)
        c = np.stack([(a + b) / 2, (a - b) / 2], axis=axis)
    return c


def from_factor_table(
    scope: Sequence[int], table: Sequence[float], num_vars: int | None = None, tol: float = DROP_TOL
) -> Polynomial:
    """Expand ``ln(table)`` into monomials over ``scope``.

    The table is indexed with the last scope variable changing fastest, and
    state ``s`` maps to ``x = 1 - 2s``.

    Raises:
        PolynomialError: a non-positive entry (logical constraints are not
            supported) or a table of the wrong length.
        SizeLimitError: more than 20 scope variables.
    """
    scope = [int(v) for v in scope]
    d = len(scope)
    if len(set(scope)) != d:
        raise PolynomialError(f"repeated variable in factor scope {scope}")
    if d > MAX_TABLE_VARS:
        raise SizeLimitError(f"factor over {d} variables exceeds the {MAX_TABLE_VARS}-variable table cap", MAX_TABLE_VARS)
    table = np.asarray(table, dtype=np.float64)
    if table.shape != (1 << d,):
        raise PolynomialError(f"factor over {d} variables needs {1 << d} entries, got {table.size}")
    if not np.all(table > 0) or not np.all(np.isfinite(table)):
        raise PolynomialError("logical constraint unsupported: factor tables must be strictly positive and finite")
    if num_vars is None:
        num_vars = max(scope, default=-1) + 1
    coef = fourier_coefficients(np.log(table).reshape((2,) * d))
    terms = []
    for idx in np.ndindex(*coef.shape):
        c = coef[idx]
        if abs(c) >= tol:
            terms.append(Monomial(c, tuple(v for v, b in zip(scope, idx) if b)))
    return Polynomial(tuple(terms), num_vars)
