"""Exact ELBO of a selective SPN against a polynomial log-density, and its gradient.

``ELBO = sum_f E_q[f] + H(q) - offset``.  Monomial expectations use the
bottom-up recursion (weighted average at sums, product at products, leaf
mean or 1 at leaves), batched over monomials as columns.  The gradient is
a hand-written reverse pass over the same level schedule, followed by the
softmax / sigmoid chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .circuit import Circuit
from .errors import CircuitError
from .polynomial import Monomial, Polynomial

#: Upper bound on nodes * monomials held in memory per expectation batch.
BATCH_ELEMENTS = 1 << 22


@dataclass
class ElboBreakdown:
    expectation_terms: np.ndarray
    entropy: float
    offset: float
    total: float


class ElboObjective:
    """ELBO of a fixed circuit structure and polynomial, as a function of the logits.

    Precomputes, per batch of monomials, which leaves fall inside each
    monomial so repeated evaluations only redo the numeric passes.
    """

    def __init__(self, circuit: Circuit, poly: Polynomial, offset: float = 0.0):
        if poly.num_vars > circuit.num_vars:
            raise CircuitError(
                f"polynomial has {poly.num_vars} variables but circuit covers only {circuit.num_vars}"
            )
        self.circuit = circuit
        self.poly = poly
        self.offset = float(offset)
        sched = circuit._schedule
        self._sched = sched
        self._n_nodes = len(circuit.nodes)
        self._root = circuit.root
        self.coefficients = poly.coefficients
        t = len(poly.terms)
        batch = max(1, BATCH_ELEMENTS // max(1, self._n_nodes))
        self._batches = []
        for start in range(0, t, batch):
            terms = poly.terms[start:start + batch]
            member = np.zeros((circuit.num_vars, len(terms)), dtype=bool)
            for j, term in enumerate(terms):
                member[list(term.vars), j] = True
            self._batches.append((start, start + len(terms), member[sched.leaf_var]))

    # -- forward ---------------------------------------------------------

    def _leaf_means(self, w: np.ndarray) -> np.ndarray:
        s = self._sched
        mean = s.leaf_sign.copy()
        mean[s.is_bern] = 2.0 * w[s.leaf_param[s.is_bern]] - 1.0
        return mean

    def _expect_batch(self, w, mean, leaf_in_f) -> np.ndarray:
        s = self._sched
        vals = np.empty((self._n_nodes, leaf_in_f.shape[1]))
        vals[s.leaf_ids] = np.where(leaf_in_f, mean[:, None], 1.0)
        return s.upward(vals, w)

    def expectations(self, params: np.ndarray | None = None) -> np.ndarray:
        """Coefficient-weighted ``E_q[f]`` for every term of the polynomial."""
        params = self.circuit.params if params is None else params
        w = self._sched.weights(params)
        mean = self._leaf_means(w)
        out = np.empty(len(self.coefficients))
        for lo, hi, leaf_in_f in self._batches:
            out[lo:hi] = self._expect_batch(w, mean, leaf_in_f)[self._root]
        return out * self.coefficients

    def breakdown(self, params: np.ndarray | None = None) -> ElboBreakdown:
        params = self.circuit.params if params is None else params
        terms = self.expectations(params)
        H = float(self.circuit.with_params(params).entropy())
        total = float(np.sum(terms)) + H - self.offset
        return ElboBreakdown(terms, H, self.offset, total)

    def value(self, params: np.ndarray | None = None) -> float:
        return self.breakdown(params).total

    # -- reverse pass ----------------------------------------------------

    def value_and_grad(self, params: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """ELBO total and its exact gradient with respect to every logit."""
        params = self.circuit.params if params is None else np.asarray(params, dtype=np.float64)
        s = self._sched
        w = s.weights(params)
        mean = self._leaf_means(w)
        gw = np.zeros_like(params)  # d ELBO / d weight (sum edges), d ELBO / d p (Bernoulli)

        expect_total = 0.0
        bern_leaf = s.is_bern
        bern_param = s.leaf_param[bern_leaf]
        for lo, hi, leaf_in_f in self._batches:
            vals = self._expect_batch(w, mean, leaf_in_f)
            coef = self.coefficients[lo:hi]
            expect_total += float(vals[self._root] @ coef)
            G = np.zeros_like(vals)
            G[self._root] = coef
            self._backward(vals, G, w, gw)
            if bern_leaf.any():
                # leaf value is 2p-1 where the monomial contains the variable
                g_leaf = (G[s.leaf_ids[bern_leaf]] * leaf_in_f[bern_leaf]).sum(axis=1)
                np.add.at(gw, bern_param, 2.0 * g_leaf)

        H = np.zeros(self._n_nodes)
        if bern_leaf.any():
            p = w[bern_param]
            H[s.leaf_ids[bern_leaf]] = -xlogy(p, p) - xlogy(1 - p, 1 - p)
        H = s.upward_entropy(H, w)
        gH = np.zeros(self._n_nodes)
        gH[self._root] = 1.0
        self._backward_entropy(H, gH, w, gw)
        if bern_leaf.any():
            p = w[bern_param]
            with np.errstate(divide="ignore", invalid="ignore"):
                dHdp = np.where((p > 0) & (p < 1), np.log1p(-p) - np.log(p), 0.0)
            np.add.at(gw, bern_param, gH[s.leaf_ids[bern_leaf]] * dHdp)

        grad = self._chain_to_logits(w, gw)
        total = expect_total + float(H[self._root]) - self.offset
        return total, grad

    def _backward(self, vals, G, w, gw) -> None:
        for lv in reversed(self._sched.levels):
            if len(lv.prod_ids):
                cv = vals[lv.prod_child]
                if lv.prod_arity == 2:
                    others = np.empty_like(cv)
                    others[0::2] = cv[1::2]
                    others[1::2] = cv[0::2]
                else:
                    others = _product_of_others(cv, lv)
                contrib = others * np.repeat(G[lv.prod_ids], lv.prod_len, axis=0)
                _scatter_add(G, lv.prod_child, contrib, lv.prod_unique)
            if len(lv.sum_ids):
                gp = np.repeat(G[lv.sum_ids], lv.sum_len, axis=0)
                a = w[lv.sum_param]
                gw[lv.sum_param] += np.einsum("eb,eb->e", gp, vals[lv.sum_child])
                _scatter_add(G, lv.sum_child, a[:, None] * gp, lv.sum_unique)

    def _backward_entropy(self, H, gH, w, gw) -> None:
        for lv in reversed(self._sched.levels):
            if len(lv.prod_ids):
                _scatter_add(gH, lv.prod_child, np.repeat(gH[lv.prod_ids], lv.prod_len), lv.prod_unique)
            if len(lv.sum_ids):
                gp = np.repeat(gH[lv.sum_ids], lv.sum_len)
                a = w[lv.sum_param]
                with np.errstate(divide="ignore"):
                    local = np.where(a > 0, H[lv.sum_child] - np.log(a) - 1.0, 0.0)
                gw[lv.sum_param] += gp * local
                _scatter_add(gH, lv.sum_child, a * gp, lv.sum_unique)

    def _chain_to_logits(self, w, gw) -> np.ndarray:
        s = self._sched
        grad = np.zeros_like(gw)
        if len(s.seg_params):
            a = w[s.seg_params]
            g = gw[s.seg_params]
            inner = np.repeat(np.add.reduceat(a * g, s.seg_starts), s.seg_lengths)
            grad[s.seg_params] = a * (g - inner)
        if len(s.bern_params):
            p = w[s.bern_params]
            grad[s.bern_params] = gw[s.bern_params] * p * (1.0 - p)
        return grad


def _scatter_add(target, index, values, unique: bool) -> None:
    if unique:
        target[index] += values
    else:
        np.add.at(target, index, values)


def _product_of_others(cv: np.ndarray, lv) -> np.ndarray:
    """For each product edge, the product of its siblings' values (zero-safe)."""
    zero = cv == 0.0
    nz = np.where(zero, 1.0, cv)
    prod_nz = np.repeat(np.multiply.reduceat(nz, lv.prod_starts, axis=0), lv.prod_len, axis=0)
    n_zero = np.repeat(np.add.reduceat(zero, lv.prod_starts, axis=0), lv.prod_len, axis=0)
    return np.where(n_zero == 0, prod_nz / nz, np.where((n_zero == 1) & zero, prod_nz, 0.0))


def expect_monomial(circuit: Circuit, f: Monomial) -> float:
    """``E_q[f]`` including the coefficient, in one bottom-up pass."""
    if f.vars and f.vars[-1] >= circuit.num_vars:
        raise CircuitError(f"monomial variable {f.vars[-1]} outside circuit scope of {circuit.num_vars} variables")
    poly = Polynomial((f,), circuit.num_vars)
    return float(ElboObjective(circuit, poly).expectations()[0])


def elbo(circuit: Circuit, poly: Polynomial, offset: float = 0.0) -> ElboBreakdown:
    """Exact ELBO breakdown; a lower bound on ``ln Z`` when the circuit is selective."""
    return ElboObjective(circuit, poly, offset).breakdown()


def elbo_gradient(circuit: Circuit, poly: Polynomial, offset: float = 0.0) -> np.ndarray:
    """Gradient of ``elbo(...).total`` with respect to ``circuit.params``."""
    return ElboObjective(circuit, poly, offset).value_and_grad()[1]
