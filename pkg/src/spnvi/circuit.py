"""Probabilistic circuits over binary {-1,+1} variables.

A :class:`Circuit` is a node array in topological order (children always have
smaller indices than their parents, the root is the last node).  Sum-edge
weights are stored as unconstrained logits and mapped through a per-node
softmax; Bernoulli leaves store the logit of ``P(x = +1)``.

All passes are vectorized per *level*: a node's level is one more than the
deepest of its children, so every level only reads values computed by lower
levels and can be evaluated with a handful of ``reduceat`` calls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import expit, log_expit, xlogy

from .errors import CircuitError, SizeLimitError

log = logging.getLogger(__name__)

LITERAL, BERNOULLI, SUM, PRODUCT = 0, 1, 2, 3

#: Largest variable count for which exhaustive selectivity checking is allowed.
MAX_EXHAUSTIVE_VARS = 20
#: Batch size cap (nodes * assignments) for the vectorized evaluation passes.
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class LeafLiteral:
    """Deterministic indicator ``[x_var == sign]``."""

    var: int
    sign: int


@dataclass(frozen=True)
class LeafBernoulli:
    """Bernoulli leaf with ``P(x_var = +1) = sigmoid(logit)``."""

    var: int
    logit: float = 0.0


@dataclass(frozen=True)
class SumNode:
    children: tuple[int, ...]
    logits: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(int(c) for c in self.children))
        if self.logits is None:
            object.__setattr__(self, "logits", (0.0,) * len(self.children))
        else:
            object.__setattr__(self, "logits", tuple(float(v) for v in self.logits))
        if len(self.logits) != len(self.children):
            raise CircuitError(
                f"sum node has {len(self.children)} children but {len(self.logits)} logits"
            )


@dataclass(frozen=True)
class ProductNode:
    children: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(int(c) for c in self.children))


Node = Union[LeafLiteral, LeafBernoulli, SumNode, ProductNode]


@dataclass(frozen=True)
class Violation:
    prop: str
    node: int
    detail: str = ""

    def __str__(self):
        return f"{self.prop} violated at node {self.node}: {self.detail}"


@dataclass
class ValidityReport:
    """Outcome of :meth:`Circuit.validate`.

    ``selective`` is ``None`` unless the exhaustive mode was used.
    """

    mode: str
    violations: list[Violation] = field(default_factory=list)
    selective: bool | None = None

    def _holds(self, prop: str) -> bool:
        return not any(v.prop == prop for v in self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def smooth(self) -> bool:
        return self._holds("smoothness")

    @property
    def decomposable(self) -> bool:
        return self._holds("decomposability")

    def __str__(self):
        if self.ok:
            return f"valid ({self.mode})"
        return "\n".join(str(v) for v in self.violations)


@dataclass
class _Level:
    sum_ids: np.ndarray
    sum_child: np.ndarray
    sum_param: np.ndarray
    sum_starts: np.ndarray
    sum_len: np.ndarray
    prod_ids: np.ndarray
    prod_child: np.ndarray
    prod_starts: np.ndarray
    prod_len: np.ndarray

    def __post_init__(self):
        # uniform arity lets passes reshape instead of reduceat; 0 means mixed
        self.sum_arity = _uniform(self.sum_len)
        self.prod_arity = _uniform(self.prod_len)
        self.sum_unique = len(np.unique(self.sum_child)) == len(self.sum_child)
        self.prod_unique = len(np.unique(self.prod_child)) == len(self.prod_child)

    def sum_reduce(self, a: np.ndarray) -> np.ndarray:
        if self.sum_arity:
            return a.reshape((len(self.sum_ids), self.sum_arity) + a.shape[1:]).sum(axis=1)
        return np.add.reduceat(a, self.sum_starts, axis=0)

    def prod_reduce(self, a: np.ndarray) -> np.ndarray:
        if self.prod_arity == 2:
            return a[0::2] * a[1::2]
        if self.prod_arity:
            return a.reshape((len(self.prod_ids), self.prod_arity) + a.shape[1:]).prod(axis=1)
        return np.multiply.reduceat(a, self.prod_starts, axis=0)

    def prod_add(self, a: np.ndarray) -> np.ndarray:
        if self.prod_arity == 2:
            return a[0::2] + a[1::2]
        return np.add.reduceat(a, self.prod_starts, axis=0)


def _uniform(lengths: np.ndarray) -> int:
    if len(lengths) and np.all(lengths == lengths[0]):
        return int(lengths[0])
    return 0


class _Schedule:
    """Array form of a structurally valid circuit, grouped into levels."""

    def __init__(self, nodes: Sequence[Node], param_offset: np.ndarray):
        n_nodes = len(nodes)
        self.kind = np.empty(n_nodes, dtype=np.int8)
        depth = np.zeros(n_nodes, dtype=np.int64)
        leaf_ids, leaf_var, leaf_sign, leaf_param = [], [], [], []
        seg_params, seg_lengths = [], []
        bern_params = []
        for i, node in enumerate(nodes):
            if isinstance(node, LeafLiteral):
                self.kind[i] = LITERAL
                leaf_ids.append(i)
                leaf_var.append(node.var)
                leaf_sign.append(node.sign)
                leaf_param.append(-1)
            elif isinstance(node, LeafBernoulli):
                self.kind[i] = BERNOULLI
                leaf_ids.append(i)
                leaf_var.append(node.var)
                leaf_sign.append(0)
                leaf_param.append(param_offset[i])
                bern_params.append(param_offset[i])
            else:
                ch = np.asarray(node.children, dtype=np.int64)
                depth[i] = depth[ch].max() + 1
                if isinstance(node, SumNode):
                    self.kind[i] = SUM
                    seg_params.append(param_offset[i])
                    seg_lengths.append(len(ch))
                else:
                    self.kind[i] = PRODUCT

        self.leaf_ids = np.asarray(leaf_ids, dtype=np.int64)
        self.leaf_var = np.asarray(leaf_var, dtype=np.int64)
        self.leaf_sign = np.asarray(leaf_sign, dtype=np.float64)
        self.leaf_param = np.asarray(leaf_param, dtype=np.int64)
        self.is_bern = self.kind[self.leaf_ids] == BERNOULLI
        self.bern_params = np.asarray(bern_params, dtype=np.int64)

        # softmax segments: one per sum node, params contiguous within a node
        seg_lengths = np.asarray(seg_lengths, dtype=np.int64)
        self.seg_lengths = seg_lengths
        if len(seg_lengths):
            self.seg_params = np.concatenate(
                [np.arange(s, s + k) for s, k in zip(seg_params, seg_lengths)]
            )
            self.seg_starts = np.concatenate([[0], np.cumsum(seg_lengths)[:-1]])
        else:
            self.seg_params = np.zeros(0, dtype=np.int64)
            self.seg_starts = np.zeros(0, dtype=np.int64)

        self.levels: list[_Level] = []
        max_depth = int(depth.max()) if n_nodes else 0
        by_depth: list[list[int]] = [[] for _ in range(max_depth + 1)]
        for i in range(n_nodes):
            if depth[i] > 0:
                by_depth[depth[i]].append(i)
        for ids in by_depth[1:]:
            s_ids = [i for i in ids if self.kind[i] == SUM]
            p_ids = [i for i in ids if self.kind[i] == PRODUCT]
            s_child, s_param, s_len = [], [], []
            for i in s_ids:
                ch = nodes[i].children
                s_child.extend(ch)
                s_param.extend(range(param_offset[i], param_offset[i] + len(ch)))
                s_len.append(len(ch))
            p_child, p_len = [], []
            for i in p_ids:
                ch = nodes[i].children
                p_child.extend(ch)
                p_len.append(len(ch))
            self.levels.append(
                _Level(
                    sum_ids=np.asarray(s_ids, dtype=np.int64),
                    sum_child=np.asarray(s_child, dtype=np.int64),
                    sum_param=np.asarray(s_param, dtype=np.int64),
                    sum_starts=_starts(s_len),
                    sum_len=np.asarray(s_len, dtype=np.int64),
                    prod_ids=np.asarray(p_ids, dtype=np.int64),
                    prod_child=np.asarray(p_child, dtype=np.int64),
                    prod_starts=_starts(p_len),
                    prod_len=np.asarray(p_len, dtype=np.int64),
                )
            )

    def weights(self, params: np.ndarray) -> np.ndarray:
        """Softmax sum-edge weights at sum-edge positions, sigmoid(logit) at Bernoulli ones."""
        w = np.zeros_like(params)
        if len(self.seg_params):
            z = params[self.seg_params]
            z = z - np.repeat(np.maximum.reduceat(z, self.seg_starts), self.seg_lengths)
            e = np.exp(z)
            e /= np.repeat(np.add.reduceat(e, self.seg_starts), self.seg_lengths)
            w[self.seg_params] = e
        if len(self.bern_params):
            w[self.bern_params] = expit(params[self.bern_params])
        return w

    def log_weights(self, params: np.ndarray) -> np.ndarray:
        lw = np.zeros_like(params)
        if len(self.seg_params):
            z = params[self.seg_params]
            m = np.maximum.reduceat(z, self.seg_starts)
            z = z - np.repeat(m, self.seg_lengths)
            lse = np.log(np.add.reduceat(np.exp(z), self.seg_starts))
            lw[self.seg_params] = z - np.repeat(lse, self.seg_lengths)
        if len(self.bern_params):
            lw[self.bern_params] = log_expit(params[self.bern_params])
        return lw

    def upward(self, values: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Fill internal rows of ``values`` (leaf rows preset): weighted sums, plain products."""
        extra = (slice(None),) + (None,) * (values.ndim - 1)
        for lv in self.levels:
            if len(lv.sum_ids):
                values[lv.sum_ids] = lv.sum_reduce(w[lv.sum_param][extra] * values[lv.sum_child])
            if len(lv.prod_ids):
                values[lv.prod_ids] = lv.prod_reduce(values[lv.prod_child])
        return values

    def upward_entropy(self, H: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Entropy recursion; leaf rows of ``H`` preset.  Uses 0 ln 0 = 0."""
        for lv in self.levels:
            if len(lv.sum_ids):
                a = w[lv.sum_param]
                H[lv.sum_ids] = lv.sum_reduce(a * H[lv.sum_child] - xlogy(a, a))
            if len(lv.prod_ids):
                H[lv.prod_ids] = lv.prod_add(H[lv.prod_child])
        return H

    def upward_log(self, values: np.ndarray, lw: np.ndarray) -> np.ndarray:
        extra = (slice(None),) + (None,) * (values.ndim - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            for lv in self.levels:
                if len(lv.sum_ids):
                    a = lw[lv.sum_param][extra] + values[lv.sum_child]
                    m = np.maximum.reduceat(a, lv.sum_starts, axis=0)
                    m = np.where(np.isfinite(m), m, 0.0)
                    s = lv.sum_reduce(np.exp(a - np.repeat(m, lv.sum_len, axis=0)))
                    values[lv.sum_ids] = np.log(s) + m
                if len(lv.prod_ids):
                    values[lv.prod_ids] = lv.prod_add(values[lv.prod_child])
        return values


def _starts(lengths: list[int]) -> np.ndarray:
    if not lengths:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class Circuit:
    """A smooth, decomposable probabilistic circuit over ``num_vars`` binary variables.

    The structure is immutable; parameters live in a flat vector (see
    :attr:`params`) laid out in node order: each sum node contributes one logit
    per child, each Bernoulli leaf one logit.  :meth:`with_params` returns a
    new circuit sharing the compiled structure.
    """

    def __init__(self, nodes: Iterable[Node], num_vars: int, params: np.ndarray | None = None):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.num_vars = int(num_vars)
        if not self.nodes:
            raise CircuitError("circuit has no nodes")
        offsets = np.full(len(self.nodes), -1, dtype=np.int64)
        init = []
        for i, node in enumerate(self.nodes):
            if isinstance(node, SumNode):
                offsets[i] = len(init)
                init.extend(node.logits)
            elif isinstance(node, LeafBernoulli):
                offsets[i] = len(init)
                init.append(float(node.logit))
            elif not isinstance(node, (LeafLiteral, ProductNode)):
                raise CircuitError(f"node {i} has unknown type {type(node).__name__}")
        self._param_offset = offsets
        if params is None:
            params = np.asarray(init, dtype=np.float64)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (len(init),):
                raise CircuitError(f"expected {len(init)} parameters, got shape {params.shape}")
        self._params = params
        self._params.flags.writeable = False

    # ------------------------------------------------------------------
    # structure

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def params(self) -> np.ndarray:
        """Read-only view of the flat logit vector."""
        return self._params

    @property
    def num_params(self) -> int:
        return len(self._params)

    @property
    def param_offset(self) -> np.ndarray:
        """Index of each node's first parameter, or -1 for parameter-free nodes."""
        return self._param_offset

    def with_params(self, params: np.ndarray) -> "Circuit":
        other = object.__new__(Circuit)
        other.__dict__.update(self.__dict__)
        params = np.array(params, dtype=np.float64)
        if params.shape != self._params.shape:
            raise CircuitError(f"expected {len(self._params)} parameters, got shape {params.shape}")
        params.flags.writeable = False
        other._params = params
        return other

    def size(self) -> tuple[int, int]:
        """``(node_count, edge_count)``; edges are the children of internal nodes."""
        edges = sum(
            len(nd.children) for nd in self.nodes if isinstance(nd, (SumNode, ProductNode))
        )
        return len(self.nodes), edges

    @cached_property
    def scopes(self) -> list[int]:
        """Per-node variable set as an integer bitset (bit ``v`` set iff ``x_v`` in scope)."""
        scopes = [0] * len(self.nodes)
        for i, node in enumerate(self.nodes):
            if isinstance(node, (LeafLiteral, LeafBernoulli)):
                if 0 <= node.var < self.num_vars:
                    scopes[i] = 1 << node.var
            else:
                s = 0
                for c in node.children:
                    if 0 <= c < i:
                        s |= scopes[c]
                scopes[i] = s
        return scopes

    def validate(self, mode: str = "structural") -> ValidityReport:
        """Check well-formedness, smoothness, decomposability and (exhaustively) selectivity.

        Args:
            mode: ``"structural"`` uses scope bitsets only.  ``"exhaustive"``
                additionally enumerates all ``2**num_vars`` assignments to
                check that no sum node has two non-zero children.

        Raises:
            SizeLimitError: exhaustive mode with more than 20 variables.
        """
        if mode not in ("structural", "exhaustive"):
            raise ValueError(f"unknown validation mode {mode!r}")
        if mode == "exhaustive" and self.num_vars > MAX_EXHAUSTIVE_VARS:
            raise SizeLimitError(
                f"exhaustive validation enumerates 2^{self.num_vars} assignments; "
                f"refused above {MAX_EXHAUSTIVE_VARS} variables",
                MAX_EXHAUSTIVE_VARS,
            )
        report = ValidityReport(mode=mode)
        bad = report.violations
        scopes = self.scopes
        for i, node in enumerate(self.nodes):
            if isinstance(node, (LeafLiteral, LeafBernoulli)):
                if not 0 <= node.var < self.num_vars:
                    bad.append(Violation("variable_range", i, f"variable {node.var} not in [0, {self.num_vars})"))
                if isinstance(node, LeafLiteral) and node.sign not in (-1, 1):
                    bad.append(Violation("literal_sign", i, f"sign {node.sign} not in {{-1, +1}}"))
                continue
            if not node.children:
                bad.append(Violation("arity", i, "internal node without children"))
                continue
            out_of_order = [c for c in node.children if not 0 <= c < i]
            if out_of_order:
                bad.append(Violation("topological_order", i, f"children {out_of_order} not below {i}"))
                continue
            if isinstance(node, SumNode):
                first = scopes[node.children[0]]
                if any(scopes[c] != first for c in node.children[1:]):
                    bad.append(Violation("smoothness", i, "children cover different scopes"))
            else:
                acc = 0
                for c in node.children:
                    if acc & scopes[c]:
                        bad.append(Violation(
                            "decomposability", i, f"child {c} shares variables {_bits(acc & scopes[c])}"
                        ))
                        break
                    acc |= scopes[c]
        full = (1 << self.num_vars) - 1
        if scopes[self.root] != full:
            missing = _bits(full & ~scopes[self.root])
            bad.append(Violation("root_scope", self.root, f"root does not cover variables {missing[:10]}"))

        if mode == "exhaustive":
            if report.ok:
                report.selective = self._check_selective(bad)
            else:
                log.warning("skipping exhaustive selectivity check on a structurally invalid circuit")
        return report

    def _check_selective(self, bad: list[Violation]) -> bool:
        sched = self._schedule
        flagged: set[int] = set()
        for X in _assignment_chunks(self.num_vars):
            support = self._support(X)
            for lv in sched.levels:
                if not len(lv.sum_ids):
                    continue
                counts = np.add.reduceat(support[lv.sum_child].astype(np.int32), lv.sum_starts, axis=0)
                for row, col in zip(*np.nonzero(counts > 1)):
                    i = int(lv.sum_ids[row])
                    if i not in flagged:
                        flagged.add(i)
                        x = X[col].astype(int).tolist()
                        bad.append(Violation("selectivity", i, f"two or more children non-zero at x={x}"))
        return not flagged

    def _support(self, X: np.ndarray) -> np.ndarray:
        """Boolean (nodes, batch) matrix: is node non-zero on each assignment."""
        sched = self._schedule
        vals = np.zeros((len(self.nodes), len(X)))
        lit = ~sched.is_bern
        lids = sched.leaf_ids
        vals[lids[lit]] = (X[:, sched.leaf_var[lit]] == sched.leaf_sign[lit]).T
        vals[lids[~lit]] = 1.0
        ones = np.ones(self.num_params)
        sched.upward(vals, ones)
        return vals > 0

    @cached_property
    def _schedule(self) -> _Schedule:
        report = self.validate("structural")
        if not report.ok:
            raise CircuitError(f"circuit is not structurally valid:\n{report}")
        return _Schedule(self.nodes, self._param_offset)

    def weights(self) -> np.ndarray:
        """Parameters mapped to probabilities: softmax per sum node, sigmoid per Bernoulli leaf."""
        return self._schedule.weights(self._params)

    # ------------------------------------------------------------------
    # evaluation

    def _check_batch(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.num_vars:
            raise CircuitError(f"assignment length {X.shape[-1]} does not match num_vars={self.num_vars}")
        if not np.all((X == 1) | (X == -1)):
            raise CircuitError("assignment entries must be -1 or +1")
        return X

    def _chunked(self, fn, X) -> np.ndarray:
        X = self._check_batch(X)
        step = max(1, _CHUNK_ELEMENTS // len(self.nodes))
        if len(X) <= step:
            return fn(X)
        return np.concatenate([fn(X[i:i + step]) for i in range(0, len(X), step)])

    def evaluate_many(self, X) -> np.ndarray:
        """``q(x)`` for each row of ``X`` (shape ``(batch, num_vars)``)."""
        return self._chunked(self._evaluate_block, X)

    def _evaluate_block(self, X) -> np.ndarray:
        sched = self._schedule
        w = sched.weights(self._params)
        vals = np.empty((len(self.nodes), len(X)))
        xs = X[:, sched.leaf_var].T
        lit = ~sched.is_bern
        lids = sched.leaf_ids
        vals[lids[lit]] = xs[lit] == sched.leaf_sign[lit][:, None]
        p = w[sched.leaf_param[~lit]][:, None]
        vals[lids[~lit]] = np.where(xs[~lit] == 1, p, 1.0 - p)
        return sched.upward(vals, w)[self.root].copy()

    def evaluate(self, x) -> float:
        """Probability of a single full assignment ``x`` in ``{-1,+1}^n``."""
        x = np.asarray(x)
        if x.ndim != 1:
            raise CircuitError("evaluate expects a single assignment; use evaluate_many")
        return float(self.evaluate_many(x)[0])

    def log_evaluate_many(self, X) -> np.ndarray:
        """Log-space twin of :meth:`evaluate_many`; ``-inf`` where a literal contradicts ``x``."""
        return self._chunked(self._log_evaluate_block, X)

    def _log_evaluate_block(self, X) -> np.ndarray:
        sched = self._schedule
        lw = sched.log_weights(self._params)
        vals = np.empty((len(self.nodes), len(X)))
        xs = X[:, sched.leaf_var].T
        lit = ~sched.is_bern
        lids = sched.leaf_ids
        vals[lids[lit]] = np.where(xs[lit] == sched.leaf_sign[lit][:, None], 0.0, -np.inf)
        logits = self._params[sched.leaf_param[~lit]][:, None]
        vals[lids[~lit]] = np.where(xs[~lit] == 1, log_expit(logits), log_expit(-logits))
        return sched.upward_log(vals, lw)[self.root].copy()

    def log_evaluate(self, x) -> float:
        x = np.asarray(x)
        if x.ndim != 1:
            raise CircuitError("log_evaluate expects a single assignment; use log_evaluate_many")
        return float(self.log_evaluate_many(x)[0])

    # ------------------------------------------------------------------
    # sampling

    def sample_many(self, count: int, seed=None) -> np.ndarray:
        """Draw ``count`` independent assignments, shape ``(count, num_vars)``, dtype int8.

        Samples are routed top-down as index sets: a sum node splits its set
        by a categorical draw, a product node forwards it to every child.
        """
        sched = self._schedule
        rng = np.random.default_rng(seed)
        w = sched.weights(self._params)
        X = np.zeros((count, self.num_vars), dtype=np.int8)
        pending: dict[int, list[np.ndarray]] = {self.root: [np.arange(count)]}
        for i in range(self.root, -1, -1):
            parts = pending.pop(i, None)
            if not parts:
                continue
            idx = parts[0] if len(parts) == 1 else np.concatenate(parts)
            if not len(idx):
                continue
            node = self.nodes[i]
            if isinstance(node, SumNode):
                off = self._param_offset[i]
                cum = np.cumsum(w[off:off + len(node.children)])
                pick = np.searchsorted(cum, rng.random(len(idx)) * cum[-1], side="right")
                pick = np.minimum(pick, len(node.children) - 1)
                for j, c in enumerate(node.children):
                    pending.setdefault(c, []).append(idx[pick == j])
            elif isinstance(node, ProductNode):
                for c in node.children:
                    pending.setdefault(c, []).append(idx)
            elif isinstance(node, LeafLiteral):
                X[idx, node.var] = node.sign
            else:
                p = w[self._param_offset[i]]
                X[idx, node.var] = np.where(rng.random(len(idx)) < p, 1, -1)
        if count and not np.all(X != 0):
            raise CircuitError("sampling left variables unassigned; circuit is not smooth/decomposable")
        return X

    def sample(self, seed=None) -> np.ndarray:
        """One assignment in ``{-1,+1}^n``; deterministic for a fixed seed."""
        return self.sample_many(1, seed)[0]

    # ------------------------------------------------------------------
    # entropy

    def entropy(self) -> float:
        """Entropy of the circuit distribution in nats, in one bottom-up pass.

        Exact only for selective circuits; on non-selective ones the value
        is an upper bound.  Selectivity is not re-checked here.
        """
        return float(self.entropy_per_node()[self.root])

    def entropy_per_node(self) -> np.ndarray:
        sched = self._schedule
        w = sched.weights(self._params)
        H = np.zeros(len(self.nodes))
        if sched.is_bern.any():
            p = w[sched.leaf_param[sched.is_bern]]
            H[sched.leaf_ids[sched.is_bern]] = -xlogy(p, p) - xlogy(1 - p, 1 - p)
        return sched.upward_entropy(H, w)

    def support_log_count(self) -> float:
        """Natural log of the number of assignments with ``q(x) > 0``.

        Counts add at sum nodes, which is exact for selective circuits (the
        children's supports are disjoint) and an over-count otherwise.
        """
        sched = self._schedule
        vals = np.full(len(self.nodes), -np.inf)
        vals[sched.leaf_ids] = np.where(sched.is_bern, np.log(2.0), 0.0)
        # log weight 0 == unit weight: plain count addition
        return float(sched.upward_log(vals, np.zeros(self.num_params))[self.root])

    # ------------------------------------------------------------------
    # text format

    def to_text(self) -> str:
        lines = [f"SPN {len(self.nodes)} {self.num_vars}"]
        p = self._params
        for i, node in enumerate(self.nodes):
            off = self._param_offset[i]
            if isinstance(node, LeafLiteral):
                lines.append(f"L {node.var} {node.sign}")
            elif isinstance(node, LeafBernoulli):
                lines.append(f"B {node.var} {p[off]:.17g}")
            elif isinstance(node, ProductNode):
                lines.append("P " + " ".join(map(str, node.children)))
            else:
                pairs = (f"{c}:{p[off + j]:.17g}" for j, c in enumerate(node.children))
                lines.append("S " + " ".join(pairs))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or lines[0][0] != "SPN" or len(lines[0]) != 3:
            raise CircuitError("expected header 'SPN <num_nodes> <num_vars>'")
        try:
            num_nodes, num_vars = int(lines[0][1]), int(lines[0][2])
        except ValueError as exc:
            raise CircuitError(f"bad header: {exc}") from None
        if len(lines) - 1 != num_nodes:
            raise CircuitError(f"header announces {num_nodes} nodes, found {len(lines) - 1}")
        nodes: list[Node] = []
        for lineno, tok in enumerate(lines[1:], start=2):
            try:
                tag = tok[0]
                if tag == "L" and len(tok) == 3:
                    nodes.append(LeafLiteral(int(tok[1]), int(tok[2])))
                elif tag == "B" and len(tok) == 3:
                    nodes.append(LeafBernoulli(int(tok[1]), float(tok[2])))
                elif tag == "P" and len(tok) >= 2:
                    nodes.append(ProductNode(tuple(int(t) for t in tok[1:])))
                elif tag == "S" and len(tok) >= 2:
                    pairs = [t.split(":") for t in tok[1:]]
                    nodes.append(SumNode(tuple(int(c) for c, _ in pairs), tuple(float(v) for _, v in pairs)))
                else:
                    raise CircuitError(f"unrecognised node line {' '.join(tok)!r}")
            except ValueError as exc:
                raise CircuitError(f"line {lineno}: {exc}") from None
        return cls(nodes, num_vars)

    def __repr__(self):
        n_nodes, n_edges = self.size()
        return f"Circuit(num_vars={self.num_vars}, nodes={n_nodes}, edges={n_edges}, params={self.num_params})"


def _assignment_chunks(n: int, chunk_bits: int = 14):
    """Yield all of ``{-1,+1}^n`` in blocks; bit ``i`` of the index set means ``x_i = -1``."""
    total = 1 << n
    step = 1 << min(n, chunk_bits)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, step):
        idx = np.arange(start, min(start + step, total), dtype=np.int64)
        bits = (idx[:, None] >> shifts) & 1
        yield (1 - 2 * bits).astype(np.int8)


def all_assignments(n: int) -> np.ndarray:
    """Every assignment in ``{-1,+1}^n`` as an int8 array of shape ``(2**n, n)``."""
    return np.concatenate(list(_assignment_chunks(n))) if n else np.zeros((1, 0), dtype=np.int8)
