"""Layer-wise construction of selective sum-product networks of size O(k n).

Each variable starts as a partition holding its two literal leaves.  Layers
then alternate: when a partition holds more than ``sqrt(k)`` nodes, a sum
layer groups consecutive runs of ``r = c / sqrt(k)`` nodes under one sum
node each; every iteration ends with a product layer that takes the
Cartesian product of adjacent partition pairs (``c -> c**2``, partition count
halves).  Nodes inside a partition always have pairwise disjoint support, so
every sum node is selective and every product node decomposable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, LeafLiteral, Node, ProductNode, SumNode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildConfig:
    n: int
    k: int = 1
    seed: int | None = 0
    init_scale: float = 0.5
    permute: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def round_k(k: int) -> int:
    """Smallest power of 4 that is >= ``k`` (so ``sqrt(k)`` is a power of two)."""
    e = max(0, (k - 1).bit_length())
    return 1 << (e + (e & 1))


def pad_correction(config: BuildConfig) -> tuple[int, float]:
    """Padded variable count and the ELBO offset ``(n_padded - n) * ln 2``.

    Dummy variables never appear in the target, so the padded model's
    partition function is ``2**dummies`` times the original.
    """
    n_padded = next_pow2(config.n)
    return n_padded, (n_padded - config.n) * math.log(2.0)


def build_structure(n_padded: int, k: int, order: np.ndarray | None = None) -> list[Node]:
    """Node list (topological, root last) for a power-of-two ``n_padded`` and power-of-4 ``k``.

    Sum nodes get zero logits; :func:`build` draws the initial values.
    """
    if n_padded & (n_padded - 1):
        raise ValueError(f"n_padded must be a power of 2, got {n_padded}")
    if round_k(k) != k:
        raise ValueError(f"k must be a power of 4, got {k}")
    sqrt_k = math.isqrt(k)
    if order is None:
        order = np.arange(n_padded)

    nodes: list[Node] = []
    layer: list[int] = []
    for v in order:
        layer.append(len(nodes))
        nodes.append(LeafLiteral(int(v), -1))
        layer.append(len(nodes))
        nodes.append(LeafLiteral(int(v), +1))
    c, parts = 2, n_padded

    while parts > 1:
        if c > sqrt_k:
            r = c // sqrt_k
            reduced = []
            for i in range(len(layer) // r):
                reduced.append(len(nodes))
                nodes.append(SumNode(tuple(layer[r * i:r * (i + 1)])))
            layer, c = reduced, c // r
        paired = []
        for i in range(parts // 2):
            left = layer[2 * i * c:(2 * i + 1) * c]
            right = layer[(2 * i + 1) * c:(2 * i + 2) * c]
            for a in left:
                for b in right:
                    paired.append(len(nodes))
                    nodes.append(ProductNode((a, b)))
        layer, c, parts = paired, c * c, parts // 2

    if c > 1:
        nodes.append(SumNode(tuple(layer[:c])))
    return nodes


def build(config: BuildConfig) -> Circuit:
    """Build a selective SPN over ``next_pow2(n)`` variables with logits ~ N(0, init_scale)."""
    n_padded, _ = pad_correction(config)
    k = round_k(config.k)
    if n_padded != config.n or k != config.k:
        log.info("padded n %d -> %d, rounded k %d -> %d", config.n, n_padded, config.k, k)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n_padded) if config.permute else None
    circuit = Circuit(build_structure(n_padded, k, order), n_padded)
    return circuit.with_params(rng.normal(0.0, config.init_scale, circuit.num_params))


def build_mean_field(n: int, seed: int | None = 0, init_scale: float = 0.5) -> Circuit:
    """Fully factored circuit: one two-literal sum per variable under a product tree."""
    return build(BuildConfig(n=n, k=1, seed=seed, init_scale=init_scale))
