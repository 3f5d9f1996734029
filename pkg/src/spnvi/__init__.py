"""Variational inference in binary graphical models with selective sum-product networks.

The ELBO of a selective, decomposable circuit against a polynomial
log-density is computed exactly (no sampling), so its gradient is exact too.
"""

__version__ = "0.1.0"

from .builder import BuildConfig, build, build_mean_field, pad_correction
from .circuit import (
    Circuit,
    LeafBernoulli,
    LeafLiteral,
    ProductNode,
    SumNode,
    ValidityReport,
    all_assignments,
)
from .elbo import ElboBreakdown, ElboObjective, elbo, elbo_gradient, expect_monomial
from .errors import CircuitError, PolynomialError, SizeLimitError, UAIParseError
from .models_io import (
    FactorGraph,
    IsingSpec,
    factor_graph_to_polynomial,
    gen_ising,
    parse_uai,
    write_uai,
)
from .optimizer import FitResult, OptConfig, fit, importance_estimate
from .polynomial import Monomial, Polynomial, from_factor_table

__all__ = [
    "BuildConfig", "build", "build_mean_field", "pad_correction",
    "Circuit", "LeafBernoulli", "LeafLiteral", "ProductNode", "SumNode", "ValidityReport",
    "all_assignments",
    "ElboBreakdown", "ElboObjective", "elbo", "elbo_gradient", "expect_monomial",
    "CircuitError", "PolynomialError", "SizeLimitError", "UAIParseError",
    "FactorGraph", "IsingSpec", "factor_graph_to_polynomial", "gen_ising", "parse_uai", "write_uai",
    "FitResult", "OptConfig", "fit", "importance_estimate",
    "Monomial", "Polynomial", "from_factor_table",
]
