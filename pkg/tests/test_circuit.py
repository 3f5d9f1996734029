import math

import numpy as np
import pytest
from scipy import stats

from helpers import random_selective_circuit
from spnvi import (
    BuildConfig, Circuit, CircuitError, LeafBernoulli, LeafLiteral, ProductNode, SizeLimitError,
    SumNode, all_assignments, build,
)
from spnvi.oracle import exact_distribution, exact_entropy


def branching_circuit() -> Circuit:
    """Two-variable selective circuit: branches on x1, each branch a Bernoulli on x2."""
    nodes = [
        LeafLiteral(0, 1), LeafLiteral(0, -1),
        LeafLiteral(1, 1), LeafLiteral(1, -1),
        SumNode((2, 3), (0.3, -0.2)),
        SumNode((2, 3), (-1.0, 0.5)),
        ProductNode((0, 4)),
        ProductNode((1, 5)),
        SumNode((6, 7), (0.1, 0.4)),
    ]
    return Circuit(nodes, 2)


def point_mass_mixture(p_first: float) -> Circuit:
    nodes = [
        LeafLiteral(0, 1), LeafLiteral(1, 1), ProductNode((0, 1)),
        LeafLiteral(0, -1), LeafLiteral(1, -1), ProductNode((3, 4)),
        SumNode((2, 5), (math.log(p_first), math.log(1 - p_first))),
    ]
    return Circuit(nodes, 2)


class TestValidate:
    def test_selective_example_is_valid(self):
        report = branching_circuit().validate("exhaustive")
        assert report.ok and report.smooth and report.decomposable
        assert report.selective

    def test_overlapping_bernoullis_not_selective(self):
        c = Circuit([LeafBernoulli(0, 0.3), LeafBernoulli(0, -0.7), SumNode((0, 1))], 1)
        assert c.validate().ok
        report = c.validate("exhaustive")
        assert report.selective is False
        assert [v.prop for v in report.violations] == ["selectivity"]
        assert report.violations[0].node == 2

    def test_smoothness_violation(self):
        c = Circuit([LeafLiteral(0, 1), LeafLiteral(1, 1), SumNode((0, 1))], 2)
        report = c.validate()
        assert not report.smooth
        assert not report.ok

    def test_decomposability_violation(self):
        c = Circuit([LeafLiteral(0, 1), LeafBernoulli(0), ProductNode((0, 1))], 1)
        assert not c.validate().decomposable

    def test_bad_order_and_range(self):
        c = Circuit([ProductNode((1,)), LeafLiteral(5, 1)], 2)
        props = {v.prop for v in c.validate().violations}
        assert {"topological_order", "variable_range", "root_scope"} <= props

    def test_invalid_circuit_refuses_evaluation(self):
        c = Circuit([LeafLiteral(0, 1), LeafLiteral(1, 1), SumNode((0, 1))], 2)
        with pytest.raises(CircuitError):
            c.entropy()

    def test_exhaustive_cap(self):
        c = build(BuildConfig(n=32, k=1))
        assert c.validate().ok
        with pytest.raises(SizeLimitError) as info:
            c.validate("exhaustive")
        assert info.value.limit == 20

    def test_random_circuits_selective(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            report = random_selective_circuit(int(rng.integers(1, 10)), rng).validate("exhaustive")
            assert report.ok and report.selective


class TestEvaluate:
    def test_normalized(self):
        c = build(BuildConfig(n=8, k=16, seed=3, init_scale=2.0))
        total = c.evaluate_many(all_assignments(8)).sum()
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_independent_walk(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            c = random_selective_circuit(int(rng.integers(1, 11)), rng)
            q = c.evaluate_many(all_assignments(c.num_vars))
            np.testing.assert_allclose(q, exact_distribution(c), rtol=1e-10, atol=1e-15)

    def test_log_agrees_with_linear(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            c = random_selective_circuit(int(rng.integers(1, 13)), rng)
            X = all_assignments(c.num_vars)
            q = c.evaluate_many(X)
            lq = c.log_evaluate_many(X)
            pos = q > 1e-300
            np.testing.assert_allclose(lq[pos], np.log(q[pos]), rtol=1e-10, atol=1e-10)
            assert np.all(np.isneginf(lq[q == 0]))

    def test_single_assignment(self):
        c = branching_circuit()
        x = np.array([1, -1])
        assert c.evaluate(x) == pytest.approx(math.exp(c.log_evaluate(x)))

    def test_rejects_bad_assignments(self):
        c = branching_circuit()
        with pytest.raises(CircuitError):
            c.evaluate([1, 1, 1])
        with pytest.raises(CircuitError):
            c.evaluate([1, 0])


class TestSampling:
    def test_mixture_frequency(self):
        X = point_mass_mixture(0.3).sample_many(100_000, seed=0)
        first = np.mean(X[:, 0] == 1)
        assert abs(first - 0.3) <= 0.005
        assert np.all(X[:, 0] == X[:, 1])

    def test_uniform_chi_square(self):
        c = build(BuildConfig(n=4, k=1, init_scale=0.0))
        X = c.sample_many(100_000, seed=1)
        cells = ((X == -1) * (1 << np.arange(4))).sum(axis=1)
        counts = np.bincount(cells, minlength=16)
        assert stats.chisquare(counts).pvalue > 0.001

    def test_matches_distribution(self):
        c = random_selective_circuit(5, np.random.default_rng(4))
        X = c.sample_many(50_000, seed=2)
        cells = ((X == -1) * (1 << np.arange(5))).sum(axis=1)
        freq = np.bincount(cells, minlength=32) / len(X)
        q = exact_distribution(c)
        assert np.all(np.abs(freq - q) <= 4 * np.sqrt(q * (1 - q) / len(X)) + 1e-12)

    def test_seeded_and_in_support(self):
        c = branching_circuit()
        assert np.array_equal(c.sample_many(20, seed=7), c.sample_many(20, seed=7))
        x = c.sample(seed=9)
        assert set(np.unique(x)) <= {-1, 1}
        assert c.evaluate(x) > 0


class TestEntropy:
    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            c = random_selective_circuit(int(rng.integers(1, 13)), rng)
            assert c.entropy() == pytest.approx(exact_entropy(c), rel=1e-9, abs=1e-12)

    def test_built_circuits(self):
        for n, k in [(4, 1), (8, 4), (8, 16), (8, 64)]:
            c = build(BuildConfig(n=n, k=k, seed=n + k, init_scale=1.5))
            assert c.entropy() == pytest.approx(exact_entropy(c), rel=1e-9)

    def test_uniform_and_point_mass(self):
        assert build(BuildConfig(n=8, k=16, init_scale=0.0)).entropy() == pytest.approx(8 * math.log(2))
        c = Circuit([LeafLiteral(0, 1), LeafLiteral(1, -1), ProductNode((0, 1))], 2)
        assert c.entropy() == 0.0

    def test_support_count(self):
        assert point_mass_mixture(0.5).support_log_count() == pytest.approx(math.log(2))
        assert build(BuildConfig(n=8, k=16)).support_log_count() == pytest.approx(8 * math.log(2))


class TestParams:
    def test_with_params_shares_structure(self):
        c = build(BuildConfig(n=4, k=4))
        d = c.with_params(np.zeros(c.num_params))
        assert d.nodes is c.nodes
        assert d.entropy() == pytest.approx(4 * math.log(2))
        assert not np.allclose(c.params, 0)

    def test_params_read_only(self):
        c = build(BuildConfig(n=4, k=4))
        with pytest.raises(ValueError):
            c.params[0] = 1.0

    def test_wrong_param_count(self):
        c = build(BuildConfig(n=4, k=4))
        with pytest.raises(CircuitError):
            c.with_params(np.zeros(c.num_params + 1))

    def test_sum_logit_length_checked(self):
        with pytest.raises(ValueError):
            SumNode((0, 1), (0.0,))


class TestText:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            c = random_selective_circuit(int(rng.integers(1, 8)), rng)
            d = Circuit.from_text(c.to_text())
            assert d.nodes == Circuit(d.nodes, d.num_vars).nodes
            assert np.array_equal(d.params, c.params)
            assert d.entropy() == c.entropy()

    @pytest.mark.parametrize("text", ["", "SPN 1\n", "SPN 2 1\nL 0 1\n", "SPN 1 1\nX 0 1\n", "SPN 1 1\nL a 1\n"])
    def test_malformed(self, text):
        with pytest.raises(CircuitError):
            Circuit.from_text(text)
