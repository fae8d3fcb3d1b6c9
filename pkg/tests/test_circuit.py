#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the einsum_gestures.circuit module
"""

from einsum_gestures.circuit import (
    CircuitError,
    CircuitSpec,
    EinsumCircuit,
    TrainingError,
    bayes_posterior,
    build_circuit,
    build_region_graph,
)
import math
import numpy as np
from pytest import approx, raises


def brute_force_loglik(circuit, x, c):
    """Expand every sum node explicitly in probability space."""
    z = (np.asarray(x) - circuit.feature_mean) / circuit.feature_std
    k_range = range(circuit.spec.sum_components)
    total = 0.0
    for r, regions in enumerate(circuit.graph.repetitions):

        def value(node, k):
            region = regions[node]
            w = np.exp(circuit.log_weights[r][node])
            if region.is_leaf:
                s = 0.0
                for l in range(circuit.spec.leaf_distributions):
                    density = 1.0
                    for j, var in enumerate(region.scope):
                        mu = circuit.means[r][node][l, j]
                        v = circuit.variances[r][node][l, j]
                        density *= math.exp(-0.5 * (z[var] - mu) ** 2 / v) / math.sqrt(
                            2 * math.pi * v
                        )
                    s += w[k, l] * density
                return s
            left, right = region.children
            return sum(
                w[k, i, j] * value(left, i) * value(right, j) for i in k_range for j in k_range
            )

        total += math.exp(circuit.log_heads[c, r]) * value(0, c)
    return math.log(total) - float(np.sum(np.log(circuit.feature_std)))


def class_data(seed, classes=3, per_class=20, dims=6, spread=2.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, spread, size=(classes, dims))
    x = np.vstack([centers[c] + rng.normal(0, 1, size=(per_class, dims)) for c in range(classes)])
    y = np.repeat(np.arange(1, classes + 1), per_class)
    return x, y


def single_variable_circuit(classes=1, leaves=1):
    return build_circuit(
        CircuitSpec(
            depth=1,
            sum_components=1,
            leaf_distributions=leaves,
            repetitions=1,
            classes=classes,
            num_variables=1,
        )
    )


class TestRegionGraph:
    def test_depth_four_partition(self):
        graph = build_region_graph(29, 4, 10, seed=7)
        assert len(graph.repetitions) == 10
        for r in range(10):
            bottom = graph.at_depth(r, 4)
            assert len(bottom) == 16
            scopes = [v for region in bottom for v in region.scope]
            assert sorted(scopes) == list(range(29))

    def test_two_singletons(self):
        graph = build_region_graph(2, 1, 1, seed=0)
        root = graph.repetitions[0][0]
        children = [graph.repetitions[0][i].scope for i in root.children]
        assert sorted(children) == [(0,), (1,)]

    def test_children_partition_parent(self):
        for seed in range(10):
            graph = build_region_graph(13, 3, 3, seed)
            for regions in graph.repetitions:
                for region in regions:
                    if region.is_leaf:
                        continue
                    a, b = (regions[i].scope for i in region.children)
                    assert not set(a) & set(b)
                    assert sorted(a + b) == list(region.scope)
                    assert len(a) - len(b) in (0, 1)
                for d in range(4):
                    assert len(graph.at_depth(0, d)) <= 2**d

    def test_early_stop_accounting(self):
        graph = build_region_graph(5, 4, 4, seed=3)
        for r, regions in enumerate(graph.repetitions):
            assert len(regions) - 1 + graph.missing[r] == 2 ** 5 - 2

    def test_seeded(self):
        a = build_region_graph(20, 3, 2, seed=11)
        b = build_region_graph(20, 3, 2, seed=11)
        assert a.to_dict() == b.to_dict()

    def test_bad_input(self):
        with raises(CircuitError):
            build_region_graph(0, 2, 1, seed=0)


class TestSpec:
    def test_positive(self):
        with raises(CircuitError):
            CircuitSpec(0, 2, 10, 10, 21, 116)


class TestForward:
    @classmethod
    def setup_class(cls):
        cls.rng = np.random.default_rng(0)
        cls.tiny = build_circuit(CircuitSpec(2, 2, 2, 1, 2, 4, structure_seed=1))
        cls.small = build_circuit(CircuitSpec(2, 3, 3, 2, 3, 6, structure_seed=2))
        for circuit in (cls.tiny, cls.small):
            n = circuit.spec.num_variables
            circuit.feature_mean = cls.rng.normal(size=n)
            circuit.feature_std = cls.rng.uniform(0.5, 2.0, size=n)

    def test_standard_normal_leaf(self):
        circuit = single_variable_circuit()
        circuit.means[0][0] = np.array([[0.0]])
        circuit.variances[0][0] = np.array([[1.0]])
        assert circuit.forward_class_loglik([0.0])[0] == approx(-0.5 * math.log(2 * math.pi))

    def test_scaled_leaf(self):
        circuit = single_variable_circuit()
        circuit.feature_mean = np.array([3.0])
        circuit.feature_std = np.array([2.0])
        circuit.means[0][0] = np.array([[0.5]])
        circuit.variances[0][0] = np.array([[0.25]])
        # raw mean 4, raw std 1
        assert circuit.forward_class_loglik([4.0])[0] == approx(-0.5 * math.log(2 * math.pi))

    def test_brute_force_tiny(self):
        for _ in range(5):
            x = self.rng.normal(size=4)
            ours = self.tiny.forward_class_loglik(x)
            for c in range(2):
                assert ours[c] == approx(brute_force_loglik(self.tiny, x, c), abs=1e-9)

    def test_brute_force_small(self):
        for _ in range(3):
            x = self.rng.normal(size=6)
            ours = self.small.forward_class_loglik(x)
            for c in range(3):
                assert ours[c] == approx(brute_force_loglik(self.small, x, c), abs=1e-9)

    def test_batch_matches_single(self):
        x = self.rng.normal(size=(4, 6))
        batch = self.small.forward_class_loglik(x)
        assert batch.shape == (4, 3)
        assert np.allclose(batch[2], self.small.forward_class_loglik(x[2]))

    def test_normalized_density(self):
        circuit = build_circuit(CircuitSpec(1, 2, 2, 2, 1, 2, structure_seed=4))
        for r in range(2):
            for node in circuit.means[r]:
                circuit.variances[r][node] = self.rng.uniform(0.5, 1.5, size=(2, 1))
        step = 0.05
        axis = np.arange(-9.0, 9.0 + step / 2, step)
        gx, gy = np.meshgrid(axis, axis)
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        density = np.exp(circuit.forward_class_loglik(grid)[:, 0])
        assert np.sum(density) * step**2 == approx(1.0, abs=1e-2)

    def test_contractions(self):
        spec = CircuitSpec(4, 2, 3, 3, 2, 5, structure_seed=5)
        circuit = build_circuit(spec)
        circuit.forward_class_loglik(np.zeros(5))
        assert circuit.last_contractions == circuit.einsum_contractions()
        for r, count in enumerate(circuit.einsum_contractions()):
            assert count == 2 ** (spec.depth + 1) - 2 - circuit.graph.missing[r]

    def test_full_tree_contractions(self):
        circuit = build_circuit(CircuitSpec(6, 2, 10, 10, 21, 116))
        assert circuit.einsum_contractions() == [126] * 10

    def test_dimension_mismatch(self):
        with raises(CircuitError):
            self.tiny.forward_class_loglik(np.zeros(5))

    def test_non_finite(self):
        with raises(CircuitError):
            self.tiny.forward_class_loglik([0.0, np.nan, 0.0, 0.0])


class TestPosterior:
    def test_uniform(self):
        post = bayes_posterior(np.full(4, -3.2))
        assert np.allclose(post, 0.25)

    def test_dominant(self):
        post = bayes_posterior(np.array([0.0, 50.0, 0.0]))
        assert post[1] == approx(1.0)
        assert post[0] < 1e-20 and post[2] < 1e-20

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        post = bayes_posterior(rng.normal(0, 30, size=(50, 21)))
        assert np.allclose(post.sum(axis=1), 1.0, atol=1e-12)

    def test_hand_built(self):
        circuit = single_variable_circuit(classes=2, leaves=2)
        circuit.means[0][0] = np.array([[-1.0], [2.0]])
        circuit.variances[0][0] = np.array([[1.0], [0.5]])
        circuit.log_weights[0][0] = np.log(np.array([[0.9, 0.1], [0.2, 0.8]]))
        circuit.log_heads = np.zeros((2, 1))

        def normal(x, mu, var):
            return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)

        x = 0.7
        p1 = 0.9 * normal(x, -1, 1) + 0.1 * normal(x, 2, 0.5)
        p2 = 0.2 * normal(x, -1, 1) + 0.8 * normal(x, 2, 0.5)
        assert circuit.posterior([x]) == approx([p1 / (p1 + p2), p2 / (p1 + p2)])
        priors = np.array([0.3, 0.7])
        expected = np.array([0.3 * p1, 0.7 * p2]) / (0.3 * p1 + 0.7 * p2)
        assert circuit.posterior([x], priors) == approx(expected)

    def test_zero_likelihood(self):
        with raises(CircuitError):
            bayes_posterior(np.full(3, -np.inf))

    def test_bad_priors(self):
        with raises(CircuitError):
            bayes_posterior(np.zeros(3), [0.5, 0.6, 0.1])

    def test_shift_invariance(self):
        ll = np.random.default_rng(2).normal(size=21)
        assert np.argmax(bayes_posterior(ll)) == np.argmax(bayes_posterior(ll + 123.4))


class TestPredict:
    def test_tie_goes_to_lower_class(self):
        circuit = single_variable_circuit(classes=7, leaves=2)
        circuit.means[0][0] = np.array([[0.0], [10.0]])
        circuit.variances[0][0] = np.ones((2, 1))
        w = np.tile([0.1, 0.9], (7, 1))
        w[2] = w[6] = [0.9, 0.1]
        circuit.log_weights[0][0] = np.log(w)
        circuit.log_heads = np.zeros((7, 1))
        assert circuit.predict([0.0]) == 3

    def test_matches_loglik_argmax(self):
        x, y = class_data(3)
        circuit = build_circuit(CircuitSpec(2, 2, 3, 2, 3, 6, structure_seed=3))
        circuit.em_fit(x, y, epochs=3)
        assert np.array_equal(
            circuit.predict(x), np.argmax(circuit.forward_class_loglik(x), axis=1) + 1
        )


class TestEM:
    def test_single_gaussian(self):
        circuit = single_variable_circuit()
        circuit.em_fit(np.array([[1.0], [2.0], [3.0]]), [1, 1, 1], epochs=1)
        means, variances = circuit.leaf_moments()[0][0]
        assert means[0, 0] == approx(2.0)
        assert variances[0, 0] == approx(2.0 / 3.0)

    def test_separable_classes(self):
        rng = np.random.default_rng(5)
        x = np.vstack([rng.normal(-3, 0.5, size=(30, 2)), rng.normal(3, 0.5, size=(30, 2))])
        y = np.repeat([1, 2], 30)
        circuit = build_circuit(CircuitSpec(1, 2, 2, 2, 2, 2, structure_seed=5))
        circuit.em_fit(x, y, epochs=20)
        assert np.all(circuit.predict(x) == y)

    def test_monotone_loglik(self):
        for seed in range(5):
            x, y = class_data(seed)
            circuit = build_circuit(CircuitSpec(2, 2, 3, 2, 3, 6, structure_seed=seed))
            history = circuit.em_fit(x, y, epochs=50)
            assert len(history) == 50
            for before, after in zip(history, history[1:]):
                assert after >= before - 1e-6 * abs(before)

    def test_weights_normalized(self):
        x, y = class_data(8)
        circuit = build_circuit(CircuitSpec(2, 2, 3, 2, 3, 6, structure_seed=8))
        circuit.em_fit(x, y, epochs=5)
        for weights in circuit.log_weights:
            for node, log_w in weights.items():
                axes = tuple(range(1, log_w.ndim))
                assert np.allclose(np.exp(log_w).sum(axis=axes), 1.0, atol=1e-9)
        assert np.allclose(np.exp(circuit.log_heads).sum(axis=1), 1.0, atol=1e-9)
        for variances in circuit.variances:
            for v in variances.values():
                assert np.all(v >= 1e-3)

    def test_empty_class(self):
        x, y = class_data(0, classes=2)
        circuit = build_circuit(CircuitSpec(2, 2, 3, 1, 3, 6))
        with raises(TrainingError):
            circuit.em_fit(x, y, epochs=1)

    def test_bad_labels(self):
        x, y = class_data(0)
        circuit = build_circuit(CircuitSpec(2, 2, 3, 1, 3, 6))
        with raises(TrainingError):
            circuit.em_fit(x, y - 1, epochs=1)


class TestPersistence:
    def test_save_load(self, tmp_path):
        x, y = class_data(4)
        circuit = build_circuit(CircuitSpec(2, 2, 3, 2, 3, 6, structure_seed=4))
        circuit.em_fit(x, y, epochs=4)
        path = tmp_path / "model.json"
        circuit.save(path, metadata={"kind": "sa"})
        back = EinsumCircuit.load(path)
        assert back.graph.to_dict() == circuit.graph.to_dict()
        assert np.array_equal(back.forward_class_loglik(x), circuit.forward_class_loglik(x))
        assert back.train_loglik == circuit.train_loglik
