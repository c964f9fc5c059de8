"""Unit tests for the MLP core: forward/backprop correctness against
independent oracles, determinism, and serialization round trips."""

import json
import math

import numpy as np
import pytest

from cogwlan.errors import StructuralError, TrainingError, ValidationError
from cogwlan.mlp import (
    LayerSpec,
    NetworkWeights,
    Sample,
    TrainingConfig,
    forward,
    gradient,
    init_weights,
    mean_squared_error,
    neuron_output,
    train_backprop,
    weights_equal,
    zero_weights,
)


# --- independent oracles (pure python, no shared code with cogwlan.mlp) ---

def oracle_sigmoid(y):
    return 1.0 / (1.0 + math.exp(-y))


def oracle_neuron(inputs, weights, bias):
    total = bias
    for x, w in zip(inputs, weights):
        total += x * w
    return oracle_sigmoid(total)


def oracle_forward(layer_weights, layer_biases, inputs):
    acts = list(inputs)
    for rows, biases in zip(layer_weights, layer_biases):
        acts = [oracle_neuron(acts, row, b) for row, b in zip(rows, biases)]
    return acts


XOR = [
    Sample(np.array([0.0, 0.0]), np.array([0.0])),
    Sample(np.array([0.0, 1.0]), np.array([1.0])),
    Sample(np.array([1.0, 0.0]), np.array([1.0])),
    Sample(np.array([1.0, 1.0]), np.array([0.0])),
]


class TestLayerSpec:
    def test_rejects_single_layer(self):
        with pytest.raises(StructuralError):
            LayerSpec((3,))

    def test_rejects_zero_size(self):
        with pytest.raises(StructuralError):
            LayerSpec((3, 0, 1))

    def test_accessors(self):
        spec = LayerSpec((4, 7, 2))
        assert spec.input_size == 4
        assert spec.output_size == 2


class TestInitWeights:
    def test_zero_scale_forces_zeros(self):
        cfg = TrainingConfig(init_scale=0.0)
        net = init_weights(LayerSpec((2, 1)), cfg)
        assert all(not w.any() for w in net.weights)
        assert all(not b.any() for b in net.biases)

    def test_same_seed_identical(self):
        cfg = TrainingConfig(seed=123)
        a = init_weights(LayerSpec((3, 5, 2)), cfg)
        b = init_weights(LayerSpec((3, 5, 2)), cfg)
        assert weights_equal(a, b)

    def test_values_within_scale(self):
        cfg = TrainingConfig(seed=42, init_scale=0.5)
        net = init_weights(LayerSpec((2, 3, 1)), cfg)
        for w in net.weights:
            assert (np.abs(w) <= 0.5).all()
        for b in net.biases:
            assert not b.any()


class TestNeuronOutput:
    def test_zero_input_is_half(self):
        assert neuron_output([0.0, 0.0], [5.0, -3.0], 0.0) == 0.5

    def test_hand_computed_value(self):
        # y = 1*0.3 + 1*(-0.2) = 0.1
        assert neuron_output([1.0, 1.0], [0.3, -0.2], 0.0) == pytest.approx(0.52498, abs=1e-5)

    def test_saturation(self):
        assert neuron_output([1.0], [100.0], 0.0) > 0.9999

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            x = rng.uniform(-3, 3, n)
            w = rng.uniform(-2, 2, n)
            b = float(rng.uniform(-1, 1))
            assert neuron_output(x, w, b) == pytest.approx(
                oracle_neuron(x.tolist(), w.tolist(), b), abs=1e-12
            )

    def test_length_mismatch(self):
        with pytest.raises(StructuralError):
            neuron_output([1.0, 2.0], [1.0], 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            neuron_output([float("nan")], [1.0], 0.0)

    def test_output_strictly_inside_unit_interval(self):
        assert 0.0 < neuron_output([1.0], [1e6], 0.0) < 1.0
        assert 0.0 < neuron_output([1.0], [-1e6], 0.0) < 1.0


class TestForward:
    def test_zero_net_outputs_half(self):
        net = zero_weights(LayerSpec((4, 3, 2)))
        out = forward(net, [0.3, -1.2, 0.0, 5.0])
        assert np.array_equal(out, np.full(2, 0.5))

    def test_single_layer_equals_neuron(self):
        net = NetworkWeights([np.array([[0.7, -0.4]])], [np.array([0.2])])
        out = forward(net, [0.5, 1.5])
        assert out[0] == pytest.approx(neuron_output([0.5, 1.5], [0.7, -0.4], 0.2), abs=1e-15)

    def test_matches_layerwise_oracle(self):
        w1 = [[0.1, -0.2], [0.3, 0.4]]
        b1 = [0.05, -0.05]
        w2 = [[0.2, -0.1]]
        b2 = [0.0]
        net = NetworkWeights(
            [np.array(w1), np.array(w2)], [np.array(b1), np.array(b2)]
        )
        got = forward(net, [1.0, 0.0])
        want = oracle_forward([w1, w2], [b1, b2], [1.0, 0.0])
        assert got[0] == pytest.approx(want[0], abs=1e-12)

    def test_dimension_mismatch(self):
        net = zero_weights(LayerSpec((4, 2)))
        with pytest.raises(StructuralError):
            forward(net, [1.0, 2.0])

    def test_outputs_in_open_interval(self):
        rng = np.random.default_rng(3)
        for scale in (0.5, 10.0, 1e4):
            cfg = TrainingConfig(seed=8, init_scale=scale)
            net = init_weights(LayerSpec((5, 8, 3)), cfg)
            out = forward(net, rng.uniform(-2, 2, 5))
            assert ((out > 0.0) & (out < 1.0)).all()


class TestGradient:
    def test_zero_residual_zero_gradient(self):
        cfg = TrainingConfig(seed=5)
        net = init_weights(LayerSpec((3, 4, 2)), cfg)
        x = np.array([0.2, -0.4, 0.9])
        sample = Sample(x, forward(net, x))
        gw, gb = gradient(net, sample)
        assert all(not g.any() for g in gw)
        assert all(not g.any() for g in gb)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-5
        for case in range(10):
            net = init_weights(LayerSpec((3, 4, 2)), TrainingConfig(seed=case))
            for b in net.biases:
                b[:] = rng.uniform(-0.3, 0.3, b.shape)
            sample = Sample(rng.uniform(-1, 1, 3), rng.uniform(0.1, 0.9, 2))
            gw, gb = gradient(net, sample)

            def loss():
                diff = forward(net, sample.input) - sample.target
                return 0.5 * float(diff @ diff)

            for arrs, grads in ((net.weights, gw), (net.biases, gb)):
                for arr, g in zip(arrs, grads):
                    flat, gflat = arr.reshape(-1), g.reshape(-1)
                    for i in range(flat.size):
                        orig = flat[i]
                        flat[i] = orig + h
                        lp = loss()
                        flat[i] = orig - h
                        lm = loss()
                        flat[i] = orig
                        fd = (lp - lm) / (2 * h)
                        if abs(gflat[i] - fd) > 1e-10:
                            assert abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd)) <= 1e-6

    def test_per_sample_gradient_is_pure(self):
        net = init_weights(LayerSpec((2, 3, 1)), TrainingConfig(seed=1))
        sample = Sample(np.array([0.5, -0.5]), np.array([0.7]))
        gw1, gb1 = gradient(net, sample)
        gw2, gb2 = gradient(net, sample)
        assert all(np.array_equal(a, b) for a, b in zip(gw1, gw2))
        assert all(np.array_equal(a, b) for a, b in zip(gb1, gb2))

    def test_dimension_mismatch(self):
        net = zero_weights(LayerSpec((2, 1)))
        with pytest.raises(StructuralError):
            gradient(net, Sample(np.array([1.0, 2.0, 3.0]), np.array([0.5])))


class TestTrainBackprop:
    def test_xor_converges_with_default_hyperparameters(self):
        cfg = TrainingConfig(learning_rate=0.2, iterations=10000, seed=0)
        net = init_weights(LayerSpec((2, 2, 1)), cfg)
        trained, history = train_backprop(net, XOR, cfg)
        assert history[-1] < 0.05
        assert history[-1] <= history[0]

    def test_single_step_reduces_single_sample_error(self):
        cfg = TrainingConfig(learning_rate=0.1, iterations=1, seed=2)
        net = init_weights(LayerSpec((2, 3, 1)), cfg)
        sample = Sample(np.array([0.4, 0.8]), np.array([0.9]))
        before = mean_squared_error(net, [sample])
        trained, history = train_backprop(net, [sample], cfg)
        assert history[-1] <= before

    def test_zero_gradient_at_optimum(self):
        net = zero_weights(LayerSpec((3, 2)))
        data = [Sample(np.array([0.1, 0.2, 0.3]), np.array([0.5, 0.5]))]
        cfg = TrainingConfig(learning_rate=0.5, iterations=3, seed=0, init_scale=0.0)
        trained, history = train_backprop(net, data, cfg)
        assert history[0] == 0.0
        assert all(not w.any() for w in trained.weights)

    def test_empty_data_rejected(self):
        net = zero_weights(LayerSpec((2, 1)))
        with pytest.raises(ValidationError):
            train_backprop(net, [], TrainingConfig())

    def test_target_out_of_range_rejected(self):
        net = zero_weights(LayerSpec((2, 1)))
        with pytest.raises(ValidationError):
            train_backprop(net, [Sample(np.array([0.0, 0.0]), np.array([1.5]))], TrainingConfig())

    def test_deterministic_history_and_weights(self):
        cfg = TrainingConfig(learning_rate=0.3, iterations=50, seed=9)
        data = XOR
        runs = []
        for _ in range(2):
            net = init_weights(LayerSpec((2, 4, 1)), cfg)
            runs.append(train_backprop(net, data, cfg))
        assert weights_equal(runs[0][0], runs[1][0])
        assert runs[0][1] == runs[1][1]

    def test_divergence_reports_pass_index(self):
        net = zero_weights(LayerSpec((1, 1)))
        bad = [Sample(np.array([float("nan")]), np.array([0.5]))]
        with pytest.raises(TrainingError, match="pass 0"):
            train_backprop(net, bad, TrainingConfig(iterations=3))

    def test_training_leaves_input_net_untouched(self):
        cfg = TrainingConfig(iterations=5, seed=4)
        net = init_weights(LayerSpec((2, 2, 1)), cfg)
        snapshot = net.copy()
        train_backprop(net, XOR, cfg)
        assert weights_equal(net, snapshot)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        cfg = TrainingConfig(seed=31, iterations=20)
        net = init_weights(LayerSpec((4, 6, 2)), cfg)
        trained, _ = train_backprop(
            net, [Sample(np.arange(4) / 4.0, np.array([0.3, 0.8]))], cfg
        )
        doc = trained.to_document()
        restored = NetworkWeights.from_document(doc)
        assert weights_equal(trained, restored)
        assert restored.to_document() == doc

    def test_version_enforced(self):
        doc = json.dumps({"format": "cogwlan-net/99", "sizes": [1, 1], "layers": []})
        with pytest.raises(StructuralError):
            NetworkWeights.from_document(doc)

    def test_unparsable_document(self):
        with pytest.raises(StructuralError):
            NetworkWeights.from_document("{not json")


class TestTrainingConfig:
    @pytest.mark.parametrize("lr", [0.0, -0.1, 1.5])
    def test_learning_rate_range(self, lr):
        with pytest.raises(ValidationError):
            TrainingConfig(learning_rate=lr)

    def test_iterations_positive(self):
        with pytest.raises(ValidationError):
            TrainingConfig(iterations=0)
