"""Tests for deviation scoring, the theta decision rule and detector training."""

import numpy as np
import pytest

from cogwlan.behavior import BehaviorPattern
from cogwlan.errors import StructuralError, ValidationError
from cogwlan.mlp import LayerSpec, NetworkWeights, TrainingConfig, forward, weights_equal, zero_weights
from cogwlan.policy import (
    Decision,
    DeviationReport,
    PolicyConfig,
    PolicyRuntime,
    bootstrap_score,
    conservative_om,
    deviation_score,
    evaluate,
    train_policy_net,
)


def pattern(values, t=0.0):
    return BehaviorPattern(values=np.asarray(values, dtype=float), produced_at=t)


def clustered_history(n, center=0.55, std=0.02, dim=8, seed=0, t0=0.0):
    rng = np.random.default_rng(seed)
    return [
        pattern(np.clip(rng.normal(center, std, dim), 0.01, 0.99), t=t0 + i)
        for i in range(n)
    ]


SMALL_CFG = PolicyConfig(
    theta=0.1,
    mfnn_spec=LayerSpec((8, 24, 12, 8)),
    training=TrainingConfig(learning_rate=0.2, iterations=50, seed=1),
    min_history=5,
)


class TestPolicyConfig:
    def test_theta_range(self):
        for bad in (0.0, 1.0, -0.5):
            with pytest.raises(ValidationError):
                PolicyConfig(theta=bad)

    def test_requires_two_hidden_layers(self):
        with pytest.raises(ValidationError):
            PolicyConfig(mfnn_spec=LayerSpec((8, 24, 8)))

    def test_requires_matching_io_sizes(self):
        with pytest.raises(ValidationError):
            PolicyConfig(mfnn_spec=LayerSpec((8, 24, 12, 4)))

    def test_full_scale_architecture_accepted_in_config(self):
        cfg = PolicyConfig(mfnn_spec=LayerSpec((8, 26000, 8000, 8)))
        assert cfg.mfnn_spec.sizes == (8, 26000, 8000, 8)


class TestTrainPolicyNet:
    def test_reconstructs_repeated_pattern(self):
        base = pattern([0.3, 0.7, 0.4, 0.6, 0.5, 0.2, 0.8, 0.55])
        history = [pattern(base.values, t=float(i)) for i in range(10)]
        cfg = PolicyConfig(
            theta=0.1,
            training=TrainingConfig(learning_rate=0.2, iterations=10000, seed=0),
            min_history=5,
        )
        net = train_policy_net(history, cfg)
        err = float(np.mean(np.abs(base.values - forward(net, base.values))))
        assert err < 0.01

    def test_below_min_history_signals_bootstrap(self):
        assert train_policy_net(clustered_history(3), SMALL_CFG) is None

    def test_deterministic(self):
        history = clustered_history(8)
        a = train_policy_net(history, SMALL_CFG)
        b = train_policy_net(history, SMALL_CFG)
        assert weights_equal(a, b)


class TestDeviationScore:
    def test_exact_reproduction_scores_zero(self):
        # an all-zero detector maps anything to (0.5, ..., 0.5)
        net = zero_weights(LayerSpec((8, 24, 12, 8)))
        assert deviation_score(net, pattern([0.5] * 8)) == 0.0

    def test_hand_computed_toy_case(self):
        net = NetworkWeights(
            [np.zeros((2, 2)), np.zeros((1, 2)), np.zeros((2, 1))],
            [np.zeros(2), np.zeros(1), np.zeros(2)],
        )
        bh = pattern([0.3, 0.8])
        # all-zero net reconstructs (0.5, 0.5); MAE = (0.2 + 0.3)/2 = 0.25
        assert deviation_score(net, bh) == pytest.approx(0.25, abs=1e-12)

    def test_dimension_mismatch(self):
        net = zero_weights(LayerSpec((4, 2, 2, 4)))
        with pytest.raises(StructuralError):
            deviation_score(net, pattern([0.5] * 8))

    def test_score_bounded_below_one(self):
        net = zero_weights(LayerSpec((2, 2, 2, 2)))
        score = deviation_score(net, pattern([0.999, 0.001]))
        assert 0.0 <= score < 1.0


class TestEvaluate:
    def test_empty_history_is_normal_bootstrap(self):
        report = evaluate(pattern([0.9] * 8), [], SMALL_CFG, node_id="n")
        assert report.score == 0.0
        assert report.decision is Decision.NORMAL
        assert report.scored_by == "bootstrap"

    def test_score_equal_theta_is_deviated(self):
        history = [pattern([0.5] * 8, t=0.0)]
        cfg = PolicyConfig(theta=0.25, training=SMALL_CFG.training, min_history=5)
        bh = pattern([0.75] * 8, t=1.0)  # bootstrap score exactly 0.25
        report = evaluate(bh, history, cfg)
        assert report.score == pytest.approx(cfg.theta, abs=1e-15)
        assert report.decision is Decision.DEVIATED

    def test_bootstrap_uses_distance_to_mean(self):
        history = [pattern([0.4] * 8, t=0.0), pattern([0.6] * 8, t=1.0)]
        bh = pattern([0.8] * 8, t=2.0)
        assert bootstrap_score(bh, history) == pytest.approx(0.3, abs=1e-12)
        report = evaluate(bh, history, SMALL_CFG)
        assert report.scored_by == "bootstrap"
        assert report.decision is Decision.DEVIATED

    def test_neural_path_flags_large_shift(self):
        history = clustered_history(50, center=0.5, std=0.02, seed=4)
        shifted = pattern(np.clip(history[-1].values + 0.4, 0.01, 0.99), t=99.0)
        report = evaluate(shifted, history, SMALL_CFG, node_id="n")
        assert report.scored_by == "neural"
        assert report.decision is Decision.DEVIATED

    def test_neural_path_accepts_in_distribution(self):
        history = clustered_history(50, center=0.5, std=0.02, seed=4)
        fresh = clustered_history(1, center=0.5, std=0.02, seed=99)[0]
        report = evaluate(fresh, history, SMALL_CFG, node_id="n")
        assert report.scored_by == "neural"
        assert report.decision is Decision.NORMAL

    def test_decision_monotone_in_theta(self):
        history = [pattern([0.5] * 8, t=0.0)]
        bh = pattern([0.7] * 8, t=1.0)  # bootstrap score 0.2
        low = PolicyConfig(theta=0.1, training=SMALL_CFG.training)
        high = PolicyConfig(theta=0.9, training=SMALL_CFG.training)
        assert evaluate(bh, history, low).decision is Decision.DEVIATED
        assert evaluate(bh, history, high).decision is Decision.NORMAL


class TestDeviationReport:
    def test_rejects_inconsistent_decision(self):
        with pytest.raises(ValidationError):
            DeviationReport(
                node_id="n", score=0.5, theta_used=0.1,
                decision=Decision.NORMAL, history_len=3, scored_by="neural",
            )

    def test_round_trip(self):
        report = DeviationReport(
            node_id="n", score=0.05, theta_used=0.1,
            decision=Decision.NORMAL, history_len=7, scored_by="neural",
        )
        assert DeviationReport.from_obj(report.to_obj()) == report


class TestConservativeOm:
    def test_maps_everything_to_neutral_pattern(self):
        om = conservative_om(LayerSpec((20, 12, 8)))
        out = forward(om.generator_net, np.linspace(0, 1, 20))
        assert np.array_equal(out, np.full(8, 0.5))

    def test_no_randomness(self):
        a = conservative_om(LayerSpec((20, 12, 8)))
        b = conservative_om(LayerSpec((20, 12, 8)))
        assert weights_equal(a.generator_net, b.generator_net)

    def test_issuer_recorded(self):
        om = conservative_om(LayerSpec((20, 12, 8)), issuer="admin-7")
        assert om.issuer == "admin-7"
        assert conservative_om(LayerSpec((20, 12, 8))).issuer == "auto-policy"


class TestAutoAssociatorSoundness:
    def test_held_out_vs_shifted_reconstruction(self):
        # stationary history: held-out same-distribution patterns reconstruct
        # better than 3-sigma-shifted ones, across 20 random trials
        wins = 0
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            center = rng.uniform(0.35, 0.65, 8)
            std = 0.02
            train = clustered_history(30, seed=200 + trial)
            train = [
                pattern(np.clip(rng.normal(center, std), 0.01, 0.99), t=float(i))
                for i in range(30)
            ]
            net = train_policy_net(train, SMALL_CFG)
            held = np.clip(rng.normal(center, std, (10, 8)), 0.01, 0.99)
            shifted = np.clip(held + 3 * std, 0.01, 0.99)
            err_h = np.mean([deviation_score(net, pattern(v, t=50.0)) for v in held])
            err_s = np.mean([deviation_score(net, pattern(v, t=50.0)) for v in shifted])
            if err_h < err_s:
                wins += 1
        assert wins == 20


class TestPolicyRuntime:
    def test_retrains_only_after_growth(self):
        runtime = PolicyRuntime()
        history = clustered_history(5)
        bh = history[-1]
        runtime.evaluate_for_node("n", bh, history, SMALL_CFG)
        assert runtime.timings[-1][1] is True
        history7 = clustered_history(7)
        runtime.evaluate_for_node("n", bh, history7, SMALL_CFG)
        assert runtime.timings[-1][1] is False
        history10 = clustered_history(10)
        runtime.evaluate_for_node("n", bh, history10, SMALL_CFG)
        assert runtime.timings[-1][1] is True

    def test_bootstrap_does_not_cache(self):
        runtime = PolicyRuntime()
        history = clustered_history(2)
        report = runtime.evaluate_for_node("n", history[-1], history, SMALL_CFG)
        assert report.scored_by == "bootstrap"
        assert runtime.timings[-1][1] is False

    def test_drop_forces_retrain(self):
        runtime = PolicyRuntime()
        history = clustered_history(5)
        runtime.evaluate_for_node("n", history[-1], history, SMALL_CFG)
        runtime.drop("n")
        runtime.evaluate_for_node("n", history[-1], history, SMALL_CFG)
        assert runtime.timings[-1][1] is True
