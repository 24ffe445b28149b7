import math

import numpy as np
import pytest

from collabqoe.data import GroupDataset, split_train_test
from collabqoe.errors import ConfigurationError, DataError, DivergenceError, ShapeError
from collabqoe.network import (
    AdamMoments,
    ModelConfig,
    NetworkState,
    adam_step,
    evaluate_loss,
    forward,
    init_network,
    predict_proba,
    sgd_fit,
)
from gradcheck import max_relative_error, random_problem


def _hand_network():
    # 2 inputs, 2 hidden units; BN gamma (1, 2), beta (0, 0.5), running mean 0, var 1
    return NetworkState(
        layer_shapes=((2, 2), (2, 2)),
        weights=np.array([1.0, -1.0, 0.5, 2.0, 1.0, 0.0, -1.0, 1.0]),
        biases=np.array([0.1, -0.2, 0.0, 0.3]),
        batchnorm_params=np.array([1.0, 2.0, 0.0, 0.5, 0.0, 0.0, 1.0, 1.0]),
    )


class TestConfig:
    def test_defaults_match_reference_network(self):
        c = ModelConfig()
        assert (c.hidden_neurons, c.max_epochs, c.learning_rate) == (16, 400, 0.001)
        assert (c.dropout_rate, c.l2_factor, c.early_stop_patience) == (0.30, 0.02, 10)
        assert c.label == "NN(16, 400)"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"hidden_neurons": 0},
            {"max_epochs": 0},
            {"learning_rate": -1.0},
            {"dropout_rate": 1.0},
            {"l2_factor": -0.1},
            {"early_stop_patience": 0},
            {"batch_size": 0},
            {"validation_fraction": 0.0},
        ],
    )
    def test_invalid_field_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            ModelConfig(**kwargs)


class TestInit:
    def test_shapes(self):
        net = init_network(ModelConfig(hidden_neurons=16), input_dim=3, seed=7)
        assert net.layer_shapes == ((3, 16), (16, 2))
        assert net.weights.size == 48 + 32
        assert net.biases.size == 18

    def test_deterministic(self):
        a = init_network(ModelConfig(), 3, 7)
        b = init_network(ModelConfig(), 3, 7)
        assert a.equals(b)

    def test_seeds_differ(self):
        a = init_network(ModelConfig(), 3, 1)
        b = init_network(ModelConfig(), 3, 2)
        assert not np.array_equal(a.weights, b.weights)

    def test_glorot_bounds(self):
        net = init_network(ModelConfig(hidden_neurons=32), 3, 0)
        p = net.unpack()
        assert np.abs(p["W1"]).max() <= math.sqrt(6 / 35)
        assert np.abs(p["W2"]).max() <= math.sqrt(6 / 34)

    def test_bad_input_dim(self):
        with pytest.raises(ConfigurationError):
            init_network(ModelConfig(), 0, 0)


class TestForward:
    def test_rows_sum_to_one(self):
        net = init_network(ModelConfig(), 3, 0)
        x = np.random.default_rng(0).normal(size=(50, 3)) * 10
        for mode in ("eval", "train"):
            np.testing.assert_allclose(forward(net, x, mode=mode, seed=1).sum(axis=1), 1.0, atol=1e-9)

    def test_zero_network_is_uniform(self):
        net = init_network(ModelConfig(hidden_neurons=4), 3, 0)
        zero = NetworkState(net.layer_shapes, np.zeros_like(net.weights), np.zeros_like(net.biases), net.batchnorm_params)
        out = forward(zero, np.random.default_rng(1).normal(size=(7, 3)))
        np.testing.assert_array_equal(out, np.full((7, 2), 0.5))

    def test_hand_computed(self):
        x = np.array([[1.0, 2.0], [-1.0, 0.5]])
        out = predict_proba(_hand_network(), x)
        s = 1.0 / math.sqrt(1.0 + 1e-3)
        expected = []
        for x1, x2 in x:
            h1 = max(1.0 * x1 + 0.5 * x2 + 0.1, 0.0)
            h2 = max(-1.0 * x1 + 2.0 * x2 - 0.2, 0.0)
            b1 = 1.0 * h1 * s + 0.0
            b2 = 2.0 * h2 * s + 0.5
            z = (1.0 * b1 - 1.0 * b2 + 0.0, 0.0 * b1 + 1.0 * b2 + 0.3)
            e = [math.exp(v) for v in z]
            expected.append([e[0] / sum(e), e[1] / sum(e)])
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-14)

    def test_dimension_mismatch(self):
        net = init_network(ModelConfig(), 3, 0)
        with pytest.raises(ShapeError):
            forward(net, np.zeros((4, 2)))

    def test_train_mode_dropout_is_seeded(self):
        net = init_network(ModelConfig(), 3, 0)
        x = np.random.default_rng(2).normal(size=(20, 3))
        a = forward(net, x, mode="train", seed=5, dropout_rate=0.3)
        b = forward(net, x, mode="train", seed=5, dropout_rate=0.3)
        c = forward(net, x, mode="train", seed=6, dropout_rate=0.3)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestGradients:
    @pytest.mark.parametrize("seed", range(8))
    def test_finite_differences(self, seed):
        net, x, y = random_problem(seed)
        assert max_relative_error(net, x, y) < 1e-4

    def test_largest_network(self):
        net, x, y = random_problem(100, hidden=32, d=3)
        assert max_relative_error(net, x, y, l2=0.0) < 1e-4


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = np.array([1.0, -2.0, 3.0])
        out, m = adam_step(p, np.zeros(3), AdamMoments.zeros(3), 1, 0.01)
        np.testing.assert_array_equal(out, p)

    def test_first_step_closed_form(self):
        g = np.array([0.5, -3.0, 1e-3, -2e-6])
        out, _ = adam_step(np.zeros(4), g, AdamMoments.zeros(4), 1, 0.001)
        # bias-corrected moments are g and g^2 after one step
        expected = -0.001 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(out, expected, rtol=1e-12)
        np.testing.assert_array_equal(np.sign(out), -np.sign(g))

    def test_constant_gradient_step_approaches_lr(self):
        lr, g = 0.01, 0.7
        # scalar recurrence, run independently of adam_step
        m = v = 0.0
        for t in range(1, 2001):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            step = lr * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
        p = np.zeros(1)
        moments = AdamMoments.zeros(1)
        for t in range(1, 2001):
            new, moments = adam_step(p, np.array([g]), moments, t, lr)
            last, p = p[0] - new[0], new
        assert last == pytest.approx(step, rel=1e-12)
        assert last == pytest.approx(lr, rel=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(np.zeros(3), np.zeros(2), AdamMoments.zeros(3), 1, 0.1)


class TestFit:
    def test_learns_separable_signal(self, small_split_group):
        from collabqoe.metrics import roc_auc_exact

        net = init_network(ModelConfig(), 3, 0)
        trained, report = sgd_fit(net, small_split_group, ModelConfig(), seed=0)
        g = small_split_group
        assert roc_auc_exact(predict_proba(trained, g.x_test)[:, 1], g.y_test) > 0.8
        assert report.epochs_run == len(report.train_loss_history) == len(report.validation_loss_history)
        assert trained.epoch_counter == report.epochs_run

    def test_deterministic(self, small_split_group):
        net = init_network(ModelConfig(), 3, 0)
        a, _ = sgd_fit(net, small_split_group, ModelConfig(), seed=4)
        b, _ = sgd_fit(net, small_split_group, ModelConfig(), seed=4)
        assert a.equals(b)

    def test_zero_learning_rate(self, small_split_group):
        cfg = ModelConfig(learning_rate=0.0, dropout_rate=0.0, batch_size=10_000, max_epochs=20)
        net = init_network(cfg, 3, 0)
        trained, report = sgd_fit(net, small_split_group, cfg, seed=0)
        np.testing.assert_array_equal(trained.trainable(), net.trainable())
        np.testing.assert_allclose(report.train_loss_history, report.train_loss_history[0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(report.validation_loss_history, report.validation_loss_history[0], rtol=0, atol=1e-12)

    def test_early_stopping_rule(self, small_split_group):
        cfg = ModelConfig(early_stop_patience=3, max_epochs=400)
        _, report = sgd_fit(init_network(cfg, 3, 0), small_split_group, cfg, seed=0)
        if report.epochs_run < cfg.max_epochs:
            assert report.epochs_run - report.best_epoch == cfg.early_stop_patience
            best = min(report.validation_loss_history)
            assert report.validation_loss_history[report.best_epoch - 1] == best

    def test_empty_training_set(self):
        g = GroupDataset(0, np.zeros((6, 3)), np.zeros(6, dtype=int), np.empty(0, int), np.arange(6))
        with pytest.raises(DataError):
            sgd_fit(init_network(ModelConfig(), 3, 0), g, ModelConfig(), 0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_epoch(self, small_split_group):
        cfg = ModelConfig(learning_rate=1e300, l2_factor=1e300)
        with pytest.raises(DivergenceError) as info:
            sgd_fit(init_network(cfg, 3, 0), small_split_group, cfg, 0)
        assert info.value.epoch >= 1

    def test_evaluate_loss_includes_penalty(self, small_split_group):
        net = init_network(ModelConfig(), 3, 0)
        g = small_split_group
        p = net.unpack()
        diff = evaluate_loss(net, g.x_train, g.y_train, 0.5) - evaluate_loss(net, g.x_train, g.y_train, 0.0)
        assert diff == pytest.approx(0.5 * (np.sum(p["W1"] ** 2) + np.sum(p["W2"] ** 2)), rel=1e-12)
