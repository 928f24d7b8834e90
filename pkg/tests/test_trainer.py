import os

import numpy as np
import pytest

from glifnet.core.errors import ConfigError, DivergenceError, EmptyDatasetError, InvalidParameterError
from glifnet.core.file_utils import read_csv_rows
from glifnet.models.dataset import LabeledSpikeDataset, SyntheticTaskSpec
from glifnet.models.network import SharingScheme
from glifnet.models.neuron import NeuronMode, SpikeMode
from glifnet.models.training import GradientSet, InitTable, TrainConfig
from glifnet.services import trainer
from glifnet.services.bptt import loss_and_gradients
from glifnet.services.datasets import generate_task, train_eval_split
from glifnet.services.network import load_checkpoint
from glifnet.services.neuron import resolve_params
from glifnet.services.trainer import build_network, cosine_lr, evaluate, sgd_step, train


@pytest.fixture
def tiny_dataset(rng):
    return LabeledSpikeDataset(rng.random((6, 5, 3)), np.array([0, 1, 0, 1, 1, 0]), 2)


def single_weight_grads(net, weight_grad, alpha_grad=0.0):
    grads = GradientSet.zeros_like(net)
    layer = dict(grads.layers[0])
    layer["weights"] = np.array([[weight_grad]])
    layer["raw_alpha"] = np.array([alpha_grad])
    return GradientSet((layer,))


def assert_same_arrays(a, b):
    for first, second in zip(a.arrays(), b.arrays()):
        for name, value in first.items():
            np.testing.assert_array_equal(second[name], value)


class TestSgdStep:
    def test_momentum_and_coupled_weight_decay(self, make_net):
        net = make_net([[[1.0]]], 1, v_th=0.3)
        cfg = TrainConfig(momentum=0.9, weight_decay=0.1)
        grads = single_weight_grads(net, 0.5)
        net1, state = sgd_step(net, grads, GradientSet.zeros_like(net), 0.1, cfg)
        assert net1.layers[0].weights[0, 0] == pytest.approx(0.94)
        assert state.layers[0]["weights"][0, 0] == pytest.approx(0.6)
        net2, state = sgd_step(net1, grads, state, 0.1, cfg)
        assert state.layers[0]["weights"][0, 0] == pytest.approx(0.9 * 0.6 + 0.5 + 0.1 * 0.94)
        assert net2.layers[0].weights[0, 0] == pytest.approx(0.94 - 0.1 * 1.134)

    @pytest.mark.parametrize("theta, grad, wd, expected", [
        (0.0, 1.0, 0.0, -0.1),
        (1.0, 0.0, 5e-5, 1.0 - 0.1 * 5e-5),
    ])
    def test_plain_step(self, make_net, theta, grad, wd, expected):
        net = make_net([[[theta]]], 1)
        cfg = TrainConfig(momentum=0.0, weight_decay=wd)
        updated, _ = sgd_step(net, single_weight_grads(net, grad), GradientSet.zeros_like(net), 0.1, cfg)
        assert updated.layers[0].weights[0, 0] == pytest.approx(expected, abs=1e-15)

    def test_raw_parameters_are_not_decayed(self, make_net):
        net = make_net([[[1.0]]], 1, v_th=0.3)
        cfg = TrainConfig(weight_decay=0.5)
        updated, _ = sgd_step(net, single_weight_grads(net, 0.0), GradientSet.zeros_like(net), 0.1, cfg)
        for name, value in net.layers[0].neuron_params.arrays().items():
            np.testing.assert_array_equal(updated.layers[0].neuron_params.arrays()[name], value)

    def test_gate_learning_rate_is_scaled(self, make_net):
        net = make_net([[[1.0]]], 1)
        cfg = TrainConfig(momentum=0.0, gate_lr_scale=0.1)
        updated, _ = sgd_step(net, single_weight_grads(net, 0.0, alpha_grad=1.0), GradientSet.zeros_like(net), 0.1, cfg)
        delta = updated.layers[0].neuron_params.raw_alpha - net.layers[0].neuron_params.raw_alpha
        np.testing.assert_allclose(delta, [-0.01], atol=1e-15)

    def test_weight_decay_can_be_disabled(self, make_net):
        net = make_net([[[1.0]]], 1)
        cfg = TrainConfig(weight_decay=0.1, decay_weights=False)
        updated, _ = sgd_step(net, single_weight_grads(net, 0.0), GradientSet.zeros_like(net), 0.1, cfg)
        assert updated.layers[0].weights[0, 0] == 1.0


class TestSchedule:
    def test_cosine_values(self):
        cfg = TrainConfig(lr0=0.1, epochs=10)
        assert cosine_lr(0, cfg) == pytest.approx(0.1)
        assert cosine_lr(5, cfg) == pytest.approx(0.05)
        assert cosine_lr(10, cfg) == pytest.approx(0.0, abs=1e-15)

    def test_explicit_period_holds_at_zero(self):
        cfg = TrainConfig(lr0=0.1, epochs=10, t_max=4)
        assert cosine_lr(2, cfg) == pytest.approx(0.05)
        assert cosine_lr(6, cfg) == pytest.approx(0.0, abs=1e-15)

    def test_monotone_non_increasing(self):
        cfg = TrainConfig(lr0=0.1, epochs=20)
        lrs = [cosine_lr(e, cfg) for e in range(21)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    @pytest.mark.parametrize("kwargs", [dict(lr0=-0.1), dict(momentum=1.0), dict(batch_size=0), dict(t_max=0)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestInit:
    def test_init_conformance(self, rng):
        init = InitTable.preset("imagenet_t6")
        net = build_network([3, 4, 2], 6, SharingScheme.CHANNEL_WISE, NeuronMode(), init, rng)
        for layer in net.layers:
            cfg = resolve_params(layer.neuron_params)
            for gate in (cfg.alpha, cfg.beta, cfg.gamma):
                assert np.all((gate >= 0.4502 - 1e-12) & (gate < 0.5498 + 1e-12))
            np.testing.assert_allclose(cfg.v_th, 0.5, atol=1e-12)
            np.testing.assert_allclose(cfg.g, 0.9, atol=1e-12)
            assert cfg.g.shape == (layer.out_dim, 6)
            bound = 1.0 / np.sqrt(layer.in_dim)
            assert np.all(np.abs(layer.weights) <= bound)

    def test_layer_sharing_has_one_group(self, rng):
        net = build_network([3, 4], 2, SharingScheme.LAYER_WISE, NeuronMode(), InitTable(), rng)
        assert net.layers[0].neuron_params.group_shape == (1,)

    def test_same_seed_same_network(self):
        nets = [build_network([3, 4, 2], 3, "channel", NeuronMode(), InitTable(), np.random.default_rng(5))
                for _ in range(2)]
        assert_same_arrays(*nets)

    def test_invalid_init_values(self):
        with pytest.raises(InvalidParameterError):
            InitTable(v_th=1.0)
        with pytest.raises(InvalidParameterError):
            InitTable(gate_low=0.6, gate_high=0.5)
        with pytest.raises(InvalidParameterError):
            InitTable.preset("mnist")


class TestTrain:
    def test_zero_learning_rate_leaves_parameters(self, small_net, tiny_dataset):
        trained, history = train(small_net, tiny_dataset, TrainConfig(lr0=0.0, epochs=2, batch_size=4))
        assert_same_arrays(small_net, trained)
        assert len(history) == 2

    def test_one_batch_epoch_matches_manual_step(self, small_net, tiny_dataset):
        cfg = TrainConfig(lr0=0.05, epochs=1, batch_size=len(tiny_dataset), seed=7)
        trained, history = train(small_net, tiny_dataset, cfg)

        order = np.random.default_rng(7).permutation(len(tiny_dataset))
        loss, _, grads = loss_and_gradients(small_net, tiny_dataset.inputs[order], tiny_dataset.labels[order])
        expected, _ = sgd_step(small_net, grads, GradientSet.zeros_like(small_net), cosine_lr(0, cfg), cfg)
        assert_same_arrays(expected, trained)
        assert history[0].train_loss == pytest.approx(loss)

    @pytest.mark.parametrize("with_eval", [False, True])
    def test_seeded_rerun_is_identical(self, small_net, tiny_dataset, with_eval):
        cfg = TrainConfig(lr0=0.1, epochs=3, batch_size=2, seed=11)
        eval_dataset = tiny_dataset if with_eval else None
        first, first_history = train(small_net, tiny_dataset, cfg, eval_dataset=eval_dataset)
        second, second_history = train(small_net, tiny_dataset, cfg, eval_dataset=eval_dataset)
        assert_same_arrays(first, second)
        first_rows = np.array([m.as_row() for m in first_history], dtype=np.float64)
        second_rows = np.array([m.as_row() for m in second_history], dtype=np.float64)
        np.testing.assert_array_equal(first_rows, second_rows)
        assert bool(np.isnan(first_rows[:, -1]).any()) == (not with_eval)

    def test_small_steps_decrease_relaxed_loss(self, small_net, tiny_dataset):
        cfg = TrainConfig(lr0=1e-3, momentum=0.0, weight_decay=0.0, epochs=10,
                          batch_size=len(tiny_dataset), spike_mode=SpikeMode.RELAXED)
        _, history = train(small_net, tiny_dataset, cfg)
        losses = [m.train_loss for m in history]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_non_finite_loss_raises_divergence(self, small_net, tiny_dataset, monkeypatch):
        def nan_loss(logits, labels):
            return float("nan"), np.zeros_like(np.atleast_2d(logits))

        monkeypatch.setattr(trainer, "softmax_cross_entropy", nan_loss)
        with pytest.raises(DivergenceError) as exc:
            train(small_net, tiny_dataset, TrainConfig(epochs=1))
        assert (exc.value.epoch, exc.value.batch) == (0, 0)

    def test_non_finite_input_raises_divergence(self, small_net, tiny_dataset):
        inputs = tiny_dataset.inputs.copy()
        inputs[:, 1, 0] = np.nan
        poisoned = LabeledSpikeDataset(inputs, tiny_dataset.labels, 2)
        with pytest.raises(DivergenceError):
            train(small_net, poisoned, TrainConfig(epochs=1, batch_size=3))

    def test_empty_dataset(self, small_net):
        empty = LabeledSpikeDataset(np.zeros((0, 5, 3)), np.zeros(0), 2)
        with pytest.raises(EmptyDatasetError):
            train(small_net, empty, TrainConfig(epochs=1))
        assert np.isnan(evaluate(small_net, empty)[1])

    def test_writes_metrics_and_checkpoint(self, small_net, tiny_dataset, tmp_path):
        trained, _ = train(small_net, tiny_dataset, TrainConfig(epochs=2, batch_size=3),
                           eval_dataset=tiny_dataset, out_dir=str(tmp_path))
        rows = read_csv_rows(str(tmp_path / "metrics.csv"))
        assert [row["epoch"] for row in rows] == ["0", "1"]
        assert list(rows[0]) == ["epoch", "lr", "train_loss", "train_acc", "eval_acc"]
        assert 0.0 <= float(rows[1]["eval_acc"]) <= 1.0
        assert os.path.exists(tmp_path / "checkpoint.npz")
        assert_same_arrays(trained, load_checkpoint(str(tmp_path / "checkpoint.npz")))


@pytest.mark.slow
def test_rate_task_reaches_desk_scale_accuracy():
    data = generate_task(SyntheticTaskSpec("rate", dim=16, time_steps=8, num_classes=3, seed=0))
    train_set, eval_set = train_eval_split(data, 0.2, seed=0)
    net = build_network([16, 64, 3], 8, SharingScheme.CHANNEL_WISE, NeuronMode(), InitTable(),
                        np.random.default_rng(0))
    cfg = TrainConfig(lr0=0.05, epochs=200, batch_size=64, seed=0)
    trained, history = train(net, train_set, cfg, eval_dataset=eval_set)
    assert history[-1].train_acc >= 0.95
    assert evaluate(trained, eval_set)[1] >= 0.90
