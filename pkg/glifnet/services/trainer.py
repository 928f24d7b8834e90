import logging
import math
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from glifnet.config import METRICS_COLUMNS
from glifnet.core.errors import DivergenceError, EmptyDatasetError, NumericError
from glifnet.core.file_utils import write_csv_rows
from glifnet.models.dataset import LabeledSpikeDataset
from glifnet.models.network import NetworkSpec, SharingScheme
from glifnet.models.neuron import GATE_FIELDS, PRIMITIVE_FIELDS, RAW_GATE_FIELDS, NeuronMode, SpikeMode
from glifnet.models.training import EpochMetrics, GradientSet, InitTable, OptimizerState, TrainConfig
from glifnet.services.bptt import backward
from glifnet.services.datasets import iter_batches
from glifnet.services.network import (
    empty_network,
    firing_rates,
    forward,
    predict,
    save_checkpoint,
    softmax_cross_entropy,
)
from glifnet.services.neuron import logit

logger = logging.getLogger(__name__)


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Per-epoch cosine annealing from lr0 down to 0 at ``schedule_period``."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    period = cfg.schedule_period
    return 0.5 * cfg.lr0 * (1.0 + math.cos(math.pi * min(epoch, period) / period))


def sgd_step(net: NetworkSpec, grads: GradientSet, opt_state: OptimizerState, lr_now: float,
             cfg: TrainConfig) -> Tuple[NetworkSpec, OptimizerState]:
    """
    One SGD-with-momentum update.

    Weight decay is coupled (added to the gradient) and applies to synaptic
    weights only; raw neuron parameters are never decayed. The three raw gate
    parameters move with ``lr_now * gate_lr_scale``.

    Args:
        net: Current parameters
        grads: Loss gradients mirroring ``net.arrays()``
        opt_state: Velocity buffers mirroring ``net.arrays()``
        lr_now: Learning rate for this step
        cfg: Optimizer settings

    Returns:
        tuple: (updated network, updated velocity buffers)
    """
    grads.check_matches(net)
    opt_state.check_matches(net)
    weight_decay = cfg.weight_decay if cfg.decay_weights else 0.0

    new_arrays, new_velocity = [], []
    for arrays, layer_grads, layer_velocity in zip(net.arrays(), grads.layers, opt_state.layers):
        updated, velocity = {}, {}
        for name, theta in arrays.items():
            wd = weight_decay if name == "weights" else 0.0
            lr = lr_now * cfg.gate_lr_scale if name in RAW_GATE_FIELDS else lr_now
            v = cfg.momentum * layer_velocity[name] + layer_grads[name] + wd * theta
            updated[name] = theta - lr * v
            velocity[name] = v
        new_arrays.append(updated)
        new_velocity.append(velocity)
    return net.with_arrays(new_arrays), GradientSet(tuple(new_velocity))


def init_params(net: NetworkSpec, init: InitTable, rng: np.random.Generator) -> NetworkSpec:
    """
    Initialize every learnable tensor.

    Raw gates are the logit of a uniform draw from [gate_low, gate_high);
    raw primitives are the logit of the table constants, with the conductance
    repeated over every time step. Weights are uniform in
    +-weight_gain / sqrt(fan_in).

    Args:
        net: Network whose shapes are kept
        init: Initial values
        rng: Seeded generator

    Returns:
        NetworkSpec: initialized copy
    """
    arrays = []
    for layer in net.layers:
        bound = init.weight_gain / math.sqrt(layer.in_dim)
        drawn = {"weights": rng.uniform(-bound, bound, layer.weights.shape)}
        groups = layer.neuron_params.group_shape
        for name in GATE_FIELDS:
            drawn[f"raw_{name}"] = logit(rng.uniform(init.gate_low, init.gate_high, groups))
        for name in PRIMITIVE_FIELDS:
            drawn[f"raw_{name}"] = np.full(groups, logit(getattr(init, name)))
        drawn["raw_g"] = np.full(groups + (net.time_steps,), logit(init.g))
        arrays.append(drawn)
    return net.with_arrays(arrays)


def build_network(dims: Sequence[int], time_steps: int, sharing: SharingScheme, neuron_mode: NeuronMode,
                  init: InitTable, rng: np.random.Generator) -> NetworkSpec:
    """Allocate a fully connected network and initialize it."""
    return init_params(empty_network(dims, time_steps, sharing, neuron_mode), init, rng)


def evaluate(net: NetworkSpec, dataset: LabeledSpikeDataset, batch_size: int = 256) -> Tuple[float, float]:
    """
    Mean loss and accuracy of the spiking network on a dataset.

    Returns:
        tuple: (loss, accuracy); both NaN for an empty dataset
    """
    if len(dataset) == 0:
        return float("nan"), float("nan")
    total_loss, correct = 0.0, 0
    for inputs, labels in iter_batches(dataset, batch_size):
        logits, _ = forward(net, inputs, SpikeMode.SPIKING, keep_tape=False)
        loss, _ = softmax_cross_entropy(logits, labels)
        total_loss += loss * len(labels)
        correct += int(np.sum(predict(logits) == labels))
    return total_loss / len(dataset), correct / len(dataset)


def write_metrics_csv(history: Sequence[EpochMetrics], path: str) -> str:
    """Write the per-epoch metrics history as CSV."""
    write_csv_rows(path, METRICS_COLUMNS, (m.as_row() for m in history))
    logger.info(f"Saved metrics: {path}")
    return path


def train(net: NetworkSpec, dataset: LabeledSpikeDataset, cfg: TrainConfig,
          eval_dataset: Optional[LabeledSpikeDataset] = None,
          out_dir: Optional[str] = None) -> Tuple[NetworkSpec, List[EpochMetrics]]:
    """
    Epoch loop: shuffled mini-batches, BPTT, SGD with momentum and a cosine schedule.

    Args:
        net: Initialized network
        dataset: Training samples
        cfg: Optimizer and schedule settings
        eval_dataset: Optional held-out samples evaluated after every epoch
        out_dir: When given, ``metrics.csv`` and ``checkpoint.npz`` are written there

    Returns:
        tuple: (trained network, per-epoch metrics)

    Raises:
        EmptyDatasetError: If the training set is empty
        DivergenceError: On a non-finite loss, with its epoch and batch
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    opt_state = GradientSet.zeros_like(net)
    history: List[EpochMetrics] = []

    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        total_loss, correct = 0.0, 0
        for batch, (inputs, labels) in enumerate(iter_batches(dataset, cfg.batch_size, rng)):
            try:
                logits, tape = forward(net, inputs, cfg.spike_mode)
                loss, dlogits = softmax_cross_entropy(logits, labels)
                if not math.isfinite(loss):
                    raise DivergenceError("non-finite training loss", epoch=epoch, batch=batch)
                grads = backward(net, tape, dlogits, cfg.spike_mode)
            except DivergenceError:
                logger.error(f"Training diverged at epoch {epoch}, batch {batch}")
                raise
            except NumericError as e:
                logger.error(f"Training diverged at epoch {epoch}, batch {batch}: {str(e)}")
                raise DivergenceError(str(e), epoch=epoch, batch=batch) from e
            net, opt_state = sgd_step(net, grads, opt_state, lr, cfg)
            total_loss += loss * len(labels)
            correct += int(np.sum(predict(logits) == labels))
            logger.debug(f"epoch {epoch} batch {batch}: loss {loss:.6f}, firing rates {firing_rates(tape)}")

        eval_acc = evaluate(net, eval_dataset)[1] if eval_dataset is not None else float("nan")
        metrics = EpochMetrics(epoch, lr, total_loss / len(dataset), correct / len(dataset), eval_acc)
        history.append(metrics)
        logger.info(f"Epoch {epoch}: lr {lr:.5f} loss {metrics.train_loss:.4f} "
                    f"train acc {metrics.train_acc:.3f} eval acc {metrics.eval_acc:.3f}")

    if out_dir is not None:
        write_metrics_csv(history, os.path.join(out_dir, "metrics.csv"))
        save_checkpoint(net, os.path.join(out_dir, "checkpoint.npz"))
    return net, history
