import json
import logging
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from glifnet.config import CHECKPOINT_FORMAT_VERSION
from glifnet.core.errors import NumericError, ParseError, ShapeError
from glifnet.models.network import ForwardTape, LayerSpec, LayerTape, NetworkSpec, SharingScheme
from glifnet.models.neuron import (
    CONFIG_FIELDS,
    RAW_FIELDS,
    LayerState,
    NeuronGroupConfig,
    NeuronMode,
    RawParamSet,
    SpikeMode,
)
from glifnet.services.neuron import neuron_step, resolve_params

logger = logging.getLogger(__name__)


def synaptic_current(weights: np.ndarray, s_in: np.ndarray) -> np.ndarray:
    """
    Dense synaptic current C = W . S for one sample or a batch of samples.

    Args:
        weights: (out_dim, in_dim) matrix
        s_in: (in_dim,) or (batch, in_dim) input spikes or currents

    Returns:
        np.ndarray: (out_dim,) or (batch, out_dim) currents
    """
    s_in = np.asarray(s_in, dtype=np.float64)
    if s_in.shape[-1] != weights.shape[1]:
        raise ShapeError(f"input width {s_in.shape[-1]} does not match weight matrix {weights.shape}")
    return s_in @ weights.T


def encode_constant(x: Sequence[float], time_steps: int) -> np.ndarray:
    """Repeat a real-valued input vector over every time step, shape (T, dim)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("cannot encode non-finite input")
    return np.repeat(x[np.newaxis, ...], time_steps, axis=0)


def expand_params(cfg: NeuronGroupConfig, group_index: np.ndarray) -> NeuronGroupConfig:
    """Map per-group values to per-unit values."""
    return NeuronGroupConfig(**{name: getattr(cfg, name)[group_index] for name in CONFIG_FIELDS})


def layer_config(layer: LayerSpec) -> NeuronGroupConfig:
    """Resolved per-unit config of a layer."""
    return expand_params(resolve_params(layer.neuron_params), layer.group_index)


def empty_network(dims: Sequence[int], time_steps: int, sharing: SharingScheme = SharingScheme.CHANNEL_WISE,
                  mode: Optional[NeuronMode] = None) -> NetworkSpec:
    """Network of the given widths with all tensors zero; initialize with trainer.init_params."""
    sharing = SharingScheme(sharing)
    mode = mode or NeuronMode()
    layers = []
    for in_dim, out_dim in zip(dims[:-1], dims[1:]):
        groups = (sharing.group_count(out_dim),)
        raw = RawParamSet(**{name: np.zeros(groups) for name in RAW_FIELDS[:-1]},
                          raw_g=np.zeros(groups + (time_steps,)))
        layers.append(LayerSpec(np.zeros((out_dim, in_dim)), raw, sharing, mode))
    return NetworkSpec(tuple(layers), time_steps)


def _as_batch(net: NetworkSpec, input_spikes: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(input_spikes, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[np.newaxis]
    expected = (net.time_steps, net.layers[0].in_dim)
    if x.ndim != 3 or x.shape[1:] != expected:
        raise ShapeError(f"input has shape {np.asarray(input_spikes).shape}, expected (batch,) + {expected}")
    return x, single


def forward(net: NetworkSpec, input_spikes: np.ndarray, mode: SpikeMode = SpikeMode.SPIKING,
            keep_tape: bool = True) -> Tuple[np.ndarray, Optional[ForwardTape]]:
    """
    Run the T-step forward pass from a zero initial state.

    Args:
        net: Network to evaluate
        input_spikes: (T, in_dim) sample or (batch, T, in_dim) batch
        mode: Spiking or relaxed spike function
        keep_tape: Whether to return the intermediates for backward

    Returns:
        tuple: (logits, tape); logits are the mean final-layer spikes over time
    """
    x, single = _as_batch(net, input_spikes)
    batch, T = x.shape[0], net.time_steps
    layer_input = np.transpose(x, (1, 0, 2))
    tapes: List[LayerTape] = []

    for index, layer in enumerate(net.layers):
        cfg = layer_config(layer)
        shape = (T, batch, layer.out_dim)
        record = {name: np.empty(shape) for name in ("currents", "l_total", "l_exp_part", "i_incr", "f_reset", "u", "s")}
        state = LayerState.zeros((batch, layer.out_dim))
        for t in range(T):
            c = synaptic_current(layer.weights, layer_input[t])
            state, terms = neuron_step(state, c, t, cfg, layer.mode, mode)
            if not np.all(np.isfinite(state.u)):
                logger.error(f"Non-finite membrane potential in layer {index} at t={t}")
                raise NumericError("non-finite membrane potential", layer=index, time_step=t)
            record["currents"][t] = c
            record["l_total"][t] = terms.l_total
            record["l_exp_part"][t] = terms.l_exp_part
            record["i_incr"][t] = terms.i_incr
            record["f_reset"][t] = terms.f_reset
            record["u"][t] = state.u
            record["s"][t] = state.s
        tapes.append(LayerTape(inputs=layer_input, **record))
        layer_input = record["s"]

    logits = layer_input.mean(axis=0)
    tape = ForwardTape(tuple(tapes), logits, SpikeMode(mode)) if keep_tape else None
    return (logits[0] if single else logits), tape


def firing_rates(tape: ForwardTape) -> List[float]:
    """Mean spike output per layer over time, batch and units."""
    return [float(layer.s.mean()) for layer in tape.layers]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy and its gradient with respect to the logits.

    Args:
        logits: (batch, classes) readout
        labels: (batch,) integer class labels

    Returns:
        tuple: (loss, dloss/dlogits)
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -float(log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / len(labels)


def predict(logits: np.ndarray) -> np.ndarray:
    return np.argmax(np.atleast_2d(logits), axis=1)


def save_checkpoint(net: NetworkSpec, path: str) -> str:
    """
    Save topology and every learnable tensor to a ``.npz`` container.

    Args:
        net: Network to save
        path: Destination; ``.npz`` is appended when missing

    Returns:
        str: The path written
    """
    if not path.endswith(".npz"):
        path += ".npz"
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": list(net.dims),
        "time_steps": net.time_steps,
        "readout": net.readout,
        "layers": [{"sharing": layer.sharing.value, "mode": layer.mode.tag} for layer in net.layers],
    }
    arrays = {f"layer{i}.{name}": value for i, layer in enumerate(net.layers) for name, value in layer.arrays().items()}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
    logger.info(f"Saved checkpoint: {path}")
    return path


def load_checkpoint(path: str) -> NetworkSpec:
    """Load a network written by ``save_checkpoint``."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {key: data[key] for key in data.files if key != "meta"}
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Failed to load checkpoint {path}: {str(e)}")
        raise ParseError(f"malformed checkpoint: {e}", path)

    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format version {meta.get('format_version')}", path)
    layers = []
    for i, layer_meta in enumerate(meta["layers"]):
        try:
            tensors = {name: arrays[f"layer{i}.{name}"] for name in ("weights",) + RAW_FIELDS}
        except KeyError as e:
            raise ParseError(f"checkpoint is missing tensor {e}", path)
        layers.append(LayerSpec(
            weights=tensors["weights"],
            neuron_params=RawParamSet.from_arrays(tensors),
            sharing=SharingScheme(layer_meta["sharing"]),
            mode=NeuronMode.parse(layer_meta["mode"]),
        ))
    net = NetworkSpec(tuple(layers), meta["time_steps"], meta.get("readout", "spike_count_mean"))
    if list(net.dims) != meta.get("dims"):
        raise ParseError(f"checkpoint dims {meta.get('dims')} do not match its tensors {list(net.dims)}", path)
    return net
