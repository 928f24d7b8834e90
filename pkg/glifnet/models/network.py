from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np

from glifnet.core.errors import ShapeError, StructuralError
from glifnet.models.neuron import (
    LayerState,
    NeuronMode,
    RawParamSet,
    SpikeMode,
    StepIntermediates,
)


class SharingScheme(str, Enum):
    CHANNEL_WISE = "channel"
    LAYER_WISE = "layer"

    def group_count(self, out_dim: int) -> int:
        return out_dim if self is SharingScheme.CHANNEL_WISE else 1

    def group_index(self, out_dim: int) -> np.ndarray:
        """Sharing group of every unit in a layer of ``out_dim`` units."""
        if self is SharingScheme.CHANNEL_WISE:
            return np.arange(out_dim)
        return np.zeros(out_dim, dtype=np.int64)


@dataclass(frozen=True)
class LayerSpec:
    """One dense spiking layer: weights (out_dim x in_dim) and its neuron groups."""

    weights: np.ndarray
    neuron_params: RawParamSet
    sharing: SharingScheme = SharingScheme.CHANNEL_WISE
    mode: NeuronMode = field(default_factory=NeuronMode)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ShapeError(f"weights must be a matrix, got shape {weights.shape}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sharing", SharingScheme(self.sharing))
        expected = (self.sharing.group_count(self.out_dim),)
        if self.neuron_params.group_shape != expected:
            raise ShapeError(
                f"{self.sharing.value}-wise layer of {self.out_dim} units needs parameter groups of shape "
                f"{expected}, got {self.neuron_params.group_shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def group_index(self) -> np.ndarray:
        return self.sharing.group_index(self.out_dim)

    def arrays(self) -> Dict[str, np.ndarray]:
        """Every learnable tensor of the layer keyed by name."""
        return {"weights": self.weights, **self.neuron_params.arrays()}

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "LayerSpec":
        return replace(self, weights=arrays["weights"], neuron_params=RawParamSet.from_arrays(arrays))


@dataclass(frozen=True)
class NetworkSpec:
    """Feed-forward stack of dense spiking layers sharing T time steps."""

    layers: Tuple[LayerSpec, ...]
    time_steps: int
    readout: str = "spike_count_mean"

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        if self.time_steps < 1:
            raise ShapeError(f"time_steps must be positive, got {self.time_steps}")
        if self.readout != "spike_count_mean":
            raise ShapeError(f"unsupported readout {self.readout!r}")
        for i, layer in enumerate(layers):
            if layer.neuron_params.time_steps != self.time_steps:
                raise ShapeError(
                    f"layer {i} has {layer.neuron_params.time_steps} conductance steps, expected {self.time_steps}"
                )
            if i and layers[i - 1].out_dim != layer.in_dim:
                raise ShapeError(f"layer {i} expects {layer.in_dim} inputs but layer {i - 1} has {layers[i - 1].out_dim} units")

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.layers[0].in_dim,) + tuple(layer.out_dim for layer in self.layers)

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    @property
    def mode(self) -> NeuronMode:
        return self.layers[0].mode

    @property
    def sharing(self) -> SharingScheme:
        return self.layers[0].sharing

    def arrays(self) -> Tuple[Dict[str, np.ndarray], ...]:
        return tuple(layer.arrays() for layer in self.layers)

    def with_arrays(self, arrays) -> "NetworkSpec":
        if len(arrays) != len(self.layers):
            raise StructuralError(f"got arrays for {len(arrays)} layers, network has {len(self.layers)}")
        return replace(self, layers=tuple(layer.with_arrays(a) for layer, a in zip(self.layers, arrays)))

    def to_dict(self) -> Dict[str, Any]:
        """Topology summary (no tensors)."""
        return {
            "dims": list(self.dims),
            "time_steps": self.time_steps,
            "sharing": self.sharing.value,
            "mode": self.mode.tag,
            "readout": self.readout,
        }


@dataclass(frozen=True)
class LayerTape:
    """
    Cached forward quantities of one layer, stacked over time.

    Every array has shape (T, batch, dim): ``inputs`` uses the layer's input
    width, all others its unit count.
    """

    inputs: np.ndarray
    currents: np.ndarray
    l_total: np.ndarray
    l_exp_part: np.ndarray
    i_incr: np.ndarray
    f_reset: np.ndarray
    u: np.ndarray
    s: np.ndarray

    def step(self, t: int) -> Tuple[LayerState, StepIntermediates]:
        return (
            LayerState(self.u[t], self.s[t]),
            StepIntermediates(self.l_total[t], self.l_exp_part[t], self.i_incr[t], self.f_reset[t]),
        )


@dataclass(frozen=True)
class ForwardTape:
    """Everything the backward pass needs from one forward pass."""

    layers: Tuple[LayerTape, ...]
    logits: np.ndarray
    spike_mode: SpikeMode

    @property
    def time_steps(self) -> int:
        return self.layers[0].u.shape[0]

    @property
    def batch_size(self) -> int:
        return self.logits.shape[0]

    def __len__(self) -> int:
        return self.time_steps * len(self.layers)
