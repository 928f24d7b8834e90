from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np

from glifnet.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_GATE_LR_SCALE,
    DEFAULT_INIT_PRESET,
    DEFAULT_LR0,
    DEFAULT_MOMENTUM,
    DEFAULT_WEIGHT_DECAY,
    DEFAULT_WEIGHT_GAIN,
    GATE_INIT_HIGH,
    GATE_INIT_LOW,
    INIT_PRESETS,
)
from glifnet.core.errors import ConfigError, InvalidParameterError, StructuralError
from glifnet.models.network import NetworkSpec, SharingScheme
from glifnet.models.neuron import NeuronMode, SpikeMode


def require_int(name: str, value: Any) -> int:
    """Reject floats and bools where a count is expected."""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class GradientSet:
    """
    Per-layer arrays keyed like ``LayerSpec.arrays()``: ``weights`` plus every
    raw neuron parameter. Also used for optimizer velocity buffers.
    """

    layers: Tuple[Dict[str, np.ndarray], ...]

    @classmethod
    def zeros_like(cls, net: NetworkSpec) -> "GradientSet":
        return cls(tuple({name: np.zeros_like(value) for name, value in arrays.items()} for arrays in net.arrays()))

    def check_matches(self, net: NetworkSpec) -> None:
        """Raise StructuralError unless every array mirrors the network's shapes."""
        if len(self.layers) != len(net.layers):
            raise StructuralError(f"gradient set has {len(self.layers)} layers, network has {len(net.layers)}")
        for i, (grads, arrays) in enumerate(zip(self.layers, net.arrays())):
            if grads.keys() != arrays.keys():
                raise StructuralError(f"layer {i} gradient keys {sorted(grads)} do not match {sorted(arrays)}")
            for name, value in arrays.items():
                if grads[name].shape != value.shape:
                    raise StructuralError(f"layer {i} {name}: gradient shape {grads[name].shape} != {value.shape}")

    def items(self) -> Iterator[Tuple[int, str, np.ndarray]]:
        for i, arrays in enumerate(self.layers):
            for name, value in arrays.items():
                yield i, name, value

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) if v.size else 0.0) for _, _, v in self.items())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, _, v in self.items())


OptimizerState = GradientSet


@dataclass(frozen=True)
class InitTable:
    """Initial primitive values and the gate sampling range."""

    v_th: float = INIT_PRESETS[DEFAULT_INIT_PRESET]["v_th"]
    v_re: float = INIT_PRESETS[DEFAULT_INIT_PRESET]["v_re"]
    g: float = INIT_PRESETS[DEFAULT_INIT_PRESET]["g"]
    tau_exp: float = INIT_PRESETS[DEFAULT_INIT_PRESET]["tau_exp"]
    tau_lin: float = INIT_PRESETS[DEFAULT_INIT_PRESET]["tau_lin"]
    gate_low: float = GATE_INIT_LOW
    gate_high: float = GATE_INIT_HIGH
    weight_gain: float = DEFAULT_WEIGHT_GAIN

    def __post_init__(self):
        for name in ("v_th", "v_re", "g", "tau_exp", "tau_lin", "gate_low", "gate_high"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvalidParameterError(f"initial {name}={value} must lie inside (0, 1)")
        if self.gate_low >= self.gate_high:
            raise InvalidParameterError(f"empty gate init range [{self.gate_low}, {self.gate_high})")
        if self.weight_gain <= 0:
            raise InvalidParameterError(f"weight_gain must be positive, got {self.weight_gain}")

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "InitTable":
        if name not in INIT_PRESETS:
            raise InvalidParameterError(f"unknown init preset {name!r}, choose from {sorted(INIT_PRESETS)}")
        return cls(**{**INIT_PRESETS[name], **overrides})


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and parameter-group rules."""

    lr0: float = DEFAULT_LR0
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    gate_lr_scale: float = DEFAULT_GATE_LR_SCALE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    t_max: Optional[int] = None
    decay_weights: bool = True
    spike_mode: SpikeMode = SpikeMode.SPIKING
    neuron_mode: NeuronMode = field(default_factory=NeuronMode)
    sharing: SharingScheme = SharingScheme.CHANNEL_WISE

    def __post_init__(self):
        object.__setattr__(self, "spike_mode", SpikeMode(self.spike_mode))
        object.__setattr__(self, "sharing", SharingScheme(self.sharing))
        if isinstance(self.neuron_mode, str):
            object.__setattr__(self, "neuron_mode", NeuronMode.parse(self.neuron_mode))
        for name in ("epochs", "batch_size", "seed"):
            object.__setattr__(self, name, require_int(name, getattr(self, name)))
        if self.t_max is not None:
            object.__setattr__(self, "t_max", require_int("t_max", self.t_max))
        if self.lr0 < 0:
            raise ConfigError(f"lr0 must be non-negative, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.gate_lr_scale <= 0:
            raise ConfigError(f"gate_lr_scale must be positive, got {self.gate_lr_scale}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"invalid epochs={self.epochs} / batch_size={self.batch_size}")
        if self.t_max is not None and self.t_max < 1:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")

    @property
    def schedule_period(self) -> int:
        return self.t_max or max(self.epochs, 1)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["spike_mode"] = self.spike_mode.value
        data["neuron_mode"] = self.neuron_mode.tag
        data["sharing"] = self.sharing.value
        return data


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float

    def as_row(self) -> Tuple:
        return (self.epoch, self.lr, self.train_loss, self.train_acc, self.eval_acc)
