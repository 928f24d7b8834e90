from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from glifnet.core.errors import InvalidParameterError, ShapeError

GATE_FIELDS = ("alpha", "beta", "gamma")
PRIMITIVE_FIELDS = ("tau_lin", "tau_exp", "v_re", "v_th")
SCALAR_FIELDS = GATE_FIELDS + PRIMITIVE_FIELDS
CONFIG_FIELDS = SCALAR_FIELDS + ("g",)

RAW_GATE_FIELDS = tuple(f"raw_{name}" for name in GATE_FIELDS)
RAW_FIELDS = tuple(f"raw_{name}" for name in CONFIG_FIELDS)


def _as_array(value: Any) -> np.ndarray:
    return np.array(value, dtype=np.float64)


@dataclass(frozen=True)
class RawParamSet:
    """
    Unconstrained learnable neuron parameters of one or more sharing groups.

    Scalar fields have the group shape (``()`` for a single group, ``(G,)``
    for a layer of groups); ``raw_g`` has the group shape plus a trailing
    time axis of length T.
    """

    raw_alpha: np.ndarray
    raw_beta: np.ndarray
    raw_gamma: np.ndarray
    raw_tau_lin: np.ndarray
    raw_tau_exp: np.ndarray
    raw_v_re: np.ndarray
    raw_v_th: np.ndarray
    raw_g: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _as_array(getattr(self, f.name)))
        shape = self.raw_alpha.shape
        for name in RAW_FIELDS[:-1]:
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.raw_g.ndim != len(shape) + 1 or self.raw_g.shape[:-1] != shape:
            raise ShapeError(f"raw_g has shape {self.raw_g.shape}, expected {shape} + (T,)")
        for name in RAW_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidParameterError(f"{name} contains non-finite values")

    @property
    def group_shape(self) -> Tuple[int, ...]:
        return self.raw_alpha.shape

    @property
    def time_steps(self) -> int:
        return self.raw_g.shape[-1]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in RAW_FIELDS}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "RawParamSet":
        return cls(**{name: arrays[name] for name in RAW_FIELDS})


@dataclass(frozen=True)
class NeuronGroupConfig:
    """
    Resolved gates and primitives of one or more sharing groups.

    Configs produced by ``resolve_params`` lie strictly inside (0, 1);
    frozen variants built for simplex models or lab studies may carry gate
    values of exactly 0 or 1 and unbounded primitives.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    tau_lin: np.ndarray
    tau_exp: np.ndarray
    v_re: np.ndarray
    v_th: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            value = _as_array(getattr(self, f.name))
            if not np.all(np.isfinite(value)):
                raise InvalidParameterError(f"{f.name} contains non-finite values")
            object.__setattr__(self, f.name, value)
        if self.g.ndim < 1:
            raise ShapeError("g needs a trailing time axis")

    @property
    def time_steps(self) -> int:
        return self.g.shape[-1]

    def is_bounded(self) -> bool:
        """True when every field lies strictly inside (0, 1)."""
        return all(np.all((getattr(self, n) > 0.0) & (getattr(self, n) < 1.0)) for n in CONFIG_FIELDS)

    def with_values(self, **values: Any) -> "NeuronGroupConfig":
        return replace(self, **values)

    @classmethod
    def scalar(cls, alpha: float, beta: float, gamma: float, tau_lin: float, tau_exp: float,
               v_re: float, v_th: float, g: Any, time_steps: Optional[int] = None) -> "NeuronGroupConfig":
        """Build a single-group config; a scalar g is repeated over ``time_steps``."""
        g = np.asarray(g, dtype=np.float64)
        if g.ndim == 0:
            g = np.full(time_steps or 1, float(g))
        return cls(alpha, beta, gamma, tau_lin, tau_exp, v_re, v_th, g)


class NeuronKind(str, Enum):
    GLIF = "glif"
    SIMPLEX_FROZEN = "simplex"
    GLIF_STATIC_GATES = "glif_s"
    GLIF_FUSED = "glif_f"
    VANILLA_LIF = "vanilla"


@dataclass(frozen=True)
class NeuronMode:
    """Neuron variant; simplex models carry their frozen (alpha, beta, gamma) bits."""

    kind: NeuronKind = NeuronKind.GLIF
    bits: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        if self.kind is NeuronKind.SIMPLEX_FROZEN:
            if self.bits is None or len(self.bits) != 3 or any(b not in (0, 1) for b in self.bits):
                raise InvalidParameterError(f"simplex model needs three binary gate bits, got {self.bits}")
            object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        elif self.bits is not None:
            raise InvalidParameterError(f"{self.kind.value} does not take gate bits")

    @property
    def tag(self) -> str:
        if self.kind is NeuronKind.SIMPLEX_FROZEN:
            return "".join(str(b) for b in self.bits)
        return self.kind.value

    @property
    def frozen_bits(self) -> Optional[Tuple[int, int, int]]:
        """Gate values held fixed in the forward pass, if any."""
        if self.kind is NeuronKind.SIMPLEX_FROZEN:
            return self.bits
        if self.kind is NeuronKind.VANILLA_LIF:
            return (1, 0, 1)
        return None

    @property
    def learns_gates(self) -> bool:
        return self.kind is NeuronKind.GLIF

    @classmethod
    def simplex(cls, a: int, b: int, c: int) -> "NeuronMode":
        return cls(NeuronKind.SIMPLEX_FROZEN, (a, b, c))

    @classmethod
    def parse(cls, tag: str) -> "NeuronMode":
        """Parse a mode tag such as ``glif``, ``glif_f`` or ``101``."""
        tag = tag.strip().lower()
        if len(tag) == 3 and set(tag) <= {"0", "1"}:
            return cls.simplex(*(int(ch) for ch in tag))
        try:
            kind = NeuronKind(tag)
        except ValueError:
            raise InvalidParameterError(f"unknown neuron mode: {tag!r}")
        if kind is NeuronKind.SIMPLEX_FROZEN:
            raise InvalidParameterError("simplex modes are named by their gate bits, e.g. '101'")
        return cls(kind)

    def __str__(self) -> str:
        return self.tag


SIMPLEX_MODES = tuple(NeuronMode.simplex(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1))


class SpikeMode(str, Enum):
    SPIKING = "spiking"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class LayerState:
    """Membrane potentials ``u`` and spikes ``s`` of one layer at one time step."""

    u: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _as_array(self.u))
        object.__setattr__(self, "s", _as_array(self.s))
        if self.u.shape != self.s.shape:
            raise ShapeError(f"u has shape {self.u.shape} but s has shape {self.s.shape}")

    @classmethod
    def zeros(cls, shape) -> "LayerState":
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class StepIntermediates:
    """Decay, integration and reset terms of one membrane update."""

    l_total: np.ndarray
    l_exp_part: np.ndarray
    i_incr: np.ndarray
    f_reset: np.ndarray
