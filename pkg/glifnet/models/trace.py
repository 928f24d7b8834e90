from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from glifnet.core.errors import InvalidParameterError, ShapeError
from glifnet.models.neuron import NeuronGroupConfig, NeuronMode


class InputKind(str, Enum):
    CONSTANT = "const"
    SPIKES = "spikes"
    SILENCE = "silence"


@dataclass(frozen=True)
class InputProgram:
    """Input current fed to a single neuron at every step."""

    kind: InputKind = InputKind.SILENCE
    amplitude: float = 0.0
    spikes: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", InputKind(self.kind))
        if not np.isfinite(self.amplitude):
            raise InvalidParameterError(f"input amplitude must be finite, got {self.amplitude}")
        if self.kind is InputKind.SPIKES and (not self.spikes or any(b not in (0, 1) for b in self.spikes)):
            raise InvalidParameterError(f"spike train must be a non-empty 0/1 pattern, got {self.spikes}")

    @classmethod
    def parse(cls, text: str) -> "InputProgram":
        """
        Parse ``const:0.3``, ``spikes:0101`` (repeated cyclically, amplitude 1)
        or ``silence``.
        """
        kind, _, arg = text.strip().partition(":")
        try:
            kind = InputKind(kind.lower())
        except ValueError:
            raise InvalidParameterError(f"unknown input program {text!r}; use const:X, spikes:0101 or silence")
        if kind is InputKind.CONSTANT:
            try:
                return cls(kind, float(arg))
            except ValueError:
                raise InvalidParameterError(f"bad constant input {arg!r}")
        if kind is InputKind.SPIKES:
            if not arg or set(arg) - {"0", "1"}:
                raise InvalidParameterError(f"bad spike pattern {arg!r}")
            return cls(kind, 1.0, tuple(int(ch) for ch in arg))
        if arg:
            raise InvalidParameterError("silence takes no argument")
        return cls(kind)

    def current(self, t: int) -> float:
        if self.kind is InputKind.CONSTANT:
            return self.amplitude
        if self.kind is InputKind.SPIKES:
            return self.amplitude * self.spikes[t % len(self.spikes)]
        return 0.0

    def __str__(self) -> str:
        if self.kind is InputKind.CONSTANT:
            return f"const:{self.amplitude:g}"
        if self.kind is InputKind.SPIKES:
            return "spikes:" + "".join(str(b) for b in self.spikes)
        return "silence"


class ConductanceConstraint(str, Enum):
    FREE = "free"
    COSINE = "cosine"


@dataclass(frozen=True)
class TraceSpec:
    """
    Single-neuron simulation setup.

    ``cfg`` holds one group with scalar fields; its conductance has length T
    or length 1 (held constant). With the cosine constraint the conductance
    is replaced by a fixed oscillation and beta sets its effective amplitude,
    so the constraint only has an effect when beta > 0.
    """

    cfg: NeuronGroupConfig
    mode: NeuronMode = field(default_factory=NeuronMode)
    time_steps: int = 16
    program: InputProgram = field(default_factory=InputProgram)
    g_constraint: ConductanceConstraint = ConductanceConstraint.FREE
    u0: float = 0.0
    s0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "g_constraint", ConductanceConstraint(self.g_constraint))
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", NeuronMode.parse(self.mode))
        if isinstance(self.program, str):
            object.__setattr__(self, "program", InputProgram.parse(self.program))
        if self.time_steps < 0:
            raise InvalidParameterError(f"time_steps must be non-negative, got {self.time_steps}")
        if self.cfg.alpha.ndim != 0:
            raise ShapeError("trace simulation takes a single-neuron config with scalar fields")
        if self.cfg.g.shape[-1] not in (1, self.time_steps):
            raise ShapeError(f"conductance has {self.cfg.g.shape[-1]} steps, expected 1 or {self.time_steps}")
        if self.s0 not in (0.0, 1.0):
            raise InvalidParameterError(f"initial spike must be 0 or 1, got {self.s0}")


@dataclass(frozen=True)
class TraceRecord:
    """Per-step potential, spike and decay/integration/reset terms of a trace."""

    u: np.ndarray
    s: np.ndarray
    l: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        columns = [np.asarray(getattr(self, name), dtype=np.float64) for name in ("u", "s", "l", "i", "f", "g")]
        if len({c.shape for c in columns}) != 1 or columns[0].ndim != 1:
            raise ShapeError("trace columns must be 1-d and equally long")
        for name, column in zip(("u", "s", "l", "i", "f", "g"), columns):
            object.__setattr__(self, name, column)

    def __len__(self) -> int:
        return len(self.u)

    @property
    def spike_times(self) -> List[int]:
        return [int(t) for t in np.flatnonzero(self.s)]

    def rows(self) -> List[Tuple]:
        return [(t, *(float(v) for v in values)) for t, values in
                enumerate(zip(self.u, self.s, self.l, self.i, self.f, self.g))]
