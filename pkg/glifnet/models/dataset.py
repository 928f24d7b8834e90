from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, Sequence, Tuple

import numpy as np

from glifnet.core.errors import InvalidParameterError, ShapeError


@dataclass(frozen=True)
class LabeledSpikeDataset:
    """Samples of shape (T, dim) with integer class labels, stored stacked."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 3:
            raise ShapeError(f"inputs must be (samples, T, dim), got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {inputs.shape[0]} samples")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidParameterError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def time_steps(self) -> int:
        return self.inputs.shape[1]

    @property
    def dim(self) -> int:
        return self.inputs.shape[2]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __iter__(self) -> Iterator[Tuple[np.ndarray, int]]:
        return ((x, int(y)) for x, y in zip(self.inputs, self.labels))

    def subset(self, indices: Sequence[int]) -> "LabeledSpikeDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledSpikeDataset(self.inputs[indices], self.labels[indices], self.num_classes)

    def to_dict(self) -> Dict[str, Any]:
        """Summary of the dataset shape."""
        return {
            "samples": len(self),
            "num_classes": self.num_classes,
            "time_steps": self.time_steps,
            "dim": self.dim,
        }


class TaskKind(str, Enum):
    RATE = "rate"
    TEMPORAL = "temporal"


@dataclass(frozen=True)
class SyntheticTaskSpec:
    variant: TaskKind = TaskKind.RATE
    dim: int = 16
    time_steps: int = 8
    num_classes: int = 3
    noise_std: float = 0.1
    seed: int = 0
    samples_per_class: int = 100
    burst_amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", TaskKind(self.variant))
        if self.dim < 1 or self.time_steps < 1 or self.num_classes < 2 or self.samples_per_class < 1:
            raise InvalidParameterError(f"degenerate task spec: {self}")
        if self.noise_std < 0:
            raise InvalidParameterError(f"noise_std must be non-negative, got {self.noise_std}")
        if not 0.0 < self.burst_amplitude <= 1.0:
            raise InvalidParameterError(f"burst_amplitude must lie in (0, 1], got {self.burst_amplitude}")
        if self.variant is TaskKind.TEMPORAL and self.time_steps < self.num_classes:
            raise InvalidParameterError(
                f"temporal task needs T >= num_classes, got T={self.time_steps} for {self.num_classes} classes"
            )
