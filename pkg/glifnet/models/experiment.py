import json
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

from glifnet.config import DEFAULT_INIT_PRESET, DEFAULT_WEIGHT_GAIN, EXPERIMENT_SCHEMA_VERSION, INIT_PRESETS
from glifnet.core.errors import ConfigError, GlifError, ParseError
from glifnet.models.network import SharingScheme
from glifnet.models.neuron import SIMPLEX_MODES, NeuronKind, NeuronMode
from glifnet.models.training import TrainConfig, require_int

DATASET_KINDS = ("rate", "temporal", "csv", "idx", "image_folder")
TRAIN_KEYS = ("lr0", "momentum", "weight_decay", "gate_lr_scale", "epochs", "batch_size",
              "t_max", "decay_weights", "spike_mode")


def _check_keys(data: Any, allowed: Iterable[str], path: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {path + '.' if path else ''}{key}")
    return data


@dataclass(frozen=True)
class DatasetConfig:
    """Where samples come from; synthetic fields are ignored for file-based kinds."""

    kind: str = "rate"
    time_steps: int = 8
    dim: int = 16
    num_classes: int = 3
    noise_std: float = 0.1
    samples_per_class: int = 100
    burst_amplitude: float = 1.0
    eval_fraction: float = 0.2
    path: Optional[str] = None
    labels_path: Optional[str] = None
    image_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        for name in ("time_steps", "dim", "num_classes", "samples_per_class"):
            object.__setattr__(self, name, require_int(f"dataset.{name}", getattr(self, name)))
        if self.kind in ("csv", "idx", "image_folder") and not self.path:
            raise ConfigError(f"dataset.path is required for kind {self.kind!r}")
        if self.kind == "idx" and not self.labels_path:
            raise ConfigError("dataset.labels_path is required for kind 'idx'")
        if self.time_steps < 1:
            raise ConfigError(f"dataset.time_steps must be positive, got {self.time_steps}")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ConfigError(f"dataset.eval_fraction must lie in [0, 1), got {self.eval_fraction}")
        if self.image_size is not None:
            object.__setattr__(self, "image_size", tuple(require_int("dataset.image_size", v) for v in self.image_size))

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        if self.image_size is not None:
            data["image_size"] = list(self.image_size)
        return data


@dataclass(frozen=True)
class NetworkConfig:
    hidden: Tuple[int, ...] = (64,)
    sharing: SharingScheme = SharingScheme.CHANNEL_WISE
    mode: NeuronMode = field(default_factory=NeuronMode)
    init: str = DEFAULT_INIT_PRESET
    weight_gain: float = DEFAULT_WEIGHT_GAIN

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(require_int("network.hidden", h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"network.hidden widths must be positive, got {self.hidden}")
        try:
            object.__setattr__(self, "sharing", SharingScheme(self.sharing))
        except ValueError:
            raise ConfigError(f"network.sharing must be 'channel' or 'layer', got {self.sharing!r}")
        if isinstance(self.mode, str):
            try:
                object.__setattr__(self, "mode", NeuronMode.parse(self.mode))
            except GlifError as e:
                raise ConfigError(f"network.mode: {e}")
        if self.init not in INIT_PRESETS:
            raise ConfigError(f"network.init must be one of {sorted(INIT_PRESETS)}, got {self.init!r}")
        if self.weight_gain <= 0:
            raise ConfigError(f"network.weight_gain must be positive, got {self.weight_gain}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hidden": list(self.hidden),
            "sharing": self.sharing.value,
            "mode": self.mode.tag,
            "init": self.init,
            "weight_gain": self.weight_gain,
        }


@dataclass(frozen=True)
class AblationEntry:
    mode: NeuronMode
    sharing: SharingScheme = SharingScheme.CHANNEL_WISE

    @property
    def tag(self) -> str:
        """Mode tag, suffixed with ``_layer`` for layer-wise sharing."""
        if self.sharing is SharingScheme.LAYER_WISE:
            return f"{self.mode.tag}_layer"
        return self.mode.tag

    @classmethod
    def parse(cls, tag: str) -> "AblationEntry":
        if tag.endswith("_layer"):
            return cls(NeuronMode.parse(tag[:-len("_layer")]), SharingScheme.LAYER_WISE)
        return cls(NeuronMode.parse(tag))


@dataclass(frozen=True)
class AblationGrid:
    """Neuron variants run side by side on one dataset; tags are unique."""

    entries: Tuple[AblationEntry, ...]

    def __post_init__(self):
        tags = [entry.tag for entry in self.entries]
        duplicates = sorted({tag for tag in tags if tags.count(tag) > 1})
        if duplicates:
            raise ConfigError(f"ablation grid has duplicate entries: {duplicates}")
        if not self.entries:
            raise ConfigError("ablation grid is empty")

    @classmethod
    def from_tags(cls, tags: Sequence[str]) -> "AblationGrid":
        try:
            return cls(tuple(AblationEntry.parse(tag) for tag in tags))
        except GlifError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"ablation: {e}")

    @classmethod
    def default(cls) -> "AblationGrid":
        """The eight simplex models, GLIF, GLIF_s, GLIF_f and layer-wise GLIF."""
        entries = [AblationEntry(mode) for mode in SIMPLEX_MODES]
        entries += [AblationEntry(NeuronMode(kind)) for kind in
                    (NeuronKind.GLIF, NeuronKind.GLIF_STATIC_GATES, NeuronKind.GLIF_FUSED)]
        entries.append(AblationEntry(NeuronMode(), SharingScheme.LAYER_WISE))
        return cls(tuple(entries))

    @property
    def tags(self) -> Tuple[str, ...]:
        return tuple(entry.tag for entry in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ExperimentConfig:
    """A full experiment: data, network, optimizer, seed, output and ablation grid."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    output_dir: str = "experiment"
    ablation: AblationGrid = field(default_factory=AblationGrid.default)
    schema_version: int = EXPERIMENT_SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate and build a config from parsed JSON.

        Raises:
            ConfigError: On a wrong schema version, an unknown key (named by
                its dotted path) or an invalid value
        """
        _check_keys(data, ("schema_version", "seed", "output_dir", "dataset", "network", "train", "ablation"), "")
        version = data.get("schema_version", EXPERIMENT_SCHEMA_VERSION)
        if version != EXPERIMENT_SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}, expected {EXPERIMENT_SCHEMA_VERSION}")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

        dataset_keys = [f.name for f in fields(DatasetConfig)]
        network_keys = [f.name for f in fields(NetworkConfig)]
        try:
            dataset = DatasetConfig(**_check_keys(data.get("dataset", {}), dataset_keys, "dataset"))
            network = NetworkConfig(**_check_keys(data.get("network", {}), network_keys, "network"))
            train_data = _check_keys(data.get("train", {}), TRAIN_KEYS, "train")
            train = TrainConfig(**train_data, seed=seed, neuron_mode=network.mode, sharing=network.sharing)
            ablation_data = _check_keys(data.get("ablation", {}), ("entries",), "ablation")
            ablation = (AblationGrid.from_tags(ablation_data["entries"]) if "entries" in ablation_data
                        else AblationGrid.default())
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {e}")
        return cls(dataset, network, train, seed, str(data.get("output_dir", "experiment")), ablation, version)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """Read a JSON experiment config; malformed JSON raises ParseError with its line."""
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(e.msg, path, line=e.lineno)
        try:
            return cls.from_dict(data)
        except ConfigError as e:
            raise ConfigError(f"{path}: {e}")

    def to_dict(self) -> Dict[str, Any]:
        """Resolved snapshot; ``from_dict(to_dict())`` rebuilds an equal config."""
        train = self.train.to_dict()
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": self.dataset.to_dict(),
            "network": self.network.to_dict(),
            "train": {key: train[key] for key in TRAIN_KEYS},
            "ablation": {"entries": list(self.ablation.tags)},
        }
