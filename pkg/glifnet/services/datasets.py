import csv
import logging
import os
from typing import Iterator, Optional, Tuple

import numpy as np
from PIL import Image

from glifnet.core.errors import ConfigError, EmptyDatasetError, ParseError, ShapeError
from glifnet.core.file_utils import write_csv_rows
from glifnet.models.dataset import LabeledSpikeDataset, SyntheticTaskSpec, TaskKind
from glifnet.services.network import encode_constant

logger = logging.getLogger(__name__)

# IDX type codes and their big-endian numpy dtypes
IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IDX_CODES = {dtype.newbyteorder("="): code for code, dtype in IDX_DTYPES.items()}

IMAGE_EXTENSIONS = {"png", "jpg", "jpeg", "bmp", "gif", "tiff"}


def _encode(features: np.ndarray, time_steps: int) -> np.ndarray:
    """Constant-current encode every row of (samples, dim) into (samples, T, dim)."""
    if len(features) == 0:
        return np.zeros((0, time_steps, features.shape[1] if features.ndim == 2 else 0))
    return np.stack([encode_constant(row, time_steps) for row in features])


def normalize_unit_interval(values: np.ndarray) -> np.ndarray:
    """
    Bring values into [0, 1].

    Data already inside [0, 1] is returned unchanged; otherwise a global
    min-max scaling is applied.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or (values.min() >= 0.0 and values.max() <= 1.0):
        return values
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def gen_rate_task(spec: SyntheticTaskSpec) -> LabeledSpikeDataset:
    """
    Classes differ by mean input intensity; inputs are constant over time.

    Args:
        spec: Task spec (variant is ignored)

    Returns:
        LabeledSpikeDataset: class-major samples clipped to [0, 1]
    """
    rng = np.random.default_rng(spec.seed)
    means = rng.uniform(0.0, 1.0, (spec.num_classes, spec.dim))
    rows, labels = [], []
    for k in range(spec.num_classes):
        noise = rng.normal(0.0, spec.noise_std, (spec.samples_per_class, spec.dim))
        rows.append(np.clip(means[k] + noise, 0.0, 1.0))
        labels.append(np.full(spec.samples_per_class, k))
    features = np.concatenate(rows)
    logger.info(f"Generated rate task: {len(features)} samples, {spec.num_classes} classes, dim={spec.dim}")
    return LabeledSpikeDataset(_encode(features, spec.time_steps), np.concatenate(labels), spec.num_classes)


def gen_temporal_task(spec: SyntheticTaskSpec) -> LabeledSpikeDataset:
    """
    Classes differ only in which time window carries the input burst.

    Every sample draws an intensity vector around a shared template; class k
    places it on steps [k*w, (k+1)*w) with w = T // num_classes, so summed
    over time all classes carry the same energy.
    """
    rng = np.random.default_rng(spec.seed)
    template = rng.uniform(0.5, 1.0, spec.dim)
    width = spec.time_steps // spec.num_classes
    n = spec.samples_per_class * spec.num_classes
    inputs = np.zeros((n, spec.time_steps, spec.dim))
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    for i, k in enumerate(labels):
        burst = np.clip(template + rng.normal(0.0, spec.noise_std, spec.dim), 0.0, 1.0) * spec.burst_amplitude
        inputs[i, k * width:(k + 1) * width] = burst
    logger.info(f"Generated temporal task: {n} samples, burst width {width} of T={spec.time_steps}")
    return LabeledSpikeDataset(inputs, labels, spec.num_classes)


def generate_task(spec: SyntheticTaskSpec) -> LabeledSpikeDataset:
    if spec.variant is TaskKind.TEMPORAL:
        return gen_temporal_task(spec)
    return gen_rate_task(spec)


def train_eval_split(ds: LabeledSpikeDataset, eval_fraction: float, seed: int) -> Tuple[LabeledSpikeDataset, LabeledSpikeDataset]:
    """Seeded disjoint split; every sample lands in exactly one part."""
    if not 0.0 <= eval_fraction < 1.0:
        raise ConfigError(f"eval_fraction must lie in [0, 1), got {eval_fraction}")
    order = np.random.default_rng(seed).permutation(len(ds))
    n_eval = int(round(len(ds) * eval_fraction))
    if len(ds) and n_eval >= len(ds):
        raise ConfigError(f"eval_fraction {eval_fraction} leaves no training samples out of {len(ds)}")
    return ds.subset(np.sort(order[n_eval:])), ds.subset(np.sort(order[:n_eval]))


def iter_batches(ds: LabeledSpikeDataset, batch_size: int,
                 rng: Optional[np.random.Generator] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (inputs, labels) batches, shuffled when a generator is given."""
    order = rng.permutation(len(ds)) if rng is not None else np.arange(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.inputs[idx], ds.labels[idx]


def load_csv(path: str, time_steps: int) -> LabeledSpikeDataset:
    """
    Load a ``label,f0,f1,...`` CSV file and constant-encode it over T steps.

    Args:
        path: CSV file with a header row
        time_steps: Number of encoding steps

    Returns:
        LabeledSpikeDataset: features normalized to [0, 1]

    Raises:
        EmptyDatasetError: If the file has no data rows
        ParseError: On a malformed header or row, with its line number
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header:
            raise EmptyDatasetError("empty file", path, line=1)
        if header[0].strip() != "label" or len(header) < 2:
            raise ParseError("header must be 'label,f0,f1,...'", path, line=1)
        width = len(header) - 1
        labels, rows = [], []
        for record in reader:
            line = reader.line_num
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != width + 1:
                raise ParseError(f"expected {width + 1} fields, got {len(record)}", path, line=line)
            try:
                labels.append(int(record[0]))
                rows.append([float(cell) for cell in record[1:]])
            except ValueError as e:
                raise ParseError(str(e), path, line=line)
    if not rows:
        raise EmptyDatasetError("no samples", path)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0:
        raise ParseError("labels must be non-negative", path)
    features = normalize_unit_interval(np.asarray(rows))
    logger.info(f"Loaded {len(rows)} samples from {path}")
    return LabeledSpikeDataset(_encode(features, time_steps), labels, int(labels.max()) + 1)


def write_csv(ds: LabeledSpikeDataset, path: str) -> str:
    """Write the first time step of every sample as a ``label,f0,...`` row."""
    header = ["label"] + [f"f{i}" for i in range(ds.dim)]
    rows = ([int(y)] + [float(v) for v in x[0]] for x, y in zip(ds.inputs, ds.labels))
    return write_csv_rows(path, header, rows)


def read_idx(path: str) -> np.ndarray:
    """Read an IDX file (big-endian magic-number layout) into an array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise EmptyDatasetError("file too short for an IDX header", path, offset=0)
    if data[0] != 0 or data[1] != 0 or data[2] not in IDX_DTYPES:
        raise ParseError(f"bad IDX magic number {data[:4].hex()}", path, offset=0)
    dtype, ndim = IDX_DTYPES[data[2]], data[3]
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise ParseError("truncated IDX dimension list", path, offset=4)
    dims = tuple(int(d) for d in np.frombuffer(data, dtype=">u4", count=ndim, offset=4))
    count = int(np.prod(dims)) if dims else 1
    if len(data) - header_end != count * dtype.itemsize:
        raise ParseError(f"expected {count * dtype.itemsize} data bytes, found {len(data) - header_end}",
                         path, offset=header_end)
    return np.frombuffer(data, dtype=dtype, count=count, offset=header_end).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(array: np.ndarray, path: str) -> str:
    """Write an array in IDX layout."""
    array = np.asarray(array)
    native = array.dtype.newbyteorder("=")
    if native not in IDX_CODES:
        raise ValueError(f"dtype {array.dtype} has no IDX type code")
    code = IDX_CODES[native]
    header = bytes([0, 0, code, array.ndim]) + np.asarray(array.shape, dtype=">u4").tobytes()
    with open(path, "wb") as f:
        f.write(header + array.astype(IDX_DTYPES[code]).tobytes())
    return path


def load_idx(images_path: str, labels_path: str, time_steps: int) -> LabeledSpikeDataset:
    """
    Load an IDX image/label file pair and constant-encode it.

    Unsigned integer images are divided by their dtype maximum; other data
    follows ``normalize_unit_interval``.
    """
    images = read_idx(images_path)
    labels = read_idx(labels_path).astype(np.int64)
    if images.ndim < 1 or len(images) == 0:
        raise EmptyDatasetError("no samples", images_path)
    if labels.shape != (len(images),):
        raise ParseError(f"{labels.size} labels for {len(images)} images", labels_path)
    features = images.reshape(len(images), -1)
    if np.issubdtype(features.dtype, np.unsignedinteger):
        features = features.astype(np.float64) / np.iinfo(features.dtype).max
    else:
        features = normalize_unit_interval(features)
    logger.info(f"Loaded {len(images)} samples from {images_path}")
    return LabeledSpikeDataset(_encode(features, time_steps), labels, int(labels.max()) + 1)


def load_image_folder(root: str, time_steps: int, size: Optional[Tuple[int, int]] = None) -> LabeledSpikeDataset:
    """
    Load a small image dataset laid out as one sub-directory per class.

    Args:
        root: Directory whose sorted sub-directories are the classes
        time_steps: Number of encoding steps
        size: Optional (width, height) every image is resized to

    Returns:
        LabeledSpikeDataset: grayscale pixels scaled to [0, 1]
    """
    classes = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    rows, labels = [], []
    for label, name in enumerate(classes):
        folder = os.path.join(root, name)
        for filename in sorted(os.listdir(folder)):
            if filename.rsplit(".", 1)[-1].lower() not in IMAGE_EXTENSIONS:
                continue
            img = Image.open(os.path.join(folder, filename))
            if img.mode != "L":
                img = img.convert("L")
            if size is not None:
                img = img.resize(size)
            pixels = np.asarray(img, dtype=np.float64).ravel() / 255.0
            if rows and pixels.shape != rows[0].shape:
                raise ShapeError(f"{filename} has {pixels.size} pixels, expected {rows[0].size}; pass a size")
            rows.append(pixels)
            labels.append(label)
    if not rows:
        raise EmptyDatasetError("no images found", root)
    logger.info(f"Loaded {len(rows)} images in {len(classes)} classes from {root}")
    return LabeledSpikeDataset(_encode(np.stack(rows), time_steps), np.asarray(labels), len(classes))
