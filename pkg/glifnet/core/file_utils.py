import csv
import os
import logging
from typing import Iterable, List, Sequence

from glifnet.config import OUTPUT_ROOT
from glifnet.core.errors import OutputExistsError

logger = logging.getLogger(__name__)


def resolve_output_dir(path: str) -> str:
    """
    Resolve an output directory against the configured output root.

    Args:
        path: Absolute path, or a path relative to GLIF_OUTPUT_ROOT

    Returns:
        str: Absolute output directory path
    """
    if os.path.isabs(path):
        return path
    return os.path.abspath(os.path.join(OUTPUT_ROOT, path))


def prepare_output_dir(path: str, overwrite: bool = False) -> str:
    """
    Create an output directory, refusing to reuse a non-empty one.

    Args:
        path: Directory to prepare
        overwrite: Allow writing into a directory that already has files

    Returns:
        str: The directory path

    Raises:
        OutputExistsError: If the directory is non-empty and overwrite is False
    """
    if os.path.isdir(path) and os.listdir(path) and not overwrite:
        logger.warning(f"Refusing to write into non-empty directory: {path}")
        raise OutputExistsError(f"output directory {path} is not empty (use --overwrite)")
    os.makedirs(path, exist_ok=True)
    logger.info(f"Using output folder: {path}")
    return path


def prepare_output_file(path: str, overwrite: bool = False) -> str:
    """Refuse to replace an existing file unless overwrite is set; create its parent."""
    if os.path.exists(path) and not overwrite:
        logger.warning(f"Refusing to overwrite existing file: {path}")
        raise OutputExistsError(f"output file {path} already exists (use --overwrite)")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def write_csv_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Write a header and rows to a CSV file with LF line endings.

    Args:
        path: Destination file
        header: Column names
        rows: Row values; floats are written with 17 significant digits

    Returns:
        str: The path written
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv_rows(path: str) -> List[dict]:
    """Read a CSV file with a header row into a list of dicts."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)
