import json
import logging
import os
from dataclasses import replace
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from glifnet.core.file_utils import prepare_output_dir, write_csv_rows
from glifnet.models.dataset import LabeledSpikeDataset, SyntheticTaskSpec
from glifnet.models.experiment import AblationEntry, AblationGrid, DatasetConfig, ExperimentConfig
from glifnet.models.network import NetworkSpec
from glifnet.models.neuron import NeuronKind
from glifnet.models.training import EpochMetrics, InitTable
from glifnet.services.datasets import generate_task, load_csv, load_idx, load_image_folder, train_eval_split
from glifnet.services.dynamics_lab import export_param_histograms
from glifnet.services.trainer import build_network, train, write_metrics_csv

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ("tag", "mode", "sharing", "status", "final_train_acc", "final_eval_acc", "error")


def load_dataset(cfg: DatasetConfig, seed: int) -> LabeledSpikeDataset:
    """
    Build or read the experiment dataset.

    Args:
        cfg: Dataset section of the experiment config
        seed: Experiment seed, used by the synthetic generators

    Returns:
        LabeledSpikeDataset: encoded samples
    """
    if cfg.kind in ("rate", "temporal"):
        spec = SyntheticTaskSpec(
            variant=cfg.kind,
            dim=cfg.dim,
            time_steps=cfg.time_steps,
            num_classes=cfg.num_classes,
            noise_std=cfg.noise_std,
            seed=seed,
            samples_per_class=cfg.samples_per_class,
            burst_amplitude=cfg.burst_amplitude,
        )
        return generate_task(spec)
    if cfg.kind == "csv":
        return load_csv(cfg.path, cfg.time_steps)
    if cfg.kind == "idx":
        return load_idx(cfg.path, cfg.labels_path, cfg.time_steps)
    return load_image_folder(cfg.path, cfg.time_steps, cfg.image_size)


def prepare_data(config: ExperimentConfig) -> Tuple[LabeledSpikeDataset, LabeledSpikeDataset]:
    """Load the dataset and split it into (train, eval) with the experiment seed."""
    dataset = load_dataset(config.dataset, config.seed)
    train_set, eval_set = train_eval_split(dataset, config.dataset.eval_fraction, config.seed)
    logger.info(f"Dataset {config.dataset.kind}: train {train_set.to_dict()}, eval {eval_set.to_dict()}")
    return train_set, eval_set


def fit(config: ExperimentConfig, entry: AblationEntry, train_set: LabeledSpikeDataset,
        eval_set: LabeledSpikeDataset, out_dir: Optional[str] = None) -> Tuple[NetworkSpec, List[EpochMetrics]]:
    """Build, initialize and train one network variant on prepared data."""
    dims = [train_set.dim, *config.network.hidden, train_set.num_classes]
    init = InitTable.preset(config.network.init, weight_gain=config.network.weight_gain)
    rng = np.random.default_rng([config.seed, 1])
    net = build_network(dims, train_set.time_steps, entry.sharing, entry.mode, init, rng)
    train_cfg = replace(config.train, neuron_mode=entry.mode, sharing=entry.sharing)
    return train(net, train_set, train_cfg, eval_dataset=eval_set if len(eval_set) else None,
                 out_dir=out_dir)


def write_config_snapshot(config: ExperimentConfig, out_dir: str) -> str:
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)
    logger.info(f"Saved config snapshot: {path}")
    return path


def run_experiment(config: ExperimentConfig, out_dir: str, overwrite: bool = False) -> List[EpochMetrics]:
    """
    Train the configured network and write metrics, checkpoint and config snapshot.

    Args:
        config: Validated experiment config
        out_dir: Output directory
        overwrite: Allow reusing a non-empty output directory

    Returns:
        list: per-epoch metrics
    """
    prepare_output_dir(out_dir, overwrite)
    train_set, eval_set = prepare_data(config)
    entry = AblationEntry(config.network.mode, config.network.sharing)
    _, history = fit(config, entry, train_set, eval_set, out_dir)
    write_config_snapshot(config, out_dir)
    return history


def _final(history: List[EpochMetrics], name: str) -> float:
    return getattr(history[-1], name) if history else float("nan")


def run_ablation_entry(config: ExperimentConfig, entry: AblationEntry, train_set: LabeledSpikeDataset,
                       eval_set: LabeledSpikeDataset, out_dir: str) -> Dict[str, Any]:
    """Train one grid entry; failures are recorded in the returned row instead of raised."""
    row = {"tag": entry.tag, "mode": entry.mode.kind.value, "sharing": entry.sharing.value,
           "status": "ok", "final_train_acc": float("nan"), "final_eval_acc": float("nan"), "error": ""}
    try:
        net, history = fit(config, entry, train_set, eval_set)
        write_metrics_csv(history, os.path.join(out_dir, f"metrics_{entry.tag}.csv"))
        export_param_histograms(net, os.path.join(out_dir, f"hist_{entry.tag}.csv"))
        row["final_train_acc"] = _final(history, "train_acc")
        row["final_eval_acc"] = _final(history, "eval_acc")
        logger.info(f"Ablation {entry.tag}: train acc {row['final_train_acc']:.3f}, eval acc {row['final_eval_acc']:.3f}")
    except Exception as e:
        logger.warning(f"Ablation entry {entry.tag} failed: {str(e)}")
        row["status"] = "failed"
        row["error"] = str(e)
    return row


def simplex_gap(rows: List[Dict[str, Any]]) -> Optional[float]:
    """GLIF eval accuracy minus the median over the simplex rows, when both exist."""
    simplex = [r["final_eval_acc"] for r in rows
               if r["mode"] == NeuronKind.SIMPLEX_FROZEN.value and r["status"] == "ok"]
    glif = [r["final_eval_acc"] for r in rows if r["tag"] == NeuronKind.GLIF.value and r["status"] == "ok"]
    if not simplex or not glif or np.isnan(glif[0]) or np.all(np.isnan(simplex)):
        return None
    return float(glif[0] - np.nanmedian(simplex))


def run_ablation(config: ExperimentConfig, out_dir: str, grid: Optional[AblationGrid] = None,
                 workers: int = 1, overwrite: bool = False) -> List[Dict[str, Any]]:
    """
    Run every grid entry on the same data and write ``ablation.csv``.

    Each entry seeds its own generators from the experiment seed, so rows do
    not depend on the order or process in which entries run.

    Args:
        config: Validated experiment config
        out_dir: Output directory
        grid: Entries to run; defaults to the config's grid
        workers: Process count; 1 runs entries sequentially
        overwrite: Allow reusing a non-empty output directory

    Returns:
        list: one row dict per entry, in grid order
    """
    grid = grid if grid is not None else config.ablation
    prepare_output_dir(out_dir, overwrite)
    write_config_snapshot(config, out_dir)
    train_set, eval_set = prepare_data(config)
    jobs = [(config, entry, train_set, eval_set, out_dir) for entry in grid.entries]

    if workers > 1:
        with Pool(workers) as pool:
            rows = pool.starmap(run_ablation_entry, jobs)
    else:
        rows = [run_ablation_entry(*job) for job in jobs]

    write_csv_rows(os.path.join(out_dir, "ablation.csv"), ABLATION_COLUMNS,
                   ([row[col] for col in ABLATION_COLUMNS] for row in rows))
    failed = sum(row["status"] != "ok" for row in rows)
    gap = simplex_gap(rows)
    if gap is not None:
        logger.info(f"GLIF minus simplex-median eval accuracy: {gap:+.4f}")
    logger.info(f"Ablation finished: {len(rows) - failed}/{len(rows)} entries ok")
    return rows
