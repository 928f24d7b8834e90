"""
Single-neuron trace simulation, closed-form dynamic checks and learned
parameter histograms.
"""

import logging
import math
from dataclasses import replace
from typing import List, Sequence

import numpy as np

from glifnet.config import COSINE_MARGIN, HISTOGRAM_BINS, TRACE_COLUMNS
from glifnet.core.errors import InvalidParameterError, ParseError
from glifnet.core.file_utils import read_csv_rows, write_csv_rows
from glifnet.models.network import NetworkSpec
from glifnet.models.neuron import CONFIG_FIELDS, LayerState, NeuronGroupConfig, NeuronKind
from glifnet.models.trace import ConductanceConstraint, TraceRecord, TraceSpec
from glifnet.services.neuron import neuron_step, resolve_params, vanilla_lif_step

logger = logging.getLogger(__name__)


def cosine_conductance(time_steps: int, margin: float = COSINE_MARGIN) -> np.ndarray:
    """One full cosine period over T steps, scaled into the open interval (0, 1)."""
    t = np.arange(time_steps)
    return 0.5 + 0.5 * (1.0 - 2.0 * margin) * np.cos(2.0 * math.pi * t / max(time_steps, 1))


def _trace_conductance(spec: TraceSpec) -> np.ndarray:
    if spec.g_constraint is ConductanceConstraint.COSINE:
        return cosine_conductance(spec.time_steps)
    g = spec.cfg.g
    return np.repeat(g, spec.time_steps) if g.shape[-1] == 1 else g


def simulate_trace(spec: TraceSpec) -> TraceRecord:
    """
    Iterate one neuron over the input program in spiking mode.

    Args:
        spec: Neuron config, variant, length, input program and initial state

    Returns:
        TraceRecord: per-step U, S, L, I, F and the effective integration multiplier
    """
    g = _trace_conductance(spec)
    cfg = spec.cfg.with_values(g=g)
    bits = spec.mode.frozen_bits
    beta = float(bits[1]) if bits is not None else float(cfg.beta)
    state = LayerState(np.asarray(spec.u0, dtype=np.float64), np.asarray(spec.s0, dtype=np.float64))
    columns = {name: np.empty(spec.time_steps) for name in ("u", "s", "l", "i", "f", "g")}

    for t in range(spec.time_steps):
        c = np.asarray(spec.program.current(t), dtype=np.float64)
        if spec.mode.kind is NeuronKind.VANILLA_LIF:
            decay = cfg.tau_exp * state.u
            new = vanilla_lif_step(state, c, cfg.tau_exp, cfg.v_th)
            l_total, i_incr, f_reset, g_eff = decay, c, -decay, 1.0
        else:
            new, terms = neuron_step(state, c, t, cfg, spec.mode)
            l_total, i_incr, f_reset = terms.l_total, terms.i_incr, terms.f_reset
            g_eff = g[t] if spec.mode.kind is NeuronKind.GLIF_FUSED else 1.0 - beta * (1.0 - g[t])
        columns["u"][t] = new.u
        columns["s"][t] = new.s
        columns["l"][t] = l_total
        columns["i"][t] = i_incr
        columns["f"][t] = f_reset
        columns["g"][t] = g_eff
        state = new

    record = TraceRecord(**columns)
    logger.debug(f"Simulated {spec.time_steps} steps of {spec.mode} on {spec.program}: spikes at {record.spike_times}")
    return record


def saturation_point(cfg: NeuronGroupConfig, c: float) -> float:
    """
    Fixed point c / (1 - tau_exp) of a purely exponential, uniformly coded
    neuron that never spikes.

    Raises:
        InvalidParameterError: Unless alpha = 1, beta = 0 and tau_exp < 1
    """
    if not (np.all(cfg.alpha == 1.0) and np.all(cfg.beta == 0.0)):
        raise InvalidParameterError("saturation point needs alpha=1 and beta=0")
    if np.any(cfg.tau_exp >= 1.0):
        raise InvalidParameterError(f"tau_exp={cfg.tau_exp} has no finite saturation point")
    return float(c / (1.0 - cfg.tau_exp))


def convergence_ratio(record: TraceRecord, target: float, floor: float = 1e-12) -> np.ndarray:
    """Per-step contraction (U[t+1] - target) / (U[t] - target) where the gap exceeds ``floor``."""
    gap = record.u - target
    usable = np.abs(gap[:-1]) > floor
    return gap[1:][usable] / gap[:-1][usable]


def sweep_traces(spec: TraceSpec, field: str, values: Sequence[float]) -> List[TraceRecord]:
    """Simulate one trace per value of a single config field."""
    if field not in CONFIG_FIELDS:
        raise InvalidParameterError(f"cannot sweep {field!r}; choose from {CONFIG_FIELDS}")
    return [simulate_trace(replace(spec, cfg=spec.cfg.with_values(**{field: value}))) for value in values]


def export_trace_csv(record: TraceRecord, path: str) -> str:
    """Write a trace as CSV with columns t,U,S,L,I,F,g."""
    write_csv_rows(path, TRACE_COLUMNS, record.rows())
    logger.info(f"Saved trace: {path}")
    return path


def read_trace_csv(path: str) -> TraceRecord:
    """Parse a file written by ``export_trace_csv``."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if tuple(header) != TRACE_COLUMNS:
        raise ParseError(f"trace header must be {','.join(TRACE_COLUMNS)}", path, line=1)
    rows = read_csv_rows(path)
    try:
        columns = {key: np.array([float(row[col]) for row in rows])
                   for key, col in zip(("u", "s", "l", "i", "f", "g"), TRACE_COLUMNS[1:])}
    except (TypeError, ValueError) as e:
        raise ParseError(f"malformed trace row: {e}", path)
    return TraceRecord(**columns)


def export_param_histograms(net: NetworkSpec, path: str, bins: int = HISTOGRAM_BINS) -> str:
    """
    Histogram every resolved gate and primitive per layer over fixed bins on [0, 1].

    Conductance values are pooled over time steps. Rows are
    ``layer,parameter,bin_low,bin_high,count``.
    """
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for index, layer in enumerate(net.layers):
        cfg = resolve_params(layer.neuron_params)
        for name in CONFIG_FIELDS:
            counts, _ = np.histogram(np.ravel(getattr(cfg, name)), bins=edges)
            rows.extend((index, name, float(lo), float(hi), int(n)) for lo, hi, n in zip(edges[:-1], edges[1:], counts))
    write_csv_rows(path, ("layer", "parameter", "bin_low", "bin_high", "count"), rows)
    logger.info(f"Saved parameter histograms: {path}")
    return path
