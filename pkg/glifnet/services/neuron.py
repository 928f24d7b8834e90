import logging
from typing import Tuple

import numpy as np

from glifnet.config import SURROGATE_HALF_WIDTH
from glifnet.core.errors import InvalidParameterError, ShapeError, TimeIndexError
from glifnet.models.neuron import (
    CONFIG_FIELDS,
    RAW_FIELDS,
    LayerState,
    NeuronGroupConfig,
    NeuronKind,
    NeuronMode,
    RawParamSet,
    SpikeMode,
    StepIntermediates,
)

logger = logging.getLogger(__name__)


def sigmoid(x):
    """Numerically stable logistic function, element-wise."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def logit(p):
    """Inverse of ``sigmoid``; p must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise InvalidParameterError(f"logit needs values inside (0, 1), got {p}")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def resolve_params(raw: RawParamSet) -> NeuronGroupConfig:
    """
    Map unconstrained raw parameters through the sigmoid.

    Args:
        raw: Raw parameter set (validated finite on construction)

    Returns:
        NeuronGroupConfig: gates and primitives inside (0, 1)
    """
    return NeuronGroupConfig(**{
        name: sigmoid(getattr(raw, raw_name)) for name, raw_name in zip(CONFIG_FIELDS, RAW_FIELDS)
    })


def freeze_gates(cfg: NeuronGroupConfig, bits: Tuple[int, int, int]) -> NeuronGroupConfig:
    """Replace the three gating factors with exact binary values."""
    alpha, beta, gamma = (np.full_like(cfg.alpha, float(b)) for b in bits)
    return cfg.with_values(alpha=alpha, beta=beta, gamma=gamma)


def _check_time(t: int, cfg: NeuronGroupConfig) -> None:
    if not 0 <= t < cfg.time_steps:
        raise TimeIndexError(f"time index {t} outside [0, {cfg.time_steps})")


def gate_alpha(u_prev: np.ndarray, cfg: NeuronGroupConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Fused linear/exponential leak; returns (L, exponential-decay part of L)."""
    l_exp_part = (1.0 - cfg.alpha * (1.0 - cfg.tau_exp)) * u_prev
    l_total = l_exp_part - (1.0 - cfg.alpha) * cfg.tau_lin
    return l_total, l_exp_part


def conductance(t: int, cfg: NeuronGroupConfig) -> np.ndarray:
    _check_time(t, cfg)
    return cfg.g[..., t]


def gate_beta(c: np.ndarray, t: int, cfg: NeuronGroupConfig) -> np.ndarray:
    """Fused uniform/flexible coding of the input current at step t."""
    return (1.0 - cfg.beta * (1.0 - conductance(t, cfg))) * c


def gate_gamma(l_exp_part: np.ndarray, cfg: NeuronGroupConfig) -> np.ndarray:
    """Fused hard/soft reset, applied to the exponential-decay part only."""
    return -cfg.gamma * l_exp_part - (1.0 - cfg.gamma) * cfg.v_re


def spike(u: np.ndarray, v_th, mode: SpikeMode = SpikeMode.SPIKING) -> np.ndarray:
    """
    Spike nonlinearity.

    Spiking mode fires where u >= v_th. Relaxed mode is the clipped line
    clamp(u - v_th + 0.5, 0, 1), whose derivative is the surrogate.
    """
    x = np.asarray(u, dtype=np.float64) - v_th
    if SpikeMode(mode) is SpikeMode.RELAXED:
        return np.clip(x + SURROGATE_HALF_WIDTH, 0.0, 1.0)
    return (x >= 0.0).astype(np.float64)


def surrogate_grad(x):
    """Rectangular pseudo-derivative of the Heaviside step, closed window |x| <= 0.5."""
    out = (np.abs(np.asarray(x, dtype=np.float64)) <= SURROGATE_HALF_WIDTH).astype(np.float64)
    return out if out.ndim else float(out)


def _check_shapes(state: LayerState, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.shape != state.u.shape:
        raise ShapeError(f"input has shape {c.shape} but state has shape {state.u.shape}")
    return c


def glif_step(state: LayerState, c: np.ndarray, t: int, cfg: NeuronGroupConfig,
              mode: SpikeMode = SpikeMode.SPIKING) -> Tuple[LayerState, StepIntermediates]:
    """
    One gated membrane update: U = L + I + F * S_prev, S = H(U - V_th).

    Args:
        state: Potentials and spikes of the previous step
        c: Synaptic input current, same shape as the state
        t: Time index selecting the conductance g^t
        cfg: Resolved (or frozen) neuron config, broadcastable to the state
        mode: Spiking or relaxed spike function

    Returns:
        tuple: (new state, cached intermediates)
    """
    c = _check_shapes(state, c)
    l_total, l_exp_part = gate_alpha(state.u, cfg)
    i_incr = gate_beta(c, t, cfg)
    f_reset = gate_gamma(l_exp_part, cfg)
    u = l_total + i_incr + f_reset * state.s
    return LayerState(u, spike(u, cfg.v_th, mode)), StepIntermediates(l_total, l_exp_part, i_incr, f_reset)


def vanilla_lif_step(state: LayerState, c: np.ndarray, tau, v_th) -> LayerState:
    """Reference LIF update: U = tau * U_prev * (1 - S_prev) + C."""
    c = _check_shapes(state, c)
    u = tau * state.u * (1.0 - state.s) + c
    return LayerState(u, spike(u, v_th))


def glif_f_terms(state: LayerState, c: np.ndarray, t: int, cfg: NeuronGroupConfig) -> StepIntermediates:
    """Coarsely fused terms: primitives added without gating factors."""
    c = _check_shapes(state, c)
    l_exp_part = cfg.tau_exp * state.u
    return StepIntermediates(
        l_total=l_exp_part - cfg.tau_lin,
        l_exp_part=l_exp_part,
        i_incr=conductance(t, cfg) * c,
        f_reset=-l_exp_part - cfg.v_re,
    )


def glif_f_step(state: LayerState, c: np.ndarray, t: int, cfg: NeuronGroupConfig,
                mode: SpikeMode = SpikeMode.SPIKING) -> LayerState:
    terms = glif_f_terms(state, c, t, cfg)
    u = terms.l_total + terms.i_incr + terms.f_reset * state.s
    return LayerState(u, spike(u, cfg.v_th, mode))


def neuron_step(state: LayerState, c: np.ndarray, t: int, cfg: NeuronGroupConfig, neuron_mode: NeuronMode,
                mode: SpikeMode = SpikeMode.SPIKING) -> Tuple[LayerState, StepIntermediates]:
    """Dispatch one update on the neuron variant; the vanilla model runs as frozen 101."""
    if neuron_mode.kind is NeuronKind.GLIF_FUSED:
        terms = glif_f_terms(state, c, t, cfg)
        u = terms.l_total + terms.i_incr + terms.f_reset * state.s
        return LayerState(u, spike(u, cfg.v_th, mode)), terms
    bits = neuron_mode.frozen_bits
    if bits is not None:
        cfg = freeze_gates(cfg, bits)
    return glif_step(state, c, t, cfg, mode)
