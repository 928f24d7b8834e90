"""
Reverse-mode backpropagation through time over a ``ForwardTape``, and the
finite-difference oracle used to validate it in relaxed mode.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from glifnet.config import FD_DENOM_FLOOR, FD_KINK_MARGIN, FD_ROUNDOFF_STEP, FD_STEP, FD_TOLERANCE, SURROGATE_HALF_WIDTH
from glifnet.core.errors import ConfigError, NumericError, StructuralError
from glifnet.models.network import ForwardTape, LayerSpec, LayerTape, NetworkSpec, SharingScheme
from glifnet.models.neuron import RAW_GATE_FIELDS, SCALAR_FIELDS, NeuronKind, NeuronMode, SpikeMode
from glifnet.models.training import GradientSet
from glifnet.services.network import empty_network, expand_params, forward, softmax_cross_entropy
from glifnet.services.neuron import freeze_gates, logit, resolve_params, surrogate_grad

logger = logging.getLogger(__name__)


def _check_tape(net: NetworkSpec, tape: ForwardTape) -> None:
    if len(tape.layers) != len(net.layers):
        raise StructuralError(f"tape has {len(tape.layers)} layers, network has {len(net.layers)}")
    for i, (layer, lt) in enumerate(zip(net.layers, tape.layers)):
        if lt.u.shape[0] != net.time_steps or lt.u.shape[2] != layer.out_dim or lt.inputs.shape[2] != layer.in_dim:
            raise StructuralError(f"tape of layer {i} has shape {lt.u.shape}, does not match the network")


def _layer_backward(layer: LayerSpec, lt: LayerTape, grad_s: np.ndarray, index: int) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Backward through one layer for all time steps.

    Args:
        layer: Layer whose forward produced ``lt``
        lt: Cached forward quantities, (T, batch, dim)
        grad_s: Loss gradient reaching the layer's spikes from above, (T, batch, out_dim)
        index: Layer position, for error locations

    Returns:
        tuple: (raw parameter and weight gradients, loss gradient w.r.t. the layer inputs)
    """
    groups = resolve_params(layer.neuron_params)
    cfg = expand_params(groups, layer.group_index)
    fused = layer.mode.kind is NeuronKind.GLIF_FUSED
    if not fused and layer.mode.frozen_bits is not None:
        cfg = freeze_gates(cfg, layer.mode.frozen_bits)

    T, batch, n = lt.u.shape
    unit = {name: np.zeros(n) for name in SCALAR_FIELDS}
    unit_g = np.zeros((n, T))
    grad_w = np.zeros_like(layer.weights)
    grad_in = np.empty_like(lt.inputs)
    gu_carry = np.zeros((batch, n))
    gs_carry = np.zeros((batch, n))
    zeros = np.zeros((batch, n))

    for t in reversed(range(T)):
        u_prev = lt.u[t - 1] if t else zeros
        s_prev = lt.s[t - 1] if t else zeros
        c = lt.currents[t]
        g_t = cfg.g[:, t]

        # spikes feed the layer above at t and the reset term at t+1
        gs = grad_s[t] + gs_carry
        gs_window = gs * surrogate_grad(lt.u[t] - cfg.v_th)
        gu = gs_window + gu_carry
        if not np.all(np.isfinite(gu)):
            logger.error(f"Non-finite potential gradient in layer {index} at t={t}")
            raise NumericError("non-finite potential gradient", layer=index, time_step=t)
        unit["v_th"] -= gs_window.sum(axis=0)

        if fused:
            keep = 1.0 - s_prev
            unit["tau_exp"] += (gu * u_prev * keep).sum(axis=0)
            unit["tau_lin"] -= gu.sum(axis=0)
            unit["v_re"] -= (gu * s_prev).sum(axis=0)
            unit_g[:, t] += (gu * c).sum(axis=0)
            grad_c = gu * g_t
            gu_carry = gu * cfg.tau_exp * keep
        else:
            keep = 1.0 - cfg.gamma * s_prev
            unit["alpha"] += (gu * (cfg.tau_lin - (1.0 - cfg.tau_exp) * u_prev * keep)).sum(axis=0)
            unit["tau_exp"] += (gu * cfg.alpha * u_prev * keep).sum(axis=0)
            unit["tau_lin"] -= (gu * (1.0 - cfg.alpha)).sum(axis=0)
            unit["beta"] -= (gu * (1.0 - g_t) * c).sum(axis=0)
            unit_g[:, t] += (gu * cfg.beta * c).sum(axis=0)
            unit["gamma"] += (gu * s_prev * (cfg.v_re - lt.l_exp_part[t])).sum(axis=0)
            unit["v_re"] -= (gu * s_prev * (1.0 - cfg.gamma)).sum(axis=0)
            grad_c = gu * (1.0 - cfg.beta * (1.0 - g_t))
            gu_carry = gu * (1.0 - cfg.alpha * (1.0 - cfg.tau_exp)) * keep

        gs_carry = gu * lt.f_reset[t]
        grad_w += grad_c.T @ lt.inputs[t]
        grad_in[t] = grad_c @ layer.weights

    grads = {"weights": grad_w}
    group_shape = layer.neuron_params.group_shape
    for name in SCALAR_FIELDS:
        summed = np.zeros(group_shape)
        np.add.at(summed, layer.group_index, unit[name])
        value = getattr(groups, name)
        grads[f"raw_{name}"] = summed * value * (1.0 - value)
    summed_g = np.zeros(group_shape + (T,))
    np.add.at(summed_g, layer.group_index, unit_g)
    grads["raw_g"] = summed_g * groups.g * (1.0 - groups.g)

    if not layer.mode.learns_gates:
        for name in RAW_GATE_FIELDS:
            grads[name] = np.zeros(group_shape)

    for name, value in grads.items():
        if not np.all(np.isfinite(value)):
            logger.error(f"Non-finite gradient for {name} in layer {index}")
            raise NumericError(f"non-finite gradient for {name}", layer=index)
    return grads, grad_in


def backward(net: NetworkSpec, tape: ForwardTape, loss_grad: np.ndarray,
             mode: Optional[SpikeMode] = None) -> GradientSet:
    """
    Gradients of a scalar loss with respect to every learnable value.

    Spike derivatives use the rectangular surrogate; in relaxed mode that is
    the exact derivative of the clipped spike function. Gradients of a shared
    group are summed over time (in reverse), then over its member units.

    Args:
        net: Network that produced the tape
        tape: Forward tape
        loss_grad: dloss/dlogits, (batch, classes) or (classes,)
        mode: Spike mode; must match the tape's

    Returns:
        GradientSet: one dict per layer keyed like ``LayerSpec.arrays()``
    """
    _check_tape(net, tape)
    if mode is not None and SpikeMode(mode) is not tape.spike_mode:
        raise StructuralError(f"tape was recorded in {tape.spike_mode.value} mode, not {SpikeMode(mode).value}")
    dlogits = np.atleast_2d(np.asarray(loss_grad, dtype=np.float64))
    if dlogits.shape != tape.logits.shape:
        raise StructuralError(f"loss gradient shape {dlogits.shape} does not match logits {tape.logits.shape}")

    T = net.time_steps
    grad_s = np.broadcast_to(dlogits / T, (T,) + dlogits.shape)
    layer_grads: List[Dict[str, np.ndarray]] = []
    for index in reversed(range(len(net.layers))):
        grads, grad_s = _layer_backward(net.layers[index], tape.layers[index], grad_s, index)
        layer_grads.append(grads)
    return GradientSet(tuple(reversed(layer_grads)))


def loss_and_gradients(net: NetworkSpec, inputs: np.ndarray, targets: np.ndarray,
                       mode: SpikeMode = SpikeMode.SPIKING) -> Tuple[float, np.ndarray, GradientSet]:
    """Forward, softmax cross-entropy and backward in one call; returns (loss, logits, grads)."""
    logits, tape = forward(net, inputs, mode)
    loss, dlogits = softmax_cross_entropy(logits, targets)
    return loss, logits, backward(net, tape, dlogits.reshape(tape.logits.shape), mode)


@dataclass(frozen=True)
class ParamRef:
    """One scalar learnable value: layer position, tensor name and element index."""

    layer: int
    name: str
    index: Tuple[int, ...] = ()


def all_param_refs(net: NetworkSpec) -> List[ParamRef]:
    refs = []
    for i, arrays in enumerate(net.arrays()):
        for name, value in arrays.items():
            refs.extend(ParamRef(i, name, tuple(int(k) for k in idx)) for idx in np.ndindex(value.shape))
    return refs


def with_value(net: NetworkSpec, ref: ParamRef, value: float) -> NetworkSpec:
    arrays = [dict(a) for a in net.arrays()]
    tensor = arrays[ref.layer][ref.name].copy()
    tensor[ref.index] = value
    arrays[ref.layer][ref.name] = tensor
    return net.with_arrays(arrays)


def central_difference(fn: Callable[[np.ndarray], float], x, h: float = FD_STEP) -> np.ndarray:
    """
    Central-difference gradient of a scalar function, one coordinate at a time.

    Args:
        fn: Function of an array (or scalar) returning a scalar
        x: Point of evaluation
        h: Step size

    Returns:
        np.ndarray: gradient estimate with the shape of x
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        grad[idx] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return grad if grad.ndim else float(grad)


def relaxed_loss(net: NetworkSpec, inputs: np.ndarray, targets: np.ndarray) -> float:
    logits, _ = forward(net, inputs, SpikeMode.RELAXED, keep_tape=False)
    return softmax_cross_entropy(logits, targets)[0]


def finite_difference_oracle(net: NetworkSpec, inputs: np.ndarray, targets: np.ndarray,
                             param_selector: Sequence[ParamRef], h: float = FD_STEP) -> np.ndarray:
    """
    Central differences of the relaxed-mode loss for the selected parameters.

    Args:
        net: Network to perturb
        inputs: (batch, T, in_dim) inputs
        targets: (batch,) labels
        param_selector: Scalars to perturb
        h: Step size (> 0)

    Returns:
        np.ndarray: one estimate per selected parameter
    """
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    estimates = np.empty(len(param_selector))
    for k, ref in enumerate(param_selector):
        base = float(net.arrays()[ref.layer][ref.name][ref.index])
        estimates[k] = central_difference(lambda v: relaxed_loss(with_value(net, ref, float(v)), inputs, targets), base, h)
    return estimates


def relative_error(analytic: float, numeric: float, floor: float = FD_DENOM_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _threshold_offsets(net: NetworkSpec, tape: ForwardTape) -> List[np.ndarray]:
    """Offset u - V_th of every (t, sample, unit) potential."""
    return [lt.u - expand_params(resolve_params(layer.neuron_params), layer.group_index).v_th
            for layer, lt in zip(net.layers, tape.layers)]


def perturb_parameter(net: NetworkSpec, inputs: np.ndarray, targets: np.ndarray, ref: ParamRef,
                      h: float = FD_STEP, margin: float = FD_KINK_MARGIN) -> Optional[float]:
    """
    Central difference for one parameter, or None when it is kink-adjacent.

    A parameter is kink-adjacent when an offset u - V_th it moves lies within
    ``margin`` of a clamp kink (|u - V_th| = 0.5) in either perturbed forward.
    """
    base = float(net.arrays()[ref.layer][ref.name][ref.index])
    losses, offsets = [], []
    for value in (base + h, base - h):
        shifted = with_value(net, ref, value)
        logits, tape = forward(shifted, inputs, SpikeMode.RELAXED)
        losses.append(softmax_cross_entropy(logits, targets)[0])
        offsets.append(_threshold_offsets(shifted, tape))
    for x_plus, x_minus in zip(*offsets):
        moved = x_plus != x_minus
        near = (np.abs(np.abs(x_plus) - SURROGATE_HALF_WIDTH) < margin) | \
               (np.abs(np.abs(x_minus) - SURROGATE_HALF_WIDTH) < margin)
        if np.any(moved & near):
            return None
    return (losses[0] - losses[1]) / (2.0 * h)


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float = 0.0
    checked: int = 0
    skipped: int = 0


@dataclass
class GradcheckReport:
    """Per-parameter-name error table of a gradient check run."""

    tolerance: float
    h: float
    rows: Dict[str, ParamCheck] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((row.max_rel_err for row in self.rows.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def record(self, name: str, err: Optional[float]) -> None:
        row = self.rows.setdefault(name, ParamCheck(name))
        if err is None:
            row.skipped += 1
        else:
            row.checked += 1
            row.max_rel_err = max(row.max_rel_err, err)

    def to_rows(self) -> List[Tuple]:
        return [(row.name, row.max_rel_err, row.checked, row.skipped) for row in self.rows.values()]


def random_network(rng: np.random.Generator, max_layers: int, max_units: int, max_steps: int,
                   mode: NeuronMode, sharing: Optional[SharingScheme] = None) -> NetworkSpec:
    """Small network with every parameter drawn away from the sigmoid tails."""
    n_layers = int(rng.integers(1, max_layers + 1))
    dims = [int(rng.integers(min(2, max_units), max_units + 1)) for _ in range(n_layers + 1)]
    time_steps = int(rng.integers(min(2, max_steps), max_steps + 1))
    sharing = sharing or (SharingScheme.CHANNEL_WISE if rng.random() < 0.5 else SharingScheme.LAYER_WISE)
    net = empty_network(dims, time_steps, sharing, mode)
    arrays = []
    for layer in net.layers:
        drawn = {"weights": rng.normal(0.0, 1.0 / np.sqrt(layer.in_dim), layer.weights.shape)}
        for name, value in layer.neuron_params.arrays().items():
            drawn[name] = logit(rng.uniform(0.2, 0.8, value.shape))
        arrays.append(drawn)
    return net.with_arrays(arrays)


def run_gradcheck(seed: int = 0, networks: int = 20, layers: int = 2, units: int = 4, steps: int = 5,
                  batch: int = 2, h: float = FD_STEP, tol: float = FD_TOLERANCE,
                  modes: Sequence[str] = ("glif",),
                  backward_fn: Callable[..., GradientSet] = backward) -> GradcheckReport:
    """
    Compare relaxed-mode BPTT with central differences on seeded random networks.

    Args:
        seed: Base seed; network k uses the stream (seed, k)
        networks: Number of random networks
        layers, units, steps: Upper bounds on depth, width and T
        batch: Samples per network
        h: Finite-difference step
        tol: Maximum allowed relative error
        modes: Neuron mode tags, cycled over the networks
        backward_fn: Backward implementation under test

    Returns:
        GradcheckReport: per-parameter maximum relative errors and skip counts
    """
    if networks < 0:
        raise ConfigError(f"networks must be non-negative, got {networks}")
    for name, value in (("layers", layers), ("units", units), ("steps", steps), ("batch", batch)):
        if value < 1:
            raise ConfigError(f"{name} must be at least 1, got {value}")
    if not (np.isfinite(h) and h > 0.0):
        raise ConfigError(f"finite-difference step h must be positive, got {h}")
    if not tol > 0.0:
        raise ConfigError(f"tolerance must be positive, got {tol}")
    if not modes:
        raise ConfigError("at least one neuron mode is required")

    report = GradcheckReport(tolerance=tol, h=h)
    if h < FD_ROUNDOFF_STEP:
        message = f"step h={h:g} is below {FD_ROUNDOFF_STEP:g}; differences are dominated by round-off"
        logger.warning(message)
        report.warnings.append(message)

    for k in range(networks):
        rng = np.random.default_rng([seed, k])
        mode = NeuronMode.parse(modes[k % len(modes)])
        net = random_network(rng, layers, units, steps, mode)
        inputs = rng.uniform(0.0, 1.0, (batch, net.time_steps, net.dims[0]))
        targets = rng.integers(0, net.num_classes, batch)

        logits, tape = forward(net, inputs, SpikeMode.RELAXED)
        _, dlogits = softmax_cross_entropy(logits, targets)
        grads = backward_fn(net, tape, dlogits, SpikeMode.RELAXED)

        for ref in all_param_refs(net):
            if not mode.learns_gates and ref.name in RAW_GATE_FIELDS:
                continue
            numeric = perturb_parameter(net, inputs, targets, ref, h)
            if numeric is None:
                report.record(ref.name, None)
                continue
            analytic = float(grads.layers[ref.layer][ref.name][ref.index])
            report.record(ref.name, relative_error(analytic, numeric))
        logger.debug(f"Gradcheck network {k}: dims={net.dims} T={net.time_steps} max err so far {report.max_rel_err:.3g}")

    verdict = "passed" if report.passed else "FAILED"
    logger.info(f"Gradient check {verdict}: max relative error {report.max_rel_err:.3g} (tol {tol:g})")
    return report
