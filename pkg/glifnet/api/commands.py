import argparse
import logging

from glifnet.core.errors import ConfigError, InvalidParameterError
from glifnet.core.file_utils import prepare_output_file, resolve_output_dir, write_csv_rows
from glifnet.models.experiment import AblationGrid, ExperimentConfig
from glifnet.models.neuron import NeuronGroupConfig, NeuronKind, NeuronMode
from glifnet.models.trace import ConductanceConstraint, InputProgram, TraceSpec
from glifnet.services.bptt import run_gradcheck
from glifnet.services.dynamics_lab import export_param_histograms, export_trace_csv, simulate_trace
from glifnet.services.experiment import run_ablation, run_experiment
from glifnet.services.network import load_checkpoint

logger = logging.getLogger(__name__)


def _output_dir(args: argparse.Namespace, config: ExperimentConfig) -> str:
    return resolve_output_dir(args.out or config.output_dir)


def cmd_train(args: argparse.Namespace) -> int:
    """Train one network from an experiment config."""
    config = ExperimentConfig.from_file(args.config)
    out_dir = _output_dir(args, config)
    history = run_experiment(config, out_dir, overwrite=args.overwrite)
    if history:
        last = history[-1]
        logger.info(f"Training done: train acc {last.train_acc:.3f}, eval acc {last.eval_acc:.3f}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Run the ablation grid and write the summary table."""
    config = ExperimentConfig.from_file(args.config)
    grid = AblationGrid.from_tags([tag.strip() for tag in args.grid.split(",") if tag.strip()]) if args.grid else None
    if args.workers < 1:
        raise ConfigError(f"--workers must be positive, got {args.workers}")
    run_ablation(config, _output_dir(args, config), grid=grid, workers=args.workers, overwrite=args.overwrite)
    return 0


def _simulate_mode(args: argparse.Namespace) -> NeuronMode:
    """Resolve --mode/--frozen and exact 0/1 gate triples into a neuron variant."""
    if args.frozen is not None:
        if args.mode != NeuronKind.GLIF.value:
            raise ConfigError(f"--frozen cannot be combined with --mode {args.mode}")
        try:
            mode = NeuronMode.parse(args.frozen)
        except InvalidParameterError as e:
            raise ConfigError(f"--frozen: {e}")
        if mode.kind is not NeuronKind.SIMPLEX_FROZEN:
            raise ConfigError(f"--frozen takes three gate bits such as 101, got {args.frozen!r}")
        return mode
    if args.mode == NeuronKind.GLIF.value and all(v in (0.0, 1.0) for v in (args.alpha, args.beta, args.gamma)):
        return NeuronMode.simplex(int(args.alpha), int(args.beta), int(args.gamma))
    return NeuronMode.parse(args.mode)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Simulate a single-neuron trace and write it as CSV."""
    mode = _simulate_mode(args)
    try:
        program = InputProgram.parse(args.input)
    except InvalidParameterError as e:
        raise ConfigError(f"--input: {e}")
    if args.steps < 0:
        raise ConfigError(f"--steps must be non-negative, got {args.steps}")
    cfg = NeuronGroupConfig.scalar(args.alpha, args.beta, args.gamma, args.taulin, args.tauexp,
                                   args.vre, args.vth, args.g, time_steps=1)
    constraint = ConductanceConstraint.COSINE if args.cosine else ConductanceConstraint.FREE
    if args.cosine and args.beta == 0.0:
        logger.warning("Cosine conductance has no effect with beta=0")
    try:
        spec = TraceSpec(cfg, mode, args.steps, program, constraint, u0=args.u0, s0=args.s0)
    except InvalidParameterError as e:
        raise ConfigError(str(e))
    record = simulate_trace(spec)
    export_trace_csv(record, prepare_output_file(args.out, args.overwrite))
    if len(record):
        logger.info(f"Final potential {record.u[-1]:.6g}, {len(record.spike_times)} spikes")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Relaxed-mode gradient check; exit 1 when the tolerance is breached."""
    report = run_gradcheck(seed=args.seed, networks=args.networks, layers=args.layers, units=args.units,
                           steps=args.steps, batch=args.batch, h=args.h, tol=args.tol)
    print(f"{'parameter':<14}{'max_rel_err':>14}{'checked':>10}{'skipped':>10}")
    for name, err, checked, skipped in report.to_rows():
        print(f"{name:<14}{err:>14.3e}{checked:>10d}{skipped:>10d}")
    print(f"{'PASS' if report.passed else 'FAIL'}: max relative error {report.max_rel_err:.3e} (tol {report.tolerance:g})")
    if args.out:
        write_csv_rows(prepare_output_file(args.out, args.overwrite),
                       ("parameter", "max_rel_err", "checked", "skipped"), report.to_rows())
    return 0 if report.passed else 1


def cmd_export_hist(args: argparse.Namespace) -> int:
    """Write per-layer gate and primitive histograms of a checkpoint."""
    if args.bins < 1:
        raise ConfigError(f"--bins must be positive, got {args.bins}")
    net = load_checkpoint(args.checkpoint)
    export_param_histograms(net, prepare_output_file(args.out, args.overwrite), args.bins)
    return 0
