import argparse
import logging
import sys
from typing import Optional, Sequence

from glifnet.api.commands import cmd_ablate, cmd_export_hist, cmd_gradcheck, cmd_simulate, cmd_train
from glifnet.config import FD_STEP, FD_TOLERANCE, HISTOGRAM_BINS, INIT_PRESETS, DEFAULT_INIT_PRESET, LOG_LEVEL
from glifnet.core.errors import ConfigError, GlifError, OutputExistsError, ParseError

logger = logging.getLogger(__name__)

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_CIFAR = INIT_PRESETS[DEFAULT_INIT_PRESET]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glifnet", description="Gated LIF spiking network lab")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a network from an experiment config")
    train.add_argument("config", help="JSON experiment config")
    train.add_argument("--out", help="output directory (default: the config's output_dir)")
    train.add_argument("--overwrite", action="store_true", help="reuse a non-empty output directory")
    train.set_defaults(handler=cmd_train)

    ablate = sub.add_parser("ablate", help="run the neuron-variant ablation grid")
    ablate.add_argument("config", help="JSON experiment config")
    ablate.add_argument("--grid", help="comma-separated entry tags, e.g. 101,glif,glif_layer")
    ablate.add_argument("--workers", type=int, default=1, help="parallel entries")
    ablate.add_argument("--out", help="output directory (default: the config's output_dir)")
    ablate.add_argument("--overwrite", action="store_true", help="reuse a non-empty output directory")
    ablate.set_defaults(handler=cmd_ablate)

    simulate = sub.add_parser("simulate", help="simulate a single-neuron trace")
    simulate.add_argument("--mode", choices=("glif", "glif_f", "vanilla"), default="glif")
    simulate.add_argument("--frozen", help="frozen gate bits, e.g. 101")
    simulate.add_argument("--alpha", type=float, default=1.0)
    simulate.add_argument("--beta", type=float, default=0.0)
    simulate.add_argument("--gamma", type=float, default=1.0)
    simulate.add_argument("--tauexp", type=float, default=_CIFAR["tau_exp"])
    simulate.add_argument("--taulin", type=float, default=_CIFAR["tau_lin"])
    simulate.add_argument("--vre", type=float, default=_CIFAR["v_re"])
    simulate.add_argument("--vth", type=float, default=_CIFAR["v_th"])
    simulate.add_argument("--g", type=float, default=_CIFAR["g"], help="constant conductance")
    simulate.add_argument("--cosine", action="store_true", help="cosine-oscillating conductance")
    simulate.add_argument("--input", default="const:0.3", help="const:X, spikes:0101 or silence")
    simulate.add_argument("--steps", type=int, default=32)
    simulate.add_argument("--u0", type=float, default=0.0)
    simulate.add_argument("--s0", type=float, default=0.0)
    simulate.add_argument("--out", required=True, help="trace CSV path")
    simulate.add_argument("--overwrite", action="store_true")
    simulate.set_defaults(handler=cmd_simulate)

    gradcheck = sub.add_parser("gradcheck", help="compare BPTT with finite differences")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--networks", type=int, default=20)
    gradcheck.add_argument("--layers", type=int, default=2)
    gradcheck.add_argument("--units", type=int, default=4)
    gradcheck.add_argument("--steps", type=int, default=5)
    gradcheck.add_argument("--batch", type=int, default=2)
    gradcheck.add_argument("--h", type=float, default=FD_STEP)
    gradcheck.add_argument("--tol", type=float, default=FD_TOLERANCE)
    gradcheck.add_argument("--out", help="optional CSV report path")
    gradcheck.add_argument("--overwrite", action="store_true")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    export = sub.add_parser("export-hist", help="histogram learned neuron parameters of a checkpoint")
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--out", required=True, help="histogram CSV path")
    export.add_argument("--bins", type=int, default=HISTOGRAM_BINS)
    export.add_argument("--overwrite", action="store_true")
    export.set_defaults(handler=cmd_export_hist)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and map failures to exit codes.

    Returns:
        int: 0 on success, 1 on a runtime failure, 2 on a usage, config,
        parse, missing-file or clobber error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigError, OutputExistsError, ParseError) as e:
        logger.error(f"{args.command}: {str(e)}")
        return EXIT_USAGE
    except FileNotFoundError as e:
        logger.error(f"{args.command}: file not found: {e.filename}")
        return EXIT_USAGE
    except GlifError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
