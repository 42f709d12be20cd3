"""``drmksd simulate|fit|replicate|gridscan --config cfg.json [...]``.

Exit codes: 0 success (possibly with a warning), 2 usage or validation
error, 3 estimation impossible, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .config import dump_config, load_config, override
from .dgp import read_csv, write_csv
from .errors import ConvergenceError, EstimationImpossibleError, InvalidArgumentError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_IMPOSSIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def _parser():
    parser = argparse.ArgumentParser(prog="drmksd", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=["simulate", "fit", "replicate", "gridscan"])
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", help="output path (overrides the config's 'out')")
    parser.add_argument("--seed", type=int, help="base seed (overrides the config)")
    parser.add_argument("--threads", type=int, help="worker processes; falls back to $DRMKSD_THREADS")
    parser.add_argument("--variant", choices=["dr", "ipw", "pi"])
    parser.add_argument("--data", help="dataset CSV for fit/gridscan (default: sample from the config)")
    return parser


def _threads(arg):
    if arg is not None:
        value = arg
    else:
        env = os.environ.get("DRMKSD_THREADS")
        try:
            value = int(env) if env else 1
        except ValueError:
            raise InvalidArgumentError(f"DRMKSD_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise InvalidArgumentError("thread count must be at least 1")
    return value


def _emit(payload: dict, out):
    text = json.dumps(payload, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _sibling(out, suffix):
    path = Path(out)
    return path.with_name(path.stem + suffix)


def _dataset(config, data):
    return read_csv(data) if data else harness.sample_dataset(config, config.seed)


def _write_config(config, out):
    if out is not None:
        _sibling(out, ".config.json").write_text(dump_config(config))


def _simulate(config, args):
    if config.out is None:
        raise InvalidArgumentError("simulate needs --out or a config 'out'")
    write_csv(harness.sample_dataset(config, config.seed), config.out)


def _fit(config, args):
    report = harness.fit_dataset(config, _dataset(config, args.data))
    if report.warning:
        print(f"warning: {report.warning}", file=sys.stderr)
    _emit(report.to_json(), config.out)
    _write_config(config, config.out)


def _replicate(config, args):
    if config.out is None:
        raise InvalidArgumentError("replicate needs --out or a config 'out'")
    workers = _threads(args.threads)
    p = harness.build_model(config).dim_theta
    rows = harness.replicate(config, workers)
    harness.write_results(rows, config.out, p)
    summary = harness.summarize(rows, harness.theta_true_for(config))
    _sibling(config.out, ".summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_config(config, config.out)


def _gridscan(config, args):
    if config.out is None:
        raise InvalidArgumentError("gridscan needs --out or a config 'out'")
    points, values, best = harness.gridscan(config, _dataset(config, args.data))
    harness.write_grid(points, values, best, config.out)
    _write_config(config, config.out)


COMMANDS = {"simulate": _simulate, "fit": _fit, "replicate": _replicate, "gridscan": _gridscan}


def _error(kind, err, out, code):
    print(f"error: {err}", file=sys.stderr)
    payload = {"error": {"type": kind, "message": str(err)}}
    try:
        _emit(payload, out)
    except OSError:
        _emit(payload, None)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = args.out
    try:
        _threads(args.threads)
        config = override(load_config(args.config), out=args.out, seed=args.seed, variant=args.variant)
        out = config.out if args.command == "fit" else None
        COMMANDS[args.command](config, args)
    except EstimationImpossibleError as err:
        return _error("estimation_impossible", err, out, EXIT_IMPOSSIBLE)
    except InvalidArgumentError as err:
        return _error("invalid_argument", err, None, EXIT_USAGE)
    except OSError as err:
        return _error("io_error", err, None, EXIT_USAGE)
    except (NumericalError, ConvergenceError, ArithmeticError) as err:
        return _error("numerical_error", err, out, EXIT_NUMERICAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
