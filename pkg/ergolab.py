#!/usr/bin/env python3

import argparse
import copy
import json
import logging
import os
import sys

import yaml

from ergodicq import runner
from ergodicq.lindley import LindleyInputError
from ergodicq.odometer import ExceptionalPointError, OrbitRangeError, PrecisionError
from ergodicq.parser import COMMANDS, ConfigError, ExperimentConfig
from ergodicq.plugins.core import SCHEMAS
from ergodicq.processes import ProcessSpecError, TraceExhaustedError, TraceFormatError

FORMAT = "[%(asctime)s] [%(name)s] [%(levelname)s]  %(message)s (%(filename)s:%(lineno)d)"

SETTINGS_FILE = "config.yaml"

DEFAULT_SETTINGS = {
    "general": {"debug": 0, "log_file": None, "workers": None},
    "output": {},
    "defaults": {},
}

# first match wins
EXIT_CODES = (
    (ConfigError, 2, "config"),
    (ProcessSpecError, 2, "process"),
    (LindleyInputError, 2, "input"),
    (PrecisionError, 3, "precision"),
    (OrbitRangeError, 3, "orbit"),
    (ExceptionalPointError, 3, "exceptional-point"),
    (TraceFormatError, 4, "trace-format"),
    (TraceExhaustedError, 4, "trace-exhausted"),
    (OSError, 4, "io"),
)

HELP = {
    "simulate": "stationary P{Q > q} from one long queue run",
    "loynes": "backward window and its Loynes supremum",
    "couple": "forward coupling times against the chain from 0",
    "gg1": "waiting times of a G/G/1 queue",
    "tandem": "two queues in series",
    "odometer": "orbit, membership and measures of the odometer sets",
    "cumulant": "estimated lambda(theta) and decay rate delta",
    "scaled-cumulant": "scaled cumulant for power scalings",
    "prop1": "exact and sampled sub-exponential tail chain",
    "prop2": "cumulant sandwich on the odometer process",
}


class Ergolab:
    def __init__(self, cfg):

        self.log = logging.getLogger(__name__)

        self.cfg = cfg
        if self.cfg["general"]["debug"] < 1:
            self.log.setLevel(logging.INFO)

    def run(self, config):
        experiment = runner.run(config, workers=self.cfg["general"].get("workers"))
        for path in experiment.artifacts:
            self.log.info("Wrote {}".format(path))
        return experiment


def load_settings(path=None):
    """
    The YAML settings file, over the built-in defaults. Without an explicit
    path, ./config.yaml is used when present.
    """

    cfg = copy.deepcopy(DEFAULT_SETTINGS)
    if path is None and os.path.exists(SETTINGS_FILE):
        path = SETTINGS_FILE
    if path is None:
        return cfg
    try:
        with open(path, 'r') as yml_file:
            data = yaml.safe_load(yml_file) or {}
    except OSError as e:
        raise ConfigError("cannot read settings {}: {}".format(path, e))
    except yaml.YAMLError as e:
        raise ConfigError("settings {} are not valid YAML: {}".format(path, e))
    if not isinstance(data, dict):
        raise ConfigError("settings {} must be a mapping".format(path))
    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError("settings section {!r} must be a mapping".format(section))
        cfg.setdefault(section, {}).update(values)
    return cfg


def setup_logging(cfg):
    general = cfg["general"]
    level = logging.DEBUG if (general.get("debug") or 0) >= 1 else logging.INFO
    logging.basicConfig(filename=general.get("log_file") or None, level=level, format=FORMAT)


def exit_status(error):
    for kind, code, name in EXIT_CODES:
        if isinstance(error, kind):
            return code, name
    return None, None


def _common_options():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment configuration (JSON or YAML); a run summary works too")
    common.add_argument("--settings", help="YAML settings file (default: ./config.yaml if present)")
    common.add_argument("--seed", help="global seed; replica r uses SeedSequence(seed, spawn_key=(r,))")
    common.add_argument("--output", help="output directory (default: $ERGOLAB_OUTPUT_DIR or .)")
    common.add_argument("--format", choices=("csv", "json", "both"))
    common.add_argument("--debug", action="store_true")
    common.add_argument("--workers", type=int, help="replica threads")
    return common


def _add(sub, *flags):
    for flag in flags:
        sub.add_argument("--{}".format(flag))


def build_parser():
    common = _common_options()
    parser = argparse.ArgumentParser(prog="ergolab", parents=[common],
                                     description="Queueing experiments for stationary ergodic arrivals.")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    options = {
        "simulate": ("process", "s", "horizon", "burn-in", "thresholds", "thetas"),
        "loynes": ("process", "s", "window", "slack"),
        "couple": ("process", "s", "x0", "replicas", "horizon"),
        "gg1": ("service", "interarrival", "horizon"),
        "tandem": ("process", "s", "s2", "horizon"),
        "odometer": ("omega", "steps", "i", "precision", "i-max"),
        "cumulant": ("process", "s", "thetas", "n", "m"),
        "scaled-cumulant": ("process", "s", "thetas", "n", "m", "scaling", "thresholds"),
        "prop1": ("i", "m", "precision", "all-ones"),
        "prop2": ("i", "theta", "m", "precision"),
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[common], argument_default=argparse.SUPPRESS,
                                    help=HELP[command],
                                    epilog="CSV columns: {}".format(", ".join(SCHEMAS[command])))
        _add(sub, *options[command])
    parser.epilog = "processes: iid-bernoulli:P, iid-table:V,..@P,.., binary-markov:P01,P10, " \
                    "trace:PATH, odometer[:K[,I_MAX]]"
    return parser


def _fail(code, kind, error):
    sys.stderr.write(json.dumps({"error": kind, "message": str(error)}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    if not args.get("command") and not args.get("config"):
        parser.error("a command or --config is required")

    try:
        cfg = load_settings(args.get("settings"))
    except ConfigError as e:
        return _fail(2, "config", e)
    if args.get("debug"):
        cfg["general"]["debug"] = 1
    if args.get("workers"):
        cfg["general"]["workers"] = args["workers"]
    setup_logging(cfg)

    log = logging.getLogger(__name__)

    if cfg["general"]["debug"] < 1:
        log.setLevel(logging.INFO)

    try:
        config = ExperimentConfig.from_args(args, cfg)
        Ergolab(cfg).run(config)
    except Exception as e:
        code, kind = exit_status(e)
        if code is None:
            raise
        log.debug(e)
        return _fail(code, kind, e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
