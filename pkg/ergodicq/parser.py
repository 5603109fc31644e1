"""
parser.py
Purpose: Conversion of command-line text and configuration files to/from
native objects: arrival process descriptions and experiment configurations.
"""

from dataclasses import dataclass, fields
from typing import Optional
import json
import math
import os

import yaml

from ergodicq import odometer
from ergodicq.estimators import ScalingFunctions
from ergodicq.processes import KINDS, ProcessSpec, build

COMMANDS = ("simulate", "loynes", "couple", "gg1", "tandem", "odometer",
            "cumulant", "scaled-cumulant", "prop1", "prop2")

FORMATS = ("csv", "json", "both")

OUTPUT_ENV = "ERGOLAB_OUTPUT_DIR"


class ConfigError(ValueError): pass


def _floats(text, what):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("{}: expected comma separated numbers, got {!r}".format(what, text))


def parse_process(text, seed=0):
    """
    Create a ProcessSpec from its command-line form:

        iid-bernoulli:P
        iid-table:V1,V2,...@P1,P2,...
        binary-markov:P01,P10
        trace:PATH
        odometer[:K[,I_MAX]]
    """

    if isinstance(text, ProcessSpec):
        return text.with_seed(seed)
    kind, _, rest = str(text).strip().partition(":")
    if kind not in KINDS:
        raise ConfigError("unknown process {!r}; expected one of {}".format(kind, ", ".join(KINDS)))

    if kind == "iid-bernoulli":
        values = _floats(rest, kind)
        if len(values) != 1:
            raise ConfigError("iid-bernoulli takes one probability, e.g. iid-bernoulli:0.5")
        return ProcessSpec.iid_bernoulli(values[0], seed)

    if kind == "iid-table":
        values, at, probs = rest.partition("@")
        if not at:
            raise ConfigError("iid-table needs values@probabilities, e.g. iid-table:0,1@0.5,0.5")
        return ProcessSpec.iid_table(_floats(values, kind), _floats(probs, kind), seed)

    if kind == "binary-markov":
        values = _floats(rest, kind)
        if len(values) != 2:
            raise ConfigError("binary-markov takes p01,p10, e.g. binary-markov:0.2,0.3")
        return ProcessSpec.binary_markov(*values, seed=seed)

    if kind == "trace":
        if not rest:
            raise ConfigError("trace needs a file, e.g. trace:arrivals.txt")
        return ProcessSpec.trace(rest, seed)

    values = rest.split(",") if rest else []
    if len(values) > 2:
        raise ConfigError("odometer takes at most K,i_max")
    try:
        precision = int(values[0]) if values else odometer.DEFAULT_PRECISION
        i_max = int(values[1]) if len(values) > 1 else None
    except ValueError:
        raise ConfigError("odometer parameters must be integers, got {!r}".format(rest))
    return ProcessSpec.odometer(precision, i_max, seed)


def parse_count(text):
    """
    A positive count; scientific notation such as 1e6 is accepted.
    """

    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ConfigError("expected a count, got {!r}".format(text))
    if not value.is_integer():
        raise ConfigError("expected a whole number, got {!r}".format(text))
    return int(value)


def parse_grid(text):
    """
    Either a comma list "0,0.5,1" or a range "start:stop:step" with stop
    included.
    """

    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    text = str(text)
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise ConfigError("grid range must be start:stop:step, got {!r}".format(text))
        if step <= 0 or stop < start:
            raise ConfigError("grid range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(count))
    return tuple(_floats(text, "grid"))


def default_thetas():
    return parse_grid("0:3:0.1")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a run depends on. A run is a pure function of this object.
    """

    command: str
    process: Optional[str] = None
    service: Optional[str] = None
    interarrival: Optional[str] = None
    s: float = 0.75
    s2: Optional[float] = None
    horizon: int = 100000
    burn_in: Optional[int] = None
    window: int = 1000
    slack: float = 0.0
    x0: float = 10.0
    replicas: int = 100
    thetas: tuple = default_thetas()
    n: int = 100
    m: int = 10000
    i: tuple = (17,)
    theta: tuple = (1.0,)
    precision: int = odometer.DEFAULT_PRECISION
    i_max: Optional[int] = None
    thresholds: Optional[tuple] = None
    scaling: str = "power:1,1"
    steps: int = 16
    omega: Optional[str] = None
    all_ones: int = 0
    seed: int = 0
    output: str = "."
    format: str = "both"

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_data(cls, data):
        """
        Create a config from a mapping, as loaded from YAML/JSON or emitted by
        `to_data`. A JSON run summary is accepted as is.
        """

        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigError("unknown configuration keys: {}".format(", ".join(sorted(unknown))))
        if "command" not in data:
            raise ConfigError("configuration has no command")

        values = dict(data)
        try:
            for key in ("s", "x0", "slack"):
                if key in values:
                    values[key] = float(values[key])
            if values.get("s2") is not None:
                values["s2"] = float(values["s2"])
            for key in ("horizon", "window", "replicas", "n", "m", "precision", "steps", "all_ones", "seed"):
                if key in values:
                    values[key] = parse_count(values[key])
            for key in ("burn_in", "i_max"):
                if values.get(key) is not None:
                    values[key] = parse_count(values[key])
            for key in ("thetas", "theta"):
                if key in values:
                    values[key] = parse_grid(values[key])
            if values.get("thresholds") is not None:
                values["thresholds"] = parse_grid(values["thresholds"])
            if "i" in values:
                i = values["i"]
                i = i if isinstance(i, (list, tuple)) else str(i).split(",")
                values["i"] = tuple(parse_count(x) for x in i)
            for key in ("process", "service", "interarrival", "omega"):
                if values.get(key) is not None:
                    values[key] = str(values[key])
            if "output" in values:
                values["output"] = str(values["output"])
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e))

        config = cls(**values)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError("cannot read config {}: {}".format(path, e))
        except yaml.YAMLError as e:
            raise ConfigError("config {} is not valid YAML/JSON: {}".format(path, e))
        return cls.from_data(data)

    @classmethod
    def from_args(cls, args, settings=None):
        """
        Merge, lowest first: settings defaults, a --config file, explicit
        command-line values.
        """

        settings = settings or {}
        data = dict(settings.get("defaults") or {})
        output = settings.get("output") or {}
        if os.environ.get(OUTPUT_ENV):
            data["output"] = os.environ[OUTPUT_ENV]
        elif output.get("directory"):
            data["output"] = output["directory"]
        if output.get("format"):
            data["format"] = output["format"]

        args = {k: v for k, v in args.items() if v is not None}
        if args.get("config"):
            loaded = cls.from_file(args["config"]).to_data()
            data.update(loaded)
        if args.get("command"):
            data["command"] = args["command"]
        data.update({k: v for k, v in args.items() if k in cls.field_names() and k != "command"})
        return cls.from_data(data)

    def to_data(self):
        data = {}
        for name in self.field_names():
            value = getattr(self, name)
            data[name] = list(value) if isinstance(value, tuple) else value
        return data

    def to_json(self):
        return json.dumps(self.to_data(), sort_keys=True)

    def process_spec(self, text=None):
        return parse_process(text if text is not None else self.process, self.seed)

    def validate(self):
        """
        Check every numeric constraint the experiment will rely on, before
        anything runs.
        """

        if self.command not in COMMANDS:
            raise ConfigError("unknown command {!r}; expected one of {}".format(self.command, ", ".join(COMMANDS)))
        if self.format not in FORMATS:
            raise ConfigError("format must be one of {}".format(", ".join(FORMATS)))
        if not self.s > 0 or not math.isfinite(self.s):
            raise ConfigError("s must be positive and finite, got {}".format(self.s))
        if self.s2 is not None and not self.s2 > 0:
            raise ConfigError("s2 must be positive, got {}".format(self.s2))
        if not (self.x0 >= 0 and math.isfinite(self.x0)):
            raise ConfigError("x0 must be finite and nonnegative, got {}".format(self.x0))
        if self.slack < 0:
            raise ConfigError("slack must be nonnegative")
        for name in ("horizon", "replicas", "n", "m", "steps"):
            if getattr(self, name) < 1:
                raise ConfigError("{} must be positive, got {}".format(name, getattr(self, name)))
        if self.window < 0 or self.all_ones < 0 or self.seed < 0:
            raise ConfigError("window, all_ones and seed must be nonnegative")
        if self.burn_in is not None and self.burn_in >= self.horizon:
            raise ConfigError("burn_in {} must be below horizon {}".format(self.burn_in, self.horizon))
        if not self.thetas or any(not math.isfinite(t) for t in self.thetas):
            raise ConfigError("theta grid must be a nonempty list of finite values")
        if self.command in ("cumulant", "scaled-cumulant") and 0.0 not in self.thetas:
            raise ConfigError("theta grid must contain 0")
        if self.command == "scaled-cumulant":
            self.scaling_functions()

        if self.command in ("simulate", "loynes", "couple", "tandem", "cumulant", "scaled-cumulant"):
            if not self.process:
                raise ConfigError("{} needs --process".format(self.command))
            build(self.process_spec())
        if self.command == "gg1":
            if not (self.service and self.interarrival):
                raise ConfigError("gg1 needs --service and --interarrival")
            build(self.process_spec(self.service))
            build(self.process_spec(self.interarrival))

        if self.command in ("prop1", "prop2", "odometer"):
            if not self.i or min(self.i) < 1:
                raise ConfigError("i must be at least 1")
            for i in self.i:
                # A_i is fixed by the bits 0 .. 2i
                if 2 * i + 1 > self.precision:
                    raise odometer.PrecisionError(
                        "i={} needs {} digits, precision is {}".format(i, 2 * i + 1, self.precision))
            if self.command != "odometer" and self.precision > 64:
                raise odometer.PrecisionError("odometer streams support K <= 64, got {}".format(self.precision))
        if self.command == "prop2" and any(t < 0 for t in self.theta):
            raise ConfigError("theta must be nonnegative")
        if self.i_max is not None and not 0 <= self.i_max <= odometer.max_band(self.precision):
            raise odometer.PrecisionError("i_max {} does not fit precision {}".format(self.i_max, self.precision))
        if self.omega is not None:
            self.omega_counter()
        return True

    def omega_counter(self):
        try:
            counter = int(self.omega, 16)
        except ValueError:
            raise ConfigError("omega must be a hex counter, got {!r}".format(self.omega))
        if not 0 <= counter < 1 << self.precision:
            raise odometer.PrecisionError("omega {} does not fit precision {}".format(self.omega, self.precision))
        return counter

    def scaling_functions(self):
        kind, _, rest = self.scaling.partition(":")
        if kind == "linear" and not rest:
            return ScalingFunctions.linear()
        if kind == "power":
            values = _floats(rest, "scaling")
            if len(values) != 2 or min(values) <= 0:
                raise ConfigError("power scaling takes two positive exponents, e.g. power:1,0.5")
            return ScalingFunctions.power(*values)
        raise ConfigError("scaling must be linear or power:ALPHA,BETA, got {!r}".format(self.scaling))
