"""
processes.py
Purpose: Stationary arrival/increment processes behind one interface: iid
Bernoulli, iid table, binary Markov, a recorded trace, and the odometer
process Y_n = 1{T^n w in C}.

Every process gives forward streams (Y_1, Y_2, ...), backward windows
(Y_0, Y_-1, ...) and batches of independent window sums.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
import logging
import math

import numpy as np

from ergodicq import odometer
from ergodicq.lindley import IncrementWindow, gg1_increments

log = logging.getLogger(__name__)

KINDS = ("iid-bernoulli", "iid-table", "binary-markov", "trace", "odometer")

_CHUNK = 1 << 16


class ProcessSpecError(ValueError): pass


class TraceExhaustedError(RuntimeError): pass


class TraceFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__("{}:{}: {}".format(path, line, message))
        self.path = path
        self.line = line


@dataclass(frozen=True)
class ProcessSpec:
    """
    `params` by kind: iid-bernoulli (p,), iid-table (values, probabilities),
    binary-markov (p01, p10), trace (path,), odometer (precision, i_max).
    """

    kind: str
    params: tuple
    seed: int = 0

    @classmethod
    def iid_bernoulli(cls, p, seed=0):
        return cls("iid-bernoulli", (float(p),), seed)

    @classmethod
    def iid_table(cls, values, probabilities, seed=0):
        return cls("iid-table", (tuple(float(v) for v in values), tuple(float(p) for p in probabilities)), seed)

    @classmethod
    def binary_markov(cls, p01, p10, seed=0):
        return cls("binary-markov", (float(p01), float(p10)), seed)

    @classmethod
    def trace(cls, path, seed=0):
        return cls("trace", (str(path),), seed)

    @classmethod
    def odometer(cls, precision=odometer.DEFAULT_PRECISION, i_max=None, seed=0):
        if i_max is None:
            i_max = odometer.max_band(precision)
        return cls("odometer", (int(precision), int(i_max)), seed)

    def with_seed(self, seed):
        return ProcessSpec(self.kind, self.params, seed)

    def rng(self, replica=None, key=()):
        """
        Replica r draws from SeedSequence(seed, spawn_key=(r,) + key), so
        adding replicas never changes the earlier ones; `key` separates
        streams that share a seed within one replica.
        """
        spawn_key = (() if replica is None else (int(replica),)) + tuple(key)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=spawn_key))

    def __str__(self):
        if self.kind == "iid-table":
            values, probs = self.params
            return "iid-table:{}@{}".format(",".join(map(repr, values)), ",".join(map(repr, probs)))
        if self.kind == "trace":
            return "trace:{}".format(self.params[0])
        return "{}:{}".format(self.kind, ",".join(map(repr, self.params)))


class Stream:
    """
    A single-owner forward stream; `take` continues where the last call
    stopped.
    """

    def __init__(self, draw, length=None):
        self._draw = draw
        self.length = length
        self.position = 0

    def take(self, n):
        if n < 0:
            raise ValueError("n must be nonnegative")
        out = self._draw(self.position, n)
        self.position += n
        return out

    def __iter__(self):
        while True:
            n = _CHUNK if self.length is None else min(_CHUNK, self.length - self.position)
            if n == 0:
                raise TraceExhaustedError("stream exhausted after {} values".format(self.position))
            for y in self.take(n).tolist():
                yield y


class ArrivalProcess(ABC):
    def __init__(self, spec):
        self.spec = spec
        self.validate()

    @abstractmethod
    def validate(self):
        pass

    @property
    def bound(self):
        """
        Largest possible value, or inf.
        """
        return math.inf

    @abstractmethod
    def stream(self, rng, length=None):
        """
        Forward stream Y_1, Y_2, ...; `length` is how much of it the caller
        will take, where the process needs to know in advance.
        """

    @abstractmethod
    def paths(self, rng, n, m):
        """
        m independent forward paths (Y_1..Y_n) as an (m, n) array.
        """

    def backward(self, rng, n):
        # any length-n stretch has the law of (Y_0, ..., Y_-n+1) by stationarity
        return self.stream(rng, n).take(n)[::-1].copy()

    def window_sums(self, rng, n, m, direction="forward"):
        rows = max(1, _CHUNK * 16 // max(n, 1))
        out = []
        for start in range(0, m, rows):
            out.append(self.paths(rng, n, min(rows, m - start)).sum(axis=1))
        return np.concatenate(out) if out else np.zeros(0)


class IidBernoulli(ArrivalProcess):
    def validate(self):
        (p,) = self.spec.params
        if not 0 <= p <= 1:
            raise ProcessSpecError("Bernoulli parameter {} outside [0, 1]".format(p))
        self.p = p

    @property
    def bound(self):
        return 1.0

    def stream(self, rng, length=None):
        return Stream(lambda position, n: (rng.random(n) < self.p).astype(float))

    def paths(self, rng, n, m):
        return (rng.random((m, n)) < self.p).astype(float)


class IidTable(ArrivalProcess):
    def validate(self):
        values, probs = self.spec.params
        if len(values) != len(probs) or not values:
            raise ProcessSpecError("table needs as many probabilities as values")
        if any(not 0 <= p <= 1 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
            raise ProcessSpecError("table probabilities must lie in [0, 1] and sum to 1")
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ProcessSpecError("table values must be finite and nonnegative")
        self.values = np.asarray(values, dtype=float)
        self.probs = np.asarray(probs, dtype=float) / sum(probs)

    @property
    def bound(self):
        return float(self.values[self.probs > 0].max())

    def stream(self, rng, length=None):
        return Stream(lambda position, n: rng.choice(self.values, size=n, p=self.probs))

    def paths(self, rng, n, m):
        return rng.choice(self.values, size=(m, n), p=self.probs)


class BinaryMarkov(ArrivalProcess):
    def validate(self):
        p01, p10 = self.spec.params
        if not (0 <= p01 <= 1 and 0 <= p10 <= 1):
            raise ProcessSpecError("transition probabilities must lie in [0, 1]")
        self.p01, self.p10 = p01, p10
        if p01 + p10 == 0:
            log.warning("binary-markov:0,0 is frozen; starting each path at 0 or 1 with equal odds")
            self.stationary_one = 0.5
        else:
            self.stationary_one = p01 / (p01 + p10)

    @property
    def bound(self):
        return 1.0

    def _advance(self, state, u):
        flip = np.where(state == 1, u < self.p10, u < self.p01)
        return np.where(flip, 1 - state, state)

    def stream(self, rng, length=None):
        state = {"y": None}

        def draw(position, n):
            out = np.empty(n)
            y = state["y"]
            u = rng.random(n)
            for k in range(n):
                if y is None:
                    y = 1 if u[k] < self.stationary_one else 0
                elif y == 1:
                    y = 0 if u[k] < self.p10 else 1
                else:
                    y = 1 if u[k] < self.p01 else 0
                out[k] = y
            state["y"] = y
            return out

        return Stream(draw)

    def paths(self, rng, n, m):
        out = np.empty((m, n))
        if n == 0:
            return out
        y = (rng.random(m) < self.stationary_one).astype(np.int8)
        out[:, 0] = y
        for k in range(1, n):
            y = self._advance(y, rng.random(m))
            out[:, k] = y
        return out


class TraceProcess(ArrivalProcess):
    """
    One recorded realization, read forward from the top of the file and
    backward from its end. Stationarity of the recording is assumed, not
    checked.
    """

    def validate(self):
        (self.path,) = self.spec.params

    @cached_property
    def data(self):
        return load_trace(self.path)

    @property
    def bound(self):
        return float(self.data.max()) if len(self.data) else 0.0

    def stream(self, rng, length=None):
        def draw(position, n):
            if position + n > len(self.data):
                raise TraceExhaustedError("trace {} has {} values, {} requested".format(
                    self.path, len(self.data), position + n))
            return self.data[position:position + n].copy()

        return Stream(draw, length=len(self.data))

    def backward(self, rng, n):
        if n > len(self.data):
            raise TraceExhaustedError("trace {} has {} values, window of {} requested".format(
                self.path, len(self.data), n))
        return self.data[len(self.data) - n:][::-1].copy()

    def paths(self, rng, n, m):
        # consecutive non-overlapping blocks of the one realization
        if n * m > len(self.data):
            raise TraceExhaustedError("trace {} has {} values, {} blocks of {} requested".format(
                self.path, len(self.data), m, n))
        return self.data[:n * m].reshape(m, n).copy()


class OdometerProcess(ArrivalProcess):
    """
    Y_n(w) = 1 when the counter of w minus n lies in C.
    """

    def validate(self):
        precision, i_max = self.spec.params
        if precision > 64:
            raise odometer.PrecisionError("odometer streams support K <= 64, got {}".format(precision))
        if not 0 <= i_max <= odometer.max_band(precision):
            raise odometer.PrecisionError("i_max {} does not fit precision {}".format(i_max, precision))
        self.precision, self.i_max = precision, i_max
        self.c_set = odometer.c_set(precision, i_max)

    @property
    def bound(self):
        return 1.0

    def draw_omega(self, rng, size, room_below=0, room_above=0):
        """
        Uniform counters with at least `room_below` orbit steps forward and
        `room_above` backward inside the window; others are redrawn.
        """
        top = (1 << self.precision) - 1
        if room_below + room_above >= top:
            raise odometer.OrbitRangeError("windows of {} steps do not fit precision {}".format(
                room_below + room_above, self.precision))
        omega = odometer.random_counters(rng, size, self.precision)
        bad = (omega < np.uint64(room_below)) | (omega > np.uint64(top - room_above))
        while bad.any():
            omega[bad] = odometer.random_counters(rng, int(bad.sum()), self.precision)
            bad = (omega < np.uint64(room_below)) | (omega > np.uint64(top - room_above))
        return omega

    def values_at(self, counters):
        return self.c_set.contains_counters(counters).astype(float)

    def stream_from(self, omega, start=1):
        """
        Y_start, Y_start+1, ... for a given counter w.
        """
        omega = int(omega)

        def draw(position, n):
            first = start + position
            if first + n - 1 > omega:
                raise odometer.OrbitRangeError("orbit leaves representable window at step {}".format(omega + 1))
            counters = np.uint64(omega - first) - np.arange(n, dtype=np.uint64) if n else np.zeros(0, np.uint64)
            return self.values_at(counters)

        return Stream(draw)

    def stream(self, rng, length=None):
        # w needs `length` steps of orbit below it
        return self.stream_from(self.draw_omega(rng, 1, room_below=length or 0)[0])

    def backward_from(self, omega, n):
        omega = int(omega)
        if omega + n - 1 >= 1 << self.precision:
            raise odometer.OrbitRangeError("backward window of {} leaves the window".format(n))
        return self.values_at(np.uint64(omega) + np.arange(n, dtype=np.uint64))

    def backward(self, rng, n):
        return self.backward_from(self.draw_omega(rng, 1, room_above=n)[0], n)

    def paths(self, rng, n, m):
        omega = self.draw_omega(rng, m, room_below=n)
        counters = omega[:, None] - np.arange(1, n + 1, dtype=np.uint64)[None, :]
        return self.values_at(counters)

    def sums_from(self, omega, n, direction="forward"):
        """
        Exact window sums without scanning: forward sums Y_1..Y_n cover the
        counters w-n..w-1, backward sums Y_0..Y_-n+1 cover w..w+n-1.
        """
        omega = np.asarray(omega, dtype=np.uint64)
        if direction == "forward":
            return self.c_set.count_range(omega - np.uint64(n), n)
        if direction == "backward":
            return self.c_set.count_range(omega, n)
        raise ValueError("direction must be forward or backward")

    def window_sums(self, rng, n, m, direction="forward"):
        if direction == "forward":
            omega = self.draw_omega(rng, m, room_below=n)
        else:
            omega = self.draw_omega(rng, m, room_above=n)
        return self.sums_from(omega, n, direction).astype(float)


_BUILDERS = {
    "iid-bernoulli": IidBernoulli,
    "iid-table": IidTable,
    "binary-markov": BinaryMarkov,
    "trace": TraceProcess,
    "odometer": OdometerProcess,
}


def build(spec):
    try:
        builder = _BUILDERS[spec.kind]
    except KeyError:
        raise ProcessSpecError("unknown process kind {!r}; expected one of {}".format(spec.kind, ", ".join(KINDS)))
    return builder(spec)


def load_trace(path):
    """
    One nonnegative decimal per line, UTF-8.
    """
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                raise TraceFormatError(path, lineno, "empty line")
            try:
                value = float(text)
            except ValueError:
                raise TraceFormatError(path, lineno, "not a number: {!r}".format(text))
            if not math.isfinite(value) or value < 0:
                raise TraceFormatError(path, lineno, "expected a finite nonnegative value, got {!r}".format(text))
            values.append(value)
    return np.asarray(values, dtype=float)


def forward_stream(spec, replica=None, length=None):
    return build(spec).stream(spec.rng(replica), length)


def backward_window(spec, n, replica=None):
    if n < 0:
        raise ValueError("window length must be nonnegative")
    return IncrementWindow(build(spec).backward(spec.rng(replica), n))


def window_sums(spec, n, m, direction="forward", replica=None):
    if n < 1 or m < 1:
        raise ValueError("window length and sample count must be positive")
    return build(spec).window_sums(spec.rng(replica), n, m, direction)


def sample_paths(spec, n, m, replica=None):
    return build(spec).paths(spec.rng(replica), n, m)


def mean_estimate(spec, n, replica=None):
    """
    Time average of one realization of length n.
    """
    if n < 1:
        raise ValueError("n must be positive")
    process = build(spec)
    rng = spec.rng(replica)
    if isinstance(process, OdometerProcess):
        omega = process.draw_omega(rng, 1, room_below=n)
        return float(process.sums_from(omega, n)[0]) / n
    return float(np.mean(process.stream(rng, n).take(n)))


@dataclass(frozen=True)
class GG1Spec:
    service: ProcessSpec
    interarrival: ProcessSpec

    def samples(self, horizon, replica=None):
        """
        (S_0..S_T-1, T_1..T_T) from independent streams.
        """
        service = build(self.service).stream(self.service.rng(replica, key=(0,)), horizon).take(horizon)
        interarrival = build(self.interarrival).stream(self.interarrival.rng(replica, key=(1,)), horizon).take(
            horizon)
        return service, interarrival

    def increments(self, horizon, replica=None):
        """
        Z_1..Z_T with Z_n = S_{n-1} - T_n.
        """
        return gg1_increments(*self.samples(horizon, replica))
