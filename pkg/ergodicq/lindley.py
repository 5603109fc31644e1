"""
lindley.py
Purpose: The recursion X_{n+1} = (X_n + Z_{n+1})^+, its backward (Loynes)
construction, forward coupling detection and the queue specialisations built
on it.

All state arithmetic is plain double precision. Identities stated as exact
(expansion, conservation) hold bit for bit whenever the increments and their
partial sums are exactly representable, e.g. dyadic arrivals against s = 3/4.
"""

from dataclasses import dataclass, field
from typing import Optional
import logging
import math

import numpy as np

log = logging.getLogger(__name__)


class LindleyInputError(ValueError): pass


def _finite(name, x):
    if not math.isfinite(x):
        raise LindleyInputError("{} must be finite, got {}".format(name, x))


def _nonnegative(name, x):
    _finite(name, x)
    if x < 0:
        raise LindleyInputError("{} must be nonnegative, got {}".format(name, x))


@dataclass(frozen=True)
class IncrementWindow:
    """
    A backward sample (Z_0, Z_-1, ..., Z_-N+1), Z_0 first.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.isfinite(values).all():
            raise LindleyInputError("window increments must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def partial_sums(self):
        """
        V_0 = 0, V_n = Z_0 + Z_-1 + ... + Z_-n+1.
        """
        return np.concatenate(([0.0], np.cumsum(self.values)))

    def prefix(self, n):
        return IncrementWindow(self.values[:n])

    def shifted(self, offset):
        """
        The same window with `offset` added to every increment, e.g. Y -> Y - s.
        """
        return IncrementWindow(self.values + offset)

    def forward(self):
        """
        The increments in time order Z_-N+1, ..., Z_0.
        """
        return self.values[::-1]


@dataclass(frozen=True)
class LoynesResult:
    value: float
    argmax: int
    depth: int
    converged: bool

    def __iter__(self):
        return iter((self.value, self.argmax))


@dataclass
class QueueTrace:
    """
    X_0 ... X_T driven by Z_1 ... Z_T (`increments[k]` is Z_{k+1}).
    """

    states: np.ndarray
    increments: np.ndarray
    coupling_time: Optional[int] = None

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return float(self.states[-1])

    def validate(self):
        states = self.states
        if (states < 0).any():
            raise LindleyInputError("negative state in trace")
        expected = np.maximum(states[:-1] + self.increments, 0.0)
        if not np.array_equal(expected, states[1:]):
            bad = int(np.flatnonzero(expected != states[1:])[0])
            raise LindleyInputError("trace breaks the recursion at step {}".format(bad + 1))
        return True


def lindley_step(x, z):
    _nonnegative("x", x)
    _finite("z", z)
    x = x + z
    return x if x > 0 else 0.0


def _path(x0, increments):
    # the loop form of lindley_step, without per-step validation
    out = [x0]
    x = x0
    for z in increments:
        x = x + z
        if x < 0:
            x = 0.0
        out.append(x)
    return out


def run_recursion(x0, increments):
    _nonnegative("x0", x0)
    if not isinstance(increments, np.ndarray):
        increments = np.fromiter(increments, dtype=float)
    increments = increments.astype(float).reshape(-1)
    if not np.isfinite(increments).all():
        raise LindleyInputError("increments must be finite")
    states = np.asarray(_path(float(x0), increments.tolist()), dtype=float)
    return QueueTrace(states=states, increments=increments)


def loynes_sup(window, slack=0.0):
    """
    max over n <= N of V_n with the smallest maximising n.

    The finite window stands in for the supremum over all n; the result is
    marked converged when the argmax is interior and the last partial sum has
    fallen more than `slack` below the maximum.
    """
    sums = window.partial_sums
    argmax = int(np.argmax(sums))
    value = float(sums[argmax])
    depth = len(window)
    converged = argmax < depth and sums[-1] < value - slack
    if not converged:
        log.debug("Loynes sup truncated at depth %d (argmax %d)", depth, argmax)
    return LoynesResult(value=value, argmax=argmax, depth=depth, converged=bool(converged))


def loynes_running_max(window):
    return np.maximum.accumulate(window.partial_sums)


def stationary_start(window, increments):
    """
    The chain started from the Loynes sup of `window` and driven by the next
    increments Z_1, Z_2, ...
    """
    start = loynes_sup(window).value
    return run_recursion(start, increments)


def forward_couple(x0, increments, horizon):
    """
    Run X(x0) and X(0) on the same increments and return the first n with
    X_n(x0) == X_n(0), or None when they have not met within `horizon`.
    """
    _nonnegative("x0", x0)
    if horizon < 0:
        raise LindleyInputError("horizon must be nonnegative")
    upper = float(x0)
    lower = 0.0
    met = 0 if upper == lower else None
    n = 0
    for z in increments:
        if n >= horizon:
            break
        n += 1
        upper += z
        if upper < 0:
            upper = 0.0
        lower += z
        if lower < 0:
            lower = 0.0
        if upper < lower:
            raise LindleyInputError("ordering violated at step {}".format(n))
        if met is None:
            if upper == lower:
                met = n
        elif upper != lower:
            raise LindleyInputError("chains separated after coupling at step {}".format(n))
    return met


def coupled_run(x0, increments, horizon):
    """
    The chain from x0 over the first `horizon` increments, carrying the step
    at which it meets the chain from 0.
    """
    increments = np.asarray(increments, dtype=float).reshape(-1)
    met = forward_couple(x0, increments.tolist(), horizon)
    trace = run_recursion(x0, increments[:horizon])
    trace.coupling_time = met
    return trace


def queue_step(q, y, s):
    _nonnegative("q", q)
    _nonnegative("y", y)
    _finite("s", s)
    if s <= 0:
        raise LindleyInputError("service rate must be positive, got {}".format(s))
    return lindley_step(q, y - s)


def waiting_step(w, service_prev, interarrival):
    _nonnegative("w", w)
    _nonnegative("service_prev", service_prev)
    _nonnegative("interarrival", interarrival)
    return lindley_step(w, service_prev - interarrival)


def tandem_output(q, y, q_next):
    """
    Work leaving the server in the slot: Q_n + Y_{n+1} - Q_{n+1}.
    """
    _nonnegative("q", q)
    _nonnegative("y", y)
    _nonnegative("q_next", q_next)
    out = q + y - q_next
    if out < 0:
        raise LindleyInputError("inconsistent tandem inputs: output {} < 0".format(out))
    return out


def queue_path(arrivals, s, q0=0.0):
    """
    Q_0 ... Q_T for constant service rate s, as a float array.
    """
    _nonnegative("q0", q0)
    if s <= 0:
        raise LindleyInputError("service rate must be positive, got {}".format(s))
    arrivals = np.asarray(arrivals, dtype=float)
    if (arrivals < 0).any():
        raise LindleyInputError("arrivals must be nonnegative")
    return np.asarray(_path(float(q0), (arrivals - s).tolist()), dtype=float)


def gg1_increments(service, interarrival):
    """
    Z_n = S_{n-1} - T_n: `service[k]` is S_k and `interarrival[k]` is T_{k+1}.
    """
    service = np.asarray(service, dtype=float)
    interarrival = np.asarray(interarrival, dtype=float)
    if service.shape != interarrival.shape:
        raise LindleyInputError("service and interarrival samples differ in length")
    if (service < 0).any() or (interarrival < 0).any():
        raise LindleyInputError("service and interarrival times must be nonnegative")
    return service - interarrival


def waiting_path(service, interarrival, w0=0.0):
    _nonnegative("w0", w0)
    return run_recursion(w0, gg1_increments(service, interarrival))


@dataclass
class TandemTrace:
    arrivals: np.ndarray
    first: np.ndarray
    first_output: np.ndarray
    second: np.ndarray
    second_output: np.ndarray
    rates: tuple = field(default=(1.0, 1.0))

    @property
    def input_total(self):
        return float(np.sum(self.arrivals))

    @property
    def output_total(self):
        return float(np.sum(self.first_output))

    def conserved(self):
        """
        Cumulative input minus cumulative output equals the change in backlog,
        at each stage.
        """
        first = self.input_total - self.output_total == self.first[-1] - self.first[0]
        second = float(np.sum(self.first_output)) - float(np.sum(self.second_output)) == \
            self.second[-1] - self.second[0]
        return bool(first and second)


def _stage(arrivals, s):
    states = queue_path(arrivals, s)
    outputs = np.asarray([tandem_output(q, y, q_next) for q, y, q_next
                          in zip(states[:-1].tolist(), arrivals.tolist(), states[1:].tolist())], dtype=float)
    return states, outputs


def tandem_run(arrivals, s1, s2):
    """
    Two servers in series; the second is fed by the departures of the first.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    first, first_output = _stage(arrivals, s1)
    second, second_output = _stage(first_output, s2)
    return TandemTrace(arrivals=arrivals, first=first, first_output=first_output,
                       second=second, second_output=second_output, rates=(s1, s2))
