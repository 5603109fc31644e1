"""
estimators.py
Purpose: Tail and cumulant estimation for queues fed by stationary arrivals:
empirical P{Q > q}, the cumulant lambda(theta) and its decay rate delta, the
scaled cumulant for user scalings, and time-average tail and coupling runs.
"""

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional
import logging
import math

import numpy as np
from scipy import optimize, stats

from ergodicq import lindley, processes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TailEstimate:
    thresholds: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    count: int
    slope: Optional[float] = None
    slope_stderr: Optional[float] = None

    def rows(self):
        return zip(self.thresholds.tolist(), self.survival.tolist(), self.stderr.tolist())


def empirical_tail(samples, thresholds):
    """
    #{samples > q} / m for each threshold, with binomial standard errors.
    """
    samples = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    m = len(samples)
    if m < 1:
        raise ValueError("empirical_tail needs at least one sample")
    thresholds = np.asarray(thresholds, dtype=float).reshape(-1)
    above = m - np.searchsorted(samples, thresholds, side="right")
    survival = above / m
    stderr = np.sqrt(survival * (1 - survival) / m)
    return TailEstimate(thresholds=thresholds, survival=survival, stderr=stderr, count=m)


def fit_log_slope(tail, min_points=3):
    """
    Least-squares slope of log P{Q > q} against q over the thresholds with
    positive survival.
    """
    keep = tail.survival > 0
    if keep.sum() < min_points:
        return None, None
    fit = stats.linregress(tail.thresholds[keep], np.log(tail.survival[keep]))
    return float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class DecayRate:
    delta: Optional[float]
    exceeds_grid: bool = False


@dataclass(frozen=True)
class CumulantEstimate:
    thetas: np.ndarray
    lambda_hat: np.ndarray
    stderr: np.ndarray
    n: int
    m: int
    sample_mean: float
    s: Optional[float] = None
    decay: Optional[DecayRate] = None

    @property
    def delta(self):
        return None if self.decay is None else self.decay.delta

    def jensen_floor(self):
        """
        theta times the per-step sample mean: lambda_hat never falls below it.
        """
        return self.thetas * self.sample_mean

    def is_convex(self, tol=1e-9):
        if len(self.thetas) < 3:
            return True
        slopes = np.diff(self.lambda_hat) / np.diff(self.thetas)
        return bool((np.diff(slopes) >= -tol).all())


def _log_mean_exp(a):
    # shifted so identical exponents give log(1) = 0 exactly
    top = float(np.max(a))
    w = np.exp(a - top)
    mean = float(np.mean(w))
    return top + math.log(mean), w, mean


def lambda_from_sums(sums, theta, n):
    """
    (1/n) log mean exp(theta * S) over window sums S, with a delta-method
    standard error.
    """
    sums = np.asarray(sums, dtype=float)
    m = len(sums)
    if m < 1 or n < 1:
        raise ValueError("need at least one window sum of positive length")
    value, w, mean = _log_mean_exp(theta * sums)
    stderr = float(np.std(w, ddof=1)) / (math.sqrt(m) * mean) / n if m > 1 else math.nan
    return value / n, stderr


def estimate_lambda(spec, theta, n, m, replica=None):
    sums = processes.window_sums(spec, n, m, replica=replica)
    return lambda_from_sums(sums, theta, n)[0]


def estimate_cumulant(spec, thetas, n, m, s=None, replica=None):
    """
    lambda_hat over a theta grid, every point computed on the same m window
    sums.
    """
    thetas = np.asarray(thetas, dtype=float)
    sums = processes.window_sums(spec, n, m, replica=replica)
    return cumulant_from_sums(sums, thetas, n, s=s)


def cumulant_from_sums(sums, thetas, n, s=None):
    thetas = np.asarray(thetas, dtype=float)
    points = [lambda_from_sums(sums, theta, n) for theta in thetas.tolist()]
    curve = CumulantEstimate(thetas=thetas, lambda_hat=np.asarray([p[0] for p in points], dtype=float),
                             stderr=np.asarray([p[1] for p in points], dtype=float), n=n, m=len(sums),
                             sample_mean=float(np.mean(sums)) / n, s=s)
    if s is not None and 0.0 in thetas:
        curve = dataclasses.replace(curve, decay=decay_delta(curve, s))
    return curve


def decay_delta(curve, s):
    """
    sup{theta > 0 : lambda(theta) - theta s < 0} on the piecewise-linear
    interpolant of the grid. The grid maximum is a hard boundary: a set that
    reaches it is reported there with `exceeds_grid`.
    """
    thetas = np.asarray(curve.thetas, dtype=float)
    if 0.0 not in thetas:
        raise ValueError("decay_delta needs a theta grid containing 0")
    order = np.argsort(thetas)
    thetas = thetas[order]
    g = np.asarray(curve.lambda_hat, dtype=float)[order] - thetas * s
    negative = np.flatnonzero((g < 0) & (thetas > 0))
    if not len(negative):
        return DecayRate(None)
    k = int(negative[-1])
    if k == len(thetas) - 1:
        log.info("decay set reaches the grid maximum %s", thetas[-1])
        return DecayRate(float(thetas[-1]), exceeds_grid=True)
    root = optimize.brentq(lambda t: np.interp(t, thetas, g), thetas[k], thetas[k + 1], xtol=1e-14)
    return DecayRate(float(root))


def bernoulli_lambda(p, theta):
    """
    log(1 - p + p e^theta), the cumulant of iid Bernoulli(p) arrivals.
    """
    return np.log1p(p * np.expm1(theta))


def markov_lambda(p01, p10, theta):
    """
    Cumulant of a stationary binary Markov chain: log of the spectral radius
    of the transition matrix tilted by e^(theta y).
    """
    theta = np.asarray(theta, dtype=float)
    out = []
    for t in theta.reshape(-1).tolist():
        tilted = np.array([[1 - p01, p01 * math.exp(t)],
                           [p10, (1 - p10) * math.exp(t)]])
        out.append(math.log(max(abs(np.linalg.eigvals(tilted)))))
    return np.asarray(out).reshape(theta.shape) if theta.ndim else out[0]


def closed_form_lambda(spec, theta):
    """
    Exact cumulant where one is known, else None.
    """
    if spec.kind == "iid-bernoulli":
        return bernoulli_lambda(spec.params[0], theta)
    if spec.kind == "binary-markov":
        return markov_lambda(*spec.params, theta)
    if spec.kind == "iid-table":
        values, probs = spec.params
        values = np.asarray(values)
        top = values.max()
        theta = np.asarray(theta, dtype=float)
        return theta * top + np.log(np.exp(np.multiply.outer(theta, values - top)) @ np.asarray(probs))
    return None


@dataclass(frozen=True)
class ScalingFunctions:
    """
    The increasing scalings a(n), v(n) of the scaled cumulant, with a's
    inverse for the tail expression.
    """

    a: Callable
    v: Callable
    a_inv: Callable
    label: str = "custom"

    @classmethod
    def power(cls, alpha, beta):
        if alpha <= 0 or beta <= 0:
            raise ValueError("power scalings need positive exponents")
        return cls(a=lambda n: float(n) ** alpha, v=lambda n: float(n) ** beta,
                   a_inv=lambda q: float(q) ** (1 / alpha), label="power:{},{}".format(alpha, beta))

    @classmethod
    def linear(cls):
        return cls.power(1, 1)

    def check(self, grid):
        grid = sorted(grid)
        for name, fn in (("a", self.a), ("v", self.v)):
            values = [fn(n) for n in grid]
            if any(v <= 0 for v in values):
                raise ValueError("scaling {} must be positive on the grid".format(name))
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError("scaling {} must be increasing on the grid".format(name))
        return True


def scaled_lambda_from_sums(sums, theta, scaling, s, n):
    a, v = scaling.a(n), scaling.v(n)
    if a <= 0 or v <= 0:
        raise ValueError("scalings must be positive, got a(n)={}, v(n)={}".format(a, v))
    centred = np.asarray(sums, dtype=float) - n * s
    value, w, mean = _log_mean_exp(theta * (v / a) * centred)
    m = len(centred)
    stderr = float(np.std(w, ddof=1)) / (math.sqrt(m) * mean) / v if m > 1 else math.nan
    return value / v, stderr


def estimate_scaled_lambda(spec, theta, scaling, s, n, m, replica=None):
    scaling.check(range(1, n + 1))
    sums = processes.window_sums(spec, n, m, replica=replica)
    return scaled_lambda_from_sums(sums, theta, scaling, s, n)[0]


def estimate_scaled_cumulant(spec, thetas, scaling, s, n, m, replica=None):
    scaling.check(range(1, n + 1))
    thetas = np.asarray(thetas, dtype=float)
    sums = processes.window_sums(spec, n, m, replica=replica)
    values, errors = zip(*(scaled_lambda_from_sums(sums, t, scaling, s, n) for t in thetas.tolist()))
    curve = CumulantEstimate(thetas=thetas, lambda_hat=np.asarray(values), stderr=np.asarray(errors),
                             n=n, m=m, sample_mean=float(np.mean(sums)) / n, s=s)
    return curve


def scaled_decay_delta(curve):
    """
    sup{theta : lambda*(theta) < 0}; lambda* is already centred.
    """
    return decay_delta(curve, 0.0)


def scaled_tail_approximation(delta, scaling, q):
    return math.exp(-delta * scaling.v(scaling.a_inv(q)))


def queue_tail_run(spec, s, horizon, thresholds, burn_in=None, replica=None):
    """
    Stationary P{Q > q} from the occupation of one long run of
    Q_{n+1} = (Q_n - s + Y_{n+1})^+ after burn-in, plus the fitted slope of the
    log-survival curve.
    """
    if burn_in is None:
        burn_in = horizon // 10
    if horizon <= burn_in:
        raise ValueError("horizon {} must exceed burn-in {}".format(horizon, burn_in))
    arrivals = processes.forward_stream(spec, replica, length=horizon).take(horizon)
    mean = float(np.mean(arrivals))
    if mean >= s:
        log.warning("sample mean %.6g is not below s=%s; the queue may be unstable", mean, s)
    states = lindley.queue_path(arrivals, s)
    tail = empirical_tail(states[burn_in + 1:], thresholds)
    slope, slope_stderr = fit_log_slope(tail)
    return TailEstimate(thresholds=tail.thresholds, survival=tail.survival, stderr=tail.stderr,
                        count=tail.count, slope=slope, slope_stderr=slope_stderr)


@dataclass
class CouplingReport:
    times: list
    stable: bool
    mean: float
    s: float
    horizon: int
    x0: float
    skipped: bool = False

    @property
    def coupled(self):
        return sum(t is not None for t in self.times)


def coupling_replica(spec, s, x0, horizon, replica):
    """
    Coupling time of the chains from x0 and from 0 for one replica.
    """
    stream = processes.forward_stream(spec, replica, length=horizon)
    increments = stream.take(horizon) - s
    return lindley.coupled_run(x0, increments, horizon).coupling_time


def coupling_study(spec, s, x0, replicas, horizon, gather=None, mean_horizon=None, skip_unstable=True):
    """
    Replicated forward coupling. Loads with a sample mean at or above s are
    flagged unstable and, by default, not run.
    """
    mean = processes.mean_estimate(spec, mean_horizon or horizon, replica=replicas)
    stable = mean < s
    if not stable:
        log.warning("sample mean %.6g >= s=%s: unstable load", mean, s)
        if skip_unstable:
            return CouplingReport(times=[], stable=False, mean=mean, s=s, horizon=horizon, x0=x0, skipped=True)

    def job(replica):
        return coupling_replica(spec, s, x0, horizon, replica)

    if gather is None:
        times = [job(r) for r in range(replicas)]
    else:
        times = gather(job, replicas)
    return CouplingReport(times=list(times), stable=stable, mean=mean, s=s, horizon=horizon, x0=x0)
