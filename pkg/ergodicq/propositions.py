"""
propositions.py
Purpose: The sub-exponential tail experiments on the odometer process: the
exact measure chain that puts P{Q > q_i} above 2^(-q_i / i), and the cumulant
sandwich that drives lambda(theta) to theta.

The exact parts are sampling free; Monte Carlo columns sit beside them for
comparison only.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional
import logging
import math

import numpy as np

from ergodicq import odometer
from ergodicq.estimators import lambda_from_sums
from ergodicq.processes import OdometerProcess, ProcessSpec

log = logging.getLogger(__name__)

SERVICE_RATE = Fraction(3, 4)

_BATCH = 1 << 18


def fraction_text(value):
    value = Fraction(value)
    return "{}/{}".format(value.numerator, value.denominator)


@dataclass(frozen=True)
class Prop1Params:
    """
    delta_i = 1/i, q_i = 2 i^2, n_i = 2^(i-1) at service rate 3/4.
    """

    i: int

    def __post_init__(self):
        if self.i < 1:
            raise ValueError("i must be at least 1, got {}".format(self.i))

    @property
    def delta(self):
        return Fraction(1, self.i)

    @property
    def q(self):
        return 2 * self.i ** 2

    @property
    def n(self):
        return 1 << (self.i - 1)

    @property
    def s(self):
        return SERVICE_RATE

    @property
    def threshold(self):
        return SERVICE_RATE * self.n + self.q

    @property
    def chain_holds(self):
        """
        n_i / 4 > q_i, i.e. 2^(i-3) > 2 i^2.
        """
        return Fraction(self.n, 4) > self.q


@dataclass
class Prop1Report:
    params: Prop1Params
    mu_A: Fraction
    target: Fraction
    exact_pass: bool
    m: int
    hits: int
    all_ones_checked: int = 0
    all_ones_failures: int = 0

    @property
    def estimate(self):
        return self.hits / self.m if self.m else math.nan

    @property
    def stderr(self):
        if not self.m:
            return math.nan
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.m)

    def to_json(self):
        p = self.params
        return {
            "i": p.i,
            "n_i": p.n,
            "q_i": p.q,
            "delta_i": fraction_text(p.delta),
            "s": fraction_text(p.s),
            "threshold": fraction_text(p.threshold),
            "mu_A": fraction_text(self.mu_A),
            "target": fraction_text(self.target),
            "pass": self.exact_pass,
            "chain_holds": p.chain_holds,
            "lower_bound_valid": p.chain_holds,
            "m": self.m,
            "hits": self.hits,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "all_ones_checked": self.all_ones_checked,
            "all_ones_failures": self.all_ones_failures,
        }


def _process(precision, seed):
    return OdometerProcess(ProcessSpec.odometer(precision, seed=seed))


def backward_sums(process, omega, n):
    out = [process.sums_from(omega[k:k + _BATCH], n, "backward") for k in range(0, len(omega), _BATCH)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def all_ones_failures(i, samples, rng, precision=odometer.DEFAULT_PRECISION):
    """
    Number of points drawn uniformly from A_i whose backward window of n_i
    steps is not all ones.
    """
    n = 1 << (i - 1)
    process = _process(precision, 0)
    omega = odometer.sample_A_counters(i, rng, samples, precision)
    return int(np.sum(backward_sums(process, omega, n) != n))


def prop1_experiment(params, m, seed=0, precision=odometer.DEFAULT_PRECISION, all_ones=0):
    """
    Exact: mu(A_i) = 2^(-i-2) against 2^(-delta_i q_i) = 2^(-2i). Sampled:
    the fraction of m uniform w with sum_{j<n_i} Y_-j > (3/4) n_i + q_i.
    """
    i = params.i
    a_set = odometer.set_A(i, precision)
    mu_A = a_set.measure
    target = Fraction(1, 1 << (2 * i))
    if not params.chain_holds:
        log.info("i=%d: n_i/4 = %d does not exceed q_i = %d; mu(A_i) is not a lower bound here",
                 i, params.n // 4, params.q)

    process = _process(precision, seed)
    rng = process.spec.rng()
    hits = 0
    n = params.n
    # 4 * sum > 3 n + 4 q keeps the comparison in integers
    bound = 3 * n + 4 * params.q
    for start in range(0, m, _BATCH):
        omega = process.draw_omega(rng, min(_BATCH, m - start), room_above=n)
        hits += int(np.sum(4 * process.sums_from(omega, n, "backward") > bound))

    failures = 0
    if all_ones:
        failures = all_ones_failures(i, all_ones, process.spec.rng(key=(1,)), precision)
        if failures:
            log.error("i=%d: %d of %d points of A_i miss the all-ones window", i, failures, all_ones)

    return Prop1Report(params=params, mu_A=mu_A, target=target, exact_pass=mu_A > target,
                       m=m, hits=hits, all_ones_checked=all_ones, all_ones_failures=failures)


@dataclass
class Prop2Report:
    i: int
    theta: float
    n: int
    mu_A: Fraction
    upper: float
    lower_sandwich: float
    lower_jensen: float
    m: int
    lambda_hat: Optional[float]
    stderr: Optional[float]
    hits: int

    @property
    def lower(self):
        return max(self.lower_sandwich, self.lower_jensen)

    @property
    def gap(self):
        return self.upper - self.lower

    @property
    def mc_visible_lower(self):
        """
        The windows that came out all ones alone force
        lambda_hat >= theta + log(hits / m) / n on these samples.
        """
        if not self.hits:
            return None
        return (self.theta * self.n + math.log(self.hits / self.m)) / self.n

    def to_json(self):
        return {
            "i": self.i,
            "theta": self.theta,
            "n_i": self.n,
            "mu_A": fraction_text(self.mu_A),
            "upper": self.upper,
            "lower": self.lower,
            "lower_sandwich": self.lower_sandwich,
            "lower_jensen": self.lower_jensen,
            "gap": self.gap,
            "m": self.m,
            "lambda_hat": self.lambda_hat,
            "stderr": self.stderr,
            "hits": self.hits,
            "mc_visible_lower": self.mc_visible_lower,
        }


def forward_block_sums(i, m, seed=0, precision=odometer.DEFAULT_PRECISION):
    """
    m independent sums Y_1 + ... + Y_{n_i} from uniform w.
    """
    n = 1 << (i - 1)
    process = _process(precision, seed)
    rng = process.spec.rng()
    out = []
    for start in range(0, m, _BATCH):
        omega = process.draw_omega(rng, min(_BATCH, m - start), room_below=n)
        out.append(process.sums_from(omega, n, "forward"))
    return np.concatenate(out).astype(float) if out else np.zeros(0)


def prop2_sweep(i, thetas, m, seed=0, precision=odometer.DEFAULT_PRECISION):
    """
    Upper bound theta (Y <= 1); lower bounds theta + ln(mu(A_i)) / n_i from
    the all-ones windows and theta E Y from Jensen; a Monte Carlo lambda_hat
    at block length n_i for comparison. One sample set serves every theta.
    """
    params = Prop1Params(i)
    n = params.n
    mu_A = odometer.set_A(i, precision).measure
    mean = float(odometer.c_set(precision).measure)
    sums = forward_block_sums(i, m, seed, precision) if m else None
    hits = int(np.sum(sums == n)) if m else 0

    reports = []
    for theta in thetas:
        theta = float(theta)
        lambda_hat, stderr = lambda_from_sums(sums, theta, n) if m else (None, None)
        reports.append(Prop2Report(i=i, theta=theta, n=n, mu_A=mu_A, upper=theta,
                                   lower_sandwich=theta - (i + 2) * math.log(2) / n,
                                   lower_jensen=theta * mean, m=m, lambda_hat=lambda_hat,
                                   stderr=stderr, hits=hits))
    return reports


def prop2_experiment(i, theta, m, seed=0, precision=odometer.DEFAULT_PRECISION):
    return prop2_sweep(i, [theta], m, seed, precision)[0]
