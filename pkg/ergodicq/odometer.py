"""
odometer.py
Purpose: The dyadic odometer T on [0, 1) and exact measures of finite unions
of dyadic sets.

A point r = sum r_l 2^-l is held as its K-bit counter c = sum r_l 2^(l-1),
so r_1 is the least significant counter bit. In that representation T is
c -> c - 1, the reversed-binary interval I_j^i is the residue class
c = j (mod 2^i), and every set the queueing construction needs is a finite
union of cylinders {c : c & mask == value}.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
import logging

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_PRECISION = 64


class ExceptionalPointError(ValueError): pass


class OrbitRangeError(ValueError): pass


class PrecisionError(ValueError): pass


def _reverse_bits(x, width):
    if width == 0:
        return 0
    return int(format(x, "0{}b".format(width))[::-1], 2)


def _check_precision(precision):
    if not 1 <= precision:
        raise PrecisionError("precision must be positive, got {}".format(precision))


class DyadicPoint:
    """
    A point of [0, 1) with a K-bit binary expansion, stored as its counter.
    """

    __slots__ = ("counter", "precision")

    def __init__(self, counter, precision=DEFAULT_PRECISION):
        _check_precision(precision)
        counter = int(counter)
        if not 0 <= counter < 1 << precision:
            raise ValueError("counter {} outside [0, 2^{})".format(counter, precision))
        self.counter = counter
        self.precision = precision

    @classmethod
    def from_bits(cls, bits, precision=None):
        """
        Build a point from r_1, r_2, ... (r_1 has weight 1/2). Missing trailing
        bits are zero.
        """
        bits = [int(b) for b in bits]
        if precision is None:
            precision = max(len(bits), 1)
        if len(bits) > precision:
            raise PrecisionError("{} bits do not fit precision {}".format(len(bits), precision))
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        return cls(sum(b << l for l, b in enumerate(bits)), precision)

    @classmethod
    def from_value(cls, value, precision=DEFAULT_PRECISION):
        """
        Exact conversion from a dyadic rational (or float) in [0, 1).
        """
        _check_precision(precision)
        value = Fraction(value)
        if not 0 <= value < 1:
            raise ValueError("value {} outside [0, 1)".format(value))
        scaled = value * (1 << precision)
        if scaled.denominator != 1:
            raise PrecisionError("{} has no {}-bit binary expansion".format(value, precision))
        return cls(_reverse_bits(scaled.numerator, precision), precision)

    @classmethod
    def from_json(cls, data):
        return cls(int(data["counter"], 16), int(data["precision"]))

    @property
    def bits(self):
        return tuple((self.counter >> l) & 1 for l in range(self.precision))

    @property
    def value(self):
        return Fraction(_reverse_bits(self.counter, self.precision), 1 << self.precision)

    def is_zero(self):
        return self.counter == 0

    def is_all_ones(self):
        return self.counter == (1 << self.precision) - 1

    def to_json(self):
        return {"counter": format(self.counter, "x"), "precision": self.precision}

    def __eq__(self, other):
        if not isinstance(other, DyadicPoint):
            return NotImplemented
        return self.counter == other.counter and self.precision == other.precision

    def __hash__(self):
        return hash((self.counter, self.precision))

    def __repr__(self):
        return "DyadicPoint(0x{:x}, K={})".format(self.counter, self.precision)


def tau(p):
    """
    Index of the first 1 bit of the expansion.
    """
    if p.is_zero():
        raise ExceptionalPointError("tau is undefined at the exceptional point 0")
    return (p.counter & -p.counter).bit_length()


def apply_T(p):
    """
    Bits before tau become 1, bit tau becomes 0, the rest are kept: the
    counter goes down by one.
    """
    if p.is_zero():
        raise ExceptionalPointError("T is undefined at the exceptional point 0")
    return DyadicPoint(p.counter - 1, p.precision)


def apply_T_inv(p):
    if p.is_all_ones():
        raise ExceptionalPointError("the all-ones point is the preimage of 0 and has no T^-1 in the window")
    return DyadicPoint(p.counter + 1, p.precision)


def apply_T_pow(p, k):
    counter = p.counter - k
    if not 0 <= counter < 1 << p.precision:
        raise OrbitRangeError("orbit leaves representable window: counter {} - {}".format(p.counter, k))
    return DyadicPoint(counter, p.precision)


def apply_T_exact(value):
    """
    The recursive form of T on an exact dyadic rational: r - 1/2 on [1/2, 1),
    (1 + T(2r)) / 2 below.
    """
    value = Fraction(value)
    if value == 0:
        raise ExceptionalPointError("T is undefined at the exceptional point 0")
    if not 0 < value < 1:
        raise ValueError("value {} outside [0, 1)".format(value))
    if value >= Fraction(1, 2):
        return value - Fraction(1, 2)
    return (1 + apply_T_exact(2 * value)) / 2


def interval_index(p, depth):
    if not 0 <= depth <= p.precision:
        raise PrecisionError("depth {} outside [0, {}]".format(depth, p.precision))
    return p.counter & ((1 << depth) - 1)


@dataclass(frozen=True, order=True)
class Cylinder:
    """
    The counters with c & mask == value, i.e. the points whose bits at the
    mask positions are fixed.
    """

    mask: int
    value: int

    def __post_init__(self):
        if self.value & ~self.mask:
            raise ValueError("cylinder value 0x{:x} has bits outside mask 0x{:x}".format(self.value, self.mask))

    @property
    def measure(self):
        return Fraction(1, 1 << bin(self.mask).count("1"))

    @property
    def depth(self):
        return self.mask.bit_length()

    def contains_counter(self, counter):
        return counter & self.mask == self.value

    def subsumes(self, other):
        return self.mask & other.mask == self.mask and other.value & self.mask == self.value

    def intervals(self):
        """
        Expand into the reversed-binary intervals of depth `self.depth`.
        """
        depth = self.depth
        free = [b for b in range(depth) if not self.mask >> b & 1]
        for combo in range(1 << len(free)):
            index = self.value
            for k, b in enumerate(free):
                if combo >> k & 1:
                    index |= 1 << b
            yield DyadicInterval(depth, index)


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """
    I_j^i: the points whose first i bits are the reversed binary expansion of j.
    """

    depth: int
    index: int

    def __post_init__(self):
        if self.depth < 0 or not 0 <= self.index < 1 << self.depth:
            raise ValueError("no interval I_{}^{}".format(self.index, self.depth))

    @property
    def measure(self):
        return Fraction(1, 1 << self.depth)

    @property
    def left(self):
        return Fraction(_reverse_bits(self.index, self.depth), 1 << self.depth)

    @property
    def right(self):
        return self.left + self.measure

    @property
    def cylinder(self):
        return Cylinder((1 << self.depth) - 1, self.index)

    def __contains__(self, p):
        return self.depth <= p.precision and interval_index(p, self.depth) == self.index


def interval_image(interval):
    """
    T maps I_j^i onto I_{j-1}^i; I_0^i goes to I_{2^i-1}^i up to the null set
    {0}.
    """
    if interval.depth == 0:
        return interval
    return DyadicInterval(interval.depth, (interval.index - 1) % (1 << interval.depth))


@lru_cache(maxsize=None)
def _union_measure(cylinders):
    # cylinders: frozenset of (mask, value); branch on the lowest fixed bit
    if not cylinders:
        return Fraction(0)
    if any(mask == 0 for mask, _ in cylinders):
        return Fraction(1)
    low = min(mask & -mask for mask, _ in cylinders)
    total = Fraction(0)
    for bit in (0, low):
        branch = frozenset((mask & ~low, value & ~low) for mask, value in cylinders
                           if not mask & low or value & low == bit)
        total += _union_measure(branch)
    return total / 2


def _normalize(cylinders):
    current = set(cylinders)
    while True:
        by_mask = {}
        for c in current:
            by_mask.setdefault(c.mask, set()).add(c.value)

        merged = set()
        used = set()
        for mask, values in by_mask.items():
            for value in sorted(values):
                if (mask, value) in used:
                    continue
                bit = mask
                while bit:
                    top = 1 << (bit.bit_length() - 1)
                    bit &= ~top
                    sibling = value ^ top
                    if sibling in values and (mask, sibling) not in used:
                        used.add((mask, value))
                        used.add((mask, sibling))
                        merged.add(Cylinder(mask & ~top, value & ~top))
                        break
        survivors = {c for c in current if (c.mask, c.value) not in used} | merged

        masks = sorted({c.mask for c in survivors}, key=lambda m: bin(m).count("1"))
        keys = {(c.mask, c.value) for c in survivors}
        pruned = set()
        for c in survivors:
            if any(m != c.mask and m & c.mask == m and (m, c.value & m) in keys for m in masks):
                continue
            pruned.add(c)

        if pruned == current:
            return tuple(sorted(pruned))
        current = pruned


class DyadicIntervalSet:
    """
    A finite union of dyadic cylinders with exact rational measure.

    Sibling cylinders are merged and covered ones dropped, so the stored
    components are canonical for unions of intervals; equality and
    containment are decided by exact measure.
    """

    def __init__(self, cylinders=()):
        self.cylinders = _normalize(cylinders)

    @classmethod
    def from_intervals(cls, intervals):
        return cls(i.cylinder for i in intervals)

    @cached_property
    def measure(self):
        return _union_measure(frozenset((c.mask, c.value) for c in self.cylinders))

    @property
    def depth(self):
        return max((c.depth for c in self.cylinders), default=0)

    def __contains__(self, p):
        return any(c.contains_counter(p.counter) for c in self.cylinders)

    def union(self, other):
        return DyadicIntervalSet(self.cylinders + other.cylinders)

    __or__ = union

    def issubset(self, other):
        return self.union(other).measure == other.measure

    __le__ = issubset

    def __eq__(self, other):
        if not isinstance(other, DyadicIntervalSet):
            return NotImplemented
        return self.issubset(other) and other.issubset(self)

    __hash__ = None

    def is_empty(self):
        return not self.cylinders

    def intervals(self, limit=1 << 16):
        """
        Sorted (depth, index) decomposition; refuses to expand past `limit`
        intervals.
        """
        size = sum(1 << (c.depth - bin(c.mask).count("1")) for c in self.cylinders)
        if size > limit:
            raise ValueError("set expands to {} intervals, limit is {}".format(size, limit))
        return sorted(i for c in self.cylinders for i in c.intervals())

    def to_json(self, limit=4096):
        try:
            return {"intervals": [[i.depth, i.index] for i in self.intervals(limit)],
                    "measure": _fraction_str(self.measure)}
        except ValueError:
            return {"cylinders": [{"mask": format(c.mask, "x"), "value": format(c.value, "x")}
                                  for c in self.cylinders],
                    "measure": _fraction_str(self.measure)}

    def contains_counters(self, counters):
        """
        Vectorised membership over an array of uint64 counters.
        """
        counters = np.asarray(counters, dtype=np.uint64)
        hit = np.zeros(counters.shape, dtype=bool)
        for c in self.cylinders:
            hit |= (counters & np.uint64(c.mask)) == np.uint64(c.value)
        return hit

    def count_below(self, limits):
        """
        For each x of `limits`, the exact number of counters c < x in the set.

        Walks the bits of x from the bottom: every set bit p of x contributes
        the members among counters sharing x's bits above p, having 0 at p and
        anything below, which is 2^p times the measure of the cylinders still
        alive under that prefix.
        """
        x = np.asarray(limits, dtype=np.uint64)
        total = np.zeros(x.shape, dtype=np.uint64)
        if not x.size:
            return total
        for p in range(int(x.max()).bit_length()):
            selected = ((x >> np.uint64(p)) & np.uint64(1)) == np.uint64(1)
            if not selected.any():
                continue
            y = x[selected] & np.uint64(~((2 << p) - 1) & 0xFFFFFFFFFFFFFFFF)
            below = (1 << p) - 1

            full = np.zeros(y.shape, dtype=bool)
            base = []
            mixed = []
            columns = []
            for c in self.cylinders:
                hi = c.mask & ~below
                if not hi:
                    base.append((c.mask, c.value))
                    continue
                alive = (y & np.uint64(hi)) == np.uint64(c.value & hi)
                if not c.mask & below:
                    full |= alive
                else:
                    mixed.append((c.mask & below, c.value & below))
                    columns.append(alive)

            counts = np.zeros(y.shape, dtype=np.uint64)
            if columns:
                patterns, inverse = np.unique(np.stack(columns, axis=1), axis=0, return_inverse=True)
                inverse = np.asarray(inverse).reshape(-1)
                per_pattern = []
                for pattern in patterns:
                    alive = frozenset(base) | frozenset(m for m, a in zip(mixed, pattern) if a)
                    per_pattern.append(_block_count(alive, p))
                counts = np.asarray(per_pattern, dtype=np.uint64)[inverse]
            elif base:
                counts[:] = np.uint64(_block_count(frozenset(base), p))
            counts[full] = np.uint64(1 << p)
            total[selected] += counts
        return total

    def count_range(self, starts, length):
        """
        Exact number of members among the consecutive counters
        start, start + 1, ..., start + length - 1.
        """
        starts = np.asarray(starts, dtype=np.uint64)
        ends = starts + np.uint64(length)
        if (ends < starts).any():
            raise OrbitRangeError("counter range of length {} wraps past 2^64".format(length))
        return (self.count_below(ends) - self.count_below(starts)).astype(np.int64)

    def __repr__(self):
        return "DyadicIntervalSet({} cylinders, measure={})".format(len(self.cylinders), self.measure)


def _block_count(cylinders, p):
    measure = _union_measure(cylinders)
    return (measure * (1 << p)).numerator


def _fraction_str(value):
    value = Fraction(value)
    return "{}/{}".format(value.numerator, value.denominator)


def _require_depth(depth, precision):
    if depth > precision:
        raise PrecisionError("depth {} exceeds precision {}".format(depth, precision))


def _band(i, low_bit_value):
    # bits i-1 .. 2i of the counter (positions i .. 2i+1 of the expansion)
    mask = ((1 << (i + 2)) - 1) << (i - 1)
    return Cylinder(mask, low_bit_value << (i - 1))


def set_A(i, precision=DEFAULT_PRECISION):
    """
    A_i = union of I_j^{2i+1}, 0 <= j < 2^(i-1): bits i..2i+1 all zero.
    """
    if i < 0:
        raise ValueError("i must be nonnegative")
    if i == 0:
        return DyadicIntervalSet()
    _require_depth(2 * i + 1, precision)
    return DyadicIntervalSet([_band(i, 0)])


def set_B(i, precision=DEFAULT_PRECISION):
    """
    B_0 = [0, 1/4); B_i = union of I_j^{2i+1}, 2^(i-1) <= j < 2^i: bit i set,
    bits i+1..2i+1 zero.
    """
    if i < 0:
        raise ValueError("i must be nonnegative")
    if i == 0:
        _require_depth(2, precision)
        return DyadicIntervalSet([Cylinder(0b11, 0)])
    _require_depth(2 * i + 1, precision)
    return DyadicIntervalSet([_band(i, 1)])


def in_A(p, i):
    return p in set_A(i, p.precision)


def in_B(p, i):
    return p in set_B(i, p.precision)


def max_band(precision=DEFAULT_PRECISION):
    """
    Largest i whose band fits in K bits: floor((K - 1) / 2).
    """
    return (precision - 1) // 2


def set_C_truncated(i_max, precision=DEFAULT_PRECISION):
    """
    Union of B_0..B_{i_max} and the bound 2^-(i_max+2) on what the missing
    bands can add.
    """
    if i_max < 0:
        raise ValueError("i_max must be nonnegative")
    _require_depth(2 * i_max + 1, precision)
    return _c_set(i_max, precision), Fraction(1, 1 << (i_max + 2))


@lru_cache(maxsize=None)
def _c_set(i_max, precision):
    cylinders = []
    for i in range(i_max + 1):
        cylinders.extend(set_B(i, precision).cylinders)
    return DyadicIntervalSet(cylinders)


def c_set(precision=DEFAULT_PRECISION, i_max=None):
    """
    The implemented C at precision K: every band that fits in the window.
    """
    if i_max is None:
        i_max = max_band(precision)
    return set_C_truncated(i_max, precision)[0]


def in_C(p, i_max=None):
    return p in c_set(p.precision, i_max)


def random_counters(rng, size, precision=DEFAULT_PRECISION):
    """
    Uniform counters from K fair bits, resampling the orbit endpoints 0 and
    2^K - 1.
    """
    if precision > 64:
        raise PrecisionError("vectorised sampling supports K <= 64, got {}".format(precision))
    if precision < 2:
        raise PrecisionError("precision {} leaves no interior points".format(precision))
    # [1, 2^K - 1) is the same as drawing K bits and resampling both endpoints
    return rng.integers(1, (1 << precision) - 1, size=size, dtype=np.uint64, endpoint=False)


def random_point(rng, precision=DEFAULT_PRECISION):
    if precision <= 64:
        return DyadicPoint(int(random_counters(rng, 1, precision)[0]), precision)
    words = (precision + 31) // 32
    while True:
        chunks = rng.integers(0, 1 << 32, size=words, dtype=np.uint64)
        counter = sum(int(w) << (32 * k) for k, w in enumerate(chunks)) & ((1 << precision) - 1)
        if 0 < counter < (1 << precision) - 1:
            return DyadicPoint(counter, precision)


def sample_A_counters(i, rng, size, precision=DEFAULT_PRECISION):
    """
    Uniform counters on A_i: low bits j < 2^(i-1), bits i-1..2i zero, the
    remaining high bits fair.
    """
    if i < 1:
        raise ValueError("A_i is empty for i < 1")
    depth = 2 * i + 1
    _require_depth(depth, precision)
    if precision > 64:
        raise PrecisionError("vectorised sampling supports K <= 64, got {}".format(precision))
    low = rng.integers(0, 1 << (i - 1), size=size, dtype=np.uint64, endpoint=False)
    high_bits = precision - depth
    if high_bits:
        high = rng.integers(0, (1 << high_bits) - 1, size=size, dtype=np.uint64, endpoint=True)
    else:
        high = np.zeros(size, dtype=np.uint64)
    out = low | (high << np.uint64(depth))
    zero = out == 0
    while zero.any():
        out[zero] = sample_A_counters(i, rng, int(zero.sum()), precision)
        zero = out == 0
    return out


def conditional_sample_A(i, rng, precision=DEFAULT_PRECISION):
    return DyadicPoint(int(sample_A_counters(i, rng, 1, precision)[0]), precision)


def visit_frequencies(p, depth, steps):
    """
    Fraction of the forward orbit p, Tp, ..., T^(steps-1) p spent in each
    I_j^depth.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    if depth > min(p.precision, 24):
        raise PrecisionError("depth {} too large for a frequency table".format(depth))
    if p.counter < steps - 1:
        raise OrbitRangeError("orbit leaves representable window after {} steps".format(p.counter))
    counters = np.uint64(p.counter) - np.arange(steps, dtype=np.uint64)
    indices = (counters & np.uint64((1 << depth) - 1)).astype(np.int64)
    return np.bincount(indices, minlength=1 << depth) / steps
