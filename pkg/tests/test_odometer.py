from fractions import Fraction

import numpy as np
import pytest

from ergodicq import odometer
from ergodicq.odometer import (Cylinder, DyadicInterval, DyadicIntervalSet, DyadicPoint, ExceptionalPointError,
                               OrbitRangeError, PrecisionError)

ALL_ONES = DyadicPoint((1 << 64) - 1)


def point(value, precision=64):
    return DyadicPoint.from_value(Fraction(value), precision)


def test_point_conversions():
    p = point("3/4")
    assert p.bits[:3] == (1, 1, 0)
    assert p.counter == 3
    assert p.value == Fraction(3, 4)
    assert DyadicPoint.from_bits([0, 1], 64) == point("1/4")
    assert DyadicPoint.from_json(p.to_json()) == p
    assert p.to_json() == {"counter": "3", "precision": 64}


def test_point_conversion_errors():
    with pytest.raises(PrecisionError):
        point("1/10")
    with pytest.raises(PrecisionError):
        DyadicPoint.from_bits([1, 0, 1], 2)
    with pytest.raises(ValueError):
        point(1)


def test_tau_examples():
    assert odometer.tau(DyadicPoint.from_bits([1, 0, 0], 8)) == 1
    assert odometer.tau(DyadicPoint.from_bits([0, 0, 1], 8)) == 3
    with pytest.raises(ExceptionalPointError):
        odometer.tau(DyadicPoint(0))


def test_apply_T_examples():
    assert odometer.apply_T(point("1/2")).value == 0
    assert odometer.apply_T(point("1/4")).value == Fraction(1, 2)
    assert odometer.apply_T(point("3/4")).value == Fraction(1, 4)
    with pytest.raises(ExceptionalPointError):
        odometer.apply_T(DyadicPoint(0))


def test_apply_T_inv_examples():
    assert odometer.apply_T_inv(DyadicPoint(0)).value == Fraction(1, 2)
    assert odometer.apply_T_inv(point("1/2")).value == Fraction(1, 4)
    with pytest.raises(ExceptionalPointError):
        odometer.apply_T_inv(ALL_ONES)


def test_apply_T_pow(rng):
    p = point("1/2")
    assert odometer.apply_T_pow(p, 0) == p
    assert odometer.apply_T_pow(p, 1).value == 0

    for _ in range(50):
        q = odometer.random_point(rng)
        iterated = q
        for _ in range(7):
            iterated = odometer.apply_T(iterated)
        assert odometer.apply_T_pow(q, 7) == iterated
        assert odometer.apply_T_pow(q, -2) == odometer.apply_T_inv(odometer.apply_T_inv(q))

    with pytest.raises(OrbitRangeError):
        odometer.apply_T_pow(DyadicPoint(3), 4)


def test_counter_law_and_inverse(rng):
    for _ in range(2000):
        p = odometer.random_point(rng)
        assert odometer.apply_T(p).counter == p.counter - 1
        assert odometer.apply_T(odometer.apply_T_inv(p)) == p


def test_exact_recursive_form_agrees(rng):
    for _ in range(500):
        p = odometer.random_point(rng, 24)
        assert odometer.apply_T_exact(p.value) == odometer.apply_T(p).value
    with pytest.raises(ExceptionalPointError):
        odometer.apply_T_exact(0)


def test_wide_points(rng):
    p = odometer.random_point(rng, 200)
    assert 0 < p.counter < (1 << 200) - 1
    assert odometer.apply_T(p).counter == p.counter - 1


def test_interval_index_examples():
    assert odometer.interval_index(DyadicPoint(0), 5) == 0
    assert odometer.interval_index(point("3/4"), 2) == 3
    assert odometer.interval_index(point("1/2"), 2) == 1
    with pytest.raises(PrecisionError):
        odometer.interval_index(point("1/2", 8), 9)


def test_dyadic_interval_geometry():
    interval = DyadicInterval(2, 1)
    assert (interval.left, interval.right) == (Fraction(1, 2), Fraction(3, 4))
    assert point("5/8") in interval
    assert point("1/4") not in interval
    with pytest.raises(ValueError):
        DyadicInterval(2, 4)


def test_interval_image_shifts_index(rng):
    for depth in range(1, 9):
        for j in range(1 << depth):
            interval = DyadicInterval(depth, j)
            image = odometer.interval_image(interval)
            assert image.index == (j - 1) % (1 << depth)
            high = int(rng.integers(1, 1 << 20))
            p = DyadicPoint(j + (high << depth), 64)
            assert p in interval
            assert odometer.apply_T(p) in image


def _atoms(points):
    return DyadicIntervalSet.from_intervals(DyadicInterval(p.precision, p.counter) for p in points)


@pytest.mark.parametrize("depth", range(1, 13))
def test_interval_image_and_preimage_are_exact(depth):
    # two bits past the depth: every point of I_j is one of four atoms
    precision = depth + 2
    top = (1 << depth) - 1
    for j in range(1 << depth):
        interval = DyadicInterval(depth, j)
        points = [DyadicPoint(j + (h << depth), precision) for h in range(4)]
        target = DyadicIntervalSet.from_intervals([odometer.interval_image(interval)])
        if j:
            image = _atoms(odometer.apply_T(p) for p in points)
            assert image == target == DyadicIntervalSet.from_intervals([DyadicInterval(depth, j - 1)])
            assert image.measure == interval.measure
        else:
            # 0 itself has no image; the rest of I_0 lands in I_{2^i-1} less the all-ones atom
            image = _atoms(odometer.apply_T(p) for p in points[1:])
            assert image <= target
            assert target.measure - image.measure == Fraction(1, 1 << precision)
        if j < top:
            preimage = _atoms(odometer.apply_T_inv(p) for p in points)
            assert preimage == DyadicIntervalSet.from_intervals([DyadicInterval(depth, j + 1)])
            assert preimage.measure == interval.measure


def test_set_A_examples():
    assert odometer.set_A(0).is_empty()
    assert odometer.set_A(0).measure == 0
    assert odometer.set_A(1).intervals() == [DyadicInterval(3, 0)]
    assert odometer.set_A(1).measure == Fraction(1, 8)
    assert odometer.set_A(5).measure == Fraction(1, 2 ** 7)


def test_set_B_examples():
    assert odometer.set_B(0).measure == Fraction(1, 4)
    assert odometer.set_B(0).intervals() == [DyadicInterval(2, 0)]
    assert odometer.set_B(1).intervals() == [DyadicInterval(3, 1)]
    assert odometer.set_B(3).measure == Fraction(1, 2 ** 5)


def test_set_A_matches_its_interval_definition():
    for i in range(1, 5):
        expected = [DyadicInterval(2 * i + 1, j) for j in range(1 << (i - 1))]
        assert odometer.set_A(i).intervals() == expected
        assert odometer.set_B(i).intervals() == [DyadicInterval(2 * i + 1, j) for j in range(1 << (i - 1), 1 << i)]


def test_band_measures_and_nesting():
    for i in range(1, 11):
        assert odometer.set_A(i).measure == Fraction(1, 2 ** (i + 2))
        assert odometer.set_B(i).measure == Fraction(1, 2 ** (i + 2))
        below, _ = odometer.set_C_truncated(i - 1)
        assert odometer.set_A(i) <= below


def test_set_C_truncated_examples():
    c0, tail0 = odometer.set_C_truncated(0)
    assert (c0.measure, tail0) == (Fraction(1, 4), Fraction(1, 4))
    assert odometer.set_C_truncated(1)[0].measure == Fraction(3, 8)
    c20, tail20 = odometer.set_C_truncated(20)
    assert tail20 == Fraction(1, 2 ** 22)
    assert c20.measure + tail20 <= Fraction(1, 2)
    assert odometer.c_set(64).measure <= Fraction(1, 2)


def test_precision_limits():
    assert odometer.max_band(64) == 31
    odometer.set_A(31, 64)
    with pytest.raises(PrecisionError):
        odometer.set_A(32, 64)
    with pytest.raises(PrecisionError):
        odometer.set_C_truncated(10, 16)


def test_in_C_examples():
    assert odometer.in_C(point("13/128"))
    assert odometer.in_C(point("9/16"))
    assert not odometer.in_C(ALL_ONES)
    assert not odometer.in_C(DyadicPoint(int("5" * 16, 16)))
    # 3/4 has counter 3, which is 3 mod 32: the B_2 band
    assert odometer.in_B(point("3/4"), 2)
    assert odometer.in_C(point("3/4"))


def test_membership_predicates_follow_sets():
    p = DyadicPoint(5, 16)
    assert odometer.in_A(p, 3) == (p in odometer.set_A(3, 16))
    assert odometer.in_B(p, 3) == (p in odometer.set_B(3, 16))


def test_set_algebra():
    half = DyadicIntervalSet.from_intervals([DyadicInterval(1, 0)])
    quarters = DyadicIntervalSet.from_intervals([DyadicInterval(2, 0), DyadicInterval(2, 2)])
    assert half == quarters
    assert quarters.cylinders == half.cylinders

    a = DyadicIntervalSet.from_intervals([DyadicInterval(3, 1)])
    b = DyadicIntervalSet.from_intervals([DyadicInterval(3, 5)])
    assert (a | b).measure == Fraction(1, 4)
    assert a <= a | b
    assert not (a | b) <= a
    assert (a | b) == DyadicIntervalSet([Cylinder(0b11, 1)])


def test_overlapping_cylinders_measure():
    s = DyadicIntervalSet([Cylinder(0b01, 0), Cylinder(0b10, 0)])
    # counters with bit 0 or bit 1 clear: 3 of every 4
    assert s.measure == Fraction(3, 4)


def test_to_json_falls_back_to_cylinders():
    small = odometer.set_B(2).to_json()
    assert small["intervals"] == [[5, 2], [5, 3]]
    assert small["measure"] == "1/16"
    large = odometer.set_A(17).to_json()
    assert "cylinders" in large
    assert large["measure"] == "1/524288"


def test_count_range_matches_brute_force(rng):
    c = odometer.c_set(16)
    counters = np.arange(1 << 16, dtype=np.uint64)
    member = c.contains_counters(counters)
    starts = rng.integers(0, (1 << 16) - 600, size=200).astype(np.uint64)
    for length in (0, 1, 7, 64, 513):
        counts = c.count_range(starts, length)
        expected = [int(member[int(s):int(s) + length].sum()) for s in starts]
        assert counts.tolist() == expected


def test_count_below_full_period():
    c = odometer.c_set(16)
    assert int(c.count_below(np.array([1 << 16], dtype=np.uint64))[0]) == c.measure * (1 << 16)
    assert c.count_below(np.array([0], dtype=np.uint64))[0] == 0
    assert len(c.count_below(np.zeros(0, dtype=np.uint64))) == 0


def test_random_counters_avoid_endpoints(rng):
    counters = odometer.random_counters(rng, 10000, 3)
    assert set(np.unique(counters).tolist()) <= set(range(1, 7))
    with pytest.raises(PrecisionError):
        odometer.random_counters(rng, 1, 65)


def test_conditional_sample_A(rng):
    for i in (1, 3, 6):
        for _ in range(100):
            assert odometer.in_A(odometer.conditional_sample_A(i, rng), i)

    values = [float(DyadicPoint(int(c)).value) for c in odometer.sample_A_counters(1, rng, 20000)]
    assert max(values) < 1 / 8
    sigma = (1 / 8) / np.sqrt(12) / np.sqrt(len(values))
    assert abs(np.mean(values) - 1 / 16) < 3 * sigma


def test_visit_frequencies_are_uniform_over_full_periods():
    p = DyadicPoint((1 << 20) + 12345)
    freq = odometer.visit_frequencies(p, 4, 1 << 12)
    assert np.array_equal(freq, np.full(16, 1 / 16))
    with pytest.raises(OrbitRangeError):
        odometer.visit_frequencies(DyadicPoint(3), 2, 10)
