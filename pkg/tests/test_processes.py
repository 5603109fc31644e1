import numpy as np
import pytest
from scipy import stats

from ergodicq import odometer, processes
from ergodicq.odometer import DyadicPoint, PrecisionError
from ergodicq.processes import (GG1Spec, ProcessSpec, ProcessSpecError, TraceExhaustedError, TraceFormatError,
                                build)


def test_bernoulli_zero_is_all_zeros():
    assert not processes.forward_stream(ProcessSpec.iid_bernoulli(0)).take(1000).any()
    assert processes.forward_stream(ProcessSpec.iid_bernoulli(1)).take(1000).all()


def test_markov_one_one_alternates():
    y = processes.forward_stream(ProcessSpec.binary_markov(1, 1, seed=3)).take(200)
    assert (y[1:] != y[:-1]).all()
    paths = processes.sample_paths(ProcessSpec.binary_markov(1, 1), 10, 50)
    assert (paths[:, 1:] != paths[:, :-1]).all()


def test_stream_continues_where_it_stopped():
    spec = ProcessSpec.iid_bernoulli(0.3, seed=11)
    stream = processes.forward_stream(spec)
    first, second = stream.take(40), stream.take(60)
    assert stream.position == 100
    assert np.array_equal(np.concatenate([first, second]), processes.forward_stream(spec).take(100))
    with pytest.raises(ValueError):
        stream.take(-1)


def test_seeded_replicas_are_reproducible():
    spec = ProcessSpec.iid_bernoulli(0.5, seed=5)
    a = processes.forward_stream(spec, replica=2).take(500)
    assert np.array_equal(a, processes.forward_stream(spec, replica=2).take(500))
    assert not np.array_equal(a, processes.forward_stream(spec, replica=3).take(500))
    assert not np.array_equal(a, processes.forward_stream(spec.with_seed(6), replica=2).take(500))


def test_odometer_counter_four():
    process = build(ProcessSpec.odometer())
    # counter 4 is 0 mod 4: the B_0 band
    assert process.stream_from(4, start=0).take(1).tolist() == [1.0]
    assert process.backward_from(4, 1).tolist() == [1.0]
    # all ones is in no band
    top = (1 << 64) - 1
    assert process.values_at(np.array([top], dtype=np.uint64)).tolist() == [0.0]


def test_odometer_stream_follows_the_orbit(rng):
    process = build(ProcessSpec.odometer())
    for omega in process.draw_omega(rng, 20, room_below=64):
        ys = process.stream_from(omega).take(64)
        p = DyadicPoint(int(omega))
        expected = [float(odometer.in_C(odometer.apply_T_pow(p, k))) for k in range(1, 65)]
        assert ys.tolist() == expected


def test_odometer_backward_window_follows_the_inverse_orbit(rng):
    process = build(ProcessSpec.odometer())
    omega = int(process.draw_omega(rng, 1, room_above=32)[0])
    window = process.backward_from(omega, 32)
    p = DyadicPoint(omega)
    assert window.tolist() == [float(odometer.in_C(odometer.apply_T_pow(p, -k))) for k in range(32)]


def test_odometer_orbit_range():
    process = build(ProcessSpec.odometer())
    with pytest.raises(odometer.OrbitRangeError):
        process.stream_from(3).take(4)
    with pytest.raises(odometer.OrbitRangeError):
        process.backward_from((1 << 64) - 2, 3)


def test_short_odometer_streams_reserve_the_horizon():
    horizon = 100000
    for seed in range(40):
        spec = ProcessSpec.odometer(20, seed=seed)
        assert len(processes.forward_stream(spec, length=horizon).take(horizon)) == horizon
        service, interarrival = GG1Spec(spec, ProcessSpec.iid_bernoulli(0.5, seed)).samples(horizon)
        assert len(service) == len(interarrival) == horizon
    with pytest.raises(odometer.OrbitRangeError):
        processes.forward_stream(ProcessSpec.odometer(20), length=1 << 20)


def test_empty_backward_window():
    window = processes.backward_window(ProcessSpec.iid_bernoulli(0.5), 0)
    assert len(window) == 0
    assert window.partial_sums.tolist() == [0.0]
    assert len(processes.backward_window(ProcessSpec.odometer(), 0)) == 0


def test_A_band_backward_windows_are_all_ones(rng):
    process = build(ProcessSpec.odometer())
    for i in (1, 3, 6, 10):
        n = 1 << (i - 1)
        omega = odometer.sample_A_counters(i, rng, 500)
        assert (process.sums_from(omega, n, "backward") == n).all()


@pytest.mark.parametrize("direction", ["forward", "backward"])
@pytest.mark.parametrize("n", [1, 5, 64, 300])
def test_odometer_sums_match_brute_force(rng, n, direction):
    process = build(ProcessSpec.odometer())
    omega = process.draw_omega(rng, 100, room_below=n, room_above=n)
    if direction == "forward":
        counters = omega[:, None] - np.arange(1, n + 1, dtype=np.uint64)[None, :]
    else:
        counters = omega[:, None] + np.arange(n, dtype=np.uint64)[None, :]
    expected = process.values_at(counters).sum(axis=1)
    assert process.sums_from(omega, n, direction).tolist() == expected.astype(int).tolist()


def test_odometer_sums_reject_unknown_direction():
    with pytest.raises(ValueError):
        build(ProcessSpec.odometer()).sums_from(np.array([10], dtype=np.uint64), 2, "sideways")


def test_odometer_mean_sits_below_half(rng):
    process = build(ProcessSpec.odometer())
    mu = float(process.c_set.measure)
    assert mu <= 0.5
    ys = process.values_at(odometer.random_counters(rng, 10 ** 6))
    sigma = np.sqrt(mu * (1 - mu) / len(ys))
    assert abs(ys.mean() - mu) < 4 * sigma


def test_odometer_mean_estimate_matches_its_stream():
    spec = ProcessSpec.odometer(seed=9)
    process = build(spec)
    omega = process.draw_omega(spec.rng(0), 1, room_below=4096)[0]
    expected = process.stream_from(omega).take(4096).sum() / 4096
    assert processes.mean_estimate(spec, 4096, replica=0) == expected


def test_bernoulli_mean():
    p, n = 0.3, 200000
    mean = processes.mean_estimate(ProcessSpec.iid_bernoulli(p, seed=1), n)
    assert abs(mean - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_single_value_table_is_deterministic():
    spec = ProcessSpec.iid_table([2.5], [1.0])
    assert processes.mean_estimate(spec, 100) == 2.5
    assert processes.window_sums(spec, 4, 10).tolist() == [10.0] * 10


def test_window_sums_shapes():
    spec = ProcessSpec.binary_markov(0.2, 0.3)
    sums = processes.window_sums(spec, 7, 123)
    assert sums.shape == (123,)
    assert ((sums >= 0) & (sums <= 7)).all()
    with pytest.raises(ValueError):
        processes.window_sums(spec, 0, 10)


def _shift_table(paths, width, offset):
    # pattern counts of (Y_1..Y_width) against (Y_offset+1..Y_offset+width)
    values, symbols = np.unique(paths, return_inverse=True)
    symbols = np.asarray(symbols).reshape(paths.shape)
    base = len(values)
    rows = []
    for column in (0, offset):
        codes = np.zeros(len(paths), dtype=np.int64)
        for k in range(width):
            codes = base * codes + symbols[:, column + k]
        rows.append(np.bincount(codes, minlength=base ** width))
    table = np.stack(rows)
    return table[:, table.sum(axis=0) > 0]


@pytest.mark.parametrize("spec, width", [
    (ProcessSpec.iid_bernoulli(0.3, seed=2), 5),
    (ProcessSpec.iid_table([0, 0.5, 1.25], [0.5, 0.3, 0.2], seed=2), 4),
    (ProcessSpec.binary_markov(0.2, 0.6, seed=2), 5),
    (ProcessSpec.odometer(seed=2), 5),
], ids=str)
def test_window_patterns_are_shift_invariant(spec, width):
    paths = processes.sample_paths(spec, 40, 20000)
    _, pvalue, _, _ = stats.chi2_contingency(_shift_table(paths, width, 40 - width))
    assert pvalue > 0.001


def test_trace_window_patterns_are_shift_invariant(tmp_path):
    path = tmp_path / "recorded.txt"
    recorded = processes.forward_stream(ProcessSpec.binary_markov(0.3, 0.4, seed=8)).take(200000)
    path.write_text("".join("{:g}\n".format(y) for y in recorded.tolist()), encoding="utf-8")
    paths = processes.sample_paths(ProcessSpec.trace(path), 40, 5000)
    _, pvalue, _, _ = stats.chi2_contingency(_shift_table(paths, 5, 35))
    assert pvalue > 0.001


def test_trace_forward_and_backward(trace_file):
    spec = ProcessSpec.trace(trace_file)
    assert processes.forward_stream(spec).take(4).tolist() == [0.0, 1.0, 1.0, 0.5]
    assert processes.backward_window(spec, 3).values.tolist() == [1.0, 0.0, 2.0]
    paths = processes.sample_paths(spec, 8, 2)
    assert paths[1].tolist() == [0.0, 1.0, 1.0, 0.5, 0.0, 2.0, 0.0, 1.0]


def test_trace_exhaustion(trace_file):
    spec = ProcessSpec.trace(trace_file)
    with pytest.raises(TraceExhaustedError):
        processes.forward_stream(spec).take(513)
    with pytest.raises(TraceExhaustedError):
        processes.backward_window(spec, 600)
    with pytest.raises(TraceExhaustedError):
        processes.window_sums(spec, 100, 6)
    with pytest.raises(TraceExhaustedError):
        list(processes.forward_stream(spec))


@pytest.mark.parametrize("text, line", [("1\nabc\n", 2), ("0.5\n1\n-1\n", 3), ("1\n\n2\n", 2), ("nan\n", 1)])
def test_trace_format_errors(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(TraceFormatError) as info:
        processes.load_trace(path)
    assert info.value.line == line
    assert str(info.value).startswith("{}:{}:".format(path, line))


@pytest.mark.parametrize("spec", [
    ProcessSpec.iid_bernoulli(1.5),
    ProcessSpec.iid_table([0, 1], [1.0]),
    ProcessSpec.iid_table([0, 1], [0.5, 0.6]),
    ProcessSpec.iid_table([-1], [1.0]),
    ProcessSpec.binary_markov(0.5, -0.1),
    ProcessSpec("poisson", (1.0,)),
], ids=str)
def test_invalid_specs(spec):
    with pytest.raises(ProcessSpecError):
        build(spec)


def test_wide_odometer_streams_are_refused():
    with pytest.raises(PrecisionError):
        build(ProcessSpec.odometer(65))
    with pytest.raises(PrecisionError):
        build(ProcessSpec.odometer(16, 9))


def test_spec_text_form():
    assert str(ProcessSpec.iid_bernoulli(0.5)) == "iid-bernoulli:0.5"
    assert str(ProcessSpec.iid_table([0, 2], [0.25, 0.75])) == "iid-table:0.0,2.0@0.25,0.75"
    assert str(ProcessSpec.odometer(16)) == "odometer:16,7"


def test_gg1_deterministic_increments():
    gg1 = GG1Spec(ProcessSpec.iid_table([2], [1.0]), ProcessSpec.iid_table([3], [1.0]))
    assert gg1.increments(50).tolist() == [-1.0] * 50
    service, interarrival = gg1.samples(5)
    assert service.tolist() == [2.0] * 5
    assert interarrival.tolist() == [3.0] * 5
