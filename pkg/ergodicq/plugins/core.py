"""
core.py
Purpose: One handler per subcommand. Each declares its CSV columns, emits
one row per measurement and fills in the run summary.
"""

from asyncblink import signal

from fractions import Fraction
import logging

import numpy as np

from ergodicq import estimators, lindley, odometer, processes, propositions
from ergodicq.propositions import fraction_text

log = logging.getLogger(__name__)

SCHEMAS = {
    "simulate": ("q", "survival", "stderr"),
    "loynes": ("n", "increment", "partial_sum", "running_max"),
    "couple": ("replica", "coupling_time", "coupled"),
    "gg1": ("n", "service", "interarrival", "increment", "waiting"),
    "tandem": ("n", "arrival", "q1", "output1", "q2", "output2"),
    "odometer": ("step", "counter", "value", "tau", "in_A", "in_B", "in_C"),
    "cumulant": ("theta", "lambda_hat", "stderr", "jensen_floor", "lambda_minus_theta_s", "closed_form"),
    "scaled-cumulant": ("theta", "lambda_star", "stderr"),
    "prop1": ("i", "n_i", "q_i", "mu_A", "target", "pass", "chain_holds", "m", "hits", "estimate", "stderr",
              "all_ones_failures"),
    "prop2": ("i", "theta", "n_i", "upper", "lower", "lower_sandwich", "lower_jensen", "lambda_hat", "stderr",
              "hits", "mc_visible_lower", "gap"),
}

DEFAULT_THRESHOLDS = tuple(k / 4 for k in range(81))

VISIT_DEPTH = 4


def _start(experiment):
    experiment.columns = SCHEMAS[experiment.command]
    return experiment.config


def closed_form_delta(spec, s, thetas):
    """
    delta from the exact cumulant on the same grid, where one is known.
    """
    thetas = np.asarray(thetas, dtype=float)
    exact = estimators.closed_form_lambda(spec, thetas)
    if exact is None or 0.0 not in thetas:
        return None
    curve = estimators.CumulantEstimate(thetas=thetas, lambda_hat=np.asarray(exact, dtype=float),
                                        stderr=np.zeros(len(thetas)), n=1, m=0, sample_mean=float("nan"))
    return estimators.decay_delta(curve, s).delta


# handlers

@signal("experiment-simulate").connect
def handle_simulate(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    tail = estimators.queue_tail_run(spec, config.s, config.horizon, config.thresholds or DEFAULT_THRESHOLDS,
                                     burn_in=config.burn_in)
    for row in tail.rows():
        experiment.emit(*row)
    experiment.summary.update(process=str(spec), count=tail.count, slope=tail.slope,
                              slope_stderr=tail.slope_stderr,
                              delta=closed_form_delta(spec, config.s, config.thetas))


@signal("experiment-loynes").connect
def handle_loynes(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    window = processes.backward_window(spec, config.window).shifted(-config.s)
    result = lindley.loynes_sup(window, slack=config.slack)
    sums = window.partial_sums
    running = lindley.loynes_running_max(window)

    experiment.emit(0, None, sums[0], running[0])
    for n, z in enumerate(window.values.tolist(), start=1):
        experiment.emit(n, z, sums[n], running[n])

    forward = lindley.run_recursion(0.0, window.forward())
    experiment.summary.update(process=str(spec), value=result.value, argmax=result.argmax, depth=result.depth,
                              converged=result.converged, forward_final=forward.final,
                              expansion_identity=forward.final == result.value)


@signal("experiment-couple").connect
def handle_couple(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    report = estimators.coupling_study(spec, config.s, config.x0, config.replicas, config.horizon,
                                       gather=experiment.gather)
    for replica, t in enumerate(report.times):
        experiment.emit(replica, t, t is not None)
    met = [t for t in report.times if t is not None]
    experiment.summary.update(process=str(spec), stable=report.stable, mean=report.mean, skipped=report.skipped,
                              replicas=config.replicas, coupled=report.coupled,
                              median_time=float(np.median(met)) if met else None,
                              max_time=max(met) if met else None)


@signal("experiment-gg1").connect
def handle_gg1(experiment):
    config = _start(experiment)
    gg1 = processes.GG1Spec(config.process_spec(config.service), config.process_spec(config.interarrival))
    service, interarrival = gg1.samples(config.horizon)
    increments = lindley.gg1_increments(service, interarrival)

    w = 0.0
    for n, (s_prev, t, z) in enumerate(zip(service.tolist(), interarrival.tolist(), increments.tolist()), start=1):
        w = lindley.waiting_step(w, s_prev, t)
        experiment.emit(n, s_prev, t, z, w)

    loynes = lindley.loynes_sup(lindley.IncrementWindow(increments[::-1]))
    mean_service, mean_interarrival = float(np.mean(service)), float(np.mean(interarrival))
    if mean_service >= mean_interarrival:
        log.warning("mean service %.6g is not below mean interarrival %.6g", mean_service, mean_interarrival)
    experiment.summary.update(service=str(gg1.service), interarrival=str(gg1.interarrival),
                              mean_service=mean_service, mean_interarrival=mean_interarrival,
                              stable=mean_service < mean_interarrival,
                              mean_waiting=float(np.mean([row[-1] for row in experiment.rows])),
                              final_waiting=w, loynes_value=loynes.value, expansion_identity=loynes.value == w)


@signal("experiment-tandem").connect
def handle_tandem(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    s2 = config.s if config.s2 is None else config.s2
    arrivals = processes.forward_stream(spec, length=config.horizon).take(config.horizon)
    trace = lindley.tandem_run(arrivals, config.s, s2)

    q1, q2 = trace.first.tolist(), trace.second.tolist()
    for n, (y, out1, out2) in enumerate(zip(arrivals.tolist(), trace.first_output.tolist(),
                                            trace.second_output.tolist()), start=1):
        experiment.emit(n, y, q1[n], out1, q2[n], out2)

    rule = bool(np.array_equal(trace.first_output, np.minimum(trace.first[:-1] + arrivals, config.s)))
    experiment.summary.update(process=str(spec), s1=config.s, s2=s2, conserved=trace.conserved(),
                              output_rule=rule, input_total=trace.input_total, output_total=trace.output_total,
                              second_output_total=float(np.sum(trace.second_output)),
                              mean_q1=float(np.mean(trace.first)), mean_q2=float(np.mean(trace.second)))


@signal("experiment-odometer").connect
def handle_odometer(experiment):
    config = _start(experiment)
    K = config.precision
    if config.omega is not None:
        p = odometer.DyadicPoint(config.omega_counter(), K)
    else:
        p = odometer.random_point(np.random.default_rng(np.random.SeedSequence(config.seed)), K)
    start = p
    c = odometer.c_set(K, config.i_max)
    i = config.i[0]

    for step in range(config.steps):
        tau = None if p.is_zero() else odometer.tau(p)
        experiment.emit(step, format(p.counter, "x"), fraction_text(p.value), tau,
                        odometer.in_A(p, i), odometer.in_B(p, i), p in c)
        if p.is_zero():
            log.info("orbit reached the exceptional point 0 after %d steps", step)
            break
        p = odometer.apply_T(p)

    sets = []
    for i in config.i:
        a_set, b_set = odometer.set_A(i, K), odometer.set_B(i, K)
        below, _ = odometer.set_C_truncated(i - 1, K)
        sets.append({"i": i, "mu_A": fraction_text(a_set.measure), "mu_B": fraction_text(b_set.measure),
                     "A_in_C": a_set <= below, "A": a_set.to_json(), "B": b_set.to_json()})

    i_max = odometer.max_band(K) if config.i_max is None else config.i_max
    tail = odometer.set_C_truncated(i_max, K)[1]
    summary = {"omega": start.to_json(), "sets": sets, "i_max": i_max, "mu_C": fraction_text(c.measure),
               "tail_bound": fraction_text(tail), "mean_bound": c.measure + tail <= Fraction(1, 2)}
    if not start.is_zero():
        summary["exact_T_agrees"] = odometer.apply_T_exact(start.value) == odometer.apply_T(start).value
    if K <= 64:
        depth = min(VISIT_DEPTH, K)
        steps = min(start.counter + 1, 1 << 16)
        freq = odometer.visit_frequencies(start, depth, steps)
        summary.update(visit_depth=depth, visit_steps=steps,
                       visit_max_deviation=float(np.max(np.abs(freq - 2.0 ** -depth))))
    experiment.summary.update(summary)


@signal("experiment-cumulant").connect
def handle_cumulant(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    curve = estimators.estimate_cumulant(spec, config.thetas, config.n, config.m, s=config.s)
    exact = estimators.closed_form_lambda(spec, curve.thetas)
    floor = curve.jensen_floor()
    for k, theta in enumerate(curve.thetas.tolist()):
        lam = float(curve.lambda_hat[k])
        experiment.emit(theta, lam, float(curve.stderr[k]), float(floor[k]), lam - theta * config.s,
                        None if exact is None else float(exact[k]))
    experiment.summary.update(process=str(spec), n=config.n, m=config.m, s=config.s, delta=curve.delta,
                              exceeds_grid=curve.decay.exceeds_grid, sample_mean=curve.sample_mean,
                              convex=curve.is_convex(), jensen_holds=bool((curve.lambda_hat >= floor).all()),
                              closed_form_delta=closed_form_delta(spec, config.s, config.thetas))


@signal("experiment-scaled-cumulant").connect
def handle_scaled_cumulant(experiment):
    config = _start(experiment)
    spec = config.process_spec()
    scaling = config.scaling_functions()
    curve = estimators.estimate_scaled_cumulant(spec, config.thetas, scaling, config.s, config.n, config.m)
    for theta, lam, err in zip(curve.thetas.tolist(), curve.lambda_hat.tolist(), curve.stderr.tolist()):
        experiment.emit(theta, lam, err)
    decay = estimators.scaled_decay_delta(curve)
    approx = None
    if decay.delta is not None:
        approx = [{"q": q, "approx": estimators.scaled_tail_approximation(decay.delta, scaling, q)}
                  for q in config.thresholds or DEFAULT_THRESHOLDS]
    experiment.summary.update(process=str(spec), scaling=scaling.label, n=config.n, m=config.m, s=config.s,
                              delta=decay.delta, exceeds_grid=decay.exceeds_grid, tail_approximation=approx)


@signal("experiment-prop1").connect
def handle_prop1(experiment):
    config = _start(experiment)
    reports = []
    for i in config.i:
        report = propositions.prop1_experiment(propositions.Prop1Params(i), config.m, seed=config.seed,
                                               precision=config.precision, all_ones=config.all_ones)
        data = report.to_json()
        experiment.emit(*(data[k] for k in ("i", "n_i", "q_i", "mu_A", "target", "pass", "chain_holds", "m",
                                             "hits", "estimate", "stderr", "all_ones_failures")))
        reports.append(data)
    experiment.summary["reports"] = reports
    if len(reports) == 1:
        experiment.summary.update(reports[0])


@signal("experiment-prop2").connect
def handle_prop2(experiment):
    config = _start(experiment)
    reports = []
    for i in config.i:
        for report in propositions.prop2_sweep(i, config.theta, config.m, seed=config.seed,
                                               precision=config.precision):
            data = report.to_json()
            experiment.emit(*(data[k] for k in ("i", "theta", "n_i", "upper", "lower", "lower_sandwich",
                                                 "lower_jensen", "lambda_hat", "stderr", "hits",
                                                 "mc_visible_lower", "gap")))
            reports.append(data)
    experiment.summary["reports"] = reports


signal("plugin-registered").send("ergodicq.plugins.core")
