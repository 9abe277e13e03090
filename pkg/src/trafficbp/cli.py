"""Command-line surface: reproducible pipelines over the file formats.

Exit codes: 0 success, 2 argument errors (including infeasible
parameters), 1 runtime errors such as malformed files. Logs go to
stderr; stdout stays silent unless an output path of '-' asks for data
on stdout. Every random choice derives from --seed, which defaults to a
fixed constant so default runs are reproducible.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import mrf, netgraph, oracle, pipeline, propagate
from .calibrate import calibrate_space_time, read_history, write_history
from .errors import ParameterError, TrafficBpError
from .simulate import DynamicsParams, ProbeParams, sample_probes, simulate

DEFAULT_SEED = 0


def _log(message):
    print(message, file=sys.stderr)


def _add_bp_args(p):
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--schedule", choices=propagate.SCHEDULES, default="flooding")
    p.add_argument("--init", choices=propagate.INITS, default="zero")
    p.add_argument("--init-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--init-amplitude", type=float, default=0.01)


def _bp_params(args, **overrides):
    kwargs = dict(damping=args.damping, tol=args.tol, max_iters=args.max_iters,
                  schedule=args.schedule, init=args.init, init_seed=args.init_seed,
                  init_amplitude=args.init_amplitude)
    kwargs.update(overrides)
    return propagate.BpParams(**kwargs)


def cmd_gen_graph(args):
    graph = netgraph.gen_graph(args.kind, n=args.n, rows=args.rows, cols=args.cols,
                               degree=args.degree, seed=args.seed)
    netgraph.save_graph(args.output, graph)
    _log(f"wrote {graph.n_segments} segments, {len(graph.adjacency)} adjacency pairs")
    return 0


def cmd_simulate(args):
    graph = netgraph.load_graph(args.graph)
    params = DynamicsParams(base_log_odds=args.base_log_odds,
                            persistence=args.persistence,
                            neighbor_pressure=args.neighbor_pressure,
                            burn_in=args.burn_in)
    history = simulate(graph, params, args.steps, seed=args.seed)
    write_history(args.output, history)
    rate = float(np.mean(history.data == 1))
    _log(f"wrote {history.n_rows} rows, congestion rate {rate:.3f}")
    return 0


def cmd_probe_sample(args):
    history = read_history(args.history)
    probes = ProbeParams(coverage=args.coverage, flip_prob=args.flip_prob,
                         seed=args.seed)
    obs = sample_probes(history, probes, (args.start, args.layers))
    mrf.write_observations(args.output, obs)
    _log(f"wrote {len(obs)} observations over {args.layers} layers")
    return 0


def cmd_calibrate(args):
    graph = netgraph.load_graph(args.graph)
    history = read_history(args.history)
    index = netgraph.build_space_time(graph, args.layers)
    model = calibrate_space_time(history, index, pseudocount=args.pseudocount)
    mrf.save_model(args.output, model)
    _log(f"calibrated {len(model.spatial_couplings)} spatial and "
         f"{len(model.temporal_couplings)} temporal couplings over {args.layers} layers")
    return 0


def cmd_infer(args):
    st_model = mrf.load_model(args.model)
    index = st_model.index()
    obs = mrf.read_observations(args.obs)
    model = st_model.to_pairwise()
    beliefs, report = pipeline.reconstruct(model, obs.vid_map(index), _bp_params(args))
    propagate.write_beliefs(args.output, index, beliefs)
    if args.report:
        netgraph._dump_json(args.report, {
            "converged": report.converged, "iterations": report.iterations,
            "residual": report.residual})
    state = "converged" if report.converged else "did not converge"
    _log(f"BP {state} after {report.iterations} iterations, "
         f"residual {report.residual:.3e}")
    return 0


def cmd_eval(args):
    truth = read_history(args.truth)
    obs = mrf.read_observations(args.obs)
    belief_cells = propagate.read_beliefs(args.beliefs)
    graph = netgraph.RoadGraph(truth.segments, ())
    index = netgraph.build_space_time(graph, truth.n_rows)
    window = pipeline.WindowSpec(truth.n_rows, args.observed_layers)
    p = np.empty(index.n_variables)
    for t in range(index.layers):
        for seg in truth.segments:
            try:
                p[index.variable(seg, t)] = belief_cells[(seg, t)]
            except KeyError:
                raise ParameterError(
                    f"beliefs file missing cell ({seg!r}, layer {t})") from None
    bp_report = None
    if args.bp_report:
        obj = netgraph._parse_json(args.bp_report)
        bp_report = propagate.BpReport(bool(obj["converged"]), int(obj["iterations"]),
                                       float(obj["residual"]), 0.0)
    metrics = pipeline.evaluate(index, propagate.Beliefs(p), truth, obs, window,
                                bp_report=bp_report)
    pipeline.write_metrics(args.output, metrics)
    hidden = metrics.overall_hidden
    _log(f"hidden cells: {hidden.count}, brier "
         f"{'n/a' if hidden.brier is None else f'{hidden.brier:.4f}'}")
    return 0


def cmd_phase_scan(args):
    graph = netgraph.load_graph(args.graph)
    values = _coupling_grid(args)
    params = _bp_params(args, damping=args.damping, init="random",
                        init_amplitude=args.amplitude, max_iters=args.max_iters)
    points = propagate.phase_scan(graph, values, params, seed=args.seed)
    propagate.write_phase_scan(args.output, points)
    _log(f"scanned {len(points)} couplings, "
         f"{sum(1 for pt in points if not pt.converged)} non-converged")
    return 0


def _coupling_grid(args):
    if args.j_max < args.j_min or args.j_step <= 0:
        raise ParameterError("need j-min <= j-max and j-step > 0")
    count = int(round((args.j_max - args.j_min) / args.j_step)) + 1
    return [round(args.j_min + k * args.j_step, 12) for k in range(count)]


def cmd_verify(args):
    st_model = mrf.load_model(args.model)
    model = st_model.to_pairwise()
    exact = oracle.enumerate_model(model)
    beliefs, messages, report = run_params_bp(model, args)
    max_err = float(np.max(np.abs(beliefs.p_congested - exact.marginals[:, 1]))) \
        if model.n_vars else 0.0
    bethe = propagate.bethe_free_energy(model, messages)
    netgraph._dump_json(args.output, {
        "variables": model.n_vars,
        "edges": model.n_edges,
        "converged": report.converged,
        "iterations": report.iterations,
        "max_marginal_error": max_err,
        "bethe_free_energy": bethe,
        "exact_free_energy": -exact.log_z,
    })
    _log(f"max marginal error {max_err:.3e} over {model.n_vars} variables")
    return 0


def run_params_bp(model, args):
    beliefs, messages, report = propagate.run_bp(model, _bp_params(args))
    return beliefs, messages, report


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trafficbp",
        description="Congestion reconstruction and prediction on road networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a test network")
    p.add_argument("--kind", choices=("ring", "grid", "random-regular"), required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("simulate", help="generate ground-truth congestion history")
    p.add_argument("--graph", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--base-log-odds", type=float, default=-2.0)
    p.add_argument("--persistence", type=float, default=2.0)
    p.add_argument("--neighbor-pressure", type=float, default=2.0)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probe-sample", help="sample probe observations from a history")
    p.add_argument("--history", required=True)
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--coverage", type=float, required=True)
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_probe_sample)

    p = sub.add_parser("calibrate", help="fit couplings and fields from a history")
    p.add_argument("--graph", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--pseudocount", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("infer", help="reconstruct beliefs from observations")
    p.add_argument("--model", required=True)
    p.add_argument("--obs", required=True)
    _add_bp_args(p)
    p.add_argument("--report", help="also write a BP report JSON")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score beliefs against ground truth")
    p.add_argument("--beliefs", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--observed-layers", type=int, required=True)
    p.add_argument("--bp-report", help="BP report JSON to embed in the metrics")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phase-scan", help="magnetization sweep over a coupling grid")
    p.add_argument("--graph", required=True)
    p.add_argument("--j-min", type=float, required=True)
    p.add_argument("--j-max", type=float, required=True)
    p.add_argument("--j-step", type=float, required=True)
    p.add_argument("--amplitude", type=float, default=0.01)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--schedule", choices=propagate.SCHEDULES, default="flooding")
    p.add_argument("--init", choices=propagate.INITS, default="random")
    p.add_argument("--init-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--init-amplitude", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_phase_scan)

    p = sub.add_parser("verify", help="compare BP to exact enumeration on a small model")
    p.add_argument("--model", required=True)
    _add_bp_args(p)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParameterError as exc:
        _log(f"error: {exc}")
        return 2
    except TrafficBpError as exc:
        _log(f"error: {exc}")
        return 1


def run():
    sys.exit(main())
