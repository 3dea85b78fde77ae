"""Command-line front end: ``pmpc plan | run | benchmark``.

Exit codes: 0 success, 2 parse or validation error, 3 solver failure,
4 I/O error. Failures print one line ``ERROR <code> <kind>: <message>``
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .scenario_io import (
    ScenarioError,
    format_number,
    bundled_scenarios,
    dumps_json,
    load_scenario,
    resolve_scenario,
    summary_dict,
    trajectory_csv,
)
from .sim_harness import TrackScenario, compute_metrics, run_scenario
from .velocity_search import first_collision_time, plan_two_step

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
REFINE_ITERATIONS = 50
# Real-time budget for one joint two-quad solve on a desktop CPU.
BUDGET_MEDIAN, BUDGET_P95 = 0.020, 0.035
# Best-of wall time of `host_calibration` on the development desktop.
REFERENCE_CALIBRATION = 0.0065


class SolverFailure(RuntimeError):
    pass


def _load(arg) -> TrackScenario:
    return load_scenario(resolve_scenario(arg))


# --------------------------------------------------------------------------- #
# plan
# --------------------------------------------------------------------------- #

def plan_scenario(sc: TrackScenario) -> tuple[dict, str]:
    """Point-mass pipeline only: returns the JSON record and the sampled references as CSV."""
    dt = sc.solver.dt
    plans, quads = [], []
    for j, q in enumerate(sc.quads):
        route = sc.route(j)
        positions = [w.position_at(0.0) for w in route]
        plan, t1, t2 = plan_two_step(
            (q.initial.position, q.initial.velocity), positions, sc.planner,
            stop_mask=[w.stop for w in route],
        )
        plans.append(plan)
        quads.append({
            "quad": j,
            "velocities": plan.velocities.tolist(),
            "arrival_times": plan.arrival_times.tolist(),
            "total_time": plan.total_time,
            "step1_time": float(t1),
            "step2_time": float(t2),
        })
    tc = None
    if len(plans) == 2:
        tc = first_collision_time(plans[0], plans[1], sc.params.downwash, sc.params.collision_tolerance, dt)
    record = {"scenario": sc.name, "dt": dt, "collision_time": tc, "quads": quads}

    buf = io.StringIO()
    buf.write("# pmpc-reference/1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "quad", "px", "py", "pz", "vx", "vy", "vz"))
    for j, plan in enumerate(plans):
        p, v = plan.sample(dt)
        for k in range(len(p)):
            row = [format_number(k * dt), str(j)]
            w.writerow(row + [format_number(x) for x in (*p[k], *v[k])])
    return record, buf.getvalue()


def _cmd_plan(args) -> int:
    sc = _load(args.scenario)
    record, ref_csv = plan_scenario(sc)
    text = dumps_json(record)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(text, encoding="utf-8")
        (out / "reference.csv").write_text(ref_csv, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# run / benchmark
# --------------------------------------------------------------------------- #

def solve_time_stats(times) -> dict:
    t = np.asarray(times, dtype=float)
    t = t[np.isfinite(t)]
    if t.size == 0:
        return {"n": 0, "median": None, "p95": None, "max": None, "mean": None}
    return {
        "n": int(t.size),
        "median": float(np.median(t)),
        "p95": float(np.percentile(t, 95)),
        "max": float(np.max(t)),
        "mean": float(np.mean(t)),
    }


def host_calibration(repeats: int = 5) -> float:
    """Best-of wall time of a fixed numpy workload shaped like one solver cycle."""
    rng = np.random.default_rng(0)
    A = rng.standard_normal((80, 80))
    H = A @ A.T + 80 * np.eye(80)
    B = rng.standard_normal((20, 10, 10))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(30):
            np.linalg.cholesky(H)
            x = np.eye(10)
            for k in range(20):
                x = B[k] @ x
            np.linalg.solve(H, A[:, 0])
        best = min(best, time.perf_counter() - t0)
    return float(best)


def benchmark_report(solve_times, calibration: float | None = None) -> dict:
    """Solve-time distribution with the budget check, normalized by host speed."""
    stats = solve_time_stats(solve_times)
    calibration = host_calibration() if calibration is None else calibration
    factor = max(1.0, calibration / REFERENCE_CALIBRATION)
    med, p95 = stats["median"], stats["p95"]
    within = med is not None and med <= BUDGET_MEDIAN and p95 <= BUDGET_P95
    within_host = med is not None and med <= 2 * BUDGET_MEDIAN * factor
    return {
        **stats,
        "budget_median": BUDGET_MEDIAN,
        "budget_p95": BUDGET_P95,
        "host_factor": factor,
        "within_budget": bool(within),
        "within_host_budget": bool(within_host),
    }


def _with_refine(sc: TrackScenario, refine: bool) -> TrackScenario:
    if not refine:
        return sc
    return dataclasses.replace(sc, solver=dataclasses.replace(sc.solver, max_iterations=REFINE_ITERATIONS))


def _limit(sc: TrackScenario, steps) -> TrackScenario:
    if steps is None:
        return sc
    return dataclasses.replace(sc, duration=steps * sc.control_period)


def _cmd_run(args) -> int:
    sc = _with_refine(_load(args.scenario), args.offline_refine)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    log = run_scenario(sc)
    metrics = compute_metrics(log)
    (out / "trajectory.csv").write_text(trajectory_csv(log), encoding="utf-8")
    summary = dumps_json(summary_dict(sc, log, metrics))
    (out / "summary.json").write_text(summary, encoding="utf-8")
    if args.benchmark:
        report = dumps_json(benchmark_report(log.solve_times))
        (out / "benchmark.json").write_text(report, encoding="utf-8")
        sys.stdout.write(report)
    sys.stdout.write(summary)
    if log.n_steps and metrics.n_failures == log.n_steps:
        raise SolverFailure("the solver failed on every cycle")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    sc = _limit(_with_refine(_load(args.scenario), args.offline_refine), args.steps)
    log = run_scenario(sc)
    report = {"scenario": sc.name, "n_quads": sc.n_quads, "horizon": sc.solver.horizon,
              **benchmark_report(log.solve_times)}
    text = dumps_json(report)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "benchmark.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if report["n"] == 0 and log.n_steps:
        raise SolverFailure("no successful solves")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmpc", description="Time-optimal two-quadrotor planning and MPC.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log applied defaults")
    sub = p.add_subparsers(dest="command", required=True)
    hint = "scenario file or bundled name (" + ", ".join(bundled_scenarios()) + ")"

    s = sub.add_parser("plan", help="point-mass velocity search and references only")
    s.add_argument("scenario", help=hint)
    s.add_argument("-o", "--output", help="directory for plan.json and reference.csv")
    s.set_defaults(func=_cmd_plan)

    s = sub.add_parser("run", help="closed-loop simulation with exports")
    s.add_argument("scenario", help=hint)
    s.add_argument("-o", "--output", default="pmpc-out", help="output directory (default: pmpc-out)")
    s.add_argument("--benchmark", action="store_true", help="also report the solve-time distribution")
    s.add_argument("--offline-refine", action="store_true",
                   help=f"iterate each OCP up to {REFINE_ITERATIONS} times instead of the real-time count")
    s.set_defaults(func=_cmd_run)

    s = sub.add_parser("benchmark", help="solve-time distribution over a closed-loop run")
    s.add_argument("scenario", help=hint)
    s.add_argument("-o", "--output", help="directory for benchmark.json")
    s.add_argument("--steps", type=int, help="limit the run to this many control cycles")
    s.add_argument("--offline-refine", action="store_true")
    s.set_defaults(func=_cmd_benchmark)
    return p


def _fail(code: int, kind: str, message) -> int:
    text = " ".join(str(message).split())
    sys.stderr.write(f"ERROR {code} {kind}: {text}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; map its status to the validation code
        return EXIT_OK if exc.code == 0 else _fail(EXIT_INVALID, "usage", "invalid command line")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _fail(EXIT_INVALID, exc.kind, exc)
    except SolverFailure as exc:
        return _fail(EXIT_SOLVER, "solver", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)


if __name__ == "__main__":
    sys.exit(main())
