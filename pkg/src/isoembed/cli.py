"""
Command line entry point.

    isoembed solve CONFIG.json
    isoembed verify --size 32 --seed 7
    isoembed scenarios

Exit codes are fixed: see ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .geometry import (SCENARIO_MAPS, SCENARIOS, FreenessFailure, MetricError,
                       build_frame, freeness_margin)
from .operators import apply_Q0
from .reporting import build_report, write_embedding_csv, write_report, write_trace_csv
from .solver import SolveError, SolveReport, solve
from .spectral import GridError, VecField, norm_C
from .verify import format_table, run_identity_suite

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_DIVERGED = 4
EXIT_FREENESS = 5

EXIT_CODES = {
    "converged": EXIT_OK,
    "NotConverged": EXIT_NOT_CONVERGED,
    "Diverged": EXIT_DIVERGED,
    "FreenessFailure": EXIT_FREENESS,
    "InvalidConfig": EXIT_INVALID_CONFIG,
}

def _negated_q0(frame, v, w, **kw):
    # deliberately wrong sign, used to show that `verify` catches it
    return -apply_Q0(frame, v, w, **kw)


def _solution_summary(u0_vals: np.ndarray, u_vals: np.ndarray, grid) -> dict:
    v = VecField(grid, u_vals - u0_vals)
    return {
        "v_amplitude": float(np.max(np.sqrt(np.sum(v.values**2, axis=0)))),
        "v_sup": norm_C(v, 0),
        "v_c2": norm_C(v, 2),
    }


def _write_outputs(cfg: RunConfig, report: SolveReport, u0, u_vals, message, figures=True):
    grid = u0.grid
    doc = build_report(report, scenario=cfg.scenario, n=grid.dim, ambient_dim=u0.ambient_dim,
                       grid_size=cfg.grid_size, config_json=cfg.canonical_json(), seed=cfg.seed,
                       solution=_solution_summary(u0.map.values, u_vals, grid)
                       if u_vals is not None and np.all(np.isfinite(u_vals)) else None,
                       message=message)
    write_report(doc, cfg.output.report)
    if cfg.output.trace is not None:
        write_trace_csv(report, cfg.output.trace)
    if cfg.output.embedding is not None and u_vals is not None and np.all(np.isfinite(u_vals)):
        write_embedding_csv(u_vals, grid, cfg.output.embedding)
    if figures and cfg.output.figures is not None and report.step_norms:
        from .plotting import plot_convergence, plot_displacement

        stem = cfg.output.report.stem
        plot_convergence(report, cfg.output.figures / f"{stem}_convergence.png",
                         title=f"{cfg.scenario}: {report.status}")
        if u_vals is not None and np.all(np.isfinite(u_vals)):
            plot_displacement(u0.map.values, u_vals, grid,
                              cfg.output.figures / f"{stem}_displacement.png")
    return doc


def run_solve(config_path, *, figures: bool = True, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG

    try:
        scenario = SCENARIOS[cfg.scenario](cfg.grid_size, cfg.perturbation)
    except (GridError, MetricError, ValueError) as exc:
        print(f"invalid config: perturbation: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG

    try:
        frame = build_frame(scenario.u0)
    except FreenessFailure as exc:
        report = SolveReport(status="FreenessFailure", freeness_margin=exc.margin,
                             alpha=cfg.solver.alpha)
        _write_outputs(cfg, report, scenario.u0, None, str(exc), figures)
        print(f"freeness failure: {exc}", file=sys.stderr)
        return EXIT_FREENESS

    try:
        u, report = solve(scenario, cfg.solver, frame=frame)
        u_vals, message = u.map.values, None
    except SolveError as exc:
        report = exc.report
        u_vals = exc.immersion.map.values if exc.immersion is not None else None
        message = str(exc)

    _write_outputs(cfg, report, scenario.u0, u_vals, message, figures)
    res = report.final_residual
    print(f"{cfg.scenario}: {report.status} after {report.iterations} iterations, "
          f"isometry residual {res if res is None else format(res, '.3e')}", file=out)
    if message:
        print(message, file=sys.stderr)
    return EXIT_CODES[report.status]


def run_verify(size: int, seed: int, *, samples: int = 5, corrupt_q0_sign: bool = False,
               out=None) -> int:
    out = out or sys.stdout
    q0 = _negated_q0 if corrupt_q0_sign else apply_Q0
    checks = run_identity_suite(size, seed, samples, q0=q0)
    print(format_table(checks), file=out)
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"FAILED: {failed[0].name}", file=out)
        return EXIT_VERIFY_FAILED
    print("all identities pass", file=out)
    return EXIT_OK


def list_scenarios(size: int = 16, out=None) -> int:
    out = out or sys.stdout
    for name, make in SCENARIO_MAPS.items():
        u0 = make(size)
        margin = freeness_margin(build_frame(u0))
        print(f"{name}: n={u0.grid.dim}, N={u0.ambient_dim}, margin {margin:.12g}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isoembed", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the fixed-point solver from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("verify", help="check the operator identities on random fields")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--corrupt-q0-sign", action="store_true", help=argparse.SUPPRESS)

    sub.add_parser("scenarios", help="list built-in scenarios and freeness margins")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return run_solve(args.config, figures=not args.no_figures)
    if args.command == "verify":
        try:
            return run_verify(args.size, args.seed, samples=args.samples,
                              corrupt_q0_sign=args.corrupt_q0_sign)
        except GridError as exc:
            print(f"invalid size: {exc}", file=sys.stderr)
            return EXIT_INVALID_CONFIG
    return list_scenarios()


if __name__ == "__main__":
    sys.exit(main())
