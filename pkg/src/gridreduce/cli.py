"""Command-line interface.

Exit codes: 0 success; 1 failed verification properties; 2 usage, I/O or
scenario errors; 3 security or regularity violations (including solver
divergence); 4 model mismatch (incompatible initial state, or full and
reduced runs disagreeing beyond tolerance).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checks import INJECTIONS, run_property_suite
from .errors import (
    ConvergenceError,
    GridReduceError,
    IncompatibleStateError,
    RegularityError,
    ScenarioError,
    SecurityViolation,
)
from .report import FLOAT_FORMAT, write_csv, write_svg
from .runner import run_comparison, run_scenario
from .scenario import build_network, builtin_case6, format_scenario, load_scenario

__all__ = ["main"]

#: Largest tolerated full-vs-reduced discrepancy for the compare command.
COMPARE_TOLERANCE = 1e-6

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_SECURITY = 3
EXIT_MISMATCH = 4


def _fmt(values) -> str:
    return " ".join(f"{v:.9g}" for v in np.atleast_1d(values))


def _print_summary(summary: dict) -> None:
    print(f"scenario {summary['name']}")
    print(f"  controller: {'on' if summary['controller'] else 'off'}")
    print(f"  horizon: {summary['final_time']:.9g} s  step: {summary['step']:.9g} s")
    print(f"  events applied: {summary['events_applied']}")
    print(f"  final frequency (Hz): {_fmt(summary['final_frequency_hz'])}")
    print(
        "  final frequency deviation (Hz): "
        f"{summary['final_frequency_deviation_hz']:.9g}"
    )
    print(f"  final injections (pu): {_fmt(summary['final_u'])}")
    if "marginal_costs" in summary:
        print(f"  marginal costs: {_fmt(summary['marginal_costs'])}")
    print(f"  min security margin (rad): {summary['min_security_margin']:.9g}")
    print(f"  max conserved drift: {summary['max_conserved_drift']:.9g}")


def _write_outputs(scenario, result, out_dir: Path) -> None:
    output = scenario.output
    if output.csv is None and not output.figures:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(output.csv).stem if output.csv else "trajectory"
    if output.csv is not None:
        csv_path = out_dir / output.csv
        write_csv(result.trajectory, csv_path)
        print(f"wrote {csv_path}")
    for channel in output.figures:
        svg_path = out_dir / f"{stem}_{channel}.svg"
        write_svg(
            result.trajectory,
            [channel],
            svg_path,
            nominal_hz=scenario.network.nominal_frequency_hz,
        )
        print(f"wrote {svg_path}")


def _run_scenario_command(scenario, args) -> int:
    result = run_scenario(scenario, step=args.step, horizon=args.horizon)
    _print_summary(result.summary)
    _write_outputs(scenario, result, Path(args.out))
    return EXIT_OK


def _cmd_run(args) -> int:
    return _run_scenario_command(load_scenario(args.scenario), args)


def _cmd_case6(args) -> int:
    scenario = builtin_case6()
    if args.emit_scenario:
        sys.stdout.write(format_scenario(scenario))
        return EXIT_OK
    return _run_scenario_command(scenario, args)


def _cmd_verify(args) -> int:
    try:
        report = run_property_suite(seed=args.seed, count=args.count, inject=args.inject)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"verify: seed {report.seed}, {report.count} instances")
    if report.count == 0:
        print("warning: no instances evaluated; passing vacuously")
        return EXIT_OK
    for line in report.format_lines():
        print(line)
    if report.passed:
        print("all properties passed")
        return EXIT_OK
    print("verification failed", file=sys.stderr)
    return EXIT_VERIFY_FAILED


def _matrix_block(name: str, array) -> list[str]:
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    lines = [f"# {name} {arr.shape[0]}x{arr.shape[1]}"]
    lines.extend(",".join(FLOAT_FORMAT % value for value in row) for row in arr)
    return lines


def _cmd_reduce(args) -> int:
    scenario = load_scenario(args.scenario)
    net = build_network(scenario.network)
    blocks = [
        ("incidence", net.incidence),
        ("weights", net.line_weights),
        ("laplacian", net.laplacian),
        ("reduced_laplacian", net.reduced_laplacian),
        ("projected_incidence", net.projected.matrix),
        ("kernel_projection", net.projected.projection),
        ("kron_incidence", net.kron_incidence),
        ("kron_weights", net.kron_weights),
        ("reduced_load", net.p_hat),
    ]
    lines = []
    for name, array in blocks:
        lines.extend(_matrix_block(name, array))
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_comparison(scenario, step=args.step, horizon=args.horizon)
    print(f"compare {scenario.name}: {result.full.sample_count} samples")
    print(f"  max edge-angle gap: {result.max_eta_gap:.9g}")
    print(f"  max generator frequency gap: {result.max_omega_gap:.9g}")
    if result.max_eta_gap < COMPARE_TOLERANCE and result.max_omega_gap < COMPARE_TOLERANCE:
        print(f"  models agree within {COMPARE_TOLERANCE:g}")
        return EXIT_OK
    print(f"  models disagree beyond {COMPARE_TOLERANCE:g}", file=sys.stderr)
    return EXIT_MISMATCH


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--step", type=float, default=None, help="override the time step (s)")
    parser.add_argument(
        "--horizon", type=float, default=None, help="override the end time (s)"
    )
    parser.add_argument(
        "--out", default=".", help="directory for CSV/SVG artifacts (default: .)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridreduce",
        description="Reduced power-grid models built on the projected incidence matrix.",
        epilog=(
            "exit codes: 0 success, 1 failed verification, 2 usage/IO/scenario error, "
            "3 security or regularity violation, 4 model mismatch"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario file and write its artifacts")
    run.add_argument("scenario", help="path to a scenario file")
    _add_run_flags(run)
    run.set_defaults(handler=_cmd_run)

    verify = sub.add_parser("verify", help="run the randomized structural property suite")
    verify.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    verify.add_argument(
        "--count", type=int, default=100, help="number of random instances (default: 100)"
    )
    verify.add_argument(
        "--inject",
        default=None,
        choices=INJECTIONS,
        help="inject a deliberate defect to confirm it is caught",
    )
    verify.set_defaults(handler=_cmd_verify)

    reduce_cmd = sub.add_parser(
        "reduce", help="print the reduction matrices of a scenario network as CSV blocks"
    )
    reduce_cmd.add_argument("scenario", help="path to a scenario file")
    reduce_cmd.add_argument("--out", default=None, help="write blocks to a file instead")
    reduce_cmd.set_defaults(handler=_cmd_reduce)

    compare = sub.add_parser(
        "compare", help="integrate the full and reduced models and report their gap"
    )
    compare.add_argument("scenario", help="path to a scenario file")
    compare.add_argument("--step", type=float, default=None)
    compare.add_argument("--horizon", type=float, default=None)
    compare.set_defaults(handler=_cmd_compare)

    case6 = sub.add_parser("case6", help="run the bundled six-bus case study")
    case6.add_argument(
        "--emit-scenario",
        action="store_true",
        help="print the scenario file instead of running it",
    )
    _add_run_flags(case6)
    case6.set_defaults(handler=_cmd_case6)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.handler(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IncompatibleStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (SecurityViolation, RegularityError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SECURITY
    except GridReduceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
