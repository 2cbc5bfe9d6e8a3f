"""Command-line entry point: ``rigidfsi run|plot|gronwall``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_PREMISE, EXIT_CHECK = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rigidfsi", description="Rigid body in a viscous fluid, body-frame solver.")
    p.add_argument("--version", action="version", version=f"rigidfsi {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", help="flat section.key = value file or a shipped scenario name")
    run.add_argument("-o", "--output", help="output directory (overrides run.output_dir)")
    run.add_argument("-q", "--quiet", action="store_true")
    plot = sub.add_parser("plot", help="write SVG plots for a run directory")
    plot.add_argument("run_dir")
    gr = sub.add_parser("gronwall", help="certify a Gronwall problem file")
    gr.add_argument("problem")
    sub.add_parser("scenarios", help="list shipped scenario configs")
    return p


def _cmd_run(args) -> int:
    from .config import ConfigError, SimConfig
    from .runner import RunFailure, run_simulation
    from .scenarios import scenario_path

    path = Path(args.config)
    if not path.exists():
        shipped = scenario_path(args.config)
        if shipped is None:
            print(f"error: {args.config}: no such file or shipped scenario", file=sys.stderr)
            return EXIT_USAGE
        path = shipped
    try:
        cfg = SimConfig.read(path)
        result = run_simulation(cfg, args.output, progress_every=0 if args.quiet else 100)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if not args.quiet:
        print((result.out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import PlotError, emit_plots

    try:
        for path in emit_plots(args.run_dir):
            print(path)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _cmd_gronwall(args) -> int:
    from .config import ConfigError
    from .gronwall import certify, integrate_equality_ode, parse_problem

    try:
        text = Path(args.problem).read_text()
        problem, dt = parse_problem(text, args.problem)
    except OSError as exc:
        print(f"error: {args.problem}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cert = certify(problem, integrate_equality_ode(problem, dt))
    print(cert.report(), end="")
    if not cert.premise_met:
        why = "trajectory blew up" if cert.blew_up else "y(0) + int G + int y >= eta_sup"
        print(f"premise unmet: {why}")
        return EXIT_PREMISE
    return EXIT_OK if cert.ok else EXIT_CHECK


def _cmd_scenarios(args) -> int:
    from .scenarios import list_scenarios

    for name in list_scenarios():
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.command == "run" and not args.quiet
                        else logging.WARNING, format="%(message)s")
    return {"run": _cmd_run, "plot": _cmd_plot, "gronwall": _cmd_gronwall,
            "scenarios": _cmd_scenarios}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
