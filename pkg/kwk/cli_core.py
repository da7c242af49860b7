"""
KWK CLI Core Module

Command-line controller: simulate, ring experiment, viscosity sweep,
invariant checks and unit conversion
"""

import argparse
import json
import logging
import sys
import time
from typing import Any, Dict, List, Optional

from .config import build_probes, load_config, serialize_config
from .diagnostics import energy_dissipation, invariant_suite, smallness_monitor
from .exceptions import InputValidationError, KwkError, NumericalFailure
from .experiments import (build_ring_experiment, cliff_ratio, ring_preset, run_experiment,
                          singular_values, superposition_defect, viscosity_sweep)
from .exporters import ResultExporter
from .media import db_to_internal_alpha, validate_media
from .models import RunConfig
from .solver import build_simulation
from .utils import (digest_text, format_time, print_error, print_info, print_success, print_warning,
                    setup_logging)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

LINEAR_CLIFF = 1e-6
CLIFF_CONTRAST = 100.0


class KwkCLI:
    """Main CLI controller for simulator operations"""

    def __init__(self, args):
        self.args = args
        self.start_time = time.time()
        self.progress = bool(getattr(args, "verbose", False))

    def _config(self, path: Optional[str] = None, preset: Optional[str] = None) -> RunConfig:
        config = ring_preset(preset) if preset else load_config(path or self.args.config)
        output = getattr(self.args, "output", None)
        if output:
            config = config.model_copy(update={"output_dir": output})
        return config

    def _exporter(self, config: RunConfig) -> ResultExporter:
        return ResultExporter(config.output_dir)

    def _report_media(self, config: RunConfig, media):
        report = validate_media(media, threshold=config.delta_rc,
                                tau_eta_auto="auto" in (config.absorption.tau, config.absorption.eta))
        for note in report.notes:
            print_warning(note)
        return report

    # commands ---------------------------------------------------------

    def simulate(self) -> Dict[str, Any]:
        config = self._config()
        print_info(f"Simulating {config.grid.dims} grid, {config.solver.steps} steps")
        sim, initial = build_simulation(config)
        media_report = self._report_media(config, sim.media)
        trajectory = sim.run(initial, build_probes(config), progress=self.progress,
                             config_digest=digest_text(serialize_config(config)))

        exporter = self._exporter(config)
        exporter.export_traces(trajectory)
        summary: Dict[str, Any] = {
            "command": "simulate",
            "steps": config.solver.steps,
            "t_end": float(trajectory.final.t),
            "retries": trajectory.retries,
            "max_picard_iterations": max(trajectory.picard_iterations, default=0),
            "media_delta_rc": media_report.delta_rc,
        }
        if trajectory.states:
            report = energy_dissipation(trajectory, sim, config.smallness_r)
            exporter.export_energy(report)
            monitor = smallness_monitor(trajectory, sim, config.smallness_r)
            summary.update(sup_E=report.sup_E, D_end=float(report.D[-1]), sup_L=monitor.sup,
                           first_violation=monitor.first_violation)
            if not monitor.below:
                print_warning(f"smallness monitor exceeded r={config.smallness_r} at t={monitor.first_violation:.6g}")
        else:
            print_warning("state history not stored; energy report skipped")

        W = sim.bases.weighted
        final = trajectory.final
        exporter.export_snapshot(config.grid, "sigma", W.synthesize(final.sigma_modal), final.t)
        exporter.export_snapshot(config.grid, "p", W.synthesize(final.p_modal), final.t)
        exporter.export_snapshot(config.grid, "u", final.u, final.t, layout="faces")
        self._finish(exporter, "simulate", summary, config_digest=trajectory.config_digest,
                     media_digest=trajectory.media_digest)
        return summary

    def experiment_ring(self) -> Dict[str, Any]:
        config = self._config(self.args.config, self.args.preset)
        media, array, plan = build_ring_experiment(config)
        self._report_media(config, media)
        print_info(f"Ring experiment: {len(plan.runs)} runs, {plan.n_rows} traces per regime")

        exporter = self._exporter(config)
        summary: Dict[str, Any] = {"command": "experiment ring", "runs": len(plan.runs), "rows": plan.n_rows}
        k = plan.single_rows + 1
        for regime, linear in (("linear", True), ("nonlinear", False)):
            matrix = run_experiment(plan, config, linear_mode=linear, progress=self.progress)
            exporter.export_data_matrix(matrix, f"traces_{regime}.csv")
            try:
                raw = singular_values(matrix)
            except InputValidationError:
                print_warning(f"{regime} data matrix is all zero")
                summary[regime] = {"cliff_ratio": None, "superposition_defect": 0.0}
                continue
            spectrum = raw / raw[0]
            exporter.export_spectrum(spectrum, f"singular_values_{regime}.csv", scale=float(raw[0]))
            ratio = cliff_ratio(spectrum, k) if k <= len(spectrum) else None
            summary[regime] = {"cliff_index": k, "cliff_ratio": ratio,
                               "superposition_defect": superposition_defect(matrix, plan)}
            print_success(f"{regime}: sigma_{k}/sigma_1 = {ratio}")

        lin, non = summary["linear"]["cliff_ratio"], summary["nonlinear"]["cliff_ratio"]
        summary["cliff"] = bool(lin is not None and non is not None and lin <= LINEAR_CLIFF
                                and non >= CLIFF_CONTRAST * lin)
        self._finish(exporter, "experiment ring", summary)
        return summary

    def sweep_viscosity(self) -> Dict[str, Any]:
        config = self._config()
        report = viscosity_sweep(config, progress=self.progress)
        exporter = self._exporter(config)
        exporter.export_sweep(report)
        for note in report.notes:
            print_warning(note)
        summary = {
            "command": "sweep viscosity",
            "mus": report.mus,
            "distance_to_inviscid": report.distance_to_inviscid,
            "monotone": report.monotone,
            "energy_variation": report.energy_variation,
        }
        self._finish(exporter, "sweep viscosity", summary)
        return summary

    def check_invariants(self) -> Dict[str, Any]:
        config = self._config()
        results = invariant_suite(config, progress=self.progress)
        for r in results:
            line = f"{r.name}: value={r.value} {r.detail}".rstrip()
            (print_success if r.passed else print_error)(("pass " if r.passed else "FAIL ") + line)
        return {
            "command": "check invariants",
            "passed": all(r.passed for r in results),
            "checks": [r.model_dump() for r in results],
        }

    def convert_alpha(self) -> Dict[str, Any]:
        value = db_to_internal_alpha(self.args.db, self.args.y)
        return {"command": "convert alpha", "alpha_db": self.args.db, "y": self.args.y, "alpha0": value}

    def _finish(self, exporter: ResultExporter, command: str, summary: Dict[str, Any], **extra):
        elapsed = time.time() - self.start_time
        exporter.export_metadata(command, {"elapsed_s": elapsed, **extra})
        summary["output_dir"] = str(exporter.output_dir)
        print_success(f"Results saved to: {exporter.output_dir} ({format_time(elapsed)})")


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2"""

    def error(self, message):
        raise InputValidationError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    default = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("-v", "--verbose", action="store_true", help="Verbose output and progress bars", **default)
    p.add_argument("--debug", action="store_true", help="Debug logging and tracebacks", **default)
    p.add_argument("--json", action="store_true", help="Print a JSON summary on stdout", **default)
    p.add_argument("-o", "--output", help="Override the output directory", **default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kwk",
        description="Galerkin simulator for the nonlinear absorbing acoustic (u, sigma, p) system",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  kwk simulate configs/default.json             # Run one simulation
  kwk experiment ring configs/ring_desk.json    # Ring experiment, linear and nonlinear
  kwk experiment ring --preset desk             # Same, from the built-in preset
  kwk sweep viscosity configs/sweep.json        # Vanishing-viscosity sweep
  kwk check invariants configs/default.json     # Diagnostics suite
  kwk convert alpha --db 0.5 --y 1.5            # dB/cm/MHz^y -> internal alpha0
        """,
    )
    _add_common(parser, suppress=False)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("simulate", help="Run one simulation")
    p.add_argument("config", help="JSON run configuration")
    _add_common(p, suppress=True)

    p = commands.add_parser("experiment", help="Ring-array experiment")
    p.add_argument("kind", choices=["ring"])
    p.add_argument("config", nargs="?", help="JSON run configuration with an experiment block")
    p.add_argument("--preset", choices=["desk", "water"], help="Use a built-in preset instead of a file")
    _add_common(p, suppress=True)

    p = commands.add_parser("sweep", help="Parameter sweeps")
    p.add_argument("kind", choices=["viscosity"])
    p.add_argument("config", help="JSON run configuration with a sweep block")
    _add_common(p, suppress=True)

    p = commands.add_parser("check", help="Diagnostics suite")
    p.add_argument("kind", choices=["invariants"])
    p.add_argument("config", help="JSON run configuration")
    _add_common(p, suppress=True)

    p = commands.add_parser("convert", help="Unit conversion")
    p.add_argument("kind", choices=["alpha"])
    p.add_argument("--db", type=float, required=True, help="alpha0 in dB/cm/MHz^y")
    p.add_argument("--y", type=float, required=True, help="Power-law exponent")
    _add_common(p, suppress=True)
    return parser


def _dispatch(cli: KwkCLI, args) -> Dict[str, Any]:
    if args.command == "simulate":
        return cli.simulate()
    if args.command == "experiment":
        if not (args.config or args.preset):
            raise InputValidationError("experiment ring needs a config file or --preset")
        return cli.experiment_ring()
    if args.command == "sweep":
        return cli.sweep_viscosity()
    if args.command == "check":
        return cli.check_invariants()
    return cli.convert_alpha()


def _error_summary(argv: List[str], code: int, kind: str, message: str):
    if "--json" in argv:
        print(json.dumps({"ok": False, "exit_code": code, "error": kind, "message": message},
                         indent=2, sort_keys=True))
    return code


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI; returns 0 on success, 1 on validation errors, 2 on numerical failures"""
    argv = list(sys.argv[1:] if argv is None else argv)
    debug = False
    try:
        args = build_parser().parse_args(argv)
        debug = args.debug
        setup_logging(args.verbose, args.debug)
        summary = _dispatch(KwkCLI(args), args)
    except SystemExit as e:
        return int(e.code or 0)
    except KeyboardInterrupt:
        print_error("Interrupted by user")
        return _error_summary(argv, EXIT_INVALID, "interrupted", "interrupted by user")
    except InputValidationError as e:
        print_error(f"Error: {e}")
        return _error_summary(argv, EXIT_INVALID, "validation", str(e))
    except (NumericalFailure, KwkError) as e:
        print_error(f"Numerical failure: {e}")
        return _error_summary(argv, EXIT_NUMERICAL, "numerical", str(e))
    except Exception as e:
        print_error(f"Error: {e}")
        if debug:
            import traceback
            traceback.print_exc()
        return _error_summary(argv, EXIT_NUMERICAL, type(e).__name__, str(e))

    passed = args.command != "check" or summary["passed"]
    if args.json:
        summary["ok"] = passed
        print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    elif args.command == "convert":
        print(f"{summary['alpha0']:.17g}")
    return EXIT_OK if passed else EXIT_NUMERICAL


def main():
    sys.exit(cli_main())
