"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O failure,
4 numerical failure (degenerate fit).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from typing import Sequence

from . import __version__
from .config import ExperimentConfig, MeasurementConfig, WORKERS_ENV_VAR, load_config
from .errors import (ConfigError, FitDegenerateError, HistogramFormatError,
                     ParameterDomainError)
from .estimator import (background_correct, fit_phase, integrate_peaks, ratio_curve,
                        visibility_report)
from .io import read_histogram, write_histogram, write_report
from .model import phase_from_temperature
from .rates import expected_histogram_for
from .sim import SimRun, run_simulation
from .spectral import BandwidthMeasure, Envelope, brightness, spectral_profile

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _workers(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavity-biphoton",
        description="Simulate and analyze time-bin modulated polarization-entangled "
                    "biphotons from a cavity-enhanced type-II down-converter.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo TT-TR histogram")
    sim.add_argument("config", nargs="?", help="JSON config (defaults if omitted)")
    sim.add_argument("--basis", choices=["hv", "pm45"], default="hv")
    sim.add_argument("--seed", type=_seed)
    sim.add_argument("--duration", type=_positive_float, help="seconds of acquisition")
    sim.add_argument("--workers", type=_workers,
                     help=f"worker threads (default: ${WORKERS_ENV_VAR} or 1)")
    sim.add_argument("--out", required=True, help="output .csv or .json")

    exp = sub.add_parser("expect", help="analytic expected histogram")
    exp.add_argument("config", nargs="?")
    exp.add_argument("--basis", choices=["hv", "pm45"], default="hv")
    exp.add_argument("--duration", type=_positive_float)
    exp.add_argument("--out", required=True)

    ana = sub.add_parser("analyze", help="ratio curve, phase fit and visibility")
    ana.add_argument("hv", help="H-V basis histogram")
    ana.add_argument("pm45", help="+-45 basis histogram")
    ana.add_argument("--config", help="config supplying tau_c, windows and backgrounds")
    ana.add_argument("--t2pi", type=_positive_float, help="ICC temperature for 2 pi (C)")
    ana.add_argument("--temperature", type=float,
                     help="known ICC detuning (C); adds the calibration-implied phase")
    ana.add_argument("--bg-hv", type=float, help="H-V background, Hz per bin")
    ana.add_argument("--bg-pm45", type=float, help="+-45 background, Hz per bin")
    ana.add_argument("--report", help="write the JSON report here (stdout otherwise)")

    spec = sub.add_parser("spectral", help="linewidth, central-line fraction, brightness")
    spec.add_argument("config", nargs="?")
    spec.add_argument("--rate", type=float, default=4000.0,
                      help="T-R coincidence rate, pairs/(s mW)")
    spec.add_argument("--envelope", choices=[e.value for e in Envelope], default="Sinc2")
    spec.add_argument("--bandwidth-measure", choices=[m.value for m in BandwidthMeasure],
                      default="fwhm")
    spec.add_argument("--report")
    return parser


def _apply_run(config: ExperimentConfig, **values) -> ExperimentConfig:
    changes = {k: v for k, v in values.items() if v is not None}
    if not changes:
        return config
    return dataclasses.replace(config, run=dataclasses.replace(config.run, **changes))


def cmd_simulate(args) -> int:
    config = _apply_run(load_config(args.config), seed=args.seed, duration_s=args.duration,
                        n_workers=args.workers)
    hist = run_simulation(SimRun.from_config(config), MeasurementConfig.for_basis(args.basis))
    write_histogram(hist, args.out)
    return EXIT_OK


def cmd_expect(args) -> int:
    config = load_config(args.config)
    hist = expected_histogram_for(config, MeasurementConfig.for_basis(args.basis),
                                  args.duration)
    write_histogram(hist, args.out)
    return EXIT_OK


def analyze(hv_hist, pm_hist, config: ExperimentConfig, t2pi: float,
            bg_hv: float, bg_pm45: float, temperature: float | None = None) -> tuple[dict, int]:
    """Full analysis report; returns ``(report, exit_code)``."""
    if not hv_hist.same_geometry(pm_hist):
        raise UsageError("H-V and +-45 histograms have different bin geometry")
    tau_c = config.cavity.roundtrip_time_ps
    half = config.run.ratio_half_window
    window = range(-half, half + 1)
    hv = integrate_peaks(background_correct(hv_hist, bg_hv), tau_c, config.peak_window_ps, window)
    pm = integrate_peaks(background_correct(pm_hist, bg_pm45), tau_c, config.peak_window_ps,
                         window)
    curve = ratio_curve(hv, pm)
    vis = visibility_report(hv, pm)
    report: dict = {
        "inputs": {
            "hv_config_hash": hv_hist.config_hash,
            "pm45_config_hash": pm_hist.config_hash,
            "roundtrip_time_ps": tau_c,
            "window_ps": config.peak_window_ps,
            "background_hz_per_bin": {"hv": bg_hv, "pm45": bg_pm45},
            "duration_s": {"hv": hv_hist.duration_s, "pm45": pm_hist.duration_s},
        },
        "ratio_curve": curve.to_dict(),
        "visibility": dataclasses.asdict(vis),
        "warnings": [],
    }
    if hv_hist.config_hash != pm_hist.config_hash:
        report["warnings"].append("histograms were produced from different configurations")
    if temperature is not None:
        phi_cal = phase_from_temperature(temperature, t2pi)
        report["calibration"] = {
            "temperature_C": temperature,
            "phase_rad": phi_cal,
            "period_roundtrips": 2 * math.pi / phi_cal if phi_cal else math.inf,
        }
    try:
        fit = fit_phase(curve, t2pi_celsius=t2pi)
    except FitDegenerateError as exc:
        report["fit"] = None
        report["fit_error"] = {"message": str(exc), "diagnostics": exc.diagnostics}
        return report, EXIT_NUMERIC
    report["fit"] = fit.to_dict()
    report["warnings"].append(
        f"phase is aliased: {fit.phase_rad:.6g} and {fit.alias_phase_rad:.6g} rad "
        "give identical ratio curves")
    return report, EXIT_OK


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    hv_hist = read_histogram(args.hv)
    pm_hist = read_histogram(args.pm45)
    t2pi = args.t2pi if args.t2pi is not None else config.cavity.t2pi_celsius
    bg_hv = args.bg_hv if args.bg_hv is not None else config.detector.background_rate_hz_per_bin_hv
    bg_pm = (args.bg_pm45 if args.bg_pm45 is not None
             else config.detector.background_rate_hz_per_bin_pm45)
    report, code = analyze(hv_hist, pm_hist, config, t2pi, bg_hv, bg_pm, args.temperature)
    text = write_report(report, args.report)
    if args.report is None:
        print(text)
    return code


def spectral_report(config: ExperimentConfig, rate: float, envelope: str = "Sinc2",
                    measure: str = "fwhm") -> dict:
    cav = config.cavity
    profile = spectral_profile(cav.fsr_ghz, cav.finesse, config.crystal.pm_bandwidth_ghz,
                               envelope, measure)
    fraction = profile.central_fraction
    return {
        "fsr_ghz": cav.fsr_ghz,
        "finesse": cav.finesse,
        "pm_bandwidth_ghz": config.crystal.pm_bandwidth_ghz,
        "envelope": profile.envelope.value,
        "bandwidth_measure": measure,
        "fwhm_mhz": profile.line_fwhm_mhz,
        "central_fraction": fraction,
        "lines_per_total": 1.0 / fraction,
        "rate_pairs_per_s_per_mw": rate,
        "brightness_pairs_per_s_mw_mhz": brightness(rate, fraction, profile.line_fwhm_mhz),
    }


def cmd_spectral(args) -> int:
    report = spectral_report(load_config(args.config), args.rate, args.envelope,
                             args.bandwidth_measure)
    text = write_report(report, args.report)
    if args.report is None:
        print(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "expect": cmd_expect,
    "analyze": cmd_analyze,
    "spectral": cmd_spectral,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, HistogramFormatError, ParameterDomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitDegenerateError, ZeroDivisionError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
