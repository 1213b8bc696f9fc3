"""Simulation and inference for time-bin modulated polarization-entangled
biphotons from a cavity-enhanced type-II down-converter."""

__version__ = "0.1.0"

from .config import (Basis, CavityConfig, CrystalConfig, DetectorConfig, EccOrientation,
                     ExperimentConfig, MeasurementConfig, PumpConfig, RunConfig, load_config)
from .estimator import (FitResult, analyze_backward_pump, background_correct, fit_phase,
                        integrate_peaks, ratio_curve, visibility_report)
from .model import (PeakTrain, coincidence_probability, peak_amplitude,
                    phase_from_temperature, ratio_law, visibility_from_ratio)
from .rates import (JitterKernel, backward_pump_ratio, build_peak_train, expected_histogram,
                    expected_histogram_for, expected_ratio_curve)
from .records import Histogram, HistogramGeometry, PeakSums, RatioCurve
from .sim import SimRun, run_simulation, sample_outcome, sample_roundtrips
from .spectral import brightness, central_fraction, line_fwhm

__all__ = [
    "Basis", "CavityConfig", "CrystalConfig", "DetectorConfig", "EccOrientation",
    "ExperimentConfig", "MeasurementConfig", "PumpConfig", "RunConfig", "load_config",
    "FitResult", "analyze_backward_pump", "background_correct", "fit_phase",
    "integrate_peaks", "ratio_curve", "visibility_report",
    "PeakTrain", "coincidence_probability", "peak_amplitude", "phase_from_temperature",
    "ratio_law", "visibility_from_ratio",
    "JitterKernel", "backward_pump_ratio", "build_peak_train", "expected_histogram",
    "expected_histogram_for", "expected_ratio_curve",
    "Histogram", "HistogramGeometry", "PeakSums", "RatioCurve",
    "SimRun", "run_simulation", "sample_outcome", "sample_roundtrips",
    "brightness", "central_fraction", "line_fwhm",
]
