"""Analytic expected histograms and ratio curves.

The H-V histogram is a comb of peaks at ``m * tau_c`` with pair
probability ``(1-s)/(1+s) * s**|m|``; the +-45 histogram reweights each
peak by the basis-dependent TT-TR coincidence probability.  Detector
jitter smears every peak with a Gaussian of the combined two-detector
width.  These are the deterministic references the Monte Carlo output
is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import ndtr

from .config import Basis, EccOrientation, ExperimentConfig, FWHM_PER_SIGMA, MeasurementConfig
from .errors import ParameterDomainError
from .model import PeakEntry, PeakTrain, mean_cross_term, peak_amplitude, peak_probability
from .records import Histogram, HistogramGeometry, RatioCurve

# per-pair probability that both photons leave the 50-50 splitter towards TT/TR
SAME_PORT_FRACTION = 0.25


@dataclass(frozen=True)
class JitterKernel:
    """Gaussian spread of the start-stop difference; ``sigma_ps = 0`` is a delta."""

    sigma_ps: float

    def __post_init__(self):
        if self.sigma_ps < 0:
            raise ParameterDomainError("sigma_ps must be >= 0")

    @classmethod
    def from_detector_fwhm(cls, fwhm_ps: float) -> "JitterKernel":
        return cls(fwhm_ps / FWHM_PER_SIGMA * math.sqrt(2.0))


@dataclass(frozen=True)
class Coherence:
    """How much of the pair population carries the HV/VH cross term.

    ``visibility`` is the product of the ECC compensation quality and the
    fraction of pairs whose pump direction matches the ECC orientation.
    ``drift_rad`` is a linear phase sweep over the acquisition.
    """

    visibility: float = 1.0
    drift_rad: float = 0.0

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Coherence":
        beta = config.pump.backward_pair_fraction
        matched = (1.0 - beta) if config.crystal.ecc_orientation is EccOrientation.NORMAL else beta
        return cls(config.crystal.compensation_fraction * matched, config.cavity.phase_drift_rad)


def tt_tr_probability(m, phase_rad: float, hwp_angle_T_rad: float,
                      coherence: Coherence = Coherence()) -> np.ndarray:
    """Probability per pair of a TT-TR coincidence at roundtrip difference ``m``.

    Both photons must reach the transmitted side of the 50-50 splitter
    (probability 1/4), then split at the PBS whose axes sit at 2*theta_T and
    2*theta_T + pi/2.  Either photon may go to TT.
    """
    a = 2.0 * hwp_angle_T_rad
    b = a + math.pi / 2
    ca, sa, cb, sb = math.cos(a), math.sin(a), math.cos(b), math.sin(b)
    cross = mean_cross_term(m, phase_rad, coherence.drift_rad)
    both = (ca * sb) ** 2 + (sa * cb) ** 2 + 2.0 * ca * sb * sa * cb * coherence.visibility * cross
    return SAME_PORT_FRACTION * both


def build_peak_train(config: ExperimentConfig, m_max: int | None = None) -> PeakTrain:
    """Peaks for ``m`` in ``[-m_max, m_max]``; ``m_max`` defaults to ``run.m_max``."""
    m_max = config.run.m_max if m_max is None else m_max
    if m_max < 0:
        raise ParameterDomainError("m_max must be >= 0")
    cav = config.cavity
    s, phi = cav.survival, cav.birefringence_phase_rad
    entries = tuple(
        PeakEntry(m, m * cav.roundtrip_time_ps, peak_amplitude(m, s, phi))
        for m in range(-m_max, m_max + 1)
    )
    return PeakTrain(entries, config.crystal.box_width_ps, s, phi)


def truncation_bound(survival: float, m_max: int) -> float:
    """Upper bound on the pair probability beyond ``|m| > m_max``."""
    return survival ** (m_max + 1) / (1.0 - survival)


def _gauss_antiderivative(u):
    # integral of the standard normal CDF
    return u * ndtr(u) + np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def peak_mass(edges_ps: np.ndarray, centers_ps: np.ndarray, sigma_ps: float,
              box_width_ps: float = 0.0) -> np.ndarray:
    """Probability mass of each peak landing in each interval between ``edges``.

    Returns shape ``(len(centers), len(edges) - 1)``.  With
    ``box_width_ps > 0`` the peak is a uniform box convolved with the
    Gaussian rather than a point.
    """
    edges = np.asarray(edges_ps, dtype=float)[None, :]
    c = np.asarray(centers_ps, dtype=float)[:, None]
    if sigma_ps == 0.0:
        if box_width_ps > 0.0:
            lo, hi = c - box_width_ps / 2, c + box_width_ps / 2
            cum = np.clip(edges, lo, hi) - lo
            return np.diff(cum, axis=1) / box_width_ps
        cum = (edges > c).astype(float)
        return np.diff(cum, axis=1)
    if box_width_ps > 0.0:
        half = box_width_ps / 2
        cum = sigma_ps / box_width_ps * (_gauss_antiderivative((edges - c + half) / sigma_ps)
                                         - _gauss_antiderivative((edges - c - half) / sigma_ps))
    else:
        cum = ndtr((edges - c) / sigma_ps)
    return np.diff(cum, axis=1)


def window_mass(lo_ps, hi_ps, centers_ps, sigma_ps: float, box_width_ps: float = 0.0) -> np.ndarray:
    """Mass of each peak inside each ``[lo, hi)`` window; shape ``(peaks, windows)``."""
    edges = np.column_stack([lo_ps, hi_ps]).ravel()
    return peak_mass(edges, centers_ps, sigma_ps, box_width_ps)[:, 0::2]


def default_geometry(config: ExperimentConfig) -> HistogramGeometry:
    return HistogramGeometry.centered(
        config.detector.bin_width_ps,
        config.run.half_span_roundtrips * config.cavity.roundtrip_time_ps,
    )


def expected_histogram(train: PeakTrain, basis: MeasurementConfig, kernel: JitterKernel,
                       det, duration_s: float, *, geometry: HistogramGeometry,
                       coherence: Coherence = Coherence(), exact_box: bool = False,
                       config_hash: str | None = None) -> Histogram:
    """Expected counts per bin over ``duration_s`` seconds of acquisition."""
    if duration_s <= 0:
        raise ParameterDomainError("duration_s must be > 0")
    weights = train.weights() * tt_tr_probability(
        train.m, train.phase_rad, basis.hwp_angle_T_rad, coherence)
    mass = peak_mass(geometry.edges_ps, train.centers_ps, kernel.sigma_ps,
                     train.box_width_ps if exact_box else 0.0)
    pairs = det.pair_detection_rate_hz * duration_s
    background = det.background_rate(basis.basis) * duration_s
    counts = pairs * (weights @ mass) + background
    return Histogram(geometry.bin_width_ps, geometry.origin_ps, counts, duration_s,
                     basis=basis.label, config_hash=config_hash)


def expected_histogram_for(config: ExperimentConfig, basis: MeasurementConfig | None = None,
                           duration_s: float | None = None) -> Histogram:
    """:func:`expected_histogram` with every ingredient taken from ``config``."""
    basis = basis or config.measurement
    return expected_histogram(
        build_peak_train(config),
        basis,
        JitterKernel(config.jitter_sigma_ps),
        config.detector,
        config.run.duration_s if duration_s is None else duration_s,
        geometry=default_geometry(config),
        coherence=Coherence.from_config(config),
        exact_box=config.run.exact_box,
        config_hash=config.config_hash(),
    )


def window_edges(m: np.ndarray, tau_c_ps: float, window_ps: float) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m, dtype=float)
    return m * tau_c_ps - window_ps / 2, m * tau_c_ps + window_ps / 2


def expected_peak_sums(config: ExperimentConfig, basis: MeasurementConfig,
                       m_window: Iterable[int], kernel: JitterKernel | None = None,
                       duration_s: float | None = None) -> np.ndarray:
    """Expected signal counts (no background) in each peak window."""
    kernel = kernel or JitterKernel(config.jitter_sigma_ps)
    ms = np.asarray(list(m_window), dtype=int)
    tau_c = config.cavity.roundtrip_time_ps
    spread = int(math.ceil(12.0 * kernel.sigma_ps / tau_c)) + 1
    ks = np.arange(ms.min() - spread, ms.max() + spread + 1)
    s, phi = config.cavity.survival, config.cavity.birefringence_phase_rad
    w = peak_probability(ks, s) * tt_tr_probability(
        ks, phi, basis.hwp_angle_T_rad, Coherence.from_config(config))
    lo, hi = window_edges(ms, tau_c, config.peak_window_ps)
    box = config.crystal.box_width_ps if config.run.exact_box else 0.0
    L = window_mass(lo, hi, ks * tau_c, kernel.sigma_ps, box)
    duration = config.run.duration_s if duration_s is None else duration_s
    return config.detector.pair_detection_rate_hz * duration * (w @ L)


def expected_ratio_curve(config: ExperimentConfig, kernel: JitterKernel | None = None,
                         m_window: Iterable[int] | None = None) -> RatioCurve:
    """Per-peak +-45/H-V ratio including jitter spillover between windows.

    Uncertainties are the Poisson errors a run of ``run.duration_s`` at the
    configured rates and backgrounds would carry.
    """
    if m_window is None:
        half = config.run.ratio_half_window
        m_window = range(-half, half + 1)
    ms = np.asarray(list(m_window), dtype=int)
    hv_basis = MeasurementConfig.for_basis("hv")
    pm_basis = MeasurementConfig.for_basis("pm45")
    hv = expected_peak_sums(config, hv_basis, ms, kernel)
    pm = expected_peak_sums(config, pm_basis, ms, kernel)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hv > 0, pm / hv, 0.0)
    bins_per_window = config.peak_window_ps / config.detector.bin_width_ps
    duration = config.run.duration_s
    var_hv = np.maximum(hv + config.detector.background_rate_hz_per_bin_hv * duration
                        * bins_per_window, 1.0)
    var_pm = np.maximum(pm + config.detector.background_rate_hz_per_bin_pm45 * duration
                        * bins_per_window, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(hv > 0, np.sqrt(var_pm / hv**2 + pm**2 * var_hv / hv**4), np.inf)
    return RatioCurve.from_arrays(ms, ratio, sigma, hv)


def backward_pump_ratio(r_interfering: float, backward_fraction_beta: float,
                        orientation: EccOrientation | str) -> float:
    """Observed +-45/H-V ratio when a fraction ``beta`` of pairs comes from the reflected pump.

    Pairs whose pump direction mismatches the ECC orientation never
    interfere and contribute a ratio of 1/2.
    """
    for name, v in (("r_interfering", r_interfering), ("beta", backward_fraction_beta)):
        if not 0.0 <= v <= 1.0:
            raise ParameterDomainError(f"{name} must lie in [0, 1], got {v}")
    beta = backward_fraction_beta
    if EccOrientation(orientation) is EccOrientation.NORMAL:
        return (1.0 - beta) * r_interfering + beta * 0.5
    return (1.0 - beta) * 0.5 + beta * r_interfering
