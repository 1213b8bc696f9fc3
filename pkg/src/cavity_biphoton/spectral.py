"""Cavity line structure and normalized brightness.

The down-converted spectrum is a comb of cavity lines spaced by the FSR
under the phase-matching envelope.  Only the line at degeneracy is used,
so the useful flux is the total times ``w(0) / sum_k w(k * fsr)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterDomainError

TRUNCATION = 1e-6
_CHUNK = 1 << 22


class Envelope(str, enum.Enum):
    SINC2 = "Sinc2"
    GAUSSIAN = "Gaussian"


class BandwidthMeasure(str, enum.Enum):
    FWHM = "fwhm"
    # full width between the first zeros either side of the centre
    FIRST_NULL = "first_null"


# sinc^2(x) = 1/2 at x = 1.39155737...
SINC2_HALF_POINT = brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 1.0, 2.0, xtol=1e-15)


def line_fwhm(fsr_ghz: float, finesse: float) -> float:
    """Cavity linewidth in MHz."""
    if finesse <= 1:
        raise ParameterDomainError("finesse must be > 1")
    return 1000.0 * fsr_ghz / finesse


def _sinc2_scale(pm_bandwidth_ghz: float, measure: BandwidthMeasure) -> float:
    """Argument scale ``x = scale * f`` so the envelope is ``(sin x / x)^2``."""
    if measure is BandwidthMeasure.FWHM:
        return 2.0 * SINC2_HALF_POINT / pm_bandwidth_ghz
    return 2.0 * math.pi / pm_bandwidth_ghz


def envelope_weight(freq_ghz, pm_bandwidth_ghz: float, envelope: Envelope = Envelope.SINC2,
                    measure: BandwidthMeasure = BandwidthMeasure.FWHM) -> np.ndarray:
    f = np.asarray(freq_ghz, dtype=float)
    if Envelope(envelope) is Envelope.GAUSSIAN:
        return np.exp(-4.0 * math.log(2.0) * (f / pm_bandwidth_ghz) ** 2)
    x = _sinc2_scale(pm_bandwidth_ghz, BandwidthMeasure(measure)) * f
    return np.sinc(x / math.pi) ** 2


@dataclass(frozen=True)
class SpectralProfile:
    fsr_ghz: float
    finesse: float
    pm_bandwidth_ghz: float
    envelope: Envelope
    line_fwhm_mhz: float
    # w(k * fsr) for k = 0..len-1; negative k mirror these
    half_weights: np.ndarray
    total_weight: float

    @property
    def central_fraction(self) -> float:
        return float(self.half_weights[0] / self.total_weight)

    def weights(self, k_max: int) -> np.ndarray:
        w = self.half_weights[: k_max + 1]
        return np.concatenate([w[:0:-1], w])


def _line_sum(fsr_ghz: float, pm_bandwidth_ghz: float, envelope: Envelope,
              measure: BandwidthMeasure, keep: int) -> tuple[float, np.ndarray]:
    """Sum of w(k fsr) over all integers k until the discarded tail is below TRUNCATION."""
    total = 1.0  # k = 0
    kept: list[np.ndarray] = []
    start = 1
    while True:
        k = np.arange(start, start + _CHUNK, dtype=float)
        w = envelope_weight(k * fsr_ghz, pm_bandwidth_ghz, envelope, measure)
        if len(kept) * _CHUNK < keep:
            kept.append(w[: keep])
        total += 2.0 * w.sum()
        last = start + _CHUNK - 1
        if envelope is Envelope.GAUSSIAN:
            tail = 2.0 * float(w[-1]) / (1.0 - math.exp(-8.0 * math.log(2) * last
                                                        * (fsr_ghz / pm_bandwidth_ghz) ** 2))
        else:
            # sinc^2(a k) <= 1 / (a k)^2 and sum_{k > K} 1/k^2 < 1/K
            a = _sinc2_scale(pm_bandwidth_ghz, measure) * fsr_ghz
            tail = 2.0 / (a * a * last)
        if tail < TRUNCATION * total:
            break
        start += _CHUNK
    head = np.concatenate([[1.0]] + kept)[: keep + 1]
    return total, head


def spectral_profile(fsr_ghz: float, finesse: float, pm_bandwidth_ghz: float,
                     envelope: Envelope | str = Envelope.SINC2,
                     measure: BandwidthMeasure | str = BandwidthMeasure.FWHM,
                     keep_lines: int = 512) -> SpectralProfile:
    envelope, measure = Envelope(envelope), BandwidthMeasure(measure)
    if not 0 < fsr_ghz < pm_bandwidth_ghz:
        raise ParameterDomainError("need 0 < fsr < phase-matching bandwidth")
    total, head = _line_sum(fsr_ghz, pm_bandwidth_ghz, envelope, measure, keep_lines)
    return SpectralProfile(fsr_ghz, finesse, pm_bandwidth_ghz, envelope,
                           line_fwhm(fsr_ghz, finesse), head, total)


def central_fraction(fsr_ghz: float, pm_bandwidth_ghz: float,
                     envelope: Envelope | str = Envelope.SINC2,
                     measure: BandwidthMeasure | str = BandwidthMeasure.FWHM) -> float:
    """Share of the down-converted flux in the cavity line at degeneracy."""
    envelope, measure = Envelope(envelope), BandwidthMeasure(measure)
    if not 0 < fsr_ghz < pm_bandwidth_ghz:
        raise ParameterDomainError("need 0 < fsr < phase-matching bandwidth")
    total, _ = _line_sum(fsr_ghz, pm_bandwidth_ghz, envelope, measure, 0)
    return 1.0 / total


def brightness(coincidence_rate_per_s_per_mw: float, central_fraction: float,
               line_fwhm_mhz: float) -> float:
    """Pairs per second per mW of pump per MHz of bandwidth."""
    if coincidence_rate_per_s_per_mw < 0 or central_fraction <= 0 or line_fwhm_mhz <= 0:
        raise ParameterDomainError("rate must be >= 0, fraction and FWHM > 0")
    return coincidence_rate_per_s_per_mw * central_fraction / line_fwhm_mhz
