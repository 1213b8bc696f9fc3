"""Closed-form biphoton amplitudes and coincidence probabilities.

A pair whose signal photon leaves the cavity ``m`` roundtrips after the
idler carries the polarization state

    (|H>_1 |V>_2 + exp(i m phi) |V>_1 |H>_2) / sqrt(2)

and its correlation peak at ``tau = m * tau_c`` has amplitude
``sqrt(s)**|m| * exp(i m phi / 2) / (1 - s)`` once the sum over common
roundtrips is carried out, with ``s`` the per-roundtrip survival.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError


def _check_survival(survival: float) -> None:
    if not 0.0 < survival < 1.0:
        raise ParameterDomainError(f"survival must lie in (0, 1), got {survival}")


def peak_amplitude(m: int, survival: float, phase_rad: float) -> complex:
    """Coefficient of the box peak centred at ``m`` roundtrips."""
    _check_survival(survival)
    magnitude = math.sqrt(survival) ** abs(m) / (1.0 - survival)
    return magnitude * cmath.exp(1j * m * phase_rad / 2.0)


def peak_probability(m, survival: float):
    """Normalised probability of roundtrip difference ``m`` for one pair.

    With signal and idler exits independently geometric this is
    ``(1 - s) / (1 + s) * s**|m|``; the values sum to one over all integers.
    Accepts scalars or arrays.
    """
    _check_survival(survival)
    return (1.0 - survival) / (1.0 + survival) * survival ** np.abs(m)


def coincidence_probability(m: int, phase_rad: float, theta1_rad: float,
                            theta2_rad: float) -> float:
    """Probability that photon 1 passes an analyzer at ``theta1`` and photon 2 one at ``theta2``.

    Rotating either angle by pi/2 gives the orthogonal output port, so the
    four combinations exhaust the outcomes.
    """
    amp = (math.cos(theta1_rad) * math.sin(theta2_rad)
           + cmath.exp(1j * m * phase_rad) * math.sin(theta1_rad) * math.cos(theta2_rad))
    return abs(amp) ** 2 / 2.0


def incoherent_coincidence_probability(theta1_rad: float, theta2_rad: float) -> float:
    """Same as :func:`coincidence_probability` for a distinguishable HV/VH mixture."""
    hv = (math.cos(theta1_rad) * math.sin(theta2_rad)) ** 2
    vh = (math.sin(theta1_rad) * math.cos(theta2_rad)) ** 2
    return (hv + vh) / 2.0


def ratio_law(m, phase_rad: float):
    """Ideal +-45/H-V coincidence ratio of peak ``m``: sin^2(m phi / 2)."""
    return np.sin(np.asarray(m) * phase_rad / 2.0) ** 2


def mean_cross_term(m, phase_rad: float, drift_rad: float = 0.0) -> np.ndarray:
    """cos(m phi) averaged over a phase swept linearly from phi to phi + drift."""
    m = np.asarray(m, dtype=float)
    if drift_rad == 0.0:
        return np.cos(m * phase_rad)
    span = m * drift_rad
    safe = np.where(span == 0.0, 1.0, span)
    return np.where(span == 0.0, np.cos(m * phase_rad),
                    (np.sin(m * phase_rad + span) - np.sin(m * phase_rad)) / safe)


def drift_averaged_ratio(m, phase_rad: float, drift_rad: float = 0.0) -> np.ndarray:
    """:func:`ratio_law` averaged over a linear phase sweep of ``drift_rad``."""
    return 0.5 - 0.5 * mean_cross_term(m, phase_rad, drift_rad)


def phase_from_temperature(delta_T_celsius: float, T_2pi_celsius: float) -> float:
    """Roundtrip birefringence produced by an ICC detuning of ``delta_T``."""
    if T_2pi_celsius <= 0:
        raise ParameterDomainError(f"T_2pi must be positive, got {T_2pi_celsius}")
    return 2.0 * math.pi * delta_T_celsius / T_2pi_celsius


def temperature_from_phase(phase_rad: float, T_2pi_celsius: float) -> float:
    if T_2pi_celsius <= 0:
        raise ParameterDomainError(f"T_2pi must be positive, got {T_2pi_celsius}")
    return phase_rad * T_2pi_celsius / (2.0 * math.pi)


def visibility_from_ratio(r: float) -> float:
    """Fringe visibility (1 - r) / (1 + r) for a +-45/H-V ratio ``r``."""
    if not 0.0 <= r <= 1.0:
        raise ParameterDomainError(f"ratio must lie in [0, 1], got {r}")
    return (1.0 - r) / (1.0 + r)


def ratio_from_visibility(v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise ParameterDomainError(f"visibility must lie in [0, 1], got {v}")
    return (1.0 - v) / (1.0 + v)


@dataclass(frozen=True)
class PeakEntry:
    m: int
    center_ps: float
    amplitude: complex


@dataclass(frozen=True)
class PeakTrain:
    entries: tuple[PeakEntry, ...]
    box_width_ps: float
    survival: float
    phase_rad: float

    @property
    def m(self) -> np.ndarray:
        return np.array([e.m for e in self.entries], dtype=int)

    @property
    def centers_ps(self) -> np.ndarray:
        return np.array([e.center_ps for e in self.entries], dtype=float)

    def weights(self) -> np.ndarray:
        """Normalised pair probability of each entry (sums to < 1 when truncated)."""
        return peak_probability(self.m, self.survival)

    def discarded_weight(self) -> float:
        """Pair probability carried by the peaks beyond the truncation."""
        return float(1.0 - self.weights().sum())

    def __len__(self) -> int:
        return len(self.entries)
