"""Recovering the roundtrip birefringence from a pair of histograms.

Pipeline: subtract the flat background from each basis, sum counts in a
window around every peak ``m * tau_c``, divide the +-45 sums by the H-V
sums, then fit ``A * sin^2(m phi / 2) + B`` by weighted least squares.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FitDegenerateError, NoInterferenceError, ParameterDomainError
from .model import temperature_from_phase, visibility_from_ratio
from .records import Histogram, PeakSums, RatioCurve

MIN_HV_COUNTS = 25.0
GRID_STEPS = 400  # phase grid step pi/400 < pi/200


def background_correct(hist: Histogram, rate_hz_per_bin: float) -> Histogram:
    """Subtract ``rate * duration`` from every bin; negative bins are kept."""
    if rate_hz_per_bin < 0:
        raise ParameterDomainError("background rate must be >= 0")
    if rate_hz_per_bin == 0:
        return hist
    per_bin = rate_hz_per_bin * hist.duration_s
    return dataclasses.replace(
        hist,
        counts=hist.counts.astype(float) - per_bin,
        background_subtracted=hist.background_subtracted + per_bin,
    )


def _window_masks(hist: Histogram, tau_c_ps: float, window_ps: float, ms: np.ndarray):
    if window_ps > tau_c_ps:
        raise ParameterDomainError(
            f"window {window_ps} ps exceeds the roundtrip time {tau_c_ps} ps; windows would overlap")
    centers = hist.centers_ps
    lo = ms[:, None] * tau_c_ps - window_ps / 2
    return (centers[None, :] >= lo) & (centers[None, :] < lo + window_ps)


def integrate_peaks(hist: Histogram, tau_c_ps: float, window_ps: float | None = None,
                    m_window: Iterable[int] = range(-20, 21)) -> PeakSums:
    """Sum bins whose centres fall in ``[m tau_c - w/2, m tau_c + w/2)`` for each ``m``.

    Variances are the raw Poisson counts, i.e. the corrected sum plus any
    background already subtracted.
    """
    window_ps = tau_c_ps if window_ps is None else window_ps
    ms = np.asarray(list(m_window), dtype=int)
    masks = _window_masks(hist, tau_c_ps, window_ps, ms)
    counts = hist.counts.astype(float)
    sums = masks @ counts
    raw = masks @ (counts + hist.background_subtracted)
    return PeakSums(ms, sums, np.maximum(raw, 0.0))


def ratio_curve(hv: PeakSums, pm45: PeakSums) -> RatioCurve:
    """Per-peak ratio with Gaussian propagation of the Poisson variances."""
    if not np.array_equal(hv.m, pm45.m):
        raise ValueError("peak sums cover different m values")
    h, p = hv.sums, pm45.sums
    var_h = np.maximum(hv.variances, 1.0)
    var_p = np.maximum(pm45.variances, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h != 0, p / h, 0.0)
        sigma = np.where(h != 0, np.sqrt(var_p / h**2 + p**2 * var_h / h**4), np.inf)
    return RatioCurve.from_arrays(hv.m, ratio, sigma, h)


def ratio_curve_from_histograms(hv_hist: Histogram, pm45_hist: Histogram, tau_c_ps: float,
                                bg_hv: float, bg_pm45: float, window_ps: float | None = None,
                                m_window: Iterable[int] = range(-20, 21)) -> RatioCurve:
    ms = list(m_window)
    hv = integrate_peaks(background_correct(hv_hist, bg_hv), tau_c_ps, window_ps, ms)
    pm = integrate_peaks(background_correct(pm45_hist, bg_pm45), tau_c_ps, window_ps, ms)
    return ratio_curve(hv, pm)


@dataclass(frozen=True)
class FitResult:
    phase_rad: float
    amplitude: float
    offset: float
    covariance: np.ndarray
    chi2: float
    dof: int
    t2pi_celsius: float
    # phi and 2 pi - phi give the same ratio curve
    alias_phase_rad: float

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan

    @property
    def phase_error_rad(self) -> float:
        return float(math.sqrt(self.covariance[0, 0]))

    @property
    def period_roundtrips(self) -> float:
        return 2.0 * math.pi / self.phase_rad if self.phase_rad > 0 else math.inf

    @property
    def period_error_roundtrips(self) -> float:
        return self.period_roundtrips * self.phase_error_rad / self.phase_rad

    @property
    def temperature_equivalent_C(self) -> float:
        return temperature_from_phase(self.phase_rad, self.t2pi_celsius)

    def to_dict(self) -> dict:
        return {
            "phase_rad": self.phase_rad,
            "phase_error_rad": self.phase_error_rad,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_per_dof": self.chi2_per_dof,
            "period_roundtrips": self.period_roundtrips,
            "period_error_roundtrips": self.period_error_roundtrips,
            "temperature_equivalent_C": self.temperature_equivalent_C,
            "t2pi_celsius": self.t2pi_celsius,
            "alias_phase_rad": self.alias_phase_rad,
        }


def _fit_inputs(curve: RatioCurve):
    m, r, sigma = curve.m, curve.ratio, curve.sigma
    keep = np.isfinite(sigma) & (sigma > 0)
    if curve.hv_sums:
        keep &= np.asarray(curve.hv_sums) >= MIN_HV_COUNTS
    return m[keep].astype(float), r[keep], 1.0 / sigma[keep] ** 2


def _linear_solve(phi: float, m, r, w):
    """Weighted least squares for (A, B) at fixed phase; returns (chi2, A, B)."""
    x = np.sin(m * phi / 2.0) ** 2
    sw, sx, sxx = w.sum(), (w * x).sum(), (w * x * x).sum()
    sy, sxy = (w * r).sum(), (w * x * r).sum()
    det = sw * sxx - sx * sx
    if det <= 1e-300 * max(sw * sxx, 1.0):
        B = sy / sw
        return float((w * (r - B) ** 2).sum()), 0.0, B
    A = (sw * sxy - sx * sy) / det
    B = (sxx * sy - sx * sxy) / det
    return float((w * (r - A * x - B) ** 2).sum()), A, B


def profile_chi2(phi: float, curve: RatioCurve) -> float:
    """Minimum chi^2 over amplitude and offset at fixed phase."""
    m, r, w = _fit_inputs(curve)
    return _linear_solve(phi, m, r, w)[0]


def fit_phase(curve: RatioCurve, t2pi_celsius: float = 4.5,
              grid_steps: int = GRID_STEPS) -> FitResult:
    """Weighted fit of ``A sin^2(m phi / 2) + B`` with phi restricted to ``[0, pi]``.

    A coarse grid over the phase is followed by bounded Brent refinement
    inside the best grid cell.  Entries with fewer than 25 H-V counts are
    dropped.
    """
    m, r, w = _fit_inputs(curve)
    if len(np.unique(np.abs(m))) < 5:
        raise ParameterDomainError("need at least 5 distinct |m| values with usable counts")
    B_flat = float((w * r).sum() / w.sum())
    chi2_flat = float((w * (r - B_flat) ** 2).sum())
    if np.all(r == r[0]) or np.ptp(r) <= 1e-14 * max(1.0, abs(B_flat)):
        raise FitDegenerateError("ratio curve is flat; no phase information",
                                 {"offset": B_flat, "chi2": chi2_flat, "n": len(r)})

    grid = np.linspace(0.0, math.pi, grid_steps + 1)[1:]
    chi = np.array([_linear_solve(p, m, r, w)[0] for p in grid])
    i = int(np.argmin(chi))
    step = grid[1] - grid[0]
    lo, hi = max(grid[i] - step, 1e-12), min(grid[i] + step, math.pi)
    res = minimize_scalar(lambda p: _linear_solve(p, m, r, w)[0], bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    candidates = [(float(res.fun), float(res.x)), (float(chi[i]), float(grid[i]))]
    if hi == math.pi:
        candidates.append((_linear_solve(math.pi, m, r, w)[0], math.pi))
    chi2, phi = min(candidates)
    _, A, B = _linear_solve(phi, m, r, w)
    cov = _covariance(phi, A, m, w)
    dof = len(r) - 3
    return FitResult(phi, A, B, cov, chi2, dof, t2pi_celsius, 2.0 * math.pi - phi)


def _covariance(phi: float, A: float, m, w) -> np.ndarray:
    """(J^T W J)^-1 of the model in (phi, A, B)."""
    x = np.sin(m * phi / 2.0) ** 2
    d_phi = A * m * np.sin(m * phi / 2.0) * np.cos(m * phi / 2.0)
    J = np.column_stack([d_phi, x, np.ones_like(x)])
    fisher = J.T @ (J * w[:, None])
    try:
        return np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(fisher)


def grid_search_phase(curve: RatioCurve, steps: int = 10_000) -> float:
    """Exhaustive search of the profile chi^2 on a uniform grid over ``(0, pi]``."""
    m, r, w = _fit_inputs(curve)
    grid = np.linspace(0.0, math.pi, steps + 1)[1:]
    chi = [_linear_solve(p, m, r, w)[0] for p in grid]
    return float(grid[int(np.argmin(chi))])


@dataclass(frozen=True)
class BackwardPumpAnalysis:
    interference_fraction: float
    backward_pair_fraction: float
    residual_ratio: float
    pump_reflection: float


def analyze_backward_pump(r_normal: float, r_rotated: float) -> BackwardPumpAnalysis:
    """Split the m = 0 ratio for both ECC orientations into forward and backward dips.

    Each orientation lowers the ratio below 1/2 only through the pairs it
    compensates: ``1/2 - r_normal`` is the forward dip and
    ``1/2 - r_rotated`` the backward one.
    """
    for name, v in (("r_normal", r_normal), ("r_rotated", r_rotated)):
        if not 0.0 <= v <= 0.5:
            raise ParameterDomainError(f"{name} must lie in [0, 1/2], got {v}")
    d_f = 0.5 - r_normal
    d_b = 0.5 - r_rotated
    total = d_f + d_b
    if total <= 0:
        raise NoInterferenceError("neither orientation shows an interference dip")
    # the two dips together cannot exceed the full 1/2 contrast
    if total > 0.5 + 1e-12:
        raise ParameterDomainError(
            f"r_normal + r_rotated = {r_normal + r_rotated} < 1/2 implies a negative residual ratio")
    beta = d_b / total
    return BackwardPumpAnalysis(
        interference_fraction=min(total / 0.5, 1.0),
        backward_pair_fraction=beta,
        residual_ratio=max(0.5 - total, 0.0),
        pump_reflection=beta / (1.0 - beta) if beta < 1 else math.inf,
    )


@dataclass(frozen=True)
class VisibilityReport:
    ratio_total: float
    ratio_error: float
    visibility: float
    visibility_error: float


def visibility_report(hv_sums: PeakSums, pm45_sums: PeakSums,
                      m_window: Iterable[int] | None = None) -> VisibilityReport:
    """Ratio of windowed totals and the corresponding fringe visibility."""
    if m_window is None:
        sel_h = np.ones(len(hv_sums.m), dtype=bool)
    else:
        sel_h = np.isin(hv_sums.m, list(m_window))
    sel_p = np.isin(pm45_sums.m, hv_sums.m[sel_h])
    h, vh = hv_sums.sums[sel_h].sum(), hv_sums.variances[sel_h].sum()
    p, vp = pm45_sums.sums[sel_p].sum(), pm45_sums.variances[sel_p].sum()
    if h == 0:
        raise ZeroDivisionError("H-V total over the window is zero")
    r = p / h
    r_err = math.sqrt(vp / h**2 + p**2 * vh / h**4)
    # background subtraction can push a tiny ratio slightly negative
    r_clamped = min(max(r, 0.0), 1.0)
    v = visibility_from_ratio(r_clamped)
    v_err = 2.0 * r_err / (1.0 + r_clamped) ** 2
    return VisibilityReport(float(r), float(r_err), float(v), float(v_err))
