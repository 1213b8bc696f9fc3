"""Event-level Monte Carlo of the cavity source and the TT/TR start-stop setup.

Each pair is followed through: roundtrips of signal and idler before they
leave the output coupler, the 50-50 splitter, the half-wave plate and PBS
on each side, the position inside the phase-matching box, and one jitter
draw per detector.  Only TT-TR coincidences are histogrammed, with
``tau = t(TT) - t(TR)``.

Pairs are processed in fixed-size batches.  Batch ``b`` draws from its own
Philox stream keyed by ``(seed, b)``, so the histogram depends only on the
seed, never on how many workers ran the batches.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import Basis, EccOrientation, ExperimentConfig, FWHM_PER_SIGMA, MeasurementConfig
from .errors import CapacityError
from .rates import default_geometry
from .records import Histogram, HistogramGeometry

LOST = -1
BATCH_SIZE = 1 << 18

# detector codes
TT, TR, RT, RR = 0, 1, 2, 3

_STREAM_COUNTS = 0
_STREAM_BATCH = 1
_STREAM_BACKGROUND = 2
_BASIS_KEY = {Basis.HV: 0, Basis.PM45: 1, Basis.CUSTOM: 2}


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def sample_roundtrips(rng: np.random.Generator, transmission: float, loss: float,
                      size: int | None = None):
    """Completed roundtrips before a photon exits, or ``LOST``.

    Every roundtrip ends in exit (``transmission``), loss (``loss``) or
    survival; the first terminating event is geometric with success
    probability ``transmission + loss``.
    """
    if not transmission > 0 or transmission + loss > 1 or loss < 0:
        raise ValueError("need transmission > 0, loss >= 0 and transmission + loss <= 1")
    stop = transmission + loss
    n = rng.geometric(stop, size=size) - 1
    if loss == 0:
        return n
    exited = rng.random(size=size) < transmission / stop
    return np.where(exited, n, LOST)


def sample_outcome(rng: np.random.Generator, m, phase_rad, theta_T: float, theta_R: float,
                   ecc_orientation: EccOrientation, is_backward,
                   compensation_fraction: float = 1.0) -> np.ndarray:
    """Detector pair hit by (signal, idler), encoded ``4 * det_signal + det_idler``.

    Each photon picks a splitter side at random; the side's PBS projects on
    twice the plate angle (pass) or the orthogonal axis (fail).  Pairs whose
    pump direction matches the ECC orientation interfere, with probability
    ``compensation_fraction``; the rest behave as an HV/VH mixture.
    """
    m = np.asarray(m)
    n = m.shape[0]
    is_backward = np.broadcast_to(np.asarray(is_backward, dtype=bool), (n,))
    signal_T = rng.random(n) < 0.5
    idler_T = rng.random(n) < 0.5
    cos_T, sin_T = math.cos(2.0 * theta_T), math.sin(2.0 * theta_T)
    cos_R, sin_R = math.cos(2.0 * theta_R), math.sin(2.0 * theta_R)
    c1, s1 = np.where(signal_T, cos_T, cos_R), np.where(signal_T, sin_T, sin_R)
    c2, s2 = np.where(idler_T, cos_T, cos_R), np.where(idler_T, sin_T, sin_R)

    matched = is_backward if EccOrientation(ecc_orientation) is EccOrientation.ROTATED \
        else ~is_backward
    coherent = matched & (rng.random(n) < compensation_fraction)
    cross = np.where(coherent, np.cos(m * np.asarray(phase_rad)), 0.0)

    p_pp = ((c1 * s2) ** 2 + (s1 * c2) ** 2 + 2.0 * c1 * s2 * s1 * c2 * cross) / 2.0
    p_pf = ((c1 * c2) ** 2 + (s1 * s2) ** 2 - 2.0 * c1 * c2 * s1 * s2 * cross) / 2.0
    # cumulative order pass/pass, pass/fail, fail/pass, fail/fail; p_fp == p_pf, p_ff == p_pp
    u = rng.random(n)
    signal_pass = u < p_pp + p_pf
    idler_pass = (u < p_pp) | ((u >= p_pp + p_pf) & (u < p_pp + 2.0 * p_pf))
    det_s = np.where(signal_T, np.where(signal_pass, TT, TR), np.where(signal_pass, RT, RR))
    det_i = np.where(idler_T, np.where(idler_pass, TT, TR), np.where(idler_pass, RT, RR))
    return 4 * det_s + det_i


@dataclass
class PairBatch:
    """Arrays describing a batch of pairs; ``tau_ps`` is NaN unless TT-TR fired."""

    n_signal: np.ndarray
    n_idler: np.ndarray
    m: np.ndarray
    tau_ps: np.ndarray
    outcome: np.ndarray
    is_backward: np.ndarray

    @property
    def tt_tr(self) -> np.ndarray:
        return (self.outcome == 4 * TT + TR) | (self.outcome == 4 * TR + TT)


def sample_pairs(rng: np.random.Generator, n: int, config: ExperimentConfig,
                 basis: MeasurementConfig) -> PairBatch:
    cav, crystal = config.cavity, config.crystal
    if config.run.explicit_loss:
        t, l = cav.output_coupler_transmission, cav.intracavity_loss_per_roundtrip
    else:
        # losses folded into the detected pair rate: exit is the only way out
        t, l = 1.0 - cav.survival, 0.0
    n_s = sample_roundtrips(rng, t, l, n)
    n_i = sample_roundtrips(rng, t, l, n)
    if l > 0:
        keep = (n_s != LOST) & (n_i != LOST)
        n_s, n_i = n_s[keep], n_i[keep]
        n = n_s.shape[0]
    m = n_s - n_i
    is_backward = rng.random(n) < config.pump.backward_pair_fraction
    phase = cav.birefringence_phase_rad
    if cav.phase_drift_rad != 0.0:
        phase = phase + cav.phase_drift_rad * rng.random(n)
    outcome = sample_outcome(rng, m, phase, basis.hwp_angle_T_rad, basis.hwp_angle_R_rad,
                             crystal.ecc_orientation, is_backward,
                             crystal.compensation_fraction)

    sigma_det = config.detector.jitter_fwhm_ps / FWHM_PER_SIGMA
    box = rng.uniform(-crystal.box_width_ps / 2, crystal.box_width_ps / 2, n)
    t_signal = m * cav.roundtrip_time_ps + box + sigma_det * rng.standard_normal(n)
    t_idler = sigma_det * rng.standard_normal(n)
    tau = np.full(n, np.nan)
    s_tt = outcome == 4 * TT + TR
    i_tt = outcome == 4 * TR + TT
    tau[s_tt] = t_signal[s_tt] - t_idler[s_tt]
    tau[i_tt] = t_idler[i_tt] - t_signal[i_tt]
    return PairBatch(n_s, n_i, m, tau, outcome, is_backward)


def bin_taus(tau_ps: np.ndarray, geometry: HistogramGeometry) -> np.ndarray:
    tau = tau_ps[np.isfinite(tau_ps)]
    idx = np.floor((tau - geometry.origin_ps) / geometry.bin_width_ps).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < geometry.n_bins)]
    return np.bincount(idx, minlength=geometry.n_bins).astype(np.int64)


@dataclass(frozen=True)
class SimRun:
    config: ExperimentConfig
    seed: int
    duration_s: float
    n_workers: int = 1

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "SimRun":
        return cls(config, config.run.seed, config.run.duration_s, config.run.workers())


def _mean_events(run: SimRun, geometry: HistogramGeometry) -> tuple[float, float]:
    det = run.config.detector
    pairs = det.pair_detection_rate_hz * run.duration_s
    background = max(det.background_rate_hz_per_bin_hv, det.background_rate_hz_per_bin_pm45) \
        * run.duration_s * geometry.n_bins
    for mean in (pairs, background):
        if not math.isfinite(mean) or mean > 2.0**63:
            raise CapacityError(f"expected event count {mean:.3g} exceeds 2**63")
    return pairs, background


def run_simulation(run: SimRun, basis: MeasurementConfig | None = None) -> Histogram:
    """Sampled TT-TR histogram for one acquisition of ``run.duration_s`` seconds."""
    config = run.config
    basis = basis or config.measurement
    geometry = default_geometry(config)
    mean_pairs, _ = _mean_events(run, geometry)

    key = _BASIS_KEY[basis.basis]
    n_pairs = int(substream(run.seed, _STREAM_COUNTS, key).poisson(mean_pairs))
    sizes = [BATCH_SIZE] * (n_pairs // BATCH_SIZE)
    if n_pairs % BATCH_SIZE:
        sizes.append(n_pairs % BATCH_SIZE)

    def one_batch(index: int) -> np.ndarray:
        rng = substream(run.seed, _STREAM_BATCH, key, index)
        return bin_taus(sample_pairs(rng, sizes[index], config, basis).tau_ps, geometry)

    counts = np.zeros(geometry.n_bins, dtype=np.int64)
    if run.n_workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=run.n_workers) as pool:
            for part in pool.map(one_batch, range(len(sizes))):
                counts += part
    else:
        for index in range(len(sizes)):
            counts += one_batch(index)

    rate = config.detector.background_rate(basis.basis)
    if rate > 0:
        bg_rng = substream(run.seed, _STREAM_BACKGROUND, key)
        counts += bg_rng.poisson(rate * run.duration_s, geometry.n_bins).astype(np.int64)
    return Histogram(geometry.bin_width_ps, geometry.origin_ps, counts, run.duration_s,
                     basis=basis.label, seed=run.seed, config_hash=config.config_hash())
