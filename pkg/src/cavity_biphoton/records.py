"""Value records passed between the rate model, simulator and estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HistogramGeometry:
    """Bin layout of an arrival-time-difference histogram."""

    n_bins: int
    origin_ps: float
    bin_width_ps: float

    @classmethod
    def centered(cls, bin_width_ps: float, half_span_ps: float) -> "HistogramGeometry":
        """Odd number of bins with the middle one centred on tau = 0."""
        half = int(round(half_span_ps / bin_width_ps))
        n = 2 * half + 1
        return cls(n_bins=n, origin_ps=-0.5 * n * bin_width_ps, bin_width_ps=bin_width_ps)

    @property
    def edges_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.n_bins + 1)

    @property
    def centers_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * (np.arange(self.n_bins) + 0.5)

    @property
    def span_ps(self) -> tuple[float, float]:
        return self.origin_ps, self.origin_ps + self.n_bins * self.bin_width_ps


@dataclass(eq=False)
class Histogram:
    """Binned start-stop differences, tau = t(TT) - t(TR).

    ``counts`` is a float array for expected histograms and int64 for
    sampled ones.  ``background_subtracted`` records the per-bin count
    already removed, so sums can still carry their raw Poisson variance.
    """

    bin_width_ps: float
    origin_ps: float
    counts: np.ndarray
    duration_s: float
    basis: str | None = None
    seed: int | None = None
    config_hash: str | None = None
    background_subtracted: float = 0.0

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1 or self.counts.size < 1:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be > 0")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")

    @property
    def geometry(self) -> HistogramGeometry:
        return HistogramGeometry(len(self.counts), self.origin_ps, self.bin_width_ps)

    @property
    def centers_ps(self) -> np.ndarray:
        return self.geometry.centers_ps

    @property
    def is_sampled(self) -> bool:
        return np.issubdtype(self.counts.dtype, np.integer)

    def same_geometry(self, other: "Histogram") -> bool:
        return (len(self.counts) == len(other.counts)
                and self.bin_width_ps == other.bin_width_ps
                and self.origin_ps == other.origin_ps)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Histogram):
            return NotImplemented
        return (self.same_geometry(other)
                and self.duration_s == other.duration_s
                and self.basis == other.basis
                and self.seed == other.seed
                and self.config_hash == other.config_hash
                and self.background_subtracted == other.background_subtracted
                and self.counts.dtype == other.counts.dtype
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class PeakSums:
    """Per-roundtrip-difference sums of a histogram with Poisson variances."""

    m: np.ndarray
    sums: np.ndarray
    variances: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def total(self) -> tuple[float, float]:
        return float(self.sums.sum()), float(self.variances.sum())


@dataclass(frozen=True)
class RatioEntry:
    m: int
    ratio: float
    sigma: float


@dataclass(frozen=True)
class RatioCurve:
    entries: tuple[RatioEntry, ...]
    hv_sums: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.hv_sums and len(self.hv_sums) != len(self.entries):
            raise ValueError("hv_sums length must match the entries")
        ms = [e.m for e in self.entries]
        if ms != sorted(ms):
            order = sorted(range(len(ms)), key=ms.__getitem__)
            object.__setattr__(self, "entries", tuple(self.entries[i] for i in order))
            if self.hv_sums:
                object.__setattr__(self, "hv_sums", tuple(self.hv_sums[i] for i in order))

    @classmethod
    def from_arrays(cls, m, ratio, sigma, hv_sums=None) -> "RatioCurve":
        entries = tuple(RatioEntry(int(a), float(b), float(c)) for a, b, c in zip(m, ratio, sigma))
        hv = () if hv_sums is None else tuple(float(h) for h in hv_sums)
        return cls(entries, hv)

    @property
    def m(self) -> np.ndarray:
        return np.array([e.m for e in self.entries], dtype=int)

    @property
    def ratio(self) -> np.ndarray:
        return np.array([e.ratio for e in self.entries], dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([e.sigma for e in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        out = {"m": self.m.tolist(), "ratio": self.ratio.tolist(),
               "sigma": [s if math.isfinite(s) else None for s in self.sigma.tolist()]}
        if self.hv_sums:
            out["hv_sums"] = list(self.hv_sums)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RatioCurve":
        sigma = [math.inf if s is None else s for s in data["sigma"]]
        return cls.from_arrays(data["m"], data["ratio"], sigma, data.get("hv_sums"))
