"""Experiment parameter records and their JSON representation.

Every field has a default taken from the reference experiment (826 ps
roundtrip, finesse 55, 3.5 ps phase-matching box, 350 ps detector jitter,
38.3 ps bins, 16 minute integration), so ``ExperimentConfig()`` is the
baseline configuration and a config file only needs to list overrides.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

WORKERS_ENV_VAR = "CAVITY_BIPHOTON_WORKERS"
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.35482


class EccOrientation(str, enum.Enum):
    NORMAL = "Normal"
    ROTATED = "Rotated"


class Basis(str, enum.Enum):
    HV = "HV"
    PM45 = "PM45"
    CUSTOM = "Custom"


def _check(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise ConfigError(path, message)


@dataclass(frozen=True)
class CavityConfig:
    roundtrip_time_ps: float = 826.0
    output_coupler_transmission: float = 0.08
    intracavity_loss_per_roundtrip: float = 0.03
    birefringence_phase_rad: float = 0.0
    fsr_ghz: float = 1.21
    finesse: float = 55.0
    t2pi_celsius: float = 4.5
    # total linear phase excursion over one acquisition; 0 disables drift
    phase_drift_rad: float = 0.0

    def __post_init__(self):
        _check(self.roundtrip_time_ps > 0, "cavity.roundtrip_time_ps", "must be > 0")
        t, l = self.output_coupler_transmission, self.intracavity_loss_per_roundtrip
        _check(0 < t < 1, "cavity.output_coupler_transmission", "must lie in (0, 1)")
        _check(0 <= l < 1, "cavity.intracavity_loss_per_roundtrip", "must lie in [0, 1)")
        _check(t + l < 1, "cavity.intracavity_loss_per_roundtrip",
               "transmission + loss must be < 1")
        _check(self.fsr_ghz > 0, "cavity.fsr_ghz", "must be > 0")
        _check(self.finesse > 1, "cavity.finesse", "must be > 1")
        _check(self.t2pi_celsius > 0, "cavity.t2pi_celsius", "must be > 0")
        product = self.fsr_ghz * self.roundtrip_time_ps
        if abs(product - 1000.0) > 10.0:
            warnings.warn(
                f"fsr_ghz * roundtrip_time_ps = {product:.1f}, expected ~1000",
                stacklevel=3,
            )

    @property
    def survival(self) -> float:
        """Probability that a resonant photon completes another roundtrip."""
        return 1.0 - self.output_coupler_transmission - self.intracavity_loss_per_roundtrip


@dataclass(frozen=True)
class CrystalConfig:
    box_width_ps: float = 3.5
    pm_bandwidth_ghz: float = 280.0
    ecc_orientation: EccOrientation = EccOrientation.NORMAL
    # probability that a pair meant to interfere is actually indistinguishable
    compensation_fraction: float = 1.0

    def __post_init__(self):
        _check(self.box_width_ps > 0, "crystal.box_width_ps", "must be > 0")
        _check(self.pm_bandwidth_ghz > 0, "crystal.pm_bandwidth_ghz", "must be > 0")
        _check(0 <= self.compensation_fraction <= 1, "crystal.compensation_fraction",
               "must lie in [0, 1]")
        if not isinstance(self.ecc_orientation, EccOrientation):
            try:
                object.__setattr__(self, "ecc_orientation", EccOrientation(self.ecc_orientation))
            except ValueError:
                raise ConfigError("crystal.ecc_orientation",
                                  f"expected one of {[e.value for e in EccOrientation]}")


@dataclass(frozen=True)
class DetectorConfig:
    jitter_fwhm_ps: float = 350.0
    background_rate_hz_per_bin_hv: float = 0.014
    background_rate_hz_per_bin_pm45: float = 0.009
    bin_width_ps: float = 38.3
    pair_detection_rate_hz: float = 1100.0

    def __post_init__(self):
        _check(self.jitter_fwhm_ps >= 0, "detector.jitter_fwhm_ps", "must be >= 0")
        _check(self.background_rate_hz_per_bin_hv >= 0,
               "detector.background_rate_hz_per_bin_hv", "must be >= 0")
        _check(self.background_rate_hz_per_bin_pm45 >= 0,
               "detector.background_rate_hz_per_bin_pm45", "must be >= 0")
        _check(self.bin_width_ps > 0, "detector.bin_width_ps", "must be > 0")
        _check(self.pair_detection_rate_hz >= 0, "detector.pair_detection_rate_hz",
               "must be >= 0")

    def background_rate(self, basis: Basis) -> float:
        if basis is Basis.HV:
            return self.background_rate_hz_per_bin_hv
        return self.background_rate_hz_per_bin_pm45


@dataclass(frozen=True)
class PumpConfig:
    wavelength_nm: float = 397.5
    power_mw: float = 1.0
    backward_reflection_fraction: float = 0.0

    def __post_init__(self):
        _check(self.power_mw > 0, "pump.power_mw", "must be > 0")
        _check(0 <= self.backward_reflection_fraction < 1,
               "pump.backward_reflection_fraction", "must lie in [0, 1)")

    @property
    def backward_pair_fraction(self) -> float:
        """Fraction of all pairs created by the reflected pump."""
        b = self.backward_reflection_fraction
        return b / (1.0 + b)


@dataclass(frozen=True)
class MeasurementConfig:
    """Half-wave-plate settings; the analyzer axis sits at twice the plate angle."""

    basis: Basis = Basis.HV
    hwp_angle_T_rad: float = 0.0
    hwp_angle_R_rad: float = 0.0

    def __post_init__(self):
        if not isinstance(self.basis, Basis):
            try:
                object.__setattr__(self, "basis", Basis(self.basis))
            except ValueError:
                raise ConfigError("measurement.basis",
                                  f"expected one of {[b.value for b in Basis]}")
        if self.basis is Basis.HV:
            _check(self.hwp_angle_T_rad == 0.0, "measurement.hwp_angle_T_rad",
                   "HV basis requires 0")
        elif self.basis is Basis.PM45:
            _check(math.isclose(self.hwp_angle_T_rad, math.pi / 8, abs_tol=1e-12),
                   "measurement.hwp_angle_T_rad", "PM45 basis requires pi/8")

    @classmethod
    def for_basis(cls, name: str | Basis) -> "MeasurementConfig":
        key = name.value if isinstance(name, Basis) else str(name)
        lookup = {"hv": Basis.HV, "pm45": Basis.PM45}
        try:
            basis = lookup[key.lower()]
        except KeyError:
            raise ConfigError("measurement.basis", f"unknown basis {name!r}")
        angle = 0.0 if basis is Basis.HV else math.pi / 8
        return cls(basis=basis, hwp_angle_T_rad=angle, hwp_angle_R_rad=0.0)

    @property
    def label(self) -> str:
        return {Basis.HV: "hv", Basis.PM45: "pm45", Basis.CUSTOM: "custom"}[self.basis]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    duration_s: float = 960.0
    n_workers: int | None = None
    m_max: int = 41
    ratio_half_window: int = 20
    half_span_roundtrips: float = 25.5
    peak_window_ps: float | None = None
    explicit_loss: bool = False
    exact_box: bool = False

    def __post_init__(self):
        _check(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "run.seed",
               "must be an unsigned 64-bit integer")
        _check(self.duration_s > 0, "run.duration_s", "must be > 0")
        _check(self.n_workers is None or self.n_workers >= 1, "run.n_workers", "must be >= 1")
        _check(self.m_max >= 0, "run.m_max", "must be >= 0")
        _check(self.ratio_half_window >= 0, "run.ratio_half_window", "must be >= 0")
        _check(self.half_span_roundtrips > 0, "run.half_span_roundtrips", "must be > 0")
        _check(self.peak_window_ps is None or self.peak_window_ps > 0, "run.peak_window_ps",
               "must be > 0")

    def workers(self) -> int:
        if self.n_workers is not None:
            return self.n_workers
        raw = os.environ.get(WORKERS_ENV_VAR)
        if raw is None:
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(WORKERS_ENV_VAR, f"not an integer: {raw!r}")
        _check(value >= 1, WORKERS_ENV_VAR, "must be >= 1")
        return value


_SECTIONS = {
    "cavity": CavityConfig,
    "crystal": CrystalConfig,
    "detector": DetectorConfig,
    "pump": PumpConfig,
    "measurement": MeasurementConfig,
    "run": RunConfig,
}
# sections that define the physical setup; the config hash covers only these
_PHYSICAL = ("cavity", "crystal", "detector", "pump")


@dataclass(frozen=True)
class ExperimentConfig:
    cavity: CavityConfig = field(default_factory=CavityConfig)
    crystal: CrystalConfig = field(default_factory=CrystalConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    pump: PumpConfig = field(default_factory=PumpConfig)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        _check(self.crystal.box_width_ps < self.cavity.roundtrip_time_ps,
               "crystal.box_width_ps", "must be smaller than cavity.roundtrip_time_ps")
        _check(self.detector.bin_width_ps <= self.cavity.roundtrip_time_ps / 4,
               "detector.bin_width_ps", "must be <= roundtrip_time_ps / 4")
        w = self.run.peak_window_ps
        _check(w is None or w <= self.cavity.roundtrip_time_ps, "run.peak_window_ps",
               "must be <= roundtrip_time_ps")

    @property
    def jitter_sigma_ps(self) -> float:
        """Standard deviation of the start-stop difference from two detectors."""
        return self.detector.jitter_fwhm_ps / FWHM_PER_SIGMA * math.sqrt(2.0)

    @property
    def peak_window_ps(self) -> float:
        return self.run.peak_window_ps or self.cavity.roundtrip_time_ps

    def replace(self, **sections: Any) -> "ExperimentConfig":
        """Return a copy with whole sections or ``section__field`` values swapped."""
        updates: dict[str, Any] = {}
        nested: dict[str, dict[str, Any]] = {}
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                nested.setdefault(sec, {})[name] = value
            else:
                updates[key] = value
        for sec, values in nested.items():
            base = updates.get(sec, getattr(self, sec))
            updates[sec] = dataclasses.replace(base, **values)
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for name in _SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            out[name] = {k: (v.value if isinstance(v, enum.Enum) else v)
                         for k, v in section.items()}
        return out

    def config_hash(self) -> str:
        """Short digest of the physical sections, stamped on every artifact."""
        physical = {k: v for k, v in self.to_dict().items() if k in _PHYSICAL}
        blob = json.dumps(physical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("", "top level must be a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(unknown[0], "unknown section")
        sections = {}
        for name, kind in _SECTIONS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(name, "section must be a JSON object")
            known = {f.name: f for f in dataclasses.fields(kind)}
            bad = sorted(set(raw) - set(known))
            if bad:
                raise ConfigError(f"{name}.{bad[0]}", "unknown key")
            values = {key: _coerce(f"{name}.{key}", known[key], value)
                      for key, value in raw.items()}
            try:
                sections[name] = kind(**values)
            except TypeError as exc:
                raise ConfigError(name, str(exc))
        return cls(**sections)


def _coerce(path: str, fld: dataclasses.Field, value: Any) -> Any:
    kind = str(fld.type)
    if value is None:
        _check("None" in kind, path, "may not be null")
        return None
    if kind.startswith("float"):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), path,
               "expected a number")
        return float(value)
    if kind.startswith("int"):
        _check(isinstance(value, int) and not isinstance(value, bool), path,
               "expected an integer")
    elif kind == "bool":
        _check(isinstance(value, bool), path, "expected true/false")
    else:
        _check(isinstance(value, str), path, "expected a string")
    return value


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    """Read a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}")
    return ExperimentConfig.from_dict(data)
