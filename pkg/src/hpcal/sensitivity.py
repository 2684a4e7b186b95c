"""Open-circuit-voltage calibration arithmetic.

Converts between headphone sensitivity ratings and computes the RMS
voltage a reference tone must produce at the headphone jack.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class CurveDomainError(ValueError):
    """A frequency lies outside a tabulated curve and extrapolation is off."""


class SensitivityUnit(str, enum.Enum):
    DB_PER_VOLT = "dB_per_volt"
    DB_PER_MILLIWATT = "dB_per_milliwatt"


def _check_curve(name, curve, positive_values=False):
    if curve is None:
        return None
    arr = np.asarray(curve, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 1:
        raise ValueError(f"{name} must be a list of (frequency, value) pairs")
    freqs = arr[:, 0]
    if np.any(freqs <= 0):
        raise ValueError(f"{name} frequencies must be positive")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError(f"{name} frequencies must be strictly increasing")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if positive_values and np.any(arr[:, 1] <= 0):
        raise ValueError(f"{name} values must be positive")
    return tuple((float(f), float(v)) for f, v in arr)


def interpolate_log_frequency(curve, frequency, clamp=False):
    """Interpolate ``curve`` linearly against log10(frequency).

    ``curve`` is a sequence of (frequency, value) pairs. Outside its
    domain a :class:`CurveDomainError` is raised unless ``clamp`` is set,
    in which case the end values are held. Accepts scalars or arrays.
    """
    arr = np.asarray(curve, dtype=float)
    freqs, values = arr[:, 0], arr[:, 1]
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0):
        raise CurveDomainError("frequency must be positive")
    if not clamp:
        lo, hi = freqs[0], freqs[-1]
        # tolerate round-off at the curve ends
        if np.any(f < lo * (1 - 1e-12)) or np.any(f > hi * (1 + 1e-12)):
            raise CurveDomainError(
                f"frequency {frequency} Hz outside curve domain [{lo:g}, {hi:g}] Hz"
            )
    if len(freqs) == 1:
        out = np.full(f.shape, values[0])
    else:
        out = np.interp(np.log10(f), np.log10(freqs), values)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HeadphoneSpec:
    sensitivity_value: float
    sensitivity_unit: SensitivityUnit = SensitivityUnit.DB_PER_VOLT
    impedance_ohms: float = 250.0
    # (frequency Hz, sensitivity dB/V)
    frequency_response: tuple | None = None
    # (frequency Hz, impedance ohm)
    impedance_curve: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "sensitivity_unit", SensitivityUnit(self.sensitivity_unit))
        if not math.isfinite(self.sensitivity_value):
            raise ValueError("sensitivity_value must be finite")
        if not (self.impedance_ohms > 0 and math.isfinite(self.impedance_ohms)):
            raise ValueError("impedance_ohms must be positive")
        object.__setattr__(
            self, "frequency_response", _check_curve("frequency_response", self.frequency_response)
        )
        object.__setattr__(
            self,
            "impedance_curve",
            _check_curve("impedance_curve", self.impedance_curve, positive_values=True),
        )

    @property
    def sensitivity_db_per_volt(self) -> float:
        """Nominal sensitivity expressed in dB/V."""
        if self.sensitivity_unit is SensitivityUnit.DB_PER_MILLIWATT:
            return convert_mw_to_v(self.sensitivity_value, self.impedance_ohms)
        return float(self.sensitivity_value)

    def sensitivity_at(self, frequency, clamp=False):
        """Sensitivity in dB/V at ``frequency``; flat when no curve is given."""
        if self.frequency_response is None:
            if np.ndim(frequency) == 0:
                return self.sensitivity_db_per_volt
            return np.full(np.shape(frequency), self.sensitivity_db_per_volt)
        return interpolate_log_frequency(self.frequency_response, frequency, clamp=clamp)

    def impedance_at(self, frequency, clamp=False):
        """Impedance in ohms at ``frequency``.

        Tabulated impedance is interpolated in dB (log magnitude) against
        log-frequency, the same convention used for sensitivity.
        """
        if self.impedance_curve is None:
            if np.ndim(frequency) == 0:
                return float(self.impedance_ohms)
            return np.full(np.shape(frequency), float(self.impedance_ohms))
        log_curve = [(f, 20.0 * math.log10(z)) for f, z in self.impedance_curve]
        z_db = interpolate_log_frequency(log_curve, frequency, clamp=clamp)
        return 10.0 ** (np.asarray(z_db) / 20.0) if np.ndim(z_db) else 10.0 ** (z_db / 20.0)

    def to_dict(self) -> dict:
        out = {
            "sensitivity_value": self.sensitivity_value,
            "sensitivity_unit": self.sensitivity_unit.value,
            "impedance_ohms": self.impedance_ohms,
        }
        if self.frequency_response is not None:
            out["frequency_response"] = [list(p) for p in self.frequency_response]
        if self.impedance_curve is not None:
            out["impedance_curve"] = [list(p) for p in self.impedance_curve]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "HeadphoneSpec":
        return cls(
            sensitivity_value=float(data["sensitivity_value"]),
            sensitivity_unit=data.get("sensitivity_unit", SensitivityUnit.DB_PER_VOLT),
            impedance_ohms=float(data["impedance_ohms"]),
            frequency_response=data.get("frequency_response"),
            impedance_curve=data.get("impedance_curve"),
        )


@dataclass(frozen=True)
class ReferenceTone:
    spl_dbspl: float = 94.0
    frequency_hz: float = 1000.0

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("reference tone frequency must be positive")
        if not math.isfinite(self.spl_dbspl):
            raise ValueError("reference tone level must be finite")


def convert_mw_to_v(s_mw: float, impedance: float) -> float:
    """Convert a dB/mW sensitivity to dB/V for a load of ``impedance`` ohms."""
    if not impedance > 0:
        raise ValueError(f"impedance must be positive, got {impedance}")
    return s_mw - 10.0 * math.log10(impedance / 1000.0)


def convert_v_to_mw(s_v: float, impedance: float) -> float:
    if not impedance > 0:
        raise ValueError(f"impedance must be positive, got {impedance}")
    return s_v + 10.0 * math.log10(impedance / 1000.0)


def spl_from_power(s_mw: float, power_watts: float) -> float:
    """SPL in dB produced by ``power_watts`` of electrical input power."""
    if not power_watts > 0:
        raise ValueError(f"power must be positive, got {power_watts}")
    return s_mw + 10.0 * math.log10(power_watts / 1e-3)


def required_voltage(ref: ReferenceTone, spec: HeadphoneSpec) -> float:
    """RMS volts at the jack that reproduce the reference tone at its SPL."""
    s_v = spec.sensitivity_at(ref.frequency_hz)
    return 10.0 ** ((ref.spl_dbspl - s_v) / 20.0)


def spl_from_voltage(v: float, spec: HeadphoneSpec, frequency: float = 1000.0) -> float:
    if not v > 0:
        raise ValueError(f"voltage must be positive, got {v}")
    return spec.sensitivity_at(frequency) + 20.0 * math.log10(v)


def headphones_db_per_volt(sensitivity: float, impedance: float | None = None,
                           unit: str = "dbv") -> HeadphoneSpec:
    """Build a flat :class:`HeadphoneSpec` from command-line style arguments."""
    if unit == "dbmw":
        if impedance is None:
            raise ValueError("impedance is required for a dB/mW sensitivity")
        return HeadphoneSpec(sensitivity, SensitivityUnit.DB_PER_MILLIWATT, impedance)
    return HeadphoneSpec(sensitivity, SensitivityUnit.DB_PER_VOLT,
                         impedance if impedance is not None else 250.0)

