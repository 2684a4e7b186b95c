"""Simulated playback and measurement chain.

The rig stands in for a soundcard driving headphones on a head-and-torso
simulator in a quiet chamber. It models the soundcard's open-circuit
output, the voltage divider formed by the soundcard output impedance and
the headphone impedance, transduction through the headphone sensitivity,
and a fixed measurement noise floor.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from . import dsp
from .sensitivity import HeadphoneSpec, ReferenceTone, required_voltage

NOISE_FLOOR_LIMITED = "noise_floor_limited"
CLIPPED = "clipped"

FIR_FIT_TOLERANCE_DB = 0.1
FIR_FIT_BAND_HZ = (20.0, 16000.0)
_FIR_MIN_TAPS = 2048
_FIR_MAX_TAPS = 65536
_FIR_DESIGN_FFT = 1 << 17


class HeadroomError(RuntimeError):
    """The soundcard cannot reach the voltage the calibration asks for."""


@dataclass(frozen=True)
class SoundcardSpec:
    full_scale_voltage_rms: float
    output_impedance_ohms: float = 0.0

    def __post_init__(self):
        if not self.full_scale_voltage_rms > 0:
            raise ValueError("full_scale_voltage_rms must be positive")
        if not self.output_impedance_ohms >= 0:
            raise ValueError("output_impedance_ohms must be non-negative")


@dataclass(frozen=True)
class RigModel:
    soundcard: SoundcardSpec
    headphones: HeadphoneSpec
    noise_floor_dba: float = 41.0
    analog_gain: float = 1.0
    # per-channel flat offsets in dB from how the headphones sit on the head
    seat_offsets_db: tuple[float, float] = (0.0, 0.0)
    caveat: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.noise_floor_dba):
            raise ValueError("noise_floor_dba must be finite")
        if not 0.0 < self.analog_gain <= 1.0:
            raise ValueError(f"analog_gain must be in (0, 1], got {self.analog_gain}")
        offsets = tuple(float(v) for v in self.seat_offsets_db)
        if len(offsets) != 2:
            raise ValueError("seat_offsets_db needs one value per channel")
        object.__setattr__(self, "seat_offsets_db", offsets)

    @property
    def is_flat(self) -> bool:
        return self.headphones.frequency_response is None and self.headphones.impedance_curve is None

    def with_analog_gain(self, gain: float) -> "RigModel":
        return dataclasses.replace(self, analog_gain=gain)

    def reseated(self, offsets_db) -> "RigModel":
        return dataclasses.replace(self, seat_offsets_db=tuple(offsets_db))

    def to_dict(self) -> dict:
        out = {
            "soundcard": dataclasses.asdict(self.soundcard),
            "headphones": self.headphones.to_dict(),
            "noise_floor_dba": self.noise_floor_dba,
            "analog_gain": self.analog_gain,
        }
        if any(self.seat_offsets_db):
            out["seat_offsets_db"] = list(self.seat_offsets_db)
        if self.caveat:
            out["caveat"] = self.caveat
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RigModel":
        return cls(
            soundcard=SoundcardSpec(**data["soundcard"]),
            headphones=HeadphoneSpec.from_dict(data["headphones"]),
            noise_floor_dba=float(data.get("noise_floor_dba", 41.0)),
            analog_gain=float(data.get("analog_gain", 1.0)),
            seat_offsets_db=tuple(data.get("seat_offsets_db", (0.0, 0.0))),
            caveat=data.get("caveat"),
        )


@dataclass(frozen=True)
class MeasurementResult:
    track_id: str
    measured_laeq_dba: float
    per_channel: dsp.LevelPair
    digital_gain_db: float
    flags: frozenset = field(default_factory=frozenset)
    # level of the reproduced signal alone, before the floor is added
    signal_laeq_dba: float = -math.inf

    @property
    def clipped(self) -> bool:
        return CLIPPED in self.flags

    @property
    def noise_floor_limited(self) -> bool:
        return NOISE_FLOOR_LIMITED in self.flags


def _loading_db(z_in, z_out):
    return 20.0 * np.log10(z_in / (z_in + z_out))


def loading_loss(rig: RigModel, frequency: float) -> float:
    """Voltage-divider attenuation at the headphone terminals, in dB (<= 0)."""
    z_in = rig.headphones.impedance_at(frequency)
    return float(_loading_db(z_in, rig.soundcard.output_impedance_ohms))


def _path_db(headphones: HeadphoneSpec, z_out: float, frequency, clamp: bool):
    """Sensitivity plus loading loss in dB re 1 V open circuit."""
    s_v = headphones.sensitivity_at(frequency, clamp=clamp)
    z_in = headphones.impedance_at(frequency, clamp=clamp)
    return s_v + _loading_db(z_in, z_out)


@lru_cache(maxsize=32)
def path_fir(headphones: HeadphoneSpec, z_out: float, sample_rate: int) -> np.ndarray:
    """Minimum-phase FIR for the frequency-dependent part of the chain.

    The magnitude follows sensitivity plus loading loss, relative to the
    nominal dB/V sensitivity. Curves are held flat beyond their ends.
    Taps are doubled until the fit over 20 Hz to 16 kHz is within 0.1 dB.
    """
    n = _FIR_DESIGN_FFT
    freqs = np.arange(n // 2 + 1) * sample_rate / n
    freqs[0] = freqs[1]
    ref = headphones.sensitivity_db_per_volt
    target_db = _path_db(headphones, z_out, freqs, clamp=True) - ref

    # real-cepstrum folding gives the minimum-phase spectrum
    cepstrum = np.fft.irfft(target_db * (np.log(10.0) / 20.0), n)
    folded = np.zeros(n)
    folded[0] = cepstrum[0]
    folded[1 : n // 2] = 2.0 * cepstrum[1 : n // 2]
    folded[n // 2] = cepstrum[n // 2]
    h = np.fft.irfft(np.exp(np.fft.rfft(folded)), n)

    check = np.geomspace(*FIR_FIT_BAND_HZ, 1000)
    check_db = _path_db(headphones, z_out, check, clamp=True) - ref
    taps = _FIR_MIN_TAPS
    while True:
        fir = h[:taps]
        _, resp = signal.freqz(fir, worN=check, fs=sample_rate)
        err = float(np.max(np.abs(20.0 * np.log10(np.abs(resp)) - check_db)))
        if err < FIR_FIT_TOLERANCE_DB:
            break
        if taps >= _FIR_MAX_TAPS:
            raise ValueError(f"cannot fit rig response within {FIR_FIT_TOLERANCE_DB} dB (error {err:.3f} dB)")
        taps *= 2
    fir = fir.copy()
    fir.setflags(write=False)
    return fir


def fir_fit_error_db(rig: RigModel, sample_rate: int) -> float:
    fir = path_fir(rig.headphones, rig.soundcard.output_impedance_ohms, sample_rate)
    check = np.geomspace(*FIR_FIT_BAND_HZ, 1000)
    _, resp = signal.freqz(fir, worN=check, fs=sample_rate)
    want = _path_db(rig.headphones, rig.soundcard.output_impedance_ohms, check, clamp=True)
    want = want - rig.headphones.sensitivity_db_per_volt
    return float(np.max(np.abs(20.0 * np.log10(np.abs(resp)) - want)))


def circular_filter(samples: np.ndarray, fir: np.ndarray) -> np.ndarray:
    """Apply ``fir`` to each column of ``samples`` as a circular convolution.

    Tracks are treated as periodic, matching the steady-state weighting
    used for level computation.
    """
    n = samples.shape[0]
    wrapped = np.zeros(n)
    np.add.at(wrapped, np.arange(fir.size) % n, fir)
    spectrum = np.fft.rfft(samples, axis=0) * np.fft.rfft(wrapped)[:, None]
    return np.fft.irfft(spectrum, n, axis=0)


def _acoustic_channels(rig: RigModel, samples: np.ndarray, sample_rate: int):
    """Digital samples shaped by the frequency-dependent path, plus the
    dB SPL that a 0 dBFS sine maps to at the flat part of the chain."""
    z_out = rig.soundcard.output_impedance_ohms
    volts_db = 20.0 * math.log10(rig.soundcard.full_scale_voltage_rms * rig.analog_gain)
    if rig.is_flat:
        path_db = rig.headphones.sensitivity_db_per_volt + float(
            _loading_db(rig.headphones.impedance_ohms, z_out)
        )
        return samples, volts_db + path_db
    fir = path_fir(rig.headphones, z_out, sample_rate)
    shaped = circular_filter(samples, fir)
    return shaped, volts_db + rig.headphones.sensitivity_db_per_volt


def simulate_measurement(rig: RigModel, track: dsp.CalibratedTrack, digital_gain_db: float) -> MeasurementResult:
    """Play ``track`` at ``digital_gain_db`` and measure it on the rig.

    The result carries the floor-inclusive level and flags
    ``noise_floor_limited`` when the signal alone is below the floor and
    ``clipped`` when a gained sample exceeds full scale.
    """
    gain = 10.0 ** (digital_gain_db / 20.0)
    flags = set()
    if track.peak * gain > 1.0:
        flags.add(CLIPPED)

    shaped, chain_db = _acoustic_channels(rig, track.samples, track.sample_rate_hz)
    signal_levels = []
    measured = []
    for ch in range(2):
        lvl = dsp.laeq(shaped[:, ch], track.sample_rate_hz, chain_db)
        if lvl != -math.inf:
            lvl += digital_gain_db + rig.seat_offsets_db[ch]
        signal_levels.append(lvl)
        measured.append(dsp.energetic_sum(lvl, rig.noise_floor_dba))

    signal_total = dsp.energetic_average(signal_levels)
    if signal_total < rig.noise_floor_dba:
        flags.add(NOISE_FLOOR_LIMITED)
    pair = dsp.LevelPair(*measured)
    return MeasurementResult(
        track_id=track.track_id,
        measured_laeq_dba=dsp.energetic_average(pair),
        per_channel=pair,
        digital_gain_db=digital_gain_db,
        flags=frozenset(flags),
        signal_laeq_dba=signal_total,
    )


def calibrate_ocv(rig: RigModel, ref: ReferenceTone, tone_cal_db: float) -> RigModel:
    """Set the analog gain so the reference tone reads the target voltage.

    The reference tone is a sine at ``ref.spl_dbspl`` dB SPL in a file whose
    0 dBFS sine stands for ``tone_cal_db`` dB SPL, so its RMS level is
    ``ref.spl_dbspl - tone_cal_db`` dB re a full-scale sine. The voltmeter
    reads open-circuit voltage.
    """
    target_v = required_voltage(ref, rig.headphones)
    tone_scale = 10.0 ** ((ref.spl_dbspl - tone_cal_db) / 20.0)
    gain = target_v / (rig.soundcard.full_scale_voltage_rms * tone_scale)
    if gain > 1.0:
        raise HeadroomError(
            f"insufficient output headroom: {target_v:.4f} V needs analog gain {gain:.3f} > 1"
        )
    return rig.with_analog_gain(gain)


def common_cal_constant(tracks) -> float:
    constants = {t.cal_constant_db for t in tracks}
    if len(constants) != 1:
        raise ValueError(
            "tracks carry different calibration constants; pass tone_cal_db explicitly"
        )
    return constants.pop()


def simulate_ocv_session(rig: RigModel, tracks, ref: ReferenceTone, tone_cal_db: float | None = None):
    """OCV-calibrate the rig, then measure every track at 0 dB digital gain.

    Returns the calibrated rig and the list of measurements.
    """
    tracks = list(tracks)
    if tone_cal_db is None:
        tone_cal_db = common_cal_constant(tracks)
    calibrated = calibrate_ocv(rig, ref, tone_cal_db)
    return calibrated, [simulate_measurement(calibrated, t, 0.0) for t in tracks]
